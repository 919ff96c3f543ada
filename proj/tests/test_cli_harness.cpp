#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "obpc/cli_commands.hpp"
#include "obpc/errors.hpp"
#include "obpc/scenario.hpp"
#include "obpc/stability_analysis.hpp"
#include "obpc/toml_lite.hpp"

using namespace obpc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "obpc_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write(const fs::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string config_key(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "";
}

}  // namespace

TEST_CASE("toml subset") {
    const auto doc = toml::parse(
        "a = 1\n# comment\nb = \"x\" # trailing\n[t]\nm = [[1, 2],\n  [3, 4e-1],]\nflag = false\n[u.v]\nw = -2.5\n");
    CHECK(std::get<double>(doc.at("a").data) == 1.0);
    CHECK(std::get<std::string>(doc.at("b").data) == "x");
    CHECK(std::get<bool>(doc.at("t.flag").data) == false);
    CHECK(std::get<double>(doc.at("u.v.w").data) == -2.5);
    const auto& rows = std::get<toml::Array>(doc.at("t.m").data);
    CHECK(std::get<double>(std::get<toml::Array>(rows[1].data)[1].data) == 0.4);
    CHECK(doc.at("t.m").line == 5);
    try {
        toml::parse("a = 1\nb = \n");
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(toml::parse("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(toml::parse("a = \"open\n"), ConfigError);
    CHECK_THROWS_AS(toml::parse("a = 1x\n"), ConfigError);
}

TEST_CASE("minimal scenario gets the benchmark defaults") {
    const Scenario s = parse_scenario("plant = \"example1\"\nscheme = \"obpc\"\n");
    CHECK(s.T == 0.1);
    CHECK(s.N == 5);
    CHECK(s.K == 20);
    CHECK(s.lambda == 1.2);
    CHECK(s.x0[0] == 11.0);
    CHECK(s.x0[1] == 8.0);
    CHECK(s.xi0.isZero(0.0));
    CHECK(s.retarded);
    CHECK(s.gain(0, 0) == 1.0);
    CHECK(s.gain(1, 0) == 0.5);
    CHECK(s.box.hi[0] == 25.0);
    CHECK(s.cost.R(0, 0) == 0.01);
    CHECK(s.span == 20.0);
    CHECK_FALSE(parse_scenario("scheme = \"standard_mpc\"\n").retarded);
}

TEST_CASE("validation errors name the key") {
    CHECK(config_key("plant = \"example1\"\n[grid]\nT = -1\n") == "grid.T");
    CHECK(config_key("[grid]\nK = 3\n") == "grid.K");
    CHECK(config_key("plant = \"example3\"\n") == "plant");
    CHECK(config_key("x0 = [1, 2, 3]\n") == "x0");
    CHECK(config_key("span = 1.05\n") == "span");
    CHECK(config_key("[cost]\nR = [[0, 0], [0, 0]]\n") == "cost.R");
    CHECK(config_key("[cost]\nQ = [[1, 0], [0, -1]]\n") == "cost.Q");
    CHECK(config_key("[control]\nlo = [1, 1]\nhi = [0, 0]\n") == "control.hi");
    CHECK(config_key("[observer]\nretarded = false\n") == "observer.retarded");
    CHECK(config_key("colour = 3\n") == "colour");
    CHECK(config_key("plant = \"custom\"\n") == "custom.A");
    CHECK(config_key("output_sampling = 0.007\n") == "output_sampling");
}

TEST_CASE("scenarios round-trip through emission") {
    const std::string text =
        "plant = \"custom\"\nscheme = \"standard_mpc\"\nspan = 3.0\nseed = 17\nx0 = [0.1, -0.3, 2.0]\n"
        "[custom]\nA = [[-1, 0.3, 0], [0, -2, 1], [0.5, 0, -0.7]]\nB = [[1], [0], [0.25]]\nC = [[1, 0, 0]]\n"
        "[observer]\ngain = [[1.5], [0.1], [0.3333333333333333]]\nlambda = 1.1\n"
        "[cost]\nR = [[0.02]]\n[control]\nlo = [-3]\nhi = [2]\n[optimizer]\nrestarts = 1\n";
    const Scenario s = parse_scenario(text);
    CHECK(s.A.rows() == 3);
    CHECK(parse_scenario(emit_scenario(s)) == s);
    for (int ex : {1, 2}) {
        for (Scheme sc : {Scheme::obpc, Scheme::standard_mpc}) {
            Scenario c = canonical_scenario(ex, sc);
            c.output_sampling = std::nullopt;
            CHECK(parse_scenario(emit_scenario(c)) == c);
        }
    }
    Scenario e = canonical_scenario(1, Scheme::obpc);
    e.output_sampling = 0.01;
    e.T = 0.1 / 3.0 * 3.0;
    CHECK(parse_scenario(emit_scenario(e)) == e);
}

TEST_CASE("trajectory CSV layout") {
    const fs::path dir = scratch("csv");
    const fs::path sc = write(dir / "s.toml", "plant = \"example2\"\nspan = 0.2\n");
    REQUIRE(cmd_simulate(sc.string(), (dir / "a").string(), std::nullopt, std::cerr) == exit_ok);
    REQUIRE(cmd_simulate(sc.string(), (dir / "b").string(), std::nullopt, std::cerr) == exit_ok);
    const std::string a = slurp(dir / "a" / "trajectory.csv");
    CHECK(a == slurp(dir / "b" / "trajectory.csv"));
    CHECK(a.substr(0, a.find('\n')) == "t,x1,x2,xi1,xi2,u1,u2,y,norm_x,norm_err");
    CHECK(std::count(a.begin(), a.end(), '\n') == 42);
    CHECK(fs::exists(dir / "a" / "summary.txt"));
    CHECK(slurp(dir / "a" / "summary.txt").find("step_costs =") != std::string::npos);
}

TEST_CASE("zero scenario gives zero rows") {
    const fs::path dir = scratch("zero");
    const fs::path sc = write(dir / "z.toml", "x0 = [0, 0]\nspan = 0.5\n");
    REQUIRE(cmd_simulate(sc.string(), (dir / "out").string(), std::nullopt, std::cerr) == exit_ok);
    std::istringstream csv(slurp(dir / "out" / "trajectory.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line)) {
        std::istringstream fields(line.substr(line.find(',') + 1));
        std::string f;
        while (std::getline(fields, f, ',')) CHECK(std::stod(f) == 0.0);
        ++rows;
    }
    CHECK(rows == 101);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    const fs::path bad = write(dir / "bad.toml", "[grid]\nT = -1\n");
    std::ostringstream err;
    CHECK(cmd_simulate(bad.string(), (dir / "o").string(), std::nullopt, err) == exit_config);
    CHECK(err.str().find("grid.T") != std::string::npos);
    CHECK(cmd_simulate((dir / "missing.toml").string(), (dir / "o").string(), std::nullopt, err) == exit_config);

    // Unstable plant with no control authority.
    const fs::path unstable = write(dir / "u.toml",
                                    "plant = \"custom\"\nscheme = \"standard_mpc\"\nspan = 10.0\n"
                                    "[custom]\nA = [[5, 0], [0, 5]]\nB = [[1, 0], [0, 1]]\nC = [[1, 0]]\n"
                                    "[control]\nlo = [0, 0]\nhi = [0, 0]\n");
    std::ostringstream diag;
    CHECK(cmd_simulate(unstable.string(), (dir / "u").string(), std::nullopt, diag) == exit_divergence);
    CHECK(diag.str().find("divergence") != std::string::npos);
    CHECK(cmd_reproduce(3, "obpc", (dir / "r").string(), std::nullopt, err) == exit_config);
}

TEST_CASE("reproduce summaries") {
    const fs::path dir = scratch("reproduce");
    REQUIRE(cmd_reproduce(1, "mpc", dir.string(), std::nullopt, std::cerr) == exit_ok);
    const std::string summary = slurp(dir / "example1_mpc_summary.txt");
    CHECK(summary.find("first_control_zero = true") != std::string::npos);
    CHECK(fs::exists(dir / "example1_mpc.csv"));
    CHECK(fs::exists(dir / "example1_mpc.dat"));
    CHECK(slurp(dir / "example1_mpc.gp").find("example1_mpc.dat") != std::string::npos);
}

TEST_CASE("stability reports") {
    const fs::path dir = scratch("stability");
    REQUIRE(cmd_stability(1, (dir / "e1.json").string(), std::cerr) == exit_ok);
    const auto e1 = nlohmann::json::parse(slurp(dir / "e1.json"));
    CHECK(e1["closed_loop_eigenvalues"][0]["re"].get<double>() == doctest::Approx(-2.4));
    CHECK(e1["closed_loop_eigenvalues"][1]["re"].get<double>() == doctest::Approx(-0.8));
    CHECK(e1["singular_inverse"].get<bool>());

    REQUIRE(cmd_stability(2, (dir / "e2.json").string(), std::cerr) == exit_ok);
    const auto e2 = nlohmann::json::parse(slurp(dir / "e2.json"));
    for (const auto& z : e2["closed_loop_eigenvalues"]) {
        CHECK(z["re"].get<double>() == doctest::Approx(-0.6));
        CHECK(std::abs(z["im"].get<double>()) > 1.0);
    }

    const fs::path diag = write(dir / "d.toml",
                                "plant = \"custom\"\n[custom]\nA = [[-1, 0], [0, -3]]\nB = [[1, 0], [0, 1]]\n"
                                "C = [[1, 0]]\n");
    REQUIRE(cmd_stability_scenario(diag.string(), (dir / "d.json").string(), std::cerr) == exit_ok);
    const auto d = nlohmann::json::parse(slurp(dir / "d.json"));
    CHECK(d["lyapunov_residual"].get<double>() <= 1e-10);

    const fs::path unstable = write(dir / "n.toml",
                                    "plant = \"custom\"\n[custom]\nA = [[5, 0], [0, 5]]\nB = [[1, 0], [0, 1]]\n"
                                    "C = [[1, 0]]\n");
    REQUIRE(cmd_stability_scenario(unstable.string(), (dir / "n.json").string(), std::cerr) == exit_ok);
    CHECK_FALSE(nlohmann::json::parse(slurp(dir / "n.json"))["lyapunov_solved"].get<bool>());
}

TEST_CASE("sweep specs") {
    const SweepSpec lattice = parse_sweep("[sweep]\nradius = 12.0\nlattice = 5\n");
    CHECK(lattice.initial_states.size() == 25);
    double largest = 0.0;
    for (const auto& x : lattice.initial_states) largest = std::max(largest, x.norm());
    CHECK(largest == doctest::Approx(12.0));
    CHECK(parse_sweep("[sweep]\npoints = [[1, 2], [3, 4]]\n").initial_states.size() == 2);
    try {
        parse_sweep("[sweep]\npoints = []\n");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "sweep.points");
    }
    CHECK_THROWS_AS(parse_sweep("[sweep]\nradius = 1.0\npoints = [[3, 4]]\n"), ConfigError);

    const fs::path dir = scratch("sweep");
    const fs::path empty = write(dir / "empty.toml", "[sweep]\nlattice = 0\n");
    std::ostringstream err;
    CHECK(cmd_sweep(empty.string(), (dir / "e").string(), std::nullopt, err) == exit_config);
}

TEST_CASE("sweep aggregation") {
    const fs::path dir = scratch("sweep_runs");
    const fs::path zero = write(dir / "zero.toml", "span = 1.0\n[sweep]\npoints = [[0, 0]]\n");
    REQUIRE(cmd_sweep(zero.string(), (dir / "z").string(), std::nullopt, std::cerr) == exit_ok);
    const auto z = nlohmann::json::parse(slurp(dir / "z" / "report.json"));
    CHECK(z["estimate"]["delta2"].get<double>() == kDelta2Floor);

    const std::string body = "span = 1.0\n[sweep]\npoints = [[3, 4], [-2, 1], [0, -5], [4, 4]]\n";
    const fs::path serial = write(dir / "serial.toml", body + "workers = 1\n");
    const fs::path parallel = write(dir / "parallel.toml", body + "workers = 3\n");
    REQUIRE(cmd_sweep(serial.string(), (dir / "s").string(), std::nullopt, std::cerr) == exit_ok);
    REQUIRE(cmd_sweep(parallel.string(), (dir / "p").string(), std::nullopt, std::cerr) == exit_ok);
    CHECK(slurp(dir / "s" / "report.json") == slurp(dir / "p" / "report.json"));
    for (int i = 0; i < 4; ++i) {
        const std::string name = "run_00" + std::to_string(i) + ".csv";
        CHECK(slurp(dir / "s" / name) == slurp(dir / "p" / name));
    }
}

TEST_CASE("command-line entry point") {
    const fs::path dir = scratch("binary");
    const std::string exe = OBPC_CLI_PATH;
    auto run = [&](const std::string& args) {
        const int status = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    CHECK(run("stability --example 2 -o " + (dir / "s.json").string()) == 0);
    CHECK(fs::exists(dir / "s.json"));
    CHECK(run("reproduce --example 3 --scheme obpc -o " + dir.string()) == 2);
    CHECK(run("frobnicate") == 2);
    const fs::path sc = write(dir / "s.toml", "span = 0.1\n");
    CHECK(run("--seed 9 simulate " + sc.string() + " -o " + (dir / "sim").string()) == 0);
    CHECK(fs::exists(dir / "sim" / "trajectory.csv"));
}

TEST_CASE("shipped scenario files load") {
    const fs::path dir = fs::path(OBPC_SOURCE_DIR) / "scenarios";
    int count = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".toml") continue;
        ++count;
        if (entry.path().filename().string().rfind("sweep", 0) == 0) {
            CHECK_NOTHROW(load_sweep(entry.path().string()));
        } else {
            CHECK_NOTHROW(load_scenario(entry.path().string()));
        }
    }
    CHECK(count >= 4);
    CHECK(load_scenario((dir / "example1_obpc.toml").string()) == canonical_scenario(1, Scheme::obpc));
    CHECK(load_scenario((dir / "example2_mpc.toml").string()) == canonical_scenario(2, Scheme::standard_mpc));
}
