#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "obpc/cli_commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Observer-based predictive control simulations"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "Random seed for the optimizer starts")->expected(1);

    std::string scenario, out, sweep_file, stability_scenario;
    int example = 1;
    std::string scheme = "obpc";

    auto* simulate = app.add_subcommand("simulate", "Run one scenario file");
    simulate->add_option("scenario", scenario, "Scenario TOML file")->required();
    simulate->add_option("-o,--output", out, "Output directory")->required();

    auto* reproduce = app.add_subcommand("reproduce", "Run a built-in benchmark");
    reproduce->add_option("--example", example, "Benchmark plant")->check(CLI::IsMember({1, 2}))->required();
    reproduce->add_option("--scheme", scheme, "obpc or mpc")->check(CLI::IsMember({"obpc", "mpc"}))->required();
    reproduce->add_option("-o,--output", out, "Output directory")->required();

    auto* stability = app.add_subcommand("stability", "Write the stability report as JSON");
    auto* ex_opt = stability->add_option("--example", example, "Benchmark plant")->check(CLI::IsMember({1, 2}));
    auto* sc_opt = stability->add_option("--scenario", stability_scenario, "Scenario TOML file");
    ex_opt->excludes(sc_opt);
    stability->add_option("-o,--output", out, "Output file")->required();

    auto* sweep = app.add_subcommand("sweep", "Run a batch of initial conditions");
    sweep->add_option("spec", sweep_file, "Sweep TOML file")->required();
    sweep->add_option("-o,--output", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : obpc::exit_config;
    }

    if (simulate->parsed()) return obpc::cmd_simulate(scenario, out, seed, std::cerr);
    if (reproduce->parsed()) return obpc::cmd_reproduce(example, scheme, out, seed, std::cerr);
    if (stability->parsed()) {
        if (!stability_scenario.empty()) return obpc::cmd_stability_scenario(stability_scenario, out, std::cerr);
        return obpc::cmd_stability(example, out, std::cerr);
    }
    if (sweep->parsed()) return obpc::cmd_sweep(sweep_file, out, seed, std::cerr);
    return obpc::exit_config;
}
