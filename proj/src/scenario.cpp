#include "obpc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "obpc/errors.hpp"
#include "obpc/toml_lite.hpp"

namespace obpc {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what, const toml::Document* doc = nullptr) {
    std::size_t line = 0;
    if (doc != nullptr && doc->has(key)) line = static_cast<std::size_t>(doc->at(key).line);
    throw ConfigError(key + ": " + what, key, line);
}

double number(const toml::Document& doc, const std::string& key) {
    const toml::Value& v = doc.at(key);
    if (!v.is_number()) bad(key, "expected a number", &doc);
    return std::get<double>(v.data);
}

double number_or(const toml::Document& doc, const std::string& key, double fallback) {
    return doc.has(key) ? number(doc, key) : fallback;
}

long integer_or(const toml::Document& doc, const std::string& key, long fallback) {
    if (!doc.has(key)) return fallback;
    const double v = number(doc, key);
    if (std::floor(v) != v || std::abs(v) > 9e15) bad(key, "expected an integer", &doc);
    return static_cast<long>(v);
}

bool bool_or(const toml::Document& doc, const std::string& key, bool fallback) {
    if (!doc.has(key)) return fallback;
    const toml::Value& v = doc.at(key);
    if (!v.is_bool()) bad(key, "expected true or false", &doc);
    return std::get<bool>(v.data);
}

std::string string_or(const toml::Document& doc, const std::string& key, const std::string& fallback) {
    if (!doc.has(key)) return fallback;
    const toml::Value& v = doc.at(key);
    if (!v.is_string()) bad(key, "expected a string", &doc);
    return std::get<std::string>(v.data);
}

Vec vector_value(const toml::Document& doc, const std::string& key, const toml::Value& v) {
    if (!v.is_array()) bad(key, "expected an array of numbers", &doc);
    const auto& arr = std::get<toml::Array>(v.data);
    if (arr.empty() || arr.size() > static_cast<std::size_t>(kMaxDim)) bad(key, "expected 1 to 8 entries", &doc);
    Vec out(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) bad(key, "expected an array of numbers", &doc);
        out[static_cast<Eigen::Index>(i)] = std::get<double>(arr[i].data);
    }
    return out;
}

Vec vector(const toml::Document& doc, const std::string& key) { return vector_value(doc, key, doc.at(key)); }

Mat matrix(const toml::Document& doc, const std::string& key) {
    const toml::Value& v = doc.at(key);
    if (!v.is_array()) bad(key, "expected an array of rows", &doc);
    const auto& rows = std::get<toml::Array>(v.data);
    if (rows.empty() || rows.size() > static_cast<std::size_t>(kMaxDim)) bad(key, "expected 1 to 8 rows", &doc);
    Mat out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Vec row = vector_value(doc, key, rows[i]);
        if (i == 0) out.resize(static_cast<Eigen::Index>(rows.size()), row.size());
        if (row.size() != out.cols()) bad(key, "rows of different length", &doc);
        out.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return out;
}

void require_shape(const Mat& M, Eigen::Index r, Eigen::Index c, const std::string& key) {
    if (M.rows() != r || M.cols() != c) {
        std::ostringstream os;
        os << "expected a " << r << "x" << c << " matrix";
        bad(key, os.str());
    }
}

void require_finite(const Mat& M, const std::string& key) {
    if (!M.allFinite()) bad(key, "entries must be finite");
}

const std::set<std::string> kScenarioKeys = {
    "plant", "scheme", "span", "seed", "x0", "xi0", "output_sampling",
    "grid.T", "grid.N", "grid.K",
    "cost.Q", "cost.R", "cost.P_f",
    "control.lo", "control.hi",
    "observer.lambda", "observer.gain", "observer.retarded",
    "optimizer.restarts", "optimizer.max_iterations", "optimizer.tolerance", "optimizer.warm_start",
    "custom.A", "custom.B", "custom.C",
};

Scenario scenario_from(const toml::Document& doc, const std::set<std::string>& extra_keys) {
    for (const auto& k : doc.order) {
        if (kScenarioKeys.count(k) == 0 && extra_keys.count(k) == 0) bad(k, "unknown key", &doc);
    }

    Scenario s;
    s.plant = string_or(doc, "plant", "example1");
    if (s.plant == "example1" || s.plant == "example2") {
        for (const char* k : {"custom.A", "custom.B", "custom.C"}) {
            if (doc.has(k)) bad(k, "only allowed with plant = \"custom\"", &doc);
        }
        const LinearPlant p = example_plant(s.plant == "example1" ? 1 : 2);
        s.A = p.A();
        s.B = p.B();
        s.C = p.C();
    } else if (s.plant == "custom") {
        for (const char* k : {"custom.A", "custom.B", "custom.C"}) {
            if (!doc.has(k)) bad(k, "required for a custom plant", &doc);
        }
        s.A = matrix(doc, "custom.A");
        s.B = matrix(doc, "custom.B");
        s.C = matrix(doc, "custom.C");
        require_shape(s.A, s.A.rows(), s.A.rows(), "custom.A");
        require_shape(s.B, s.A.rows(), s.B.cols(), "custom.B");
        require_shape(s.C, s.C.rows(), s.A.rows(), "custom.C");
        require_finite(s.A, "custom.A");
        require_finite(s.B, "custom.B");
        require_finite(s.C, "custom.C");
    } else {
        bad("plant", "expected \"example1\", \"example2\" or \"custom\"", &doc);
    }
    const auto n = s.A.rows();
    const auto m = s.B.cols();
    const auto p = s.C.rows();

    const std::string scheme = string_or(doc, "scheme", "obpc");
    if (scheme == "obpc") {
        s.scheme = Scheme::obpc;
    } else if (scheme == "standard_mpc" || scheme == "mpc") {
        s.scheme = Scheme::standard_mpc;
    } else {
        bad("scheme", "expected \"obpc\" or \"standard_mpc\"", &doc);
    }

    s.T = number_or(doc, "grid.T", 0.1);
    if (!(s.T > 0.0) || !std::isfinite(s.T)) bad("grid.T", "must be positive", &doc);
    const long N = integer_or(doc, "grid.N", 5);
    if (N < 1 || N > 1000) bad("grid.N", "must be an integer in 1..1000", &doc);
    const long K = integer_or(doc, "grid.K", 20);
    if (K < 2 || K > 100000 || K % 2 != 0) bad("grid.K", "must be an even integer >= 2", &doc);
    s.N = static_cast<int>(N);
    s.K = static_cast<int>(K);

    s.cost = CostSpec::defaults(static_cast<int>(n), static_cast<int>(m));
    if (doc.has("cost.Q")) s.cost.Q = matrix(doc, "cost.Q");
    if (doc.has("cost.R")) s.cost.R = matrix(doc, "cost.R");
    if (doc.has("cost.P_f")) s.cost.terminal = matrix(doc, "cost.P_f");
    require_shape(s.cost.Q, n, n, "cost.Q");
    require_shape(s.cost.R, m, m, "cost.R");
    require_shape(s.cost.terminal, n, n, "cost.P_f");
    try {
        s.cost.validate(static_cast<int>(n), static_cast<int>(m));
    } catch (const InvalidParameter& e) {
        const std::string what = e.what();
        const std::string key = what.find(" R ") != std::string::npos   ? "cost.R"
                                : what.find("P_f") != std::string::npos ? "cost.P_f"
                                                                        : "cost.Q";
        bad(key, what, &doc);
    }

    s.box = ControlBox::symmetric(static_cast<int>(m), 25.0);
    if (doc.has("control.lo")) s.box.lo = vector(doc, "control.lo");
    if (doc.has("control.hi")) s.box.hi = vector(doc, "control.hi");
    if (s.box.lo.size() != m) bad("control.lo", "needs one entry per input", &doc);
    if (s.box.hi.size() != m) bad("control.hi", "needs one entry per input", &doc);
    if (!s.box.lo.allFinite()) bad("control.lo", "entries must be finite", &doc);
    if (!s.box.hi.allFinite()) bad("control.hi", "entries must be finite", &doc);
    if ((s.box.lo.array() > s.box.hi.array()).any()) bad("control.hi", "must not be below control.lo", &doc);

    s.x0 = Vec::Zero(n);
    s.xi0 = Vec::Zero(n);
    if (n == 2) s.x0 << 11.0, 8.0;
    if (doc.has("x0")) s.x0 = vector(doc, "x0");
    if (doc.has("xi0")) s.xi0 = vector(doc, "xi0");
    if (s.x0.size() != n) bad("x0", "needs one entry per state", &doc);
    if (s.xi0.size() != n) bad("xi0", "needs one entry per state", &doc);
    if (!s.x0.allFinite()) bad("x0", "entries must be finite", &doc);
    if (!s.xi0.allFinite()) bad("xi0", "entries must be finite", &doc);

    s.lambda = number_or(doc, "observer.lambda", kDefaultGainLambda);
    if (!(s.lambda > 0.0) || !std::isfinite(s.lambda)) bad("observer.lambda", "must be positive", &doc);
    if (doc.has("observer.gain")) {
        s.gain = matrix(doc, "observer.gain");
    } else if (n == 2 && p == 1) {
        s.gain = default_injection_gain();
    } else {
        bad("observer.gain", "required unless the plant has two states and one output", &doc);
    }
    require_shape(s.gain, n, p, "observer.gain");
    require_finite(s.gain, "observer.gain");
    s.retarded = bool_or(doc, "observer.retarded", s.scheme == Scheme::obpc);
    if (s.scheme == Scheme::obpc && !s.retarded) {
        bad("observer.retarded", "the observer-based scheme needs a retarded observer", &doc);
    }
    if (s.scheme == Scheme::standard_mpc && s.retarded) {
        bad("observer.retarded", "standard MPC uses the current output", &doc);
    }

    s.span = number_or(doc, "span", 20.0);
    if (!(s.span > 0.0) || !std::isfinite(s.span)) bad("span", "must be positive", &doc);
    const double periods = s.span / s.T;
    if (std::abs(periods - std::round(periods)) > 1e-9 * std::max(1.0, periods)) {
        bad("span", "must be a multiple of grid.T", &doc);
    }

    if (doc.has("output_sampling")) {
        const double That = number(doc, "output_sampling");
        const double h = s.T / static_cast<double>(s.K);
        const double ratio = That / h;
        if (!(That > 0.0) || std::round(ratio) < 1.0 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
            bad("output_sampling", "must be a positive multiple of grid.T / grid.K", &doc);
        }
        if (s.scheme != Scheme::obpc) bad("output_sampling", "only used by the observer-based scheme", &doc);
        s.output_sampling = That;
    }

    const long seed = integer_or(doc, "seed", 0);
    if (seed < 0) bad("seed", "must be nonnegative", &doc);
    s.seed = static_cast<std::uint64_t>(seed);

    s.optimizer.restarts = static_cast<int>(integer_or(doc, "optimizer.restarts", s.optimizer.restarts));
    if (s.optimizer.restarts < 0 || s.optimizer.restarts > 1000) {
        bad("optimizer.restarts", "must be in 0..1000", &doc);
    }
    s.optimizer.max_iterations =
        static_cast<int>(integer_or(doc, "optimizer.max_iterations", s.optimizer.max_iterations));
    if (s.optimizer.max_iterations < 1) bad("optimizer.max_iterations", "must be positive", &doc);
    s.optimizer.tolerance = number_or(doc, "optimizer.tolerance", s.optimizer.tolerance);
    if (!(s.optimizer.tolerance > 0.0)) bad("optimizer.tolerance", "must be positive", &doc);
    s.optimizer.warm_start = bool_or(doc, "optimizer.warm_start", s.optimizer.warm_start);
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path, "", 0);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    std::string s = os.str();
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

std::string fmt(const Vec& v) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
    return out + "]";
}

std::string fmt(const Mat& M) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < M.rows(); ++i) out += (i ? ", " : "") + fmt(Vec(M.row(i).transpose()));
    return out + "]";
}

}  // namespace

bool operator==(const Scenario& a, const Scenario& b) {
    auto same = [](const Mat& x, const Mat& y) { return x.rows() == y.rows() && x.cols() == y.cols() && x == y; };
    return a.plant == b.plant && same(a.A, b.A) && same(a.B, b.B) && same(a.C, b.C) && a.scheme == b.scheme &&
           a.T == b.T && a.N == b.N && a.K == b.K && same(a.cost.Q, b.cost.Q) && same(a.cost.R, b.cost.R) &&
           same(a.cost.terminal, b.cost.terminal) && same(a.box.lo, b.box.lo) && same(a.box.hi, b.box.hi) &&
           same(a.x0, b.x0) && same(a.xi0, b.xi0) && a.lambda == b.lambda && same(a.gain, b.gain) &&
           a.retarded == b.retarded && a.span == b.span && a.output_sampling == b.output_sampling &&
           a.seed == b.seed && a.optimizer.restarts == b.optimizer.restarts &&
           a.optimizer.max_iterations == b.optimizer.max_iterations &&
           a.optimizer.tolerance == b.optimizer.tolerance && a.optimizer.warm_start == b.optimizer.warm_start;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
    try {
        return scenario_from(toml::parse(text), {});
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what(), e.key(), e.line());
    }
}

Scenario load_scenario(const std::string& path) { return parse_scenario(read_file(path), path); }

std::string emit_scenario(const Scenario& s) {
    std::ostringstream os;
    os << "plant = \"" << s.plant << "\"\n";
    os << "scheme = \"" << (s.scheme == Scheme::obpc ? "obpc" : "standard_mpc") << "\"\n";
    os << "span = " << fmt(s.span) << "\n";
    os << "seed = " << s.seed << "\n";
    os << "x0 = " << fmt(s.x0) << "\n";
    os << "xi0 = " << fmt(s.xi0) << "\n";
    if (s.output_sampling) os << "output_sampling = " << fmt(*s.output_sampling) << "\n";
    os << "\n[grid]\nT = " << fmt(s.T) << "\nN = " << s.N << "\nK = " << s.K << "\n";
    os << "\n[cost]\nQ = " << fmt(s.cost.Q) << "\nR = " << fmt(s.cost.R) << "\nP_f = " << fmt(s.cost.terminal)
       << "\n";
    os << "\n[control]\nlo = " << fmt(s.box.lo) << "\nhi = " << fmt(s.box.hi) << "\n";
    os << "\n[observer]\nlambda = " << fmt(s.lambda) << "\ngain = " << fmt(s.gain)
       << "\nretarded = " << (s.retarded ? "true" : "false") << "\n";
    os << "\n[optimizer]\nrestarts = " << s.optimizer.restarts << "\nmax_iterations = " << s.optimizer.max_iterations
       << "\ntolerance = " << fmt(s.optimizer.tolerance)
       << "\nwarm_start = " << (s.optimizer.warm_start ? "true" : "false") << "\n";
    if (s.plant == "custom") {
        os << "\n[custom]\nA = " << fmt(s.A) << "\nB = " << fmt(s.B) << "\nC = " << fmt(s.C) << "\n";
    }
    return os.str();
}

Scenario canonical_scenario(int example, Scheme scheme) {
    if (example != 1 && example != 2) throw InvalidParameter("example must be 1 or 2");
    std::string text = "plant = \"example" + std::to_string(example) + "\"\nscheme = \"" +
                       (scheme == Scheme::obpc ? "obpc" : "standard_mpc") + "\"\n";
    return parse_scenario(text, "example" + std::to_string(example));
}

ClosedLoopSetup make_setup(const Scenario& s) {
    ClosedLoopSetup setup;
    setup.grid = TimeGrid::make(s.T, s.N, s.K);
    LinearPlant plant(s.A, s.B, s.C);
    setup.plant = std::make_shared<LinearPlant>(plant);
    if (s.retarded) {
        setup.observer = std::make_shared<LuenbergerObserver>(
            LuenbergerObserver::retarded(plant, s.lambda, s.gain, setup.grid));
    } else {
        setup.observer = std::make_shared<LuenbergerObserver>(LuenbergerObserver::current(plant, s.lambda, s.gain));
    }
    setup.cost = s.cost;
    setup.box = s.box;
    setup.initial_state = s.x0;
    setup.initial_estimate = s.xi0;
    setup.span = s.span;
    setup.optimizer = s.optimizer;
    setup.seed = s.seed;
    setup.output_period = s.output_sampling;
    return setup;
}

SimulationResult run_scenario(const Scenario& s) {
    const ClosedLoopSetup setup = make_setup(s);
    return s.scheme == Scheme::obpc ? run_obpc(setup) : run_standard_mpc(setup);
}

SweepSpec parse_sweep(const std::string& text, const std::string& source) {
    try {
        const toml::Document doc = toml::parse(text);
        SweepSpec spec;
        spec.base = scenario_from(
            doc, {"sweep.radius", "sweep.lattice", "sweep.points", "sweep.nu", "sweep.alpha", "sweep.workers"});
        const auto n = spec.base.A.rows();
        spec.radius = number_or(doc, "sweep.radius", 12.0);
        if (!(spec.radius >= 0.0) || !std::isfinite(spec.radius)) bad("sweep.radius", "must be nonnegative", &doc);
        spec.nu = number_or(doc, "sweep.nu", 15.0);
        if (!(spec.nu >= 0.0)) bad("sweep.nu", "must be nonnegative", &doc);
        spec.alpha = number_or(doc, "sweep.alpha", 0.25);
        if (!(spec.alpha > 0.0)) bad("sweep.alpha", "must be positive", &doc);
        const long workers = integer_or(doc, "sweep.workers", 1);
        if (workers < 1 || workers > 256) bad("sweep.workers", "must be in 1..256", &doc);
        spec.workers = static_cast<int>(workers);

        if (doc.has("sweep.lattice") && doc.has("sweep.points")) {
            bad("sweep.points", "give either a lattice or a point list", &doc);
        }
        if (doc.has("sweep.lattice")) {
            if (n != 2) bad("sweep.lattice", "lattices are defined for two states; list the points", &doc);
            const long L = integer_or(doc, "sweep.lattice", 0);
            if (L < 0 || L > 1000) bad("sweep.lattice", "must be in 0..1000", &doc);
            const double half = spec.radius / std::sqrt(2.0);
            for (long i = 0; i < L; ++i) {
                for (long j = 0; j < L; ++j) {
                    const double a = L == 1 ? 0.0 : -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(L - 1);
                    const double b = L == 1 ? 0.0 : -half + 2.0 * half * static_cast<double>(j) / static_cast<double>(L - 1);
                    Vec x(2);
                    x << a, b;
                    spec.initial_states.push_back(x);
                }
            }
        } else if (doc.has("sweep.points")) {
            const toml::Value& v = doc.at("sweep.points");
            if (!v.is_array()) bad("sweep.points", "expected an array of states", &doc);
            for (const auto& row : std::get<toml::Array>(v.data)) {
                Vec x = vector_value(doc, "sweep.points", row);
                if (x.size() != n) bad("sweep.points", "needs one entry per state", &doc);
                if (!x.allFinite()) bad("sweep.points", "entries must be finite", &doc);
                spec.initial_states.push_back(x);
            }
        }
        if (spec.initial_states.empty()) bad("sweep.points", "the grid of initial conditions is empty", &doc);
        for (const auto& x : spec.initial_states) {
            if (x.norm() > spec.radius * (1.0 + 1e-12)) bad("sweep.points", "initial state outside sweep.radius", &doc);
            if ((x - spec.base.xi0).norm() > spec.nu * (1.0 + 1e-12)) {
                bad("sweep.nu", "an initial estimation error exceeds nu", &doc);
            }
        }
        return spec;
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what(), e.key(), e.line());
    }
}

SweepSpec load_sweep(const std::string& path) { return parse_sweep(read_file(path), path); }

}  // namespace obpc
