#include "obpc/cli_commands.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "obpc/errors.hpp"
#include "obpc/stability_analysis.hpp"

namespace obpc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

// Runs `body` and maps the library exceptions to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const DivergenceError& e) {
        err << "divergence at t = " << num(e.time()) << ": " << e.what() << "\n";
        return exit_divergence;
    } catch (const OptimizationFailure& e) {
        err << "optimizer failure: " << e.what() << "\n";
        return exit_optimizer;
    } catch (const InvalidParameter& e) {
        err << "invalid parameter: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

json complex_list(const EigenvalueList& ev) {
    json out = json::array();
    for (const auto& z : ev) out.push_back({{"re", z.real()}, {"im", z.imag()}});
    return out;
}

json matrix_json(const Mat& M) {
    json out = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        out.push_back(row);
    }
    return out;
}

void write_summary(std::ostream& out, const Scenario& s, const SimulationResult& r, double wall) {
    out << "scheme = " << (s.scheme == Scheme::obpc ? "obpc" : "standard_mpc") << "\n";
    out << "plant = " << s.plant << "\n";
    out << "steps = " << r.applied_controls.size() << "\n";
    out << "final_norm_x = " << num(r.plant.final_state().norm()) << "\n";
    out << "final_norm_err = " << num((r.plant.final_state() - r.observer.final_state()).norm()) << "\n";
    out << "max_prediction_deviation = " << num(r.max_prediction_deviation) << "\n";
    out << "wall_seconds = " << std::fixed << std::setprecision(3) << wall << std::defaultfloat << "\n";
    out << "step_costs =";
    for (double c : r.step_costs) out << " " << num(c);
    out << "\n";
}

SimulationResult timed_run(const Scenario& s, double& wall) {
    const auto t0 = std::chrono::steady_clock::now();
    SimulationResult r = run_scenario(s);
    wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

json stability_json(const LuenbergerObserver& observer, double delay) {
    const StabilityReport rep = stability_report(observer, delay);
    json j;
    j["delay"] = delay;
    j["lambda"] = observer.lambda();
    j["closed_loop"] = matrix_json(rep.closed_loop);
    j["closed_loop_eigenvalues"] = complex_list(rep.closed_loop_eigenvalues);
    j["lyapunov_solved"] = rep.lyapunov_solved;
    if (rep.lyapunov_solved) {
        j["lyapunov"] = matrix_json(rep.lyapunov);
        j["lyapunov_residual"] = rep.lyapunov_residual;
        j["decay_check_eigenvalues"] = complex_list(rep.decay_check_eigenvalues);
        j["alpha_lower_coefficient"] = rep.alpha_lower_coefficient;
        j["alpha_upper_coefficient"] = rep.alpha_upper_coefficient;
    } else {
        j["lyapunov_note"] = "closed-loop matrix is not Hurwitz; no quadratic certificate";
    }
    j["script_A"] = matrix_json(rep.retarded.matrix);
    j["script_A_eigenvalues"] = complex_list(rep.retarded.eigenvalues);
    j["singular_inverse"] = rep.retarded.singular_inverse;
    j["gap_smallest_singular_value"] = rep.retarded.smallest_singular_value;
    j["gap_largest_singular_value"] = rep.retarded.largest_singular_value;
    return j;
}

int write_stability(const Scenario& s, const std::string& out_path, const std::string& label) {
    const TimeGrid grid = TimeGrid::make(s.T, s.N, s.K);
    const LuenbergerObserver obs = LuenbergerObserver::retarded(LinearPlant(s.A, s.B, s.C), s.lambda, s.gain, grid);
    json j = stability_json(obs, grid.horizon_span());
    j["source"] = label;
    const fs::path path(out_path);
    if (path.has_parent_path()) ensure_dir(path.parent_path().string());
    open_out(path) << j.dump(2) << "\n";
    return exit_ok;
}

void write_dat(std::ostream& out, const SimulationResult& r) {
    out << "# t norm_x norm_xi norm_err x1..xn xi1..xin\n";
    for (std::size_t i = 0; i < r.plant.size(); ++i) {
        const Vec& x = r.plant.states[i];
        const Vec& xi = r.observer.states[i];
        out << num(r.plant.times[i]) << " " << num(x.norm()) << " " << num(xi.norm()) << " " << num((x - xi).norm());
        for (Eigen::Index k = 0; k < x.size(); ++k) out << " " << num(x[k]);
        for (Eigen::Index k = 0; k < xi.size(); ++k) out << " " << num(xi[k]);
        out << "\n";
    }
}

void write_gnuplot(std::ostream& out, const std::string& stem) {
    out << "set terminal pngcairo size 900,600\n"
        << "set output '" << stem << ".png'\n"
        << "set xlabel 't'\nset ylabel 'norm'\nset logscale y\nset grid\n"
        << "plot '" << stem << ".dat' using 1:2 with lines title '|x|', \\\n"
        << "     '" << stem << ".dat' using 1:3 with lines title '|xi|', \\\n"
        << "     '" << stem << ".dat' using 1:4 with lines title '|x - xi|'\n";
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const SimulationResult& r) {
    const Eigen::Index n = r.plant.states.empty() ? 0 : r.plant.states.front().size();
    const Eigen::Index m = r.plant.controls.empty() ? (r.applied_controls.empty() ? 0 : r.applied_controls.front().size())
                                                    : r.plant.controls.front().size();
    const Eigen::Index p = r.outputs.empty() ? 0 : r.outputs.front().size();
    out << "t";
    for (Eigen::Index k = 1; k <= n; ++k) out << ",x" << k;
    for (Eigen::Index k = 1; k <= n; ++k) out << ",xi" << k;
    for (Eigen::Index k = 1; k <= m; ++k) out << ",u" << k;
    if (p == 1) {
        out << ",y";
    } else {
        for (Eigen::Index k = 1; k <= p; ++k) out << ",y" << k;
    }
    out << ",norm_x,norm_err\n";
    for (std::size_t i = 0; i < r.plant.size(); ++i) {
        const Vec& x = r.plant.states[i];
        const Vec& xi = r.observer.states[i];
        out << num(r.plant.times[i]);
        for (Eigen::Index k = 0; k < n; ++k) out << "," << num(x[k]);
        for (Eigen::Index k = 0; k < n; ++k) out << "," << num(xi[k]);
        if (m > 0) {
            const Vec& u = i < r.plant.controls.size() ? r.plant.controls[i]
                           : r.plant.controls.empty()  ? r.applied_controls.back()
                                                       : r.plant.controls.back();
            for (Eigen::Index k = 0; k < m; ++k) out << "," << num(u[k]);
        }
        for (Eigen::Index k = 0; k < p; ++k) out << "," << num(r.outputs[i][k]);
        out << "," << num(x.norm()) << "," << num((x - xi).norm()) << "\n";
    }
}

int count_strict_local_maxima(const Trajectory& traj, double t_end) {
    int count = 0;
    for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
        if (traj.times[i] > t_end) break;
        const double v = traj.states[i].norm();
        if (traj.states[i - 1].norm() < v && v > traj.states[i + 1].norm()) ++count;
    }
    return count;
}

bool settles_within(const Trajectory& traj, double from, double bound) {
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (traj.times[i] >= from && traj.states[i].norm() > bound) return false;
    }
    return true;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                 std::ostream& err) {
    return guarded(err, [&] {
        Scenario s = load_scenario(scenario_path);
        if (seed) s.seed = *seed;
        ensure_dir(out_dir);
        double wall = 0.0;
        const SimulationResult r = timed_run(s, wall);
        auto csv = open_out(fs::path(out_dir) / "trajectory.csv");
        write_trajectory_csv(csv, r);
        auto summary = open_out(fs::path(out_dir) / "summary.txt");
        write_summary(summary, s, r, wall);
        return int(exit_ok);
    });
}

int cmd_reproduce(int example, const std::string& scheme, const std::string& out_dir,
                  std::optional<std::uint64_t> seed, std::ostream& err) {
    return guarded(err, [&] {
        Scheme which;
        if (scheme == "obpc") {
            which = Scheme::obpc;
        } else if (scheme == "mpc" || scheme == "standard_mpc") {
            which = Scheme::standard_mpc;
        } else {
            throw ConfigError("scheme must be obpc or mpc", "scheme");
        }
        if (example != 1 && example != 2) throw ConfigError("example must be 1 or 2", "example");
        Scenario s = canonical_scenario(example, which);
        if (seed) s.seed = *seed;
        ensure_dir(out_dir);
        double wall = 0.0;
        const SimulationResult r = timed_run(s, wall);

        const std::string stem = "example" + std::to_string(example) + "_" + (which == Scheme::obpc ? "obpc" : "mpc");
        auto csv = open_out(fs::path(out_dir) / (stem + ".csv"));
        write_trajectory_csv(csv, r);
        auto dat = open_out(fs::path(out_dir) / (stem + ".dat"));
        write_dat(dat, r);
        auto gp = open_out(fs::path(out_dir) / (stem + ".gp"));
        write_gnuplot(gp, stem);

        const Vec& u0 = r.applied_controls.front();
        const int maxima = count_strict_local_maxima(r.plant, 20.0);
        auto summary = open_out(fs::path(out_dir) / (stem + "_summary.txt"));
        write_summary(summary, s, r, wall);
        summary << "first_control_zero = " << (u0.isZero(0.0) ? "true" : "false") << "\n";
        summary << "converged = " << (settles_within(r.plant, 10.0, 0.5) ? "true" : "false") << "\n";
        summary << "local_maxima = " << maxima << "\n";
        summary << "oscillatory = " << (maxima >= 2 ? "true" : "false") << "\n";
        return int(exit_ok);
    });
}

int cmd_stability(int example, const std::string& out_path, std::ostream& err) {
    return guarded(err, [&] {
        if (example != 1 && example != 2) throw ConfigError("example must be 1 or 2", "example");
        return write_stability(canonical_scenario(example, Scheme::obpc), out_path,
                               "example" + std::to_string(example));
    });
}

int cmd_stability_scenario(const std::string& scenario_path, const std::string& out_path, std::ostream& err) {
    return guarded(err, [&] { return write_stability(load_scenario(scenario_path), out_path, scenario_path); });
}

int cmd_sweep(const std::string& sweep_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
              std::ostream& err) {
    return guarded(err, [&] {
        SweepSpec spec = load_sweep(sweep_path);
        if (seed) spec.base.seed = *seed;
        ensure_dir(out_dir);
        const std::size_t count = spec.initial_states.size();

        struct Outcome {
            std::optional<SimulationResult> result;
            int code = exit_ok;
            std::string message;
        };
        std::vector<Outcome> outcomes(count);
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < count; i = next++) {
                Scenario s = spec.base;
                s.x0 = spec.initial_states[i];
                s.seed = spec.base.seed + i;
                std::ostringstream diag;
                outcomes[i].code = guarded(diag, [&] {
                    outcomes[i].result = run_scenario(s);
                    return int(exit_ok);
                });
                outcomes[i].message = diag.str();
            }
        };
        const int workers = std::max(1, std::min<int>(spec.workers, static_cast<int>(count)));
        std::vector<std::thread> pool;
        for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();

        json report;
        report["runs"] = json::array();
        std::vector<SimulationResult> ok;
        int last_code = exit_ok;
        for (std::size_t i = 0; i < count; ++i) {
            std::ostringstream name;
            name << "run_" << std::setw(3) << std::setfill('0') << i << ".csv";
            json entry{{"index", i}, {"x0", {}}, {"status", outcomes[i].code}};
            for (Eigen::Index k = 0; k < spec.initial_states[i].size(); ++k) {
                entry["x0"].push_back(spec.initial_states[i][k]);
            }
            if (outcomes[i].result) {
                auto csv = open_out(fs::path(out_dir) / name.str());
                write_trajectory_csv(csv, *outcomes[i].result);
                entry["csv"] = name.str();
                entry["final_norm_x"] = outcomes[i].result->plant.final_state().norm();
                ok.push_back(std::move(*outcomes[i].result));
            } else {
                entry["error"] = outcomes[i].message;
                last_code = outcomes[i].code;
                err << "run " << i << ": " << outcomes[i].message;
            }
            report["runs"].push_back(entry);
        }

        report["delta1"] = spec.radius;
        report["nu"] = spec.nu;
        report["alpha"] = spec.alpha;
        report["completed_runs"] = ok.size();
        if (!ok.empty()) {
            const PracticalStabilityEstimate est = certify_practical_stability(ok, spec.radius);
            report["estimate"] = {{"delta2", est.delta2},
                                  {"beta_c", est.beta.c},
                                  {"beta_sigma", est.beta.sigma},
                                  {"fit_success", est.fit_success},
                                  {"violations", est.violations}};
            json theorem;
            try {
                const CombinedSystemConstants k = theorem31_constants(spec.nu, spec.alpha, spec.radius, est.delta2);
                const EnvelopeFit combined = fit_combined_envelope(ok, est.delta2);
                const BoundCheck check = theorem31_bound_check(ok, spec.nu, spec.radius, est.delta2, combined.fit);
                theorem = {{"delta1_bar", k.delta1_bar},
                           {"delta2_bar", k.delta2_bar},
                           {"beta_bar_c", combined.fit.c},
                           {"beta_bar_sigma", combined.fit.sigma},
                           {"fit_success", combined.success},
                           {"pass", check.pass && combined.success},
                           {"worst_margin", check.worst_margin},
                           {"violations", check.violations}};
            } catch (const InvalidParameter& e) {
                theorem = {{"pass", false}, {"error", e.what()}};
            }
            report["theorem_check"] = theorem;
        }
        auto out = open_out(fs::path(out_dir) / "report.json");
        out << report.dump(2) << "\n";
        return ok.empty() ? (last_code == exit_ok ? int(exit_failure) : last_code) : int(exit_ok);
    });
}

}  // namespace obpc
