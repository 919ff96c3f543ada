#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "obpc/linalg_types.hpp"
#include "obpc/predictive_control.hpp"

namespace obpc {

enum class Scheme { obpc, standard_mpc };

/// A fully validated closed-loop run description.
struct Scenario {
    /// "example1", "example2" or "custom" (then A, B, C are read from [custom]).
    std::string plant = "example1";
    Mat A, B, C;
    Scheme scheme = Scheme::obpc;
    double T = 0.1;
    int N = 5;
    int K = 20;
    CostSpec cost;
    ControlBox box;
    Vec x0;
    Vec xi0;
    double lambda = kDefaultGainLambda;
    Mat gain;
    bool retarded = true;
    double span = 20.0;
    std::optional<double> output_sampling;
    std::uint64_t seed = 0;
    OptimizerSettings optimizer;

    friend bool operator==(const Scenario& a, const Scenario& b);
};

/// Grid of initial plant states for a batch of runs sharing one base scenario.
struct SweepSpec {
    Scenario base;
    std::vector<Vec> initial_states;
    /// Radius Delta1 of the ball the initial states are taken from.
    double radius = 12.0;
    /// Bound on |x0 - xi0| and the slack alpha of the combined-system check.
    double nu = 15.0;
    double alpha = 0.25;
    int workers = 1;
};

/// Parses and validates scenario text. `source` only labels error messages.
/// Throws ConfigError naming the offending key.
Scenario parse_scenario(const std::string& text, const std::string& source = "<string>");
Scenario load_scenario(const std::string& path);

/// TOML text that parse_scenario reads back to an equal Scenario.
std::string emit_scenario(const Scenario& scenario);

/// The built-in benchmark setups: x0 = (11, 8), xi0 = 0, T = 0.1, N = 5, span 20.
Scenario canonical_scenario(int example, Scheme scheme);

/// Plant, observer and loop settings for run_obpc / run_standard_mpc.
ClosedLoopSetup make_setup(const Scenario& scenario);

/// Runs the loop the scenario selects.
SimulationResult run_scenario(const Scenario& scenario);

/// Scenario keys plus a [sweep] table with `radius` and either `lattice = n`
/// (n x n square lattice inscribed in the ball) or `points = [[..], ..]`,
/// and optional `nu`, `alpha`, `workers`. Throws ConfigError; an empty grid
/// is reported under the key `sweep.points`.
SweepSpec parse_sweep(const std::string& text, const std::string& source = "<string>");
SweepSpec load_sweep(const std::string& path);

}  // namespace obpc
