#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "obpc/predictive_control.hpp"
#include "obpc/scenario.hpp"

namespace obpc {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_divergence = 3, exit_optimizer = 4 };

/// Header `t, x1.., xi1.., u1.., y.., norm_x, norm_err` and one row per
/// integration sample, 17 significant digits. The control column holds the
/// value applied from that sample on; the last row repeats the last control.
void write_trajectory_csv(std::ostream& out, const SimulationResult& result);

/// Number of samples with |x| strictly above both neighbours, for t <= t_end.
int count_strict_local_maxima(const Trajectory& trajectory, double t_end);

/// |x(t)| <= bound for every sample with t >= from.
bool settles_within(const Trajectory& trajectory, double from, double bound);

/// Each command writes diagnostics to `err` and returns an ExitCode.
/// `seed` overrides the scenario seed when given.
int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                 std::ostream& err);
int cmd_reproduce(int example, const std::string& scheme, const std::string& out_dir,
                  std::optional<std::uint64_t> seed, std::ostream& err);
int cmd_stability(int example, const std::string& out_path, std::ostream& err);
/// Stability report for the plant and observer of an arbitrary scenario file.
int cmd_stability_scenario(const std::string& scenario_path, const std::string& out_path, std::ostream& err);
int cmd_sweep(const std::string& sweep_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
              std::ostream& err);

}  // namespace obpc
