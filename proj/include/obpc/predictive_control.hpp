#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "obpc/linalg_types.hpp"
#include "obpc/models.hpp"
#include "obpc/ode_core.hpp"

namespace obpc {

/// Quadratic costs l(xi, v) = xi^T Q xi + v^T R v and F(xi) = xi^T P_f xi.
struct CostSpec {
    Mat Q;
    Mat R;
    Mat terminal;

    /// Q = Id, R = 0.01 Id, P_f = Id.
    static CostSpec defaults(int n, int m);

    /// Symmetry, Q and P_f positive semidefinite, R positive definite.
    /// Throws InvalidParameter naming the offending weight.
    void validate(int n, int m) const;

    double stage(const Vec& xi, const Vec& v) const { return xi.dot(Q.lazyProduct(xi)) + v.dot(R.lazyProduct(v)); }
    double terminal_cost(const Vec& xi) const { return xi.dot(terminal.lazyProduct(xi)); }
};

struct OptimizerSettings {
    /// Random starting points on top of the warm start and the zero sequence.
    int restarts = 3;
    /// Iteration cap for each Nelder-Mead run.
    int max_iterations = 3000;
    double tolerance = 1e-10;
    bool warm_start = true;
};

/// J_N = sum_j int_{t_j}^{t_{j+1}} l(xi, v_j) dt + F(xi(t_N)), each integral by
/// composite Simpson on the integration grid. `predicted` must hold exactly
/// N*K + 1 samples; K must be even.
double cost_functional(const Trajectory& predicted, const ControlSequence& seq, const CostSpec& cost,
                       const TimeGrid& grid);

/// Closed-loop state at a sampling instant t_j.
struct MpcLoopState {
    long step_index = 0;
    double time = 0.0;
    Vec plant_state;
    Vec observer_state;
    /// xi on [t_j - N T, t_j].
    HistoryBuffer observer_history;
    /// Measured y on [t_j - N T, t_j].
    HistoryBuffer output_history;
    /// Shifted optimal sequence of the previous step.
    std::optional<ControlSequence> previous;
    std::mt19937_64 rng;
};

/// State at t0 = 0 with constant histories x(theta) = x0, xi(theta) = xi0 on [-N T, 0].
MpcLoopState initial_loop_state(const PlantModel& plant, const TimeGrid& grid, const Vec& x0, const Vec& xi0,
                                std::uint64_t seed);

/// Fixed-data horizon predictions from one sampling instant: the initial
/// state and every exogenous signal are frozen, only the controls vary.
class HorizonPredictor {
public:
    /// Stage derivative for integration step k of the horizon.
    using StageRhs = std::function<Vec(long k, Stage stage, const Vec& z, const Vec& v)>;

    HorizonPredictor(Vec initial, double start_time, const TimeGrid& grid, StageRhs rhs);

    /// Retarded-observer prediction: xi(t - NT) from the observer history and
    /// y(t - NT) from `output_source` (the measured buffer or its reconstruction).
    /// Throws PreconditionError when either buffer does not reach back N T.
    static HorizonPredictor from_observer(const MpcLoopState& state, const ObserverModel& observer,
                                          const TimeGrid& grid, const HistoryBuffer& output_source,
                                          LookupTrace* trace = nullptr);

    /// Forward simulation of the plant model from the current estimate.
    static HorizonPredictor from_plant_model(const PlantModel& plant, const Vec& estimate, double start_time,
                                             const TimeGrid& grid);

    Trajectory predict(const ControlSequence& seq) const;

    /// Cost of the flattened sequence; +inf if the prediction diverges.
    double cost(const Eigen::VectorXd& flat_controls, const CostSpec& cost) const;

    double start_time() const noexcept { return start_; }
    const Vec& initial_state() const noexcept { return initial_; }

private:
    /// z' = A z + B v - forcing, with forcing per stage (empty means zero).
    struct LinearKernel {
        Mat A;
        Mat B;
        std::shared_ptr<const std::vector<Vec>> forcing;
    };

    /// For linear dynamics the horizon cost is exactly c + 2 g^T v + v^T H v
    /// in the flattened controls v; built on first use for a given cost.
    struct Condensed {
        Mat Q, R, terminal;
        Eigen::MatrixXd H;
        Eigen::VectorXd g;
        double c = 0.0;
    };

    const Condensed& condensed(const CostSpec& cost) const;

    Vec initial_;
    double start_;
    TimeGrid grid_;
    StageRhs rhs_;
    std::optional<LinearKernel> linear_;
    mutable std::shared_ptr<const Condensed> condensed_;
};

/// Trajectory of the retarded observer over [t_j, t_j + N T].
Trajectory predict_observer(const MpcLoopState& state, const ControlSequence& seq, const ObserverModel& observer,
                            const TimeGrid& grid, LookupTrace* trace = nullptr);

struct HorizonSolution {
    ControlSequence sequence;
    double cost = 0.0;
    /// Costs of the zero and warm-start sequences, for monotonicity checks.
    double zero_cost = 0.0;
    std::optional<double> warm_cost;
    int evaluations = 0;
};

/// Multistart box-projected Nelder-Mead over the N*m controls, from the warm
/// start, the (projected) zero sequence and `settings.restarts` uniform draws
/// from the box. Throws OptimizationFailure if every start gives a non-finite cost.
HorizonSolution minimize_horizon_cost(const HorizonPredictor& predictor, const CostSpec& cost, const ControlBox& box,
                                      const TimeGrid& grid, const std::optional<ControlSequence>& warm,
                                      const OptimizerSettings& settings, std::mt19937_64& rng);

/// Observer-based horizon optimization from the loop state (draws its random
/// starts from state.rng).
HorizonSolution optimize_horizon(MpcLoopState& state, const ObserverModel& observer, const CostSpec& cost,
                                 const ControlBox& box, const TimeGrid& grid, const OptimizerSettings& settings);

/// Piecewise-linear rebuild of an output record from the samples at
/// start + i * T_hat (and the final sample), on the original grid.
/// Throws InvalidParameter unless 0 < T_hat and T_hat is a multiple of the step.
Trajectory subsample_and_interpolate_outputs(const Trajectory& y, double output_period);
HistoryBuffer subsample_and_interpolate_outputs(const HistoryBuffer& y, double output_period);

struct StepOutcome {
    Vec applied;
    MpcLoopState next;
    double cost = 0.0;
    CoupledSegment segment;
    /// max |realized xi - predicted xi| over the first sampling interval.
    double prediction_deviation = 0.0;
    /// Reads of the output buffer made while predicting and advancing.
    LookupTrace output_reads;
    double wall_seconds = 0.0;
};

/// One OBPC step: optimize on the retarded observer, apply u_0 to the plant
/// over [t_j, t_j + T], advance the observer with the stored delayed data,
/// store the new outputs and drop data older than N T.
/// With `output_period`, the observer reads a reconstruction from outputs
/// sampled at that period instead of the full record.
StepOutcome obpc_step(const MpcLoopState& state, const PlantModel& plant, const ObserverModel& observer,
                      const CostSpec& cost, const ControlBox& box, const TimeGrid& grid,
                      const OptimizerSettings& settings, std::optional<double> output_period = std::nullopt);

/// One standard MPC step: optimize on a forward plant-model simulation from
/// xi(t_j), apply u_0, advance the current-output observer with the measurements.
StepOutcome standard_mpc_step(const MpcLoopState& state, const PlantModel& plant, const ObserverModel& observer,
                              const CostSpec& cost, const ControlBox& box, const TimeGrid& grid,
                              const OptimizerSettings& settings);

/// Everything a closed-loop run needs.
struct ClosedLoopSetup {
    std::shared_ptr<const PlantModel> plant;
    std::shared_ptr<const ObserverModel> observer;
    TimeGrid grid = TimeGrid::make(0.1, 5, 20);
    CostSpec cost;
    ControlBox box;
    /// Constant plant history value on [-N T, 0].
    Vec initial_state;
    /// Constant observer history value on [-N T, 0].
    Vec initial_estimate;
    double span = 10.0;
    OptimizerSettings optimizer;
    std::uint64_t seed = 0;
    std::optional<double> output_period;
};

struct SimulationResult {
    Trajectory plant;
    Trajectory observer;
    std::vector<Vec> outputs;
    /// One value per sampling interval.
    std::vector<Vec> applied_controls;
    std::vector<double> step_costs;
    std::vector<double> step_seconds;
    Vec initial_state;
    Vec initial_estimate;
    /// Largest realized-versus-predicted observer deviation (OBPC only).
    double max_prediction_deviation = 0.0;
    /// Output-buffer reads later than the sampling instant they served.
    std::size_t future_reads = 0;
    std::size_t history_interpolations = 0;
};

/// Closed loop with the observer-based predictor (retarded observer).
SimulationResult run_obpc(const ClosedLoopSetup& setup);

/// Closed loop with the standard forward-model predictor (current-output observer).
SimulationResult run_standard_mpc(const ClosedLoopSetup& setup);

}  // namespace obpc
