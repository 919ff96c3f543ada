#include "obpc/predictive_control.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "obpc/errors.hpp"
#include "obpc/nelder_mead.hpp"

namespace obpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_weight(const Mat& W, int dim, const char* name, bool strictly_positive) {
    if (W.rows() != dim || W.cols() != dim) {
        std::ostringstream os;
        os << "cost weight " << name << " must be " << dim << "x" << dim;
        throw InvalidParameter(os.str());
    }
    if (!W.allFinite() || (W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + W.cwiseAbs().maxCoeff())) {
        throw InvalidParameter(std::string("cost weight ") + name + " must be symmetric and finite");
    }
    const Eigen::SelfAdjointEigenSolver<Mat> es(W);
    const double smallest = es.eigenvalues().minCoeff();
    const double scale = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (strictly_positive ? !(smallest > scale) : smallest < -scale) {
        throw InvalidParameter(std::string("cost weight ") + name +
                               (strictly_positive ? " must be positive definite" : " must be positive semidefinite"));
    }
}

int simpson_weight(int s, int K) {
    if (s == 0 || s == K) return 1;
    return (s % 2 == 1) ? 4 : 2;
}

void require_even_substeps(const TimeGrid& grid) {
    if (grid.substeps() % 2 != 0) throw InvalidParameter("Simpson quadrature needs an even number of substeps K");
}

void require_coverage(const HistoryBuffer& buf, double now, double delay, const char* what) {
    const double tol = 1e-7 * buf.step();
    if (buf.start_time() > now - delay + tol || buf.end_time() < now - tol) {
        std::ostringstream os;
        os.precision(17);
        os << what << " covers [" << buf.start_time() << ", " << buf.end_time() << "] but ["
           << now - delay << ", " << now << "] is required";
        throw PreconditionError(os.str());
    }
}

}  // namespace

CostSpec CostSpec::defaults(int n, int m) {
    return CostSpec{Mat::Identity(n, n), 0.01 * Mat::Identity(m, m), Mat::Identity(n, n)};
}

void CostSpec::validate(int n, int m) const {
    check_weight(Q, n, "Q", false);
    check_weight(R, m, "R", true);
    check_weight(terminal, n, "P_f", false);
}

double cost_functional(const Trajectory& predicted, const ControlSequence& seq, const CostSpec& cost,
                       const TimeGrid& grid) {
    require_even_substeps(grid);
    const int K = grid.substeps();
    const int N = grid.horizon();
    if (predicted.size() != static_cast<std::size_t>(N * K + 1)) {
        throw InvalidParameter("predicted trajectory does not span exactly one horizon");
    }
    if (seq.size() != static_cast<std::size_t>(N)) throw InvalidParameter("control sequence length differs from N");
    const double h = grid.step();
    double total = 0.0;
    for (int j = 0; j < N; ++j) {
        const Vec& v = seq[static_cast<std::size_t>(j)];
        double acc = 0.0;
        for (int s = 0; s <= K; ++s) {
            acc += simpson_weight(s, K) * cost.stage(predicted.states[static_cast<std::size_t>(j * K + s)], v);
        }
        total += (h / 3.0) * acc;
    }
    return total + cost.terminal_cost(predicted.final_state());
}

MpcLoopState initial_loop_state(const PlantModel& plant, const TimeGrid& grid, const Vec& x0, const Vec& xi0,
                                std::uint64_t seed) {
    if (x0.size() != plant.state_dim() || xi0.size() != plant.state_dim()) {
        throw InvalidParameter("initial plant and observer values must match the state dimension");
    }
    const auto count = static_cast<std::size_t>(grid.horizon_steps()) + 1;
    const double start = -grid.horizon_span();
    return MpcLoopState{0,
                        0.0,
                        x0,
                        xi0,
                        HistoryBuffer::constant(start, grid.step(), count, xi0),
                        HistoryBuffer::constant(start, grid.step(), count, plant.output(x0)),
                        std::nullopt,
                        std::mt19937_64(seed)};
}

HorizonPredictor::HorizonPredictor(Vec initial, double start_time, const TimeGrid& grid, StageRhs rhs)
    : initial_(std::move(initial)), start_(start_time), grid_(grid), rhs_(std::move(rhs)) {
    require_even_substeps(grid_);
}

HorizonPredictor HorizonPredictor::from_observer(const MpcLoopState& state, const ObserverModel& observer,
                                                 const TimeGrid& grid, const HistoryBuffer& output_source,
                                                 LookupTrace* trace) {
    const double delay = observer.delay();
    if (std::abs(delay - grid.horizon_span()) > 1e-9 * grid.step()) {
        throw PreconditionError("observer-based prediction needs an observer retarded by the horizon length");
    }
    require_coverage(state.observer_history, state.time, delay, "observer history");
    require_coverage(output_source, state.time, delay, "output buffer");

    struct DelayedData {
        std::vector<Vec> xi;
        std::vector<Vec> y;
    };
    auto data = std::make_shared<DelayedData>();
    const long steps = grid.horizon_steps();
    const double h = grid.step();
    data->xi.reserve(static_cast<std::size_t>(3 * steps));
    data->y.reserve(static_cast<std::size_t>(3 * steps));
    for (long k = 0; k < steps; ++k) {
        const double tk = state.time + static_cast<double>(k) * h;
        for (Stage stage : {Stage::left, Stage::middle, Stage::right}) {
            data->xi.push_back(delayed_stage_read(state.observer_history, tk, h, stage, delay));
            data->y.push_back(delayed_stage_read(output_source, tk, h, stage, delay, trace));
        }
    }
    if (const auto* lin = dynamic_cast<const LuenbergerObserver*>(&observer)) {
        auto forcing = std::make_shared<std::vector<Vec>>();
        forcing->reserve(data->xi.size());
        for (std::size_t i = 0; i < data->xi.size(); ++i) {
            forcing->push_back(lin->delayed_injection(data->xi[i], data->y[i]));
        }
        const Mat A = lin->plant().A();
        const Mat B = lin->plant().B();
        HorizonPredictor p(state.observer_state, state.time, grid,
                           [A, B, forcing](long k, Stage stage, const Vec& z, const Vec& v) {
                               const auto idx = static_cast<std::size_t>(3 * k + static_cast<int>(stage));
                               return Vec(A.lazyProduct(z) + B.lazyProduct(v) - (*forcing)[idx]);
                           });
        p.linear_ = LinearKernel{A, B, forcing};
        return p;
    }
    return HorizonPredictor(state.observer_state, state.time, grid,
                            [&observer, data](long k, Stage stage, const Vec& z, const Vec& v) {
                                const auto idx = static_cast<std::size_t>(3 * k + static_cast<int>(stage));
                                return observer.rhs(z, data->xi[idx], data->y[idx], v);
                            });
}

HorizonPredictor HorizonPredictor::from_plant_model(const PlantModel& plant, const Vec& estimate, double start_time,
                                                    const TimeGrid& grid) {
    if (const auto* lin = dynamic_cast<const LinearPlant*>(&plant)) {
        const Mat A = lin->A();
        const Mat B = lin->B();
        HorizonPredictor p(estimate, start_time, grid, [A, B](long, Stage, const Vec& z, const Vec& v) {
            return Vec(A.lazyProduct(z) + B.lazyProduct(v));
        });
        p.linear_ = LinearKernel{A, B, nullptr};
        return p;
    }
    return HorizonPredictor(estimate, start_time, grid,
                            [&plant](long, Stage, const Vec& z, const Vec& v) { return plant.rhs(z, v); });
}

Trajectory HorizonPredictor::predict(const ControlSequence& seq) const {
    if (seq.size() != static_cast<std::size_t>(grid_.horizon())) {
        throw InvalidParameter("control sequence length differs from N");
    }
    const double h = grid_.step();
    const long steps = grid_.horizon_steps();
    Trajectory traj;
    traj.step = h;
    traj.times.reserve(static_cast<std::size_t>(steps) + 1);
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    traj.times.push_back(start_);
    traj.states.push_back(initial_);
    Vec z = initial_;
    for (long k = 0; k < steps; ++k) {
        const double t = start_ + static_cast<double>(k) * h;
        const Vec& v = zoh_value(seq, t, grid_, start_);
        z = rk4_step([&](double, Stage stage, const Vec& s) { return rhs_(k, stage, s, v); }, t, h, z);
        const double t_next = start_ + static_cast<double>(k + 1) * h;
        check_finite(z, t_next);
        traj.times.push_back(t_next);
        traj.states.push_back(z);
        traj.controls.push_back(v);
    }
    return traj;
}

const HorizonPredictor::Condensed& HorizonPredictor::condensed(const CostSpec& cost) const {
    if (condensed_ && condensed_->Q == cost.Q && condensed_->R == cost.R && condensed_->terminal == cost.terminal) {
        return *condensed_;
    }
    const int N = grid_.horizon();
    const int K = grid_.substeps();
    const Eigen::Index n = initial_.size();
    const Eigen::Index m = linear_->B.cols();
    const Eigen::Index d = N * m;
    const double h = grid_.step();
    const double half = 0.5 * h;
    const Eigen::MatrixXd A = linear_->A;
    const Eigen::MatrixXd B = linear_->B;
    const std::vector<Vec>* forcing = linear_->forcing.get();
    const Eigen::MatrixXd Q = cost.Q;

    // Column 0: response to the initial state and the forcing; columns 1..d:
    // response to each control coordinate.
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, d + 1);
    Z.col(0) = initial_;
    auto deriv = [&](const Eigen::MatrixXd& X, int j, std::size_t idx) {
        Eigen::MatrixXd D = A * X;
        if (forcing) D.col(0) -= Eigen::VectorXd((*forcing)[idx]);
        D.middleCols(1 + j * m, m) += B;
        return D;
    };
    auto accumulate = [&](auto& out, const Eigen::MatrixXd& X, double w) {
        const Eigen::MatrixXd QX = Q * X;
        out.noalias() += w * (X.transpose() * QX);
    };

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d + 1, d + 1);
    for (int j = 0; j < N; ++j) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d + 1, d + 1);
        accumulate(acc, Z, 1.0);
        for (int st = 1; st <= K; ++st) {
            const auto base = static_cast<std::size_t>(3 * (j * K + st - 1));
            const Eigen::MatrixXd k1 = deriv(Z, j, base);
            const Eigen::MatrixXd k2 = deriv(Z + half * k1, j, base + 1);
            const Eigen::MatrixXd k3 = deriv(Z + half * k2, j, base + 1);
            const Eigen::MatrixXd k4 = deriv(Z + h * k3, j, base + 2);
            Z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            accumulate(acc, Z, static_cast<double>(simpson_weight(st, K)));
        }
        M += (h / 3.0) * acc;
        // Control weight over the interval: (h/3) * sum of Simpson weights = T.
        const double span = (h / 3.0) * static_cast<double>(3 * K);
        M.block(1 + j * m, 1 + j * m, m, m) += span * Eigen::MatrixXd(cost.R);
    }
    const Eigen::MatrixXd PZ = Eigen::MatrixXd(cost.terminal) * Z;
    M.noalias() += Z.transpose() * PZ;
    M = 0.5 * (M + M.transpose()).eval();

    auto out = std::make_shared<Condensed>();
    out->Q = cost.Q;
    out->R = cost.R;
    out->terminal = cost.terminal;
    out->c = M(0, 0);
    out->g = M.col(0).tail(d);
    out->H = M.bottomRightCorner(d, d);
    condensed_ = out;
    return *condensed_;
}

double HorizonPredictor::cost(const Eigen::VectorXd& flat, const CostSpec& cost) const {
    if (linear_) {
        const Condensed& q = condensed(cost);
        const double value = q.c + 2.0 * q.g.dot(flat) + flat.dot(q.H * flat);
        return std::isfinite(value) ? value : kInf;
    }
    const int N = grid_.horizon();
    const int K = grid_.substeps();
    const auto m = static_cast<Eigen::Index>(flat.size() / N);
    const double h = grid_.step();
    Vec z = initial_;
    double total = 0.0;
    for (int j = 0; j < N; ++j) {
        const Vec v = flat.segment(j * m, m);
        double acc = cost.stage(z, v);
        for (int s = 1; s <= K; ++s) {
            const long k = static_cast<long>(j) * K + (s - 1);
            const double t = start_ + static_cast<double>(k) * h;
            z = rk4_step([&](double, Stage stage, const Vec& x) { return rhs_(k, stage, x, v); }, t, h, z);
            if (!z.allFinite() || z.cwiseAbs().maxCoeff() > kDivergenceBound) return kInf;
            acc += simpson_weight(s, K) * cost.stage(z, v);
        }
        total += (h / 3.0) * acc;
    }
    const double value = total + cost.terminal_cost(z);
    return std::isfinite(value) ? value : kInf;
}

Trajectory predict_observer(const MpcLoopState& state, const ControlSequence& seq, const ObserverModel& observer,
                            const TimeGrid& grid, LookupTrace* trace) {
    return HorizonPredictor::from_observer(state, observer, grid, state.output_history, trace).predict(seq);
}

HorizonSolution minimize_horizon_cost(const HorizonPredictor& predictor, const CostSpec& cost, const ControlBox& box,
                                      const TimeGrid& grid, const std::optional<ControlSequence>& warm,
                                      const OptimizerSettings& settings, std::mt19937_64& rng) {
    if (settings.restarts < 0 || settings.max_iterations < 1 || !(settings.tolerance > 0.0)) {
        throw InvalidParameter("optimizer settings must be positive");
    }
    const int N = grid.horizon();
    const Eigen::Index m = box.lo.size();
    Eigen::VectorXd lo(N * m), hi(N * m);
    for (int j = 0; j < N; ++j) {
        lo.segment(j * m, m) = box.lo;
        hi.segment(j * m, m) = box.hi;
    }
    int evaluations = 0;
    auto objective = [&](const Eigen::VectorXd& flat) {
        ++evaluations;
        return predictor.cost(flat, cost);
    };

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(N * m).cwiseMax(lo).cwiseMin(hi);
    std::vector<Eigen::VectorXd> starts;
    std::optional<double> warm_cost;
    if (settings.warm_start && warm && warm->size() == static_cast<std::size_t>(N)) {
        starts.push_back(warm->flatten().cwiseMax(lo).cwiseMin(hi));
        warm_cost = objective(starts.back());
    }
    starts.push_back(zero);
    const double zero_cost = objective(zero);
    for (int r = 0; r < settings.restarts; ++r) {
        Eigen::VectorXd draw(N * m);
        for (Eigen::Index i = 0; i < draw.size(); ++i) {
            std::uniform_real_distribution<double> dist(lo[i], hi[i]);
            draw[i] = hi[i] > lo[i] ? dist(rng) : lo[i];
        }
        starts.push_back(draw);
    }

    NelderMeadOptions options;
    options.max_iterations = settings.max_iterations;
    options.tolerance = settings.tolerance;

    Eigen::VectorXd best_x = zero;
    double best = kInf;
    for (const auto& start : starts) {
        NelderMeadResult res = nelder_mead_box(objective, start, lo, hi, options);
        // Restart from the result with a fresh, smaller simplex until it stops improving.
        NelderMeadOptions polish = options;
        polish.initial_step = 0.01;
        for (int round = 0; round < 2 && std::isfinite(res.value); ++round) {
            NelderMeadResult again = nelder_mead_box(objective, res.x, lo, hi, polish);
            const bool improved = again.value < res.value - settings.tolerance * (1.0 + std::abs(res.value));
            if (again.value < res.value) res = std::move(again);
            if (!improved) break;
        }
        if (res.value < best) {
            best = res.value;
            best_x = res.x;
        }
    }
    if (!std::isfinite(best)) throw OptimizationFailure("every optimizer start produced a non-finite cost");

    return HorizonSolution{ControlSequence::unflatten(best_x, box), best, zero_cost, warm_cost, evaluations};
}

HorizonSolution optimize_horizon(MpcLoopState& state, const ObserverModel& observer, const CostSpec& cost,
                                 const ControlBox& box, const TimeGrid& grid, const OptimizerSettings& settings) {
    const HorizonPredictor predictor = HorizonPredictor::from_observer(state, observer, grid, state.output_history);
    return minimize_horizon_cost(predictor, cost, box, grid, state.previous, settings, state.rng);
}

Trajectory subsample_and_interpolate_outputs(const Trajectory& y, double output_period) {
    if (y.empty()) throw InvalidParameter("empty output record");
    const double ratio = output_period / y.step;
    const double r = std::round(ratio);
    if (!(output_period > 0.0) || r < 1.0 || std::abs(ratio - r) > 1e-9) {
        throw InvalidParameter("output sampling period must be a positive multiple of the integration step");
    }
    const auto every = static_cast<std::size_t>(r);
    const std::size_t n = y.size();
    Trajectory out = y;
    for (std::size_t a = 0; a + 1 < n; a += every) {
        const std::size_t b = std::min(a + every, n - 1);
        for (std::size_t i = a + 1; i < b; ++i) {
            const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
            out.states[i] = (1.0 - w) * y.states[a] + w * y.states[b];
        }
    }
    return out;
}

HistoryBuffer subsample_and_interpolate_outputs(const HistoryBuffer& y, double output_period) {
    Trajectory traj;
    traj.step = y.step();
    traj.states = y.samples();
    traj.times.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) traj.times.push_back(y.time_at(i));
    return HistoryBuffer(y.start_time(), y.step(),
                         subsample_and_interpolate_outputs(traj, output_period).states);
}

namespace {

MpcLoopState advance_state(const MpcLoopState& state, const TimeGrid& grid, const CoupledSegment& seg,
                           const ControlSequence& solution, std::mt19937_64 rng) {
    const double next_time = static_cast<double>(state.step_index + 1) * grid.sampling_period();
    const double keep_from = next_time - grid.horizon_span();
    return MpcLoopState{state.step_index + 1,
                        next_time,
                        seg.plant.final_state(),
                        seg.observer.final_state(),
                        state.observer_history.append(seg.observer).drop_before(keep_from),
                        state.output_history.append(seg.output).drop_before(keep_from),
                        solution.shifted(),
                        std::move(rng)};
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

StepOutcome obpc_step(const MpcLoopState& state, const PlantModel& plant, const ObserverModel& observer,
                      const CostSpec& cost, const ControlBox& box, const TimeGrid& grid,
                      const OptimizerSettings& settings, std::optional<double> output_period) {
    const auto started = std::chrono::steady_clock::now();
    const HistoryBuffer source = output_period ? subsample_and_interpolate_outputs(state.output_history, *output_period)
                                               : state.output_history;
    LookupTrace trace;
    const HorizonPredictor predictor = HorizonPredictor::from_observer(state, observer, grid, source, &trace);
    std::mt19937_64 rng = state.rng;
    HorizonSolution sol = minimize_horizon_cost(predictor, cost, box, grid, state.previous, settings, rng);
    const Vec u = sol.sequence[0];

    CoupledSegment seg = advance_coupled(plant, observer, state.plant_state, state.observer_state, state.time,
                                         grid.substeps(), grid.step(), u, state.observer_history, source, &trace);
    const Trajectory predicted = predictor.predict(sol.sequence);
    double deviation = 0.0;
    for (std::size_t i = 0; i < seg.observer.size(); ++i) {
        deviation = std::max(deviation, (seg.observer.states[i] - predicted.states[i]).cwiseAbs().maxCoeff());
    }

    MpcLoopState next = advance_state(state, grid, seg, sol.sequence, std::move(rng));
    return StepOutcome{u, std::move(next), sol.cost, std::move(seg), deviation, trace, seconds_since(started)};
}

StepOutcome standard_mpc_step(const MpcLoopState& state, const PlantModel& plant, const ObserverModel& observer,
                              const CostSpec& cost, const ControlBox& box, const TimeGrid& grid,
                              const OptimizerSettings& settings) {
    if (observer.delay() != 0.0) throw PreconditionError("standard MPC expects an observer on the current output");
    const auto started = std::chrono::steady_clock::now();
    const HorizonPredictor predictor =
        HorizonPredictor::from_plant_model(plant, state.observer_state, state.time, grid);
    std::mt19937_64 rng = state.rng;
    HorizonSolution sol = minimize_horizon_cost(predictor, cost, box, grid, state.previous, settings, rng);
    const Vec u = sol.sequence[0];
    CoupledSegment seg = advance_coupled(plant, observer, state.plant_state, state.observer_state, state.time,
                                         grid.substeps(), grid.step(), u, state.observer_history,
                                         state.output_history);
    MpcLoopState next = advance_state(state, grid, seg, sol.sequence, std::move(rng));
    return StepOutcome{u, std::move(next), sol.cost, std::move(seg), 0.0, LookupTrace{}, seconds_since(started)};
}

namespace {

void validate_setup(const ClosedLoopSetup& setup) {
    if (!setup.plant || !setup.observer) throw InvalidParameter("closed loop needs a plant and an observer");
    const int n = setup.plant->state_dim();
    const int m = setup.plant->input_dim();
    if (setup.observer->state_dim() != n || setup.observer->input_dim() != m ||
        setup.observer->output_dim() != setup.plant->output_dim()) {
        throw InvalidParameter("observer dimensions differ from the plant");
    }
    if (setup.box.dim() != m) throw InvalidParameter("control box dimension differs from the plant input");
    setup.cost.validate(n, m);
    if (setup.initial_state.size() != n || setup.initial_estimate.size() != n) {
        throw InvalidParameter("initial values must match the state dimension");
    }
}

template <class Step>
SimulationResult run_loop(const ClosedLoopSetup& setup, Step&& step) {
    validate_setup(setup);
    const TimeGrid& grid = setup.grid;
    const long total_steps = grid.steps_in(setup.span);
    if (total_steps % grid.substeps() != 0) throw InvalidParameter("span must be a multiple of the sampling period");
    const long periods = total_steps / grid.substeps();

    MpcLoopState state = initial_loop_state(*setup.plant, grid, setup.initial_state, setup.initial_estimate, setup.seed);

    SimulationResult result;
    result.initial_state = setup.initial_state;
    result.initial_estimate = setup.initial_estimate;
    for (Trajectory* tr : {&result.plant, &result.observer}) {
        tr->step = grid.step();
        tr->times.push_back(0.0);
    }
    result.plant.states.push_back(state.plant_state);
    result.observer.states.push_back(state.observer_state);
    result.outputs.push_back(setup.plant->output(state.plant_state));

    for (long j = 0; j < periods; ++j) {
        StepOutcome outcome = step(state);
        const CoupledSegment& seg = outcome.segment;
        for (std::size_t i = 1; i < seg.plant.size(); ++i) {
            result.plant.times.push_back(seg.plant.times[i]);
            result.plant.states.push_back(seg.plant.states[i]);
            result.plant.controls.push_back(seg.plant.controls[i - 1]);
            result.observer.times.push_back(seg.observer.times[i]);
            result.observer.states.push_back(seg.observer.states[i]);
            result.observer.controls.push_back(seg.observer.controls[i - 1]);
            result.outputs.push_back(seg.output.states[i]);
        }
        result.applied_controls.push_back(outcome.applied);
        result.step_costs.push_back(outcome.cost);
        result.step_seconds.push_back(outcome.wall_seconds);
        result.max_prediction_deviation = std::max(result.max_prediction_deviation, outcome.prediction_deviation);
        if (outcome.output_reads.latest_time > state.time + 1e-7 * grid.step()) ++result.future_reads;
        result.history_interpolations += outcome.output_reads.interpolations;
        state = std::move(outcome.next);
    }
    return result;
}

}  // namespace

SimulationResult run_obpc(const ClosedLoopSetup& setup) {
    return run_loop(setup, [&](const MpcLoopState& state) {
        return obpc_step(state, *setup.plant, *setup.observer, setup.cost, setup.box, setup.grid, setup.optimizer,
                         setup.output_period);
    });
}

SimulationResult run_standard_mpc(const ClosedLoopSetup& setup) {
    return run_loop(setup, [&](const MpcLoopState& state) {
        return standard_mpc_step(state, *setup.plant, *setup.observer, setup.cost, setup.box, setup.grid,
                                 setup.optimizer);
    });
}

}  // namespace obpc
