#include "obpc/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "obpc/errors.hpp"

namespace obpc {

namespace {

void require_dim(const Vec& v, int expected, const char* what) {
    if (v.size() != expected) {
        std::ostringstream os;
        os << what << " has dimension " << v.size() << ", expected " << expected;
        throw InvalidParameter(os.str());
    }
}

}  // namespace

LinearPlant::LinearPlant(Mat A, Mat B, Mat C) : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)) {
    if (A_.rows() == 0 || A_.rows() != A_.cols()) throw InvalidParameter("A must be square and nonempty");
    if (B_.rows() != A_.rows() || B_.cols() == 0) throw InvalidParameter("B must have as many rows as A");
    if (C_.cols() != A_.cols() || C_.rows() == 0) throw InvalidParameter("C must have as many columns as A");
    if (!A_.allFinite() || !B_.allFinite() || !C_.allFinite()) throw InvalidParameter("plant matrices must be finite");
}

Vec plant_rhs(const PlantModel& plant, const Vec& x, const Vec& u) {
    require_dim(x, plant.state_dim(), "state");
    require_dim(u, plant.input_dim(), "control");
    return plant.rhs(x, u);
}

Vec plant_output(const PlantModel& plant, const Vec& x) {
    require_dim(x, plant.state_dim(), "state");
    return plant.output(x);
}

LinearPlant example_plant(int which) {
    Mat A(2, 2);
    if (which == 1) {
        A << -1.0, 1.0, 1.0, -1.0;
    } else if (which == 2) {
        A << 0.0, 1.0, -1.0, 0.0;
    } else {
        throw InvalidParameter("example plant must be 1 or 2");
    }
    Mat C(1, 2);
    C << 1.0, 0.0;
    return LinearPlant(A, Mat::Identity(2, 2), C);
}

Mat default_injection_gain() {
    Mat K(2, 1);
    K << 1.0, 0.5;
    return K;
}

Mat gain_scaling(double lambda, int n) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidParameter("gain scaling needs lambda > 0");
    if (n < 1 || n > kMaxDim) throw InvalidParameter("gain scaling dimension out of range");
    Mat L = Mat::Zero(n, n);
    double power = 1.0;
    for (int i = 0; i < n; ++i) {
        power *= lambda;
        L(i, i) = power;
    }
    return L;
}

LuenbergerObserver::LuenbergerObserver(LinearPlant plant, double lambda, Mat gain, bool retarded, double delay)
    : plant_(std::move(plant)), lambda_(lambda), gain_(std::move(gain)), retarded_(retarded), delay_(delay) {
    if (gain_.rows() != plant_.state_dim() || gain_.cols() != plant_.output_dim()) {
        throw InvalidParameter("injection gain must be n x p");
    }
    if (retarded_ ? !(delay_ > 0.0) : delay_ != 0.0) {
        throw InvalidParameter("retarded observers need a positive delay, others a zero delay");
    }
    injection_ = gain_scaling(lambda_, plant_.state_dim()) * gain_;
}

LuenbergerObserver LuenbergerObserver::current(LinearPlant plant, double lambda, Mat gain) {
    return LuenbergerObserver(std::move(plant), lambda, std::move(gain), false, 0.0);
}

LuenbergerObserver LuenbergerObserver::retarded(LinearPlant plant, double lambda, Mat gain, const TimeGrid& grid) {
    return LuenbergerObserver(std::move(plant), lambda, std::move(gain), true, grid.horizon_span());
}

Mat LuenbergerObserver::error_matrix() const {
    return plant_.A() - injection_ * plant_.C();
}

Vec LuenbergerObserver::rhs(const Vec& xi, const Vec& xi_delayed, const Vec& y_delayed, const Vec& u) const {
    return plant_.A().lazyProduct(xi) + plant_.B().lazyProduct(u) - delayed_injection(xi_delayed, y_delayed);
}

Vec LuenbergerObserver::delayed_injection(const Vec& xi_delayed, const Vec& y_delayed) const {
    return injection_.lazyProduct(Vec(plant_.C().lazyProduct(xi_delayed) - y_delayed));
}

Vec LuenbergerObserver::luenberger_rhs(const Vec& xi, const Vec& y, const Vec& u) const {
    if (retarded_) throw ContractViolation("luenberger_rhs called on a retarded observer");
    require_dim(xi, state_dim(), "observer state");
    require_dim(y, output_dim(), "output");
    require_dim(u, input_dim(), "control");
    return rhs(xi, xi, y, u);
}

Vec LuenbergerObserver::retarded_luenberger_rhs(const Vec& xi, const Vec& xi_delayed, const Vec& y_delayed,
                                                const Vec& u) const {
    if (!retarded_) throw ContractViolation("retarded_luenberger_rhs called on a non-retarded observer");
    require_dim(xi, state_dim(), "observer state");
    require_dim(xi_delayed, state_dim(), "delayed observer state");
    require_dim(y_delayed, output_dim(), "delayed output");
    require_dim(u, input_dim(), "control");
    return rhs(xi, xi_delayed, y_delayed, u);
}

CoupledSegment advance_coupled(const PlantModel& plant, const ObserverModel& observer, const Vec& x0,
                               const Vec& xi0, double t, long steps, double h, const Vec& u,
                               const HistoryBuffer& observer_history, const HistoryBuffer& output_source,
                               LookupTrace* trace) {
    const double delay = observer.delay();
    CoupledSegment seg;
    for (Trajectory* tr : {&seg.plant, &seg.observer, &seg.output}) {
        tr->step = h;
        tr->times.reserve(static_cast<std::size_t>(steps) + 1);
        tr->times.push_back(t);
    }
    seg.plant.states.push_back(x0);
    seg.observer.states.push_back(xi0);
    seg.output.states.push_back(plant.output(x0));

    Vec x = x0;
    Vec xi = xi0;
    for (long k = 0; k < steps; ++k) {
        const double tk = t + static_cast<double>(k) * h;
        auto f = [&](double, Stage stage, const Vec& xs, const Vec& zs, Vec& dx, Vec& dz) {
            dx = plant.rhs(xs, u);
            if (delay == 0.0) {
                dz = observer.rhs(zs, zs, plant.output(xs), u);
            } else {
                const Vec zd = delayed_stage_read(observer_history, tk, h, stage, delay);
                const Vec yd = delayed_stage_read(output_source, tk, h, stage, delay, trace);
                dz = observer.rhs(zs, zd, yd, u);
            }
        };
        rk4_step_pair(f, tk, h, x, xi);
        const double t_next = t + static_cast<double>(k + 1) * h;
        check_finite(x, t_next);
        check_finite(xi, t_next);
        for (Trajectory* tr : {&seg.plant, &seg.observer, &seg.output}) {
            tr->times.push_back(t_next);
            tr->controls.push_back(u);
        }
        seg.plant.states.push_back(x);
        seg.observer.states.push_back(xi);
        seg.output.states.push_back(plant.output(x));
    }
    return seg;
}

namespace {

HistoryBuffer output_history_of(const PlantModel& plant, const HistoryBuffer& states) {
    std::vector<Vec> ys;
    ys.reserve(states.size());
    for (const auto& s : states.samples()) ys.push_back(plant.output(s));
    return HistoryBuffer(states.start_time(), states.step(), std::move(ys));
}

}  // namespace

double check_a1_identity(const PlantModel& plant, const ObserverModel& observer, const TimeGrid& grid,
                         const HistoryBuffer& plant_history, const HistoryBuffer& observer_history,
                         const std::vector<Vec>& controls, double span) {
    if (plant_history.start_time() != observer_history.start_time() ||
        plant_history.step() != observer_history.step() ||
        plant_history.samples() != observer_history.samples()) {
        throw PreconditionError("observer history does not match the plant history");
    }
    if (controls.empty()) throw InvalidParameter("at least one control value is required");
    const double h = grid.step();
    if (plant_history.step() != h) throw PreconditionError("history step differs from the integration step");
    grid.steps_in(observer.delay());
    if (plant_history.start_time() > plant_history.end_time() - observer.delay() + 1e-7 * h) {
        throw PreconditionError("history shorter than the observer delay");
    }
    const long periods = grid.steps_in(span) / grid.substeps();
    if (static_cast<long>(periods) * grid.substeps() != grid.steps_in(span)) {
        throw InvalidParameter("span must be a multiple of the sampling period");
    }

    HistoryBuffer xi_hist = observer_history;
    HistoryBuffer y_hist = output_history_of(plant, plant_history);
    Vec x = plant_history.samples().back();
    Vec xi = observer_history.samples().back();
    double t = plant_history.end_time();
    double worst = (xi - x).norm();
    for (long j = 0; j < periods; ++j) {
        const Vec& u = controls[std::min<std::size_t>(static_cast<std::size_t>(j), controls.size() - 1)];
        const CoupledSegment seg =
            advance_coupled(plant, observer, x, xi, t, grid.substeps(), h, u, xi_hist, y_hist);
        for (std::size_t i = 0; i < seg.plant.size(); ++i) {
            worst = std::max(worst, (seg.observer.states[i] - seg.plant.states[i]).norm());
        }
        xi_hist = xi_hist.append(seg.observer);
        y_hist = y_hist.append(seg.output);
        x = seg.plant.final_state();
        xi = seg.observer.final_state();
        t = seg.plant.end_time();
    }
    return worst;
}

EnvelopeSeries observer_error_series(const PlantModel& plant, const ObserverModel& observer, const TimeGrid& grid,
                                     const Vec& x0, const Vec& error0, double span) {
    const double h = grid.step();
    const long lag = std::max<long>(grid.steps_in(observer.delay()), 1);
    const auto count = static_cast<std::size_t>(lag + 1);
    const double start = -static_cast<double>(lag) * h;
    HistoryBuffer xi_hist = HistoryBuffer::constant(start, h, count, Vec(x0 + error0));
    HistoryBuffer y_hist = HistoryBuffer::constant(start, h, count, plant.output(x0));
    const long steps = grid.steps_in(span);
    const Vec u = Vec::Zero(plant.input_dim());

    EnvelopeSeries series;
    series.initial_norm = error0.norm();
    Vec x = x0;
    Vec xi = x0 + error0;
    double t = 0.0;
    series.times.push_back(0.0);
    series.values.push_back(series.initial_norm);
    long done = 0;
    while (done < steps) {
        const long chunk = std::min<long>(grid.substeps(), steps - done);
        const CoupledSegment seg = advance_coupled(plant, observer, x, xi, t, chunk, h, u, xi_hist, y_hist);
        for (std::size_t i = 1; i < seg.plant.size(); ++i) {
            series.times.push_back(seg.plant.times[i]);
            series.values.push_back((seg.observer.states[i] - seg.plant.states[i]).norm());
        }
        xi_hist = xi_hist.append(seg.observer).drop_before(seg.plant.end_time() - static_cast<double>(lag) * h);
        y_hist = y_hist.append(seg.output).drop_before(seg.plant.end_time() - static_cast<double>(lag) * h);
        x = seg.plant.final_state();
        xi = seg.observer.final_state();
        t = seg.plant.end_time();
        done += chunk;
    }
    return series;
}

A2EnvelopeResult fit_a2_envelope(const std::vector<EnvelopeSeries>& error_trajectories) {
    A2EnvelopeResult out;
    bool all_zero = true;
    for (const auto& s : error_trajectories) {
        for (double v : s.values) {
            if (v != 0.0) all_zero = false;
        }
    }
    if (all_zero) {
        out.success = true;
        out.zero_data = true;
        out.fit = KlFit{1.0, kEnvelopeSigmaMax};
        return out;
    }
    if (error_trajectories.size() < 3) throw InvalidParameter("envelope fit needs at least three error trajectories");
    std::vector<double> radii;
    for (const auto& s : error_trajectories) {
        if (!(s.initial_norm > 0.0)) throw InvalidParameter("envelope fit needs positive initial error norms");
        radii.push_back(s.initial_norm);
    }
    std::sort(radii.begin(), radii.end());
    if (std::adjacent_find(radii.begin(), radii.end()) != radii.end()) {
        throw InvalidParameter("envelope fit needs distinct initial error norms");
    }

    const EnvelopeFit fit = fit_exponential_envelope(error_trajectories, 0.0);
    out.fit = fit.fit;
    out.success = fit.success;
    if (!fit.success) {
        out.failure_reason = "no exponential envelope with positive decay dominates the error data";
    }
    return out;
}

}  // namespace obpc
