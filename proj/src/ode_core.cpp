#include "obpc/ode_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "obpc/errors.hpp"

namespace obpc {

namespace {

// Relative slack (in units of one step) when deciding that a time is a grid time.
constexpr double kGridSnap = 1e-7;

}  // namespace

TimeGrid TimeGrid::make(double sampling_period, int horizon, int substeps) {
    if (!(sampling_period > 0.0) || !std::isfinite(sampling_period)) {
        throw InvalidParameter("sampling period must be positive and finite");
    }
    if (horizon < 1) throw InvalidParameter("horizon length must be at least 1");
    if (substeps < 1) throw InvalidParameter("substeps per sampling period must be at least 1");

    // Pick the representable step closest to T/K for which K*h == T holds exactly.
    const double K = static_cast<double>(substeps);
    double h = sampling_period / K;
    if (h * K != sampling_period) {
        bool fixed = false;
        double candidate = h;
        for (int i = 0; i < 8 && !fixed; ++i) {
            candidate = std::nextafter(candidate, sampling_period);
            if (candidate * K == sampling_period) {
                h = candidate;
                fixed = true;
            }
        }
        candidate = h;
        for (int i = 0; i < 8 && !fixed; ++i) {
            candidate = std::nextafter(candidate, 0.0);
            if (candidate * K == sampling_period) {
                h = candidate;
                fixed = true;
            }
        }
        if (!fixed) {
            throw InvalidParameter("sampling period is not exactly divisible into the requested substeps");
        }
    }
    return TimeGrid(sampling_period, horizon, substeps, h);
}

long TimeGrid::steps_in(double span) const {
    const double r = span / h_;
    const double n = std::round(r);
    if (n < 0.0 || std::abs(r - n) > kGridSnap) {
        std::ostringstream os;
        os << "time span " << span << " is not a nonnegative multiple of the step " << h_;
        throw InvalidParameter(os.str());
    }
    return static_cast<long>(n);
}

ControlBox ControlBox::symmetric(int dim, double bound) {
    if (dim < 1 || dim > kMaxDim) throw InvalidParameter("control dimension out of range");
    if (!(bound >= 0.0)) throw InvalidParameter("control bound must be nonnegative");
    return ControlBox{Vec::Constant(dim, -bound), Vec::Constant(dim, bound)};
}

bool ControlBox::contains(const Vec& v) const {
    if (v.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(v[i] >= lo[i] && v[i] <= hi[i])) return false;
    }
    return true;
}

Vec ControlBox::project(const Vec& v) const {
    return v.cwiseMax(lo).cwiseMin(hi);
}

ControlSequence::ControlSequence(std::vector<Vec> values, ControlBox box)
    : values_(std::move(values)), box_(std::move(box)) {
    if (box_.lo.size() != box_.hi.size() || box_.lo.size() == 0) {
        throw InvalidParameter("control box bounds have inconsistent dimensions");
    }
    for (Eigen::Index i = 0; i < box_.lo.size(); ++i) {
        if (!(box_.lo[i] <= box_.hi[i])) throw InvalidParameter("control box has lo > hi");
    }
    if (values_.empty()) throw InvalidParameter("control sequence must not be empty");
    for (const auto& v : values_) {
        if (!box_.contains(v)) throw InvalidParameter("control value outside the admissible box");
    }
}

ControlSequence ControlSequence::zeros(int length, ControlBox box) {
    const Vec zero = box.project(Vec::Zero(box.dim()));
    return ControlSequence(std::vector<Vec>(static_cast<std::size_t>(length), zero), std::move(box));
}

Eigen::VectorXd ControlSequence::flatten() const {
    const Eigen::Index m = box_.lo.size();
    Eigen::VectorXd flat(static_cast<Eigen::Index>(values_.size()) * m);
    for (std::size_t j = 0; j < values_.size(); ++j) {
        flat.segment(static_cast<Eigen::Index>(j) * m, m) = values_[j];
    }
    return flat;
}

ControlSequence ControlSequence::unflatten(const Eigen::VectorXd& flat, const ControlBox& box) {
    const Eigen::Index m = box.lo.size();
    if (m == 0 || flat.size() % m != 0) throw InvalidParameter("flat control length is not a multiple of m");
    std::vector<Vec> values;
    values.reserve(static_cast<std::size_t>(flat.size() / m));
    for (Eigen::Index j = 0; j < flat.size() / m; ++j) values.emplace_back(flat.segment(j * m, m));
    return ControlSequence(std::move(values), box);
}

ControlSequence ControlSequence::shifted() const {
    std::vector<Vec> next(values_.begin() + 1, values_.end());
    next.push_back(values_.back());
    return ControlSequence(std::move(next), box_);
}

const Vec& zoh_value(const ControlSequence& seq, double t, const TimeGrid& grid, double t0) {
    const double r = (t - t0) / grid.sampling_period();
    double j = std::round(r);
    if (std::abs(r - j) > kGridSnap) j = std::floor(r);
    if (j < 0.0 || j >= static_cast<double>(seq.size()) || j >= static_cast<double>(grid.horizon())) {
        std::ostringstream os;
        os << "time " << t << " outside the control horizon starting at " << t0;
        throw OutOfRange(os.str());
    }
    return seq[static_cast<std::size_t>(j)];
}

HistoryBuffer::HistoryBuffer(double start_time, double step, std::vector<Vec> samples)
    : start_(start_time), step_(step), samples_(std::move(samples)) {
    if (samples_.empty()) throw InvalidParameter("history buffer needs at least one sample");
    if (!(step_ > 0.0)) throw InvalidParameter("history step must be positive");
}

HistoryBuffer HistoryBuffer::constant(double start_time, double step, std::size_t count, const Vec& value) {
    return HistoryBuffer(start_time, step, std::vector<Vec>(count, value));
}

HistoryBuffer HistoryBuffer::from_trajectory(const Trajectory& traj) {
    return HistoryBuffer(traj.start_time(), traj.step, traj.states);
}

std::optional<std::size_t> HistoryBuffer::grid_index(double t) const {
    const double r = (t - start_) / step_;
    const double i = std::round(r);
    if (std::abs(r - i) > kGridSnap) return std::nullopt;
    if (i < 0.0 || i > static_cast<double>(samples_.size() - 1)) return std::nullopt;
    return static_cast<std::size_t>(i);
}

Vec HistoryBuffer::lookup(double t, LookupTrace* trace) const {
    const double r = (t - start_) / step_;
    const double last = static_cast<double>(samples_.size() - 1);
    if (!(r >= -kGridSnap) || !(r <= last + kGridSnap)) {
        std::ostringstream os;
        os.precision(17);
        os << "history lookup at t=" << t << " outside [" << start_ << ", " << end_time() << "]";
        throw OutOfRange(os.str());
    }
    if (trace) {
        ++trace->reads;
        trace->latest_time = std::max(trace->latest_time, t);
    }
    const double i = std::round(r);
    if (std::abs(r - i) <= kGridSnap) return samples_[static_cast<std::size_t>(i)];

    if (trace) ++trace->interpolations;
    const auto lo = static_cast<std::size_t>(std::floor(r));
    const double w = r - static_cast<double>(lo);
    return (1.0 - w) * samples_[lo] + w * samples_[lo + 1];
}

HistoryBuffer HistoryBuffer::append(const Trajectory& segment) const {
    if (segment.empty()) return *this;
    if (std::abs(segment.step - step_) > 1e-12 * step_) {
        throw ContiguityError("appended segment has a different step");
    }
    if (std::abs(segment.start_time() - end_time()) > kGridSnap * step_) {
        std::ostringstream os;
        os.precision(17);
        os << "appended segment starts at " << segment.start_time() << " but history ends at " << end_time();
        throw ContiguityError(os.str());
    }
    if (segment.states.front() != samples_.back()) {
        throw ConsistencyError("appended segment disagrees with the history at the junction");
    }
    std::vector<Vec> merged;
    merged.reserve(samples_.size() + segment.size() - 1);
    merged.insert(merged.end(), samples_.begin(), samples_.end());
    merged.insert(merged.end(), segment.states.begin() + 1, segment.states.end());
    return HistoryBuffer(start_, step_, std::move(merged));
}

HistoryBuffer HistoryBuffer::drop_before(double t) const {
    const double r = (t - start_) / step_;
    if (r <= 0.0) return *this;
    auto first = static_cast<std::size_t>(std::ceil(r - kGridSnap));
    if (first >= samples_.size()) first = samples_.size() - 1;
    std::vector<Vec> kept(samples_.begin() + static_cast<std::ptrdiff_t>(first), samples_.end());
    return HistoryBuffer(time_at(first), step_, std::move(kept));
}

void check_finite(const Vec& x, double time) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || std::abs(x[i]) > kDivergenceBound) {
            std::ostringstream os;
            os.precision(17);
            os << "state diverged at t=" << time << " (coordinate " << i << " = " << x[i] << ")";
            throw DivergenceError(os.str(), time);
        }
    }
}

Vec delayed_stage_read(const HistoryBuffer& buf, double step_start, double h, Stage stage, double delay,
                       LookupTrace* trace) {
    switch (stage) {
        case Stage::left:
            return buf.lookup(step_start - delay, trace);
        case Stage::right:
            return buf.lookup(step_start + h - delay, trace);
        case Stage::middle:
            break;
    }
    const Vec a = buf.lookup(step_start - delay, trace);
    const Vec b = buf.lookup(step_start + h - delay, trace);
    return 0.5 * (a + b);
}

Trajectory rk4_integrate(const ControlledRhs& rhs, const Vec& x0, double t0, double t1, const TimeGrid& grid,
                         const ControlSequence& control) {
    const double h = grid.step();
    const long steps = grid.steps_in(t1 - t0);

    Trajectory traj;
    traj.step = h;
    traj.times.reserve(static_cast<std::size_t>(steps) + 1);
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    traj.controls.reserve(static_cast<std::size_t>(steps));
    traj.times.push_back(t0);
    traj.states.push_back(x0);
    check_finite(x0, t0);

    Vec x = x0;
    for (long k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * h;
        const Vec& u = zoh_value(control, t, grid, t0);
        x = rk4_step([&](double s, Stage, const Vec& z) { return rhs(s, z, u); }, t, h, x);
        const double t_next = t0 + static_cast<double>(k + 1) * h;
        check_finite(x, t_next);
        traj.times.push_back(t_next);
        traj.states.push_back(x);
        traj.controls.push_back(u);
    }
    return traj;
}

}  // namespace obpc
