#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "obpc/linalg_types.hpp"

namespace obpc {

/// Sampling period T, horizon length N and K integration substeps per period.
///
/// All closed-loop time bookkeeping goes through this grid. The integration
/// step is h = T/K and the horizon (and observer delay) is N*K*h, so every
/// delayed read t - N*T of a grid time t lands on a grid time again.
class TimeGrid {
public:
    /// Throws InvalidParameter for T <= 0, N < 1 or K < 1.
    static TimeGrid make(double sampling_period, int horizon, int substeps);

    double sampling_period() const noexcept { return T_; }
    int horizon() const noexcept { return N_; }
    int substeps() const noexcept { return K_; }
    double step() const noexcept { return h_; }
    /// N*T, the prediction horizon and the retarded observer's delay.
    double horizon_span() const noexcept { return h_ * static_cast<double>(N_ * K_); }
    int horizon_steps() const noexcept { return N_ * K_; }

    /// Number of whole integration steps in `span`; throws InvalidParameter if
    /// `span` is not an integer multiple of h.
    long steps_in(double span) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    TimeGrid(double T, int N, int K, double h) : T_(T), N_(N), K_(K), h_(h) {}
    double T_;
    int N_;
    int K_;
    double h_;
};

inline TimeGrid make_time_grid(double T, int N, int K) { return TimeGrid::make(T, N, K); }

/// Per-coordinate box U = prod [lo_i, hi_i].
struct ControlBox {
    Vec lo;
    Vec hi;

    static ControlBox symmetric(int dim, double bound);
    int dim() const noexcept { return static_cast<int>(lo.size()); }
    bool contains(const Vec& v) const;
    Vec project(const Vec& v) const;
};

/// Zero-order-hold values v_0 ... v_{N-1}, each inside the box.
class ControlSequence {
public:
    ControlSequence(std::vector<Vec> values, ControlBox box);

    static ControlSequence zeros(int length, ControlBox box);

    const std::vector<Vec>& values() const noexcept { return values_; }
    const ControlBox& box() const noexcept { return box_; }
    std::size_t size() const noexcept { return values_.size(); }
    const Vec& operator[](std::size_t j) const { return values_[j]; }

    /// Row-major flattening (v_0 first) used by the optimizer.
    Eigen::VectorXd flatten() const;
    static ControlSequence unflatten(const Eigen::VectorXd& flat, const ControlBox& box);

    /// Drops v_0 and repeats the last value: the usual warm start for the next step.
    ControlSequence shifted() const;

private:
    std::vector<Vec> values_;
    ControlBox box_;
};

/// Value of the held control at time t for a horizon that starts at t0.
/// Interval convention is [t_j, t_{j+1}); throws OutOfRange outside [t0, t0 + N*T).
const Vec& zoh_value(const ControlSequence& seq, double t, const TimeGrid& grid, double t0);

/// Sample path on a uniform grid. `controls[i]` is the value applied on
/// [times[i], times[i+1]), so it has one entry fewer than `states`.
struct Trajectory {
    double step = 0.0;
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> controls;

    std::size_t size() const noexcept { return states.size(); }
    bool empty() const noexcept { return states.empty(); }
    double start_time() const { return times.front(); }
    double end_time() const { return times.back(); }
    const Vec& final_state() const { return states.back(); }
};

/// Diagnostics for history reads: how many, how many needed interpolation,
/// and the latest time that was read.
struct LookupTrace {
    std::size_t reads = 0;
    std::size_t interpolations = 0;
    double latest_time = -std::numeric_limits<double>::infinity();
};

/// Uniformly sampled past of a vector signal.
class HistoryBuffer {
public:
    HistoryBuffer(double start_time, double step, std::vector<Vec> samples);

    /// `count` copies of `value` starting at `start_time`.
    static HistoryBuffer constant(double start_time, double step, std::size_t count, const Vec& value);
    static HistoryBuffer from_trajectory(const Trajectory& traj);

    double start_time() const noexcept { return start_; }
    double step() const noexcept { return step_; }
    double end_time() const noexcept { return time_at(samples_.size() - 1); }
    double time_at(std::size_t i) const noexcept { return start_ + static_cast<double>(i) * step_; }
    std::size_t size() const noexcept { return samples_.size(); }
    const std::vector<Vec>& samples() const noexcept { return samples_; }
    const Vec& sample(std::size_t i) const { return samples_.at(i); }

    /// Index of the stored sample at time t, if t is a grid time of this buffer.
    std::optional<std::size_t> grid_index(double t) const;

    /// Bit-exact sample on grid times, linear interpolation in between.
    /// Throws OutOfRange outside [start_time, end_time].
    Vec lookup(double t, LookupTrace* trace = nullptr) const;

    /// Concatenation with a segment whose first time equals end_time().
    HistoryBuffer append(const Trajectory& segment) const;

    /// Copy holding only samples at times >= t (t snapped to the grid).
    HistoryBuffer drop_before(double t) const;

private:
    double start_;
    double step_;
    std::vector<Vec> samples_;
};

inline Vec history_lookup(const HistoryBuffer& buf, double t, LookupTrace* trace = nullptr) {
    return buf.lookup(t, trace);
}
inline HistoryBuffer history_append(const HistoryBuffer& buf, const Trajectory& segment) {
    return buf.append(segment);
}

/// Where an RK4 stage sits inside its step [t, t+h].
enum class Stage { left, middle, right };

/// Magnitude beyond which a state coordinate counts as diverged.
inline constexpr double kDivergenceBound = 1e12;

/// Throws DivergenceError if `x` has a non-finite or oversized coordinate.
void check_finite(const Vec& x, double time);

/// x + (h/6)(k1 + 2 k2 + 2 k3 + k4). Shared by every RK4 path so that the
/// same data always produce the same bits.
inline Vec rk4_combine(const Vec& x, double h, const Vec& k1, const Vec& k2, const Vec& k3,
                       const Vec& k4) {
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// One classical RK4 step. `f(t, stage, x)` returns the derivative.
template <class F>
Vec rk4_step(F&& f, double t, double h, const Vec& x) {
    const double half = 0.5 * h;
    const Vec k1 = f(t, Stage::left, x);
    const Vec k2 = f(t + half, Stage::middle, Vec(x + half * k1));
    const Vec k3 = f(t + half, Stage::middle, Vec(x + half * k2));
    const Vec k4 = f(t + h, Stage::right, Vec(x + h * k3));
    return rk4_combine(x, h, k1, k2, k3, k4);
}

/// RK4 step of two coupled states. `f(t, stage, x, z, dx, dz)` writes both derivatives.
/// Each component is combined exactly as rk4_step would combine it.
template <class F>
void rk4_step_pair(F&& f, double t, double h, Vec& x, Vec& z) {
    const double half = 0.5 * h;
    Vec kx1, kx2, kx3, kx4, kz1, kz2, kz3, kz4;
    f(t, Stage::left, x, z, kx1, kz1);
    f(t + half, Stage::middle, Vec(x + half * kx1), Vec(z + half * kz1), kx2, kz2);
    f(t + half, Stage::middle, Vec(x + half * kx2), Vec(z + half * kz2), kx3, kz3);
    f(t + h, Stage::right, Vec(x + h * kx3), Vec(z + h * kz3), kx4, kz4);
    x = rk4_combine(x, h, kx1, kx2, kx3, kx4);
    z = rk4_combine(z, h, kz1, kz2, kz3, kz4);
}

/// Reads a stored signal at an RK4 stage time shifted back by `delay`.
///
/// Left and right stages are grid reads at t - delay and t + h - delay. The
/// middle stage uses the mean of those two samples, so a grid-aligned delay
/// never goes through the interpolation path of HistoryBuffer::lookup.
Vec delayed_stage_read(const HistoryBuffer& buf, double step_start, double h, Stage stage,
                       double delay, LookupTrace* trace = nullptr);

using ControlledRhs = std::function<Vec(double t, const Vec& x, const Vec& u)>;

/// Fixed-step RK4 over [t0, t1] with the control taken from `control` by
/// zero-order hold at each step's left endpoint (horizon starting at t0).
/// Throws InvalidParameter if t1 - t0 is not a multiple of h and
/// DivergenceError at the first bad state.
Trajectory rk4_integrate(const ControlledRhs& rhs, const Vec& x0, double t0, double t1,
                         const TimeGrid& grid, const ControlSequence& control);

}  // namespace obpc
