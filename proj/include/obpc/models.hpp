#pragma once

#include <memory>
#include <string>
#include <vector>

#include "obpc/kl_envelope.hpp"
#include "obpc/linalg_types.hpp"
#include "obpc/ode_core.hpp"

namespace obpc {

/// Plant x' = f(x, u), y = h(x). f is assumed locally Lipschitz in x and h(0) = 0.
class PlantModel {
public:
    virtual ~PlantModel() = default;

    virtual int state_dim() const = 0;
    virtual int input_dim() const = 0;
    virtual int output_dim() const = 0;

    virtual Vec rhs(const Vec& x, const Vec& u) const = 0;
    virtual Vec output(const Vec& x) const = 0;
};

/// x' = A x + B u, y = C x.
class LinearPlant final : public PlantModel {
public:
    LinearPlant(Mat A, Mat B, Mat C);

    int state_dim() const override { return static_cast<int>(A_.rows()); }
    int input_dim() const override { return static_cast<int>(B_.cols()); }
    int output_dim() const override { return static_cast<int>(C_.rows()); }

    Vec rhs(const Vec& x, const Vec& u) const override { return A_.lazyProduct(x) + B_.lazyProduct(u); }
    Vec output(const Vec& x) const override { return C_.lazyProduct(x); }

    const Mat& A() const noexcept { return A_; }
    const Mat& B() const noexcept { return B_; }
    const Mat& C() const noexcept { return C_; }

private:
    Mat A_;
    Mat B_;
    Mat C_;
};

/// Dimension-checked f(x, u); throws InvalidParameter on mismatch.
Vec plant_rhs(const PlantModel& plant, const Vec& x, const Vec& u);
/// Dimension-checked h(x).
Vec plant_output(const PlantModel& plant, const Vec& x);

/// The two benchmark plants: A1 = [[-1, 1], [1, -1]] (which == 1) and the
/// rotation A2 = [[0, 1], [-1, 0]] (which == 2), both with B = Id and C = (1, 0).
LinearPlant example_plant(int which);

inline constexpr double kDefaultGainLambda = 1.2;

/// Injection gain K = (1, 0.5)^T used for both benchmark plants.
Mat default_injection_gain();

/// diag(lambda, lambda^2, ..., lambda^n); throws InvalidParameter for lambda <= 0.
Mat gain_scaling(double lambda, int n);

/// Observer xi' = g(xi(t), xi(t - theta), y(t - theta), u(t)).
///
/// Observers without retardation (theta == 0) receive the current state and
/// output in the delayed slots.
class ObserverModel {
public:
    virtual ~ObserverModel() = default;

    virtual int state_dim() const = 0;
    virtual int input_dim() const = 0;
    virtual int output_dim() const = 0;
    /// theta; zero for observers driven by the current output.
    virtual double delay() const = 0;

    virtual Vec rhs(const Vec& xi, const Vec& xi_delayed, const Vec& y_delayed, const Vec& u) const = 0;
};

/// Luenberger observer xi' = A xi + B u - Lambda(lambda) K (C xi_d - y_d), where
/// (xi_d, y_d) are current values or values retarded by the horizon length.
class LuenbergerObserver final : public ObserverModel {
public:
    LuenbergerObserver(LinearPlant plant, double lambda, Mat gain, bool retarded, double delay);

    /// Innovation on the current output.
    static LuenbergerObserver current(LinearPlant plant, double lambda, Mat gain);
    /// Innovation retarded by N*T of `grid`.
    static LuenbergerObserver retarded(LinearPlant plant, double lambda, Mat gain, const TimeGrid& grid);

    int state_dim() const override { return plant_.state_dim(); }
    int input_dim() const override { return plant_.input_dim(); }
    int output_dim() const override { return plant_.output_dim(); }
    double delay() const override { return delay_; }

    Vec rhs(const Vec& xi, const Vec& xi_delayed, const Vec& y_delayed, const Vec& u) const override;

    /// Non-retarded form; ContractViolation on a retarded instance.
    Vec luenberger_rhs(const Vec& xi, const Vec& y, const Vec& u) const;
    /// Retarded form; ContractViolation on a non-retarded instance.
    Vec retarded_luenberger_rhs(const Vec& xi, const Vec& xi_delayed, const Vec& y_delayed, const Vec& u) const;

    const LinearPlant& plant() const noexcept { return plant_; }
    double lambda() const noexcept { return lambda_; }
    const Mat& gain() const noexcept { return gain_; }
    bool is_retarded() const noexcept { return retarded_; }
    /// Lambda K (C xi_d - y_d).
    Vec delayed_injection(const Vec& xi_delayed, const Vec& y_delayed) const;
    /// Lambda(lambda) * K.
    const Mat& injection() const noexcept { return injection_; }
    /// A - Lambda(lambda) K C, the error matrix without retardation.
    Mat error_matrix() const;

private:
    LinearPlant plant_;
    double lambda_;
    Mat gain_;
    bool retarded_;
    double delay_;
    Mat injection_;
};

/// Plant, observer and output samples produced by one coupled advance.
struct CoupledSegment {
    Trajectory plant;
    Trajectory observer;
    Trajectory output;
};

/// Integrates plant and observer together for `steps` RK4 steps from time t
/// with the control u held. A retarded observer reads xi(t - theta) from
/// `observer_history` and y(t - theta) from `output_source`; a non-retarded
/// observer reads the current stage values of both systems.
CoupledSegment advance_coupled(const PlantModel& plant, const ObserverModel& observer, const Vec& x,
                               const Vec& xi, double t, long steps, double h, const Vec& u,
                               const HistoryBuffer& observer_history, const HistoryBuffer& output_source,
                               LookupTrace* trace = nullptr);

/// Co-simulates plant and observer from matched histories on [-theta, 0] and
/// returns max_t |xi(t) - x(t)| over [0, span]. `controls` holds one value
/// per sampling period; the last one is held when the list runs out.
/// Throws PreconditionError when the two histories differ.
double check_a1_identity(const PlantModel& plant, const ObserverModel& observer, const TimeGrid& grid,
                         const HistoryBuffer& plant_history, const HistoryBuffer& observer_history,
                         const std::vector<Vec>& controls, double span);

inline double check_a1_identity(const PlantModel& plant, const ObserverModel& observer, const TimeGrid& grid,
                                const HistoryBuffer& history, const std::vector<Vec>& controls, double span) {
    return check_a1_identity(plant, observer, grid, history, history, controls, span);
}

/// Estimation-error norms |xi(t) - x(t)| of the plant started from a constant
/// history at x0 and the observer from a constant history at x0 + error0,
/// with zero control.
EnvelopeSeries observer_error_series(const PlantModel& plant, const ObserverModel& observer, const TimeGrid& grid,
                                     const Vec& x0, const Vec& error0, double span);

struct A2EnvelopeResult {
    bool success = false;
    /// All supplied errors were identically zero.
    bool zero_data = false;
    KlFit fit;
    std::string failure_reason;
};

/// Fits |error(t)| <= c |error(0)| exp(-sigma t) over all supplied error
/// trajectories. Needs at least three trajectories with distinct positive
/// initial norms unless every error is zero.
A2EnvelopeResult fit_a2_envelope(const std::vector<EnvelopeSeries>& error_trajectories);

}  // namespace obpc
