#pragma once

#include <complex>
#include <vector>

#include "obpc/kl_envelope.hpp"
#include "obpc/linalg_types.hpp"
#include "obpc/models.hpp"
#include "obpc/predictive_control.hpp"

namespace obpc {

using EigenvalueList = std::vector<std::complex<double>>;

/// Eigenvalues sorted by real part (then imaginary part). Closed-form roots
/// for n <= 2, Hessenberg reduction plus shifted QR for 3 <= n <= 8.
/// Throws NumericalError if QR does not converge.
EigenvalueList eigenvalues(const Mat& M);

/// The shifted-QR path on its own, for any 1 <= n <= 8.
EigenvalueList eigenvalues_qr(const Mat& M);

/// e^M by scaling and squaring of a degree-16 Taylor polynomial.
Mat matrix_exp(const Mat& M);

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// Throws NumericalError when a pivot vanishes relative to the matrix scale.
Eigen::MatrixXd gauss_solve(Eigen::MatrixXd A, Eigen::MatrixXd b);

/// P with P A + A^T P = -Id for Hurwitz A, via the vectorized n^2 system.
/// Throws CertificateInapplicable if A is not Hurwitz.
Mat solve_lyapunov(const Mat& A_cl);

/// |P A + A^T P + Id|_F.
double lyapunov_residual(const Mat& P, const Mat& A_cl);

struct SingularValueDecomposition {
    Mat U;
    Vec singular_values;  // descending
    Mat V;
};

/// One-sided Jacobi SVD of a square matrix, M = U diag(s) V^T.
SingularValueDecomposition svd(const Mat& M);

/// Moore-Penrose inverse, dropping singular values below rel_tol * s_max.
Mat pseudo_inverse(const Mat& M, double rel_tol = 1e-8);

/// A - G (Id - e^{G tau})^{-1} (Id + e^{-A tau}) for the injection matrix
/// G = Lambda K C and the delay tau = N T, with its spectrum.
struct RetardedErrorMatrix {
    Mat matrix;
    /// Id - e^{G tau} was numerically singular; the pseudoinverse was used.
    bool singular_inverse = false;
    double smallest_singular_value = 0.0;
    double largest_singular_value = 0.0;
    EigenvalueList eigenvalues;
};

RetardedErrorMatrix build_retarded_error_matrix(const Mat& A, const Mat& injection_times_output, double delay);
RetardedErrorMatrix build_retarded_error_matrix(const Mat& A, const Mat& Lambda, const Mat& K, const Mat& C,
                                                double delay);

/// The same matrix under its short name.
inline RetardedErrorMatrix build_script_A(const Mat& A, const Mat& Lambda, const Mat& K, const Mat& C,
                                          double delay) {
    return build_retarded_error_matrix(A, Lambda, K, C, delay);
}

/// V(eta) = 1/2 eta^T Lambda^{-1} P Lambda^{-1} eta.
double lyapunov_value(const Mat& P, const Mat& Lambda, const Vec& eta);

struct AlphaBounds {
    double lower = 0.0;  // alpha_1(r) = lambda_min(P) / (2 lambda^{2n}) r^2
    double upper = 0.0;  // alpha_2(r) = lambda_max(P) / (2 lambda^2) r^2
};

/// Comparison bounds of V evaluated at r. They sandwich V only for lambda >= 1.
AlphaBounds alpha_bounds(const Mat& P, double lambda, int n, double r);

/// |x| + |xi|.
double mixed_rho(const Vec& x, const Vec& xi);

struct CombinedSystemConstants {
    double delta1_bar = 0.0;
    double delta2_bar = 0.0;
};

/// (nu - Delta1, 4 Delta2) for nu >= (1 + alpha) Delta1, alpha > 0.
CombinedSystemConstants theorem31_constants(double nu, double alpha, double delta1, double delta2);

struct StabilityReport {
    Mat closed_loop;  // A - Lambda(lambda) K C
    Mat lyapunov;     // P
    double lyapunov_residual = 0.0;
    bool lyapunov_solved = false;
    EigenvalueList closed_loop_eigenvalues;
    RetardedErrorMatrix retarded;
    /// Spectrum of the symmetric part of W(lambda) * retarded.matrix, with
    /// W = Lambda^{-1} P Lambda^{-1}; all negative means V decreases.
    EigenvalueList decay_check_eigenvalues;
    double alpha_lower_coefficient = 0.0;
    double alpha_upper_coefficient = 0.0;
};

StabilityReport stability_report(const LuenbergerObserver& observer, double delay);

struct PracticalStabilityEstimate {
    double delta1 = 0.0;
    double delta2 = 0.0;
    KlFit beta;
    bool fit_success = false;
    long violations = 0;
};

/// Which trajectory of a closed-loop run to certify.
enum class CertifiedSignal { plant, observer };

inline constexpr double kDelta2Floor = 1e-6;

/// Estimates (Delta1, Delta2, beta) for the runs.
///
/// Delta2 is the smallest radius that every trajectory stays inside after its
/// last upcrossing, i.e. the largest terminal norm, floored at 1e-6. beta is
/// the exponential envelope fitted above Delta2 (see fit_exponential_envelope)
/// relative to the initial norm of each run. Throws InvalidParameter for an
/// empty list and PreconditionError if an initial history leaves the Delta1-ball.
PracticalStabilityEstimate certify_practical_stability(const std::vector<SimulationResult>& results, double delta1,
                                                       CertifiedSignal signal = CertifiedSignal::plant);

struct BoundCheck {
    bool pass = false;
    /// min over samples of max{beta(rho(t0), t), 4 Delta2} - |x(t)|.
    double worst_margin = 0.0;
    long violations = 0;
};

/// |x(t)| <= max{beta_bar(rho(t0), t), 4 Delta2} on every sample of every run.
/// Preconditions: |x - xi| <= nu and |xi| <= Delta1 on the initial histories.
BoundCheck theorem31_bound_check(const std::vector<SimulationResult>& results, double nu, double delta1,
                                 double delta2, const KlFit& beta_bar);

/// Envelope of |x(t)| relative to rho(t0) above the floor 4 Delta2, the
/// combined-system rate used with theorem31_bound_check.
EnvelopeFit fit_combined_envelope(const std::vector<SimulationResult>& results, double delta2);

}  // namespace obpc
