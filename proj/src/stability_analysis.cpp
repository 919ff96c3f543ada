#include "obpc/stability_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "obpc/errors.hpp"

namespace obpc {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxQrIterations = 10000;

void require_square(const Mat& M, const char* what) {
    if (M.rows() == 0 || M.rows() != M.cols() || M.rows() > kMaxDim) {
        std::ostringstream os;
        os << what << " needs a square matrix of size 1.." << kMaxDim;
        throw InvalidParameter(os.str());
    }
    if (!M.allFinite()) throw InvalidParameter(std::string(what) + " needs a finite matrix");
}

void sort_spectrum(EigenvalueList& ev) {
    std::sort(ev.begin(), ev.end(), [](const std::complex<double>& a, const std::complex<double>& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

double sign_of(double magnitude, double s) { return s >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude); }

// Householder reduction to upper Hessenberg form (similarity transform).
void to_hessenberg(Mat& a) {
    const Eigen::Index n = a.rows();
    for (Eigen::Index k = 0; k + 2 < n; ++k) {
        Vec x = a.col(k).segment(k + 1, n - k - 1);
        const double alpha = x.norm();
        if (alpha == 0.0) continue;
        x[0] += sign_of(alpha, x[0]);
        const double vnorm = x.norm();
        if (vnorm == 0.0) continue;
        x /= vnorm;
        // a <- H a H with H = I - 2 v v^T acting on rows/cols k+1..n-1.
        for (Eigen::Index j = 0; j < n; ++j) {
            const double s = 2.0 * x.dot(a.col(j).segment(k + 1, n - k - 1));
            a.col(j).segment(k + 1, n - k - 1) -= s * x;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            const double s = 2.0 * a.row(i).segment(k + 1, n - k - 1).dot(x.transpose());
            a.row(i).segment(k + 1, n - k - 1) -= s * x.transpose();
        }
        for (Eigen::Index i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

// Francis double-shift QR on an upper Hessenberg matrix.
EigenvalueList hessenberg_qr(Mat a) {
    const int n = static_cast<int>(a.rows());
    EigenvalueList out(static_cast<std::size_t>(n));
    double anorm = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
    }
    int nn = n - 1;
    double t = 0.0;
    double p = 0.0, q = 0.0, r = 0.0, s = 0.0, w = 0.0, x = 0.0, y = 0.0, z = 0.0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l > 0; --l) {
                s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) <= kEps * s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            x = a(nn, nn);
            if (l == nn) {
                out[static_cast<std::size_t>(nn)] = {x + t, 0.0};
                --nn;
            } else {
                y = a(nn - 1, nn - 1);
                w = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0.0) {
                        z = p + sign_of(z, p);
                        out[static_cast<std::size_t>(nn - 1)] = out[static_cast<std::size_t>(nn)] = {x + z, 0.0};
                        if (z != 0.0) out[static_cast<std::size_t>(nn)] = {x - w / z, 0.0};
                    } else {
                        out[static_cast<std::size_t>(nn)] = {x + p, -z};
                        out[static_cast<std::size_t>(nn - 1)] = {x + p, z};
                    }
                    nn -= 2;
                } else {
                    if (its >= kMaxQrIterations) throw NumericalError("shifted QR did not converge");
                    if (its % 10 == 0 && its > 0) {
                        // Exceptional shift.
                        t += x;
                        for (int i = 0; i <= nn; ++i) a(i, i) -= x;
                        s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                        y = x = 0.75 * s;
                        w = -0.4375 * s * s;
                    }
                    ++its;
                    int m = nn - 2;
                    for (; m >= l; --m) {
                        z = a(m, m);
                        r = x - z;
                        s = y - z;
                        p = (r * s - w) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - r - s;
                        r = a(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
                        if (u <= kEps * v) break;
                    }
                    for (int i = m + 2; i <= nn; ++i) {
                        a(i, i - 2) = 0.0;
                        if (i != m + 2) a(i, i - 3) = 0.0;
                    }
                    for (int k = m; k <= nn - 1; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = 0.0;
                            if (k + 1 != nn) r = a(k + 2, k - 1);
                            if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
                            if (k == m) {
                                if (l != m) a(k, k - 1) = -a(k, k - 1);
                            } else {
                                a(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for (int j = k; j <= nn; ++j) {
                                p = a(k, j) + q * a(k + 1, j);
                                if (k + 1 != nn) {
                                    p += r * a(k + 2, j);
                                    a(k + 2, j) -= p * z;
                                }
                                a(k + 1, j) -= p * y;
                                a(k, j) -= p * x;
                            }
                            const int mmin = nn < k + 3 ? nn : k + 3;
                            for (int i = l; i <= mmin; ++i) {
                                p = x * a(i, k) + y * a(i, k + 1);
                                if (k + 1 != nn) {
                                    p += z * a(i, k + 2);
                                    a(i, k + 2) -= p * r;
                                }
                                a(i, k + 1) -= p * q;
                                a(i, k) -= p;
                            }
                        }
                    }
                }
            }
        } while (l + 1 < nn);
    }
    return out;
}

// Roots of s^2 - tr s + det, written to avoid cancellation.
EigenvalueList quadratic_roots(double tr, double det) {
    const double half = 0.5 * tr;
    const double disc = half * half - det;
    if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        const double big = half + sign_of(root, half);
        const double other = big != 0.0 ? det / big : 0.0;
        return {{big, 0.0}, {other, 0.0}};
    }
    const double im = std::sqrt(-disc);
    return {{half, -im}, {half, im}};
}

}  // namespace

EigenvalueList eigenvalues_qr(const Mat& M) {
    require_square(M, "eigenvalues");
    Mat a = M;
    to_hessenberg(a);
    EigenvalueList ev = hessenberg_qr(a);
    sort_spectrum(ev);
    return ev;
}

EigenvalueList eigenvalues(const Mat& M) {
    require_square(M, "eigenvalues");
    EigenvalueList ev;
    if (M.rows() == 1) {
        ev = {{M(0, 0), 0.0}};
    } else if (M.rows() == 2) {
        ev = quadratic_roots(M(0, 0) + M(1, 1), M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0));
    } else {
        return eigenvalues_qr(M);
    }
    sort_spectrum(ev);
    return ev;
}

Mat matrix_exp(const Mat& M) {
    require_square(M, "matrix_exp");
    const Eigen::Index n = M.rows();
    const double norm = M.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Mat A = M / std::ldexp(1.0, squarings);

    // Horner evaluation of sum_{k=0}^{16} A^k / k!.
    constexpr int kOrder = 16;
    Mat E = Mat::Identity(n, n);
    for (int k = kOrder; k >= 1; --k) {
        E = Mat::Identity(n, n) + (A * E) / static_cast<double>(k);
    }
    for (int i = 0; i < squarings; ++i) E = E * E;
    return E;
}

Eigen::MatrixXd gauss_solve(Eigen::MatrixXd A, Eigen::MatrixXd b) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || b.rows() != n) throw InvalidParameter("gauss_solve needs a square system");
    const double scale = std::max(A.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index pivot = k;
        A.col(k).segment(k, n - k).cwiseAbs().maxCoeff(&pivot);
        pivot += k;
        if (std::abs(A(pivot, k)) <= 1e3 * kEps * scale * static_cast<double>(n)) {
            throw NumericalError("singular linear system");
        }
        if (pivot != k) {
            A.row(k).swap(A.row(pivot));
            b.row(k).swap(b.row(pivot));
        }
        for (Eigen::Index i = k + 1; i < n; ++i) {
            const double f = A(i, k) / A(k, k);
            if (f == 0.0) continue;
            A.row(i).segment(k, n - k) -= f * A.row(k).segment(k, n - k);
            b.row(i) -= f * b.row(k);
        }
    }
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        for (Eigen::Index j = k + 1; j < n; ++j) b.row(k) -= A(k, j) * b.row(j);
        b.row(k) /= A(k, k);
    }
    return b;
}

Mat solve_lyapunov(const Mat& A_cl) {
    require_square(A_cl, "solve_lyapunov");
    for (const auto& ev : eigenvalues(A_cl)) {
        if (!(ev.real() < 0.0)) throw CertificateInapplicable("Lyapunov certificate needs a Hurwitz matrix");
    }
    const Eigen::Index n = A_cl.rows();
    // Column-major vec: vec(P A) = (A^T kron I) vec(P), vec(A^T P) = (I kron A^T) vec(P).
    Eigen::MatrixXd big = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            // (A^T kron I): block (i, j) is A(j, i) * I.
            big.block(i * n, j * n, n, n).diagonal().array() += A_cl(j, i);
        }
        // (I kron A^T): diagonal block (i, i) is A^T.
        big.block(i * n, i * n, n, n) += A_cl.transpose();
    }
    Eigen::MatrixXd rhs(n * n, 1);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) rhs(j * n + i, 0) = (i == j) ? -1.0 : 0.0;
    }
    const Eigen::MatrixXd sol = gauss_solve(big, rhs);
    Mat P(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) P(i, j) = sol(j * n + i, 0);
    }
    return Mat(0.5 * (P + P.transpose()));
}

double lyapunov_residual(const Mat& P, const Mat& A_cl) {
    return (P * A_cl + A_cl.transpose() * P + Mat::Identity(A_cl.rows(), A_cl.rows())).norm();
}

SingularValueDecomposition svd(const Mat& M) {
    require_square(M, "svd");
    const Eigen::Index n = M.rows();
    Mat U = M;
    Mat V = Mat::Identity(n, n);
    // One-sided Jacobi: rotate column pairs of U until they are mutually orthogonal.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double alpha = U.col(p).squaredNorm();
                const double beta = U.col(q).squaredNorm();
                const double gamma = U.col(p).dot(U.col(q));
                if (gamma == 0.0) continue;
                off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = sign_of(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double up = U(i, p);
                    const double uq = U(i, q);
                    U(i, p) = c * up - s * uq;
                    U(i, q) = s * up + c * uq;
                    const double vp = V(i, p);
                    const double vq = V(i, q);
                    V(i, p) = c * vp - s * vq;
                    V(i, q) = s * vp + c * vq;
                }
            }
        }
        if (off <= 1e-15) break;
    }
    Vec sv(n);
    for (Eigen::Index j = 0; j < n; ++j) sv[j] = U.col(j).norm();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return sv[a] > sv[b]; });

    SingularValueDecomposition out{Mat::Zero(n, n), Vec(n), Mat(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index j = order[static_cast<std::size_t>(k)];
        out.singular_values[k] = sv[j];
        out.V.col(k) = V.col(j);
        if (sv[j] > 0.0) out.U.col(k) = U.col(j) / sv[j];
    }
    return out;
}

Mat pseudo_inverse(const Mat& M, double rel_tol) {
    const SingularValueDecomposition d = svd(M);
    const Eigen::Index n = M.rows();
    const double cutoff = rel_tol * d.singular_values[0];
    Mat out = Mat::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double s = d.singular_values[k];
        if (s > cutoff && s > 0.0) out += (d.V.col(k) / s) * d.U.col(k).transpose();
    }
    return out;
}

RetardedErrorMatrix build_retarded_error_matrix(const Mat& A, const Mat& injection_times_output, double delay) {
    require_square(A, "retarded error matrix");
    const Eigen::Index n = A.rows();
    if (injection_times_output.rows() != n || injection_times_output.cols() != n) {
        throw InvalidParameter("injection matrix must be n x n");
    }
    const Mat I = Mat::Identity(n, n);
    const Mat gap = I - matrix_exp(Mat(injection_times_output * delay));
    const SingularValueDecomposition d = svd(gap);

    RetardedErrorMatrix out;
    out.largest_singular_value = d.singular_values[0];
    out.smallest_singular_value = d.singular_values[n - 1];
    out.singular_inverse = !(out.smallest_singular_value >= 1e-8 * out.largest_singular_value) ||
                           out.largest_singular_value == 0.0;
    const Mat inverse =
        out.singular_inverse ? pseudo_inverse(gap, 1e-8) : Mat(gauss_solve(gap, Eigen::MatrixXd::Identity(n, n)));
    out.matrix = A - injection_times_output * inverse * (I + matrix_exp(Mat(-A * delay)));
    out.eigenvalues = eigenvalues(out.matrix);
    return out;
}

RetardedErrorMatrix build_retarded_error_matrix(const Mat& A, const Mat& Lambda, const Mat& K, const Mat& C,
                                                double delay) {
    return build_retarded_error_matrix(A, Mat(Lambda * K * C), delay);
}

double lyapunov_value(const Mat& P, const Mat& Lambda, const Vec& eta) {
    if (P.rows() != eta.size() || Lambda.rows() != eta.size()) throw InvalidParameter("dimension mismatch");
    const Vec scaled = Lambda.diagonal().cwiseInverse().cwiseProduct(eta);
    return 0.5 * scaled.dot(P * scaled);
}

AlphaBounds alpha_bounds(const Mat& P, double lambda, int n, double r) {
    if (!(lambda > 0.0)) throw InvalidParameter("alpha bounds need lambda > 0");
    const EigenvalueList ev = eigenvalues(P);
    const double lo = ev.front().real();
    const double hi = ev.back().real();
    return AlphaBounds{lo / (2.0 * std::pow(lambda, 2 * n)) * r * r, hi / (2.0 * lambda * lambda) * r * r};
}

double mixed_rho(const Vec& x, const Vec& xi) {
    if (x.size() != xi.size()) throw InvalidParameter("mixed_rho needs matching dimensions");
    return x.norm() + xi.norm();
}

CombinedSystemConstants theorem31_constants(double nu, double alpha, double delta1, double delta2) {
    if (!(alpha > 0.0)) throw InvalidParameter("alpha must be positive");
    if (!(delta1 >= 0.0) || !(delta2 >= 0.0)) throw InvalidParameter("radii must be nonnegative");
    if (!(nu >= (1.0 + alpha) * delta1)) throw InvalidParameter("nu must be at least (1 + alpha) * Delta1");
    return CombinedSystemConstants{nu - delta1, 4.0 * delta2};
}

StabilityReport stability_report(const LuenbergerObserver& observer, double delay) {
    StabilityReport rep;
    const Mat& A = observer.plant().A();
    const int n = observer.state_dim();
    const Mat G = observer.injection() * observer.plant().C();
    rep.closed_loop = A - G;
    rep.closed_loop_eigenvalues = eigenvalues(rep.closed_loop);
    rep.retarded = build_retarded_error_matrix(A, G, delay);
    try {
        rep.lyapunov = solve_lyapunov(rep.closed_loop);
        rep.lyapunov_solved = true;
        rep.lyapunov_residual = lyapunov_residual(rep.lyapunov, rep.closed_loop);
        const Mat Lambda = gain_scaling(observer.lambda(), n);
        const Mat Linv = Lambda.inverse();
        const Mat W = Linv * rep.lyapunov * Linv;
        const Mat WA = W * rep.retarded.matrix;
        rep.decay_check_eigenvalues = eigenvalues(Mat(0.5 * (WA + WA.transpose())));
        const AlphaBounds unit = alpha_bounds(rep.lyapunov, observer.lambda(), n, 1.0);
        rep.alpha_lower_coefficient = unit.lower;
        rep.alpha_upper_coefficient = unit.upper;
    } catch (const CertificateInapplicable&) {
        rep.lyapunov_solved = false;
    }
    return rep;
}

namespace {

const Trajectory& pick(const SimulationResult& r, CertifiedSignal signal) {
    return signal == CertifiedSignal::plant ? r.plant : r.observer;
}

const Vec& initial_of(const SimulationResult& r, CertifiedSignal signal) {
    return signal == CertifiedSignal::plant ? r.initial_state : r.initial_estimate;
}

EnvelopeSeries norm_series(const Trajectory& traj, double initial_norm) {
    EnvelopeSeries s;
    s.initial_norm = initial_norm;
    s.times = traj.times;
    s.values.reserve(traj.size());
    for (const auto& x : traj.states) s.values.push_back(x.norm());
    return s;
}

}  // namespace

PracticalStabilityEstimate certify_practical_stability(const std::vector<SimulationResult>& results, double delta1,
                                                       CertifiedSignal signal) {
    if (results.empty()) throw InvalidParameter("certification needs at least one run");
    if (!(delta1 > 0.0)) throw InvalidParameter("Delta1 must be positive");
    PracticalStabilityEstimate est;
    est.delta1 = delta1;
    double delta2 = kDelta2Floor;
    std::vector<EnvelopeSeries> series;
    series.reserve(results.size());
    for (const auto& r : results) {
        const Trajectory& traj = pick(r, signal);
        if (traj.empty()) throw InvalidParameter("certification needs nonempty trajectories");
        const double r0 = initial_of(r, signal).norm();
        if (r0 > delta1 * (1.0 + 1e-12)) throw PreconditionError("initial history outside the Delta1-ball");
        series.push_back(norm_series(traj, r0));
        delta2 = std::max(delta2, series.back().values.back());
    }
    est.delta2 = delta2;
    const EnvelopeFit fit = fit_exponential_envelope(series, delta2);
    est.beta = fit.fit;
    est.fit_success = fit.success;
    est.violations = fit.violations;
    return est;
}

EnvelopeFit fit_combined_envelope(const std::vector<SimulationResult>& results, double delta2) {
    std::vector<EnvelopeSeries> series;
    series.reserve(results.size());
    for (const auto& r : results) series.push_back(norm_series(r.plant, mixed_rho(r.initial_state, r.initial_estimate)));
    return fit_exponential_envelope(series, 4.0 * delta2);
}

BoundCheck theorem31_bound_check(const std::vector<SimulationResult>& results, double nu, double delta1,
                                 double delta2, const KlFit& beta_bar) {
    BoundCheck out;
    out.worst_margin = std::numeric_limits<double>::infinity();
    for (const auto& r : results) {
        if ((r.initial_state - r.initial_estimate).norm() > nu * (1.0 + 1e-12)) {
            throw InvalidParameter("initial estimation error exceeds nu");
        }
        if (r.initial_estimate.norm() > delta1 * (1.0 + 1e-12)) {
            throw InvalidParameter("initial observer history outside the Delta1-ball");
        }
        const double rho0 = mixed_rho(r.initial_state, r.initial_estimate);
        for (std::size_t i = 0; i < r.plant.size(); ++i) {
            const double bound = std::max(beta_bar(rho0, r.plant.times[i] - r.plant.times.front()), 4.0 * delta2);
            const double value = r.plant.states[i].norm();
            if (value > bound * (1.0 + 1e-12)) ++out.violations;
            out.worst_margin = std::min(out.worst_margin, bound - value);
        }
    }
    out.pass = out.violations == 0;
    return out;
}

}  // namespace obpc
