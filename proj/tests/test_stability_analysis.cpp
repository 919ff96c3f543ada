#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "obpc/errors.hpp"
#include "obpc/stability_analysis.hpp"

using namespace obpc;

namespace {

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Mat random_matrix(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Mat M(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) M(i, j) = g(rng);
    }
    return M;
}

// Distance between two spectra after sorting both the same way.
double spectrum_distance(EigenvalueList a, EigenvalueList b) {
    auto key = [](const std::complex<double>& x, const std::complex<double>& y) {
        if (std::abs(x.real() - y.real()) > 1e-9) return x.real() < y.real();
        return x.imag() < y.imag();
    };
    std::sort(a.begin(), a.end(), key);
    std::sort(b.begin(), b.end(), key);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

SimulationResult decaying_run(double r, double rate, double tail) {
    SimulationResult res;
    res.initial_state = vec2(r, 0.0);
    res.initial_estimate = vec2(0.0, 0.0);
    res.plant.step = 0.05;
    for (int i = 0; i <= 200; ++i) {
        const double t = 0.05 * i;
        res.plant.times.push_back(t);
        res.plant.states.push_back(vec2(std::max(r * std::exp(-rate * t), tail), 0.0));
    }
    res.observer = res.plant;
    return res;
}

}  // namespace

TEST_CASE("closed-form eigenvalues of the benchmark error matrices") {
    const Mat L = gain_scaling(1.2, 2);
    const Mat G = L * default_injection_gain() * example_plant(1).C();
    const EigenvalueList e1 = eigenvalues(Mat(example_plant(1).A() - G));
    REQUIRE(e1.size() == 2);
    CHECK(std::abs(e1[0] - std::complex<double>(-2.4, 0.0)) <= 1e-9);
    CHECK(std::abs(e1[1] - std::complex<double>(-0.8, 0.0)) <= 1e-9);

    const EigenvalueList e2 = eigenvalues(Mat(example_plant(2).A() - G));
    const double im = std::sqrt(1.72 - 0.36);
    CHECK(std::abs(e2[0] - std::complex<double>(-0.6, -im)) <= 1e-12);
    CHECK(std::abs(e2[1] - std::complex<double>(-0.6, im)) <= 1e-12);
}

TEST_CASE("shifted QR agrees with a reference eigensolver") {
    std::mt19937_64 rng(3);
    for (int n = 1; n <= 8; ++n) {
        for (int trial = 0; trial < 20; ++trial) {
            const Mat M = random_matrix(n, rng);
            Eigen::EigenSolver<Eigen::MatrixXd> ref(Eigen::MatrixXd(M), false);
            EigenvalueList expected;
            for (Eigen::Index i = 0; i < n; ++i) expected.push_back(ref.eigenvalues()[i]);
            CHECK(spectrum_distance(eigenvalues_qr(M), expected) <= 1e-9 * (1.0 + M.norm()));
            CHECK(spectrum_distance(eigenvalues(M), expected) <= 1e-9 * (1.0 + M.norm()));
        }
    }
    Mat jordan(3, 3);
    jordan << 2, 1, 0, 0, 2, 1, 0, 0, 2;
    for (const auto& z : eigenvalues(jordan)) CHECK(std::abs(z - 2.0) <= 1e-4);
    CHECK_THROWS_AS(eigenvalues(Mat(2, 3)), InvalidParameter);
}

TEST_CASE("matrix exponential") {
    Mat D = Mat::Zero(3, 3);
    D.diagonal() << -1.0, 0.5, 3.0;
    const Mat eD = matrix_exp(D);
    CHECK(eD(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(eD(2, 2) == doctest::Approx(std::exp(3.0)).epsilon(1e-14));
    CHECK(eD(0, 1) == 0.0);

    Mat R(2, 2);
    R << 0.0, 2.0, -2.0, 0.0;
    const Mat eR = matrix_exp(R);
    CHECK(eR(0, 0) == doctest::Approx(std::cos(2.0)).epsilon(1e-13));
    CHECK(eR(0, 1) == doctest::Approx(std::sin(2.0)).epsilon(1e-13));
    CHECK(eR(1, 0) == doctest::Approx(-std::sin(2.0)).epsilon(1e-13));

    // Oracle: V e^Lambda V^{-1} from a reference eigendecomposition.
    std::mt19937_64 rng(9);
    for (int n = 2; n <= 6; ++n) {
        const Mat M = random_matrix(n, rng);
        Eigen::EigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(M)};
        const Eigen::MatrixXcd V = es.eigenvectors();
        const Eigen::VectorXcd lam = es.eigenvalues().array().exp();
        const Eigen::MatrixXd ref = (V * lam.asDiagonal() * V.inverse()).real();
        CHECK((Eigen::MatrixXd(matrix_exp(M)) - ref).norm() <= 1e-10 * ref.norm());
    }
}

TEST_CASE("Lyapunov certificates") {
    const Mat L = gain_scaling(1.2, 2);
    const Mat G = L * default_injection_gain() * example_plant(1).C();
    for (int which : {1, 2}) {
        const Mat Acl = example_plant(which).A() - G;
        const Mat P = solve_lyapunov(Acl);
        CHECK(lyapunov_residual(P, Acl) <= 1e-10);
        CHECK((P - P.transpose()).norm() == 0.0);
        for (const auto& z : eigenvalues(P)) CHECK(z.real() > 0.0);
    }
    Mat D = Mat::Zero(3, 3);
    D.diagonal() << -1.0, -2.0, -4.0;
    const Mat P = solve_lyapunov(D);
    CHECK(P(0, 0) == doctest::Approx(0.5));
    CHECK(P(1, 1) == doctest::Approx(0.25));
    CHECK(P(2, 2) == doctest::Approx(0.125));
    CHECK(std::abs(P(0, 1)) <= 1e-15);
    CHECK_THROWS_AS(solve_lyapunov(example_plant(2).A()), CertificateInapplicable);
}

TEST_CASE("singular values and pseudoinverse") {
    std::mt19937_64 rng(4);
    for (int n = 1; n <= 8; ++n) {
        const Mat M = random_matrix(n, rng);
        const SingularValueDecomposition d = svd(M);
        Eigen::JacobiSVD<Eigen::MatrixXd> ref{Eigen::MatrixXd(M)};
        CHECK((Eigen::VectorXd(d.singular_values) - ref.singularValues()).norm() <= 1e-12 * (1.0 + M.norm()));
        const Mat back = d.U * d.singular_values.asDiagonal() * d.V.transpose();
        CHECK((back - M).norm() <= 1e-12 * (1.0 + M.norm()));
    }
    Mat rank1(2, 2);
    rank1 << 1.0, 2.0, 2.0, 4.0;
    const Mat pinv = pseudo_inverse(rank1);
    CHECK((rank1 * pinv * rank1 - rank1).norm() <= 1e-12);
    CHECK((pinv * rank1 * pinv - pinv).norm() <= 1e-12);
    CHECK(((rank1 * pinv).transpose() - rank1 * pinv).norm() <= 1e-12);
    CHECK(pinv(0, 0) == doctest::Approx(1.0 / 25.0));
}

TEST_CASE("retarded error matrix for a rank-one injection") {
    const Mat A = example_plant(1).A();
    const Mat Lambda = gain_scaling(1.2, 2);
    const Mat K = default_injection_gain();
    const Mat C = example_plant(1).C();
    const double tau = 0.5;
    const RetardedErrorMatrix r = build_script_A(A, Lambda, K, C, tau);
    CHECK(r.singular_inverse);
    CHECK(r.smallest_singular_value <= 1e-12);

    // Oracle: G = b c^T has G^2 = (c^T b) G, so e^{G tau} = I + (e^{s tau} - 1)/s G with s = tr G.
    const Mat G = Lambda * K * C;
    const double s = G.trace();
    const Mat gap = -((std::exp(s * tau) - 1.0) / s) * G;
    const Mat expected = A - G * pseudo_inverse(gap) * (Mat::Identity(2, 2) + matrix_exp(Mat(-A * tau)));
    CHECK((r.matrix - expected).norm() <= 1e-10 * expected.norm());
    CHECK(r.eigenvalues.size() == 2);

    // Full-rank injection keeps the inverse.
    const RetardedErrorMatrix full = build_retarded_error_matrix(A, Mat(2.0 * Mat::Identity(2, 2)), tau);
    CHECK_FALSE(full.singular_inverse);
}

TEST_CASE("Lyapunov function and its comparison bounds") {
    const Mat G = gain_scaling(1.2, 2) * default_injection_gain() * example_plant(1).C();
    const Mat P = solve_lyapunov(Mat(example_plant(1).A() - G));
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    for (double lambda : {1.0, 1.2, 3.0}) {
        const Mat L = gain_scaling(lambda, 2);
        for (int i = 0; i < 200; ++i) {
            const Vec eta = vec2(g(rng), g(rng));
            const double V = lyapunov_value(P, L, eta);
            const AlphaBounds b = alpha_bounds(P, lambda, 2, eta.norm());
            CHECK(b.lower <= V * (1.0 + 1e-12));
            CHECK(V <= b.upper * (1.0 + 1e-12));
        }
    }
    CHECK(lyapunov_value(P, gain_scaling(1.0, 2), vec2(1.0, 0.0)) == doctest::Approx(0.5 * P(0, 0)));

    const AlphaBounds zero = alpha_bounds(P, 1.2, 2, 0.0);
    CHECK(zero.lower == 0.0);
    CHECK(zero.upper == 0.0);
    const AlphaBounds id = alpha_bounds(Mat::Identity(2, 2), 1.0, 2, 3.0);
    CHECK(id.lower == doctest::Approx(4.5));
    CHECK(id.upper == doctest::Approx(4.5));
    Mat D = Mat::Zero(2, 2);
    D.diagonal() << 0.5, 0.25;
    CHECK(alpha_bounds(D, 1.2, 2, 1.0).upper == doctest::Approx(0.5 / (2.0 * 1.44)));
    CHECK(alpha_bounds(D, 1.2, 2, 1.0).lower == doctest::Approx(0.25 / (2.0 * std::pow(1.2, 4))));
    CHECK_THROWS_AS(alpha_bounds(P, -1.0, 2, 1.0), InvalidParameter);
}

TEST_CASE("combined-system constants") {
    CHECK(mixed_rho(vec2(3.0, 4.0), vec2(0.0, -2.0)) == doctest::Approx(7.0));
    const CombinedSystemConstants k = theorem31_constants(15.0, 0.25, 12.0, 0.1);
    CHECK(k.delta1_bar == doctest::Approx(3.0));
    CHECK(k.delta2_bar == doctest::Approx(0.4));
    CHECK_THROWS_AS(theorem31_constants(15.0, 1.0, 12.0, 0.1), InvalidParameter);
    CHECK_THROWS_AS(theorem31_constants(15.0, 0.0, 1.0, 0.1), InvalidParameter);
}

TEST_CASE("practical stability from synthetic runs") {
    std::vector<SimulationResult> runs;
    for (double r : {2.0, 5.0, 10.0}) runs.push_back(decaying_run(r, 1.0, 0.01));
    const PracticalStabilityEstimate est = certify_practical_stability(runs, 12.0);
    CHECK(est.delta2 == doctest::Approx(0.01));
    CHECK(est.fit_success);
    CHECK(est.violations == 0);
    CHECK(est.beta.sigma >= 0.99);
    CHECK(est.beta.c == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(certify_practical_stability(runs, 5.0), PreconditionError);
    CHECK_THROWS_AS(certify_practical_stability({}, 5.0), InvalidParameter);

    const std::vector<SimulationResult> zero{decaying_run(0.0, 1.0, 0.0)};
    CHECK(certify_practical_stability(zero, 1.0).delta2 == kDelta2Floor);

    const BoundCheck ok = theorem31_bound_check(runs, 15.0, 12.0, est.delta2, KlFit{1.0, 1.0});
    CHECK(ok.pass);
    const BoundCheck tight = theorem31_bound_check(runs, 15.0, 12.0, est.delta2, KlFit{1.0, 2.0});
    CHECK_FALSE(tight.pass);
    CHECK(tight.violations > 0);
    CHECK(tight.worst_margin < 0.0);
}

TEST_CASE("stability report for the benchmark observers") {
    const TimeGrid grid = make_time_grid(0.1, 5, 20);
    const auto obs = LuenbergerObserver::retarded(example_plant(1), 1.2, default_injection_gain(), grid);
    const StabilityReport rep = stability_report(obs, grid.horizon_span());
    CHECK(rep.lyapunov_solved);
    CHECK(rep.lyapunov_residual <= 1e-10);
    CHECK(rep.retarded.singular_inverse);
    CHECK(rep.alpha_lower_coefficient > 0.0);
    CHECK(rep.alpha_lower_coefficient <= rep.alpha_upper_coefficient);
}
