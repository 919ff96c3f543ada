#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "obpc/errors.hpp"
#include "obpc/kl_envelope.hpp"
#include "obpc/models.hpp"

using namespace obpc;

namespace {

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Vec scalar(double a) {
    Vec v(1);
    v << a;
    return v;
}

std::vector<Vec> random_controls(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) out.push_back(vec2(u(rng), u(rng)));
    return out;
}

}  // namespace

TEST_CASE("benchmark plants") {
    const LinearPlant p1 = example_plant(1);
    const LinearPlant p2 = example_plant(2);
    CHECK(p1.A()(0, 0) == -1.0);
    CHECK(p1.A()(0, 1) == 1.0);
    CHECK(p2.A()(0, 1) == 1.0);
    CHECK(p2.A()(1, 0) == -1.0);
    CHECK(plant_output(p1, vec2(3.0, 4.0))[0] == 3.0);
    CHECK(plant_rhs(p1, vec2(1.0, 2.0), vec2(0.5, 0.0)) == vec2(1.5, -1.0));
    CHECK_THROWS_AS(plant_rhs(p1, scalar(1.0), vec2(0.0, 0.0)), InvalidParameter);
    CHECK_THROWS_AS(plant_rhs(p1, vec2(1.0, 1.0), scalar(0.0)), InvalidParameter);
    CHECK_THROWS_AS(example_plant(3), InvalidParameter);
    CHECK_THROWS_AS(LinearPlant(Mat::Identity(2, 2), Mat::Identity(3, 3), Mat::Identity(1, 2)), InvalidParameter);
}

TEST_CASE("gain scaling") {
    const Mat L = gain_scaling(1.2, 3);
    CHECK(L(0, 0) == 1.2);
    CHECK(L(1, 1) == doctest::Approx(1.44));
    CHECK(L(2, 2) == doctest::Approx(1.728));
    CHECK(L(0, 1) == 0.0);
    CHECK_THROWS_AS(gain_scaling(0.0, 2), InvalidParameter);
    CHECK_THROWS_AS(gain_scaling(1.0, 0), InvalidParameter);
}

TEST_CASE("observer right-hand sides") {
    const LinearPlant p = example_plant(1);
    const auto current = LuenbergerObserver::current(p, 1.2, default_injection_gain());
    const TimeGrid grid = make_time_grid(0.1, 5, 20);
    const auto retarded = LuenbergerObserver::retarded(p, 1.2, default_injection_gain(), grid);
    CHECK(current.delay() == 0.0);
    CHECK(retarded.delay() == doctest::Approx(0.5));

    // Lambda K = (1.2, 0.72).
    const Vec xi = vec2(1.0, 2.0);
    const Vec u = vec2(0.0, 1.0);
    const Vec y = scalar(3.0);
    const Vec expected = vec2(1.0 - 1.2 * (1.0 - 3.0), -1.0 + 1.0 - 0.72 * (1.0 - 3.0));
    CHECK((current.luenberger_rhs(xi, y, u) - expected).norm() < 1e-15);
    CHECK((retarded.retarded_luenberger_rhs(xi, xi, y, u) - expected).norm() < 1e-15);
    const Vec xid = vec2(0.0, 5.0);
    const Vec shifted = vec2(1.0 - 1.2 * (0.0 - 3.0), -1.0 + 1.0 - 0.72 * (0.0 - 3.0));
    CHECK((retarded.retarded_luenberger_rhs(xi, xid, y, u) - shifted).norm() < 1e-15);

    CHECK_THROWS_AS(retarded.luenberger_rhs(xi, y, u), ContractViolation);
    CHECK_THROWS_AS(current.retarded_luenberger_rhs(xi, xi, y, u), ContractViolation);
    CHECK_THROWS_AS(current.luenberger_rhs(xi, vec2(1.0, 1.0), u), InvalidParameter);
}

TEST_CASE("observers reproduce the plant from matched histories") {
    const TimeGrid grid = make_time_grid(0.1, 5, 20);
    const auto controls = random_controls(100, 7);
    for (int which : {1, 2}) {
        const LinearPlant p = example_plant(which);
        const auto history = HistoryBuffer::constant(-grid.horizon_span(), grid.step(), 101, vec2(11.0, 8.0));
        const auto current = LuenbergerObserver::current(p, 1.2, default_injection_gain());
        const auto retarded = LuenbergerObserver::retarded(p, 1.2, default_injection_gain(), grid);
        CHECK(check_a1_identity(p, current, grid, history, controls, 10.0) <= 1e-9);
        CHECK(check_a1_identity(p, retarded, grid, history, controls, 10.0) <= 1e-9);
    }
    const LinearPlant p = example_plant(1);
    const auto retarded = LuenbergerObserver::retarded(p, 1.2, default_injection_gain(), grid);
    const auto a = HistoryBuffer::constant(-0.5, grid.step(), 101, vec2(11.0, 8.0));
    const auto b = HistoryBuffer::constant(-0.5, grid.step(), 101, vec2(11.0, 8.5));
    CHECK_THROWS_AS(check_a1_identity(p, retarded, grid, a, b, controls, 1.0), PreconditionError);
}

TEST_CASE("exponential envelope recovers a known decay") {
    std::vector<EnvelopeSeries> series;
    for (double r : {1.0, 2.0, 5.0}) {
        EnvelopeSeries s;
        s.initial_norm = r;
        for (int i = 0; i <= 400; ++i) {
            const double t = 0.025 * i;
            s.times.push_back(t);
            s.values.push_back(r * std::exp(-t));
        }
        series.push_back(s);
    }
    const EnvelopeFit fit = fit_exponential_envelope(series);
    REQUIRE(fit.success);
    CHECK(fit.fit.c == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit.fit.sigma == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.violations == 0);

    EnvelopeSeries flat;
    flat.initial_norm = 1.0;
    flat.times = {0.0, 1.0, 2.0, 3.0};
    flat.values = {1.0, 1.0, 1.0, 1.0};
    CHECK_FALSE(fit_exponential_envelope({flat}).success);
    CHECK(fit_exponential_envelope({flat}, 2.0).zero_data);
}

TEST_CASE("current-output observer error fits an exponential envelope") {
    const TimeGrid grid = make_time_grid(0.1, 5, 20);
    const LinearPlant p = example_plant(1);
    const auto obs = LuenbergerObserver::current(p, 1.2, default_injection_gain());
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unit;
    std::vector<EnvelopeSeries> errors;
    for (int i = 0; i < 100; ++i) {
        Vec dir = vec2(gauss(rng), gauss(rng));
        dir.normalize();
        const Vec e0 = 10.0 * std::sqrt(unit(rng)) * dir;
        errors.push_back(observer_error_series(p, obs, grid, vec2(11.0, 8.0), e0, 10.0));
    }
    const A2EnvelopeResult fit = fit_a2_envelope(errors);
    REQUIRE(fit.success);
    CHECK(fit.fit.sigma >= 0.7);
    CHECK(fit.fit.sigma <= 0.8 + 1e-9);
}

TEST_CASE("envelope fitting guards") {
    EnvelopeSeries zero;
    zero.initial_norm = 0.0;
    zero.times = {0.0, 1.0};
    zero.values = {0.0, 0.0};
    CHECK(fit_a2_envelope({zero, zero}).zero_data);

    EnvelopeSeries one;
    one.initial_norm = 1.0;
    one.times = {0.0, 1.0};
    one.values = {1.0, 0.5};
    CHECK_THROWS_AS(fit_a2_envelope({one, one, one}), InvalidParameter);
}
