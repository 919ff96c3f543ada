#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "obpc/errors.hpp"
#include "obpc/ode_core.hpp"

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

// Error of RK4 on x' = -x at t = 1 with K steps per unit time.
double decay_error(int K) {
    const TimeGrid grid = make_time_grid(1.0, 1, K);
    const ControlBox box = ControlBox::symmetric(1, 1.0);
    const auto traj = rk4_integrate([](double, const Vec& x, const Vec&) { return Vec(-x); }, scalar(1.0), 0.0, 1.0,
                                    grid, ControlSequence::zeros(1, box));
    return std::abs(traj.final_state()[0] - std::exp(-1.0));
}

}  // namespace

TEST_CASE("time grid step divides the sampling period exactly") {
    const TimeGrid g = make_time_grid(0.1, 5, 20);
    CHECK(g.step() * 20 == 0.1);
    CHECK(g.horizon_steps() == 100);
    CHECK(g.horizon_span() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.steps_in(10.0) == 2000);
    CHECK_THROWS_AS(make_time_grid(-1.0, 5, 20), InvalidParameter);
    CHECK_THROWS_AS(make_time_grid(0.1, 0, 20), InvalidParameter);
    CHECK_THROWS_AS(make_time_grid(0.1, 5, 0), InvalidParameter);
    CHECK_THROWS_AS(g.steps_in(0.0123), InvalidParameter);
}

TEST_CASE("zero-order hold uses half-open intervals") {
    const TimeGrid g = make_time_grid(0.1, 3, 4);
    const ControlBox box = ControlBox::symmetric(1, 10.0);
    const ControlSequence seq({scalar(1.0), scalar(2.0), scalar(3.0)}, box);
    CHECK(zoh_value(seq, 0.0, g, 0.0)[0] == 1.0);
    CHECK(zoh_value(seq, 0.0999, g, 0.0)[0] == 1.0);
    CHECK(zoh_value(seq, 0.1, g, 0.0)[0] == 2.0);
    CHECK(zoh_value(seq, 0.3 - 1e-6, g, 0.0)[0] == 3.0);
    CHECK_THROWS_AS(zoh_value(seq, 0.3, g, 0.0), OutOfRange);
    CHECK_THROWS_AS(zoh_value(seq, -0.01, g, 0.0), OutOfRange);
    CHECK_THROWS_AS(ControlSequence({scalar(11.0)}, box), InvalidParameter);
}

TEST_CASE("rk4 is fourth order on exponential decay") {
    const double e1 = decay_error(10);
    const double e2 = decay_error(20);
    CHECK(e1 < 1e-6);
    CHECK(e1 / e2 >= 8.0);
    CHECK(e1 / e2 == doctest::Approx(16.0).epsilon(0.05));
}

TEST_CASE("rk4 follows a rotation") {
    const TimeGrid grid = make_time_grid(0.5, 4, 50);
    const ControlBox box = ControlBox::symmetric(2, 1.0);
    const auto traj = rk4_integrate(
        [](double, const Vec& x, const Vec&) { return vec2(x[1], -x[0]); }, vec2(1.0, 0.0), 0.0, 2.0, grid,
        ControlSequence::zeros(4, box));
    CHECK(traj.size() == 201);
    CHECK(traj.controls.size() == 200);
    CHECK(traj.final_state()[0] == doctest::Approx(std::cos(2.0)).epsilon(1e-9));
    CHECK(traj.final_state()[1] == doctest::Approx(-std::sin(2.0)).epsilon(1e-9));
}

TEST_CASE("integration applies the held controls") {
    const TimeGrid grid = make_time_grid(1.0, 2, 10);
    const ControlBox box = ControlBox::symmetric(1, 5.0);
    const ControlSequence seq({scalar(1.0), scalar(-2.0)}, box);
    const auto traj =
        rk4_integrate([](double, const Vec&, const Vec& u) { return u; }, scalar(0.0), 0.0, 2.0, grid, seq);
    CHECK(traj.states[10][0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(traj.final_state()[0] == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("divergence is reported with its time") {
    const TimeGrid grid = make_time_grid(1.0, 20, 10);
    const ControlBox box = ControlBox::symmetric(1, 1.0);
    try {
        rk4_integrate([](double, const Vec& x, const Vec&) { return Vec(10.0 * x); }, scalar(1.0), 0.0, 20.0, grid,
                      ControlSequence::zeros(20, box));
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.time() > 2.0);
        CHECK(e.time() < 3.0);
    }
}

TEST_CASE("history lookups are exact on the grid") {
    std::vector<Vec> samples;
    for (int i = 0; i <= 10; ++i) samples.push_back(scalar(i * i));
    const HistoryBuffer buf(-1.0, 0.1, samples);
    LookupTrace trace;
    CHECK(history_lookup(buf, -1.0, &trace)[0] == 0.0);
    CHECK(history_lookup(buf, -0.7, &trace)[0] == 9.0);
    CHECK(history_lookup(buf, 0.0, &trace)[0] == 100.0);
    CHECK(trace.reads == 3);
    CHECK(trace.interpolations == 0);
    CHECK(trace.latest_time == 0.0);
    CHECK(history_lookup(buf, -0.65, &trace)[0] == doctest::Approx(12.5));
    CHECK(trace.interpolations == 1);
    CHECK_THROWS_AS(history_lookup(buf, 0.01), OutOfRange);
    CHECK_THROWS_AS(history_lookup(buf, -1.01), OutOfRange);
}

TEST_CASE("history append needs a contiguous, matching segment") {
    const HistoryBuffer buf = HistoryBuffer::constant(-0.5, 0.1, 6, scalar(2.0));
    Trajectory seg;
    seg.step = 0.1;
    seg.times = {0.0, 0.1, 0.2};
    seg.states = {scalar(2.0), scalar(3.0), scalar(4.0)};
    const HistoryBuffer longer = history_append(buf, seg);
    CHECK(longer.size() == 8);
    CHECK(longer.end_time() == doctest::Approx(0.2));
    CHECK(history_lookup(longer, 0.2)[0] == 4.0);

    Trajectory gap = seg;
    gap.times = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(history_append(buf, gap), ContiguityError);
    Trajectory wrong_step = seg;
    wrong_step.step = 0.05;
    CHECK_THROWS_AS(history_append(buf, wrong_step), ContiguityError);
    Trajectory jump = seg;
    jump.states[0] = scalar(2.5);
    CHECK_THROWS_AS(history_append(buf, jump), ConsistencyError);

    const HistoryBuffer trimmed = longer.drop_before(-0.1);
    CHECK(trimmed.start_time() == doctest::Approx(-0.1));
    CHECK(trimmed.size() == 4);
}

TEST_CASE("delayed stage reads stay on the grid") {
    std::vector<Vec> samples;
    for (int i = 0; i <= 20; ++i) samples.push_back(scalar(i));
    const HistoryBuffer buf(-1.0, 0.05, samples);
    LookupTrace trace;
    CHECK(delayed_stage_read(buf, 0.0, 0.05, Stage::left, 0.5, &trace)[0] == 10.0);
    CHECK(delayed_stage_read(buf, 0.0, 0.05, Stage::right, 0.5, &trace)[0] == 11.0);
    CHECK(delayed_stage_read(buf, 0.0, 0.05, Stage::middle, 0.5, &trace)[0] == 10.5);
    CHECK(trace.interpolations == 0);
}
