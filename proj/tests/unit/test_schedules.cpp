#include <catch2/catch.hpp>

#include "sgdflow/schedules.hpp"

using namespace sgdflow;

TEST_CASE("schedule values") {
    CHECK(Schedule::constant(0.8).gamma(3.0) == Approx(0.8));
    CHECK(Schedule::rational_decay(1.0, 1.0).gamma(1.0) == Approx(0.5));
    CHECK(Schedule::exponential_to_limit(0.2, 1.0, 1.0).gamma(0.0) == Approx(1.0));

    auto pw = Schedule::piecewise_constant({{0.0, 1.0}, {1.0, 0.0}});
    CHECK(pw.gamma(0.0) == 1.0);
    CHECK(pw.gamma(0.999) == 1.0);
    CHECK(pw.gamma(1.0) == 0.0);  // right-continuous
    CHECK(pw.gamma(5.0) == 0.0);
}

TEST_CASE("integrated schedule in closed form") {
    CHECK(Schedule::constant(0.8).big_gamma(2.0) == Approx(1.6));
    CHECK(Schedule::rational_decay(1.0, 1.0).big_gamma(std::exp(1.0) - 1.0) == Approx(1.0));
    auto pw = Schedule::piecewise_constant({{0.0, 1.0}, {1.0, 0.0}});
    CHECK(pw.big_gamma(5.0) == Approx(1.0));
    CHECK(pw.big_gamma(0.5) == Approx(0.5));
}

TEST_CASE("schedule limits") {
    CHECK(Schedule::constant(0.8).gamma_limit() == Approx(0.8));
    CHECK(Schedule::rational_decay(1.0, 2.0).gamma_limit() == 0.0);
    CHECK(Schedule::exponential_to_limit(0.2, 1.0, 1.0).gamma_limit() == Approx(0.2));
    CHECK(Schedule::piecewise_constant({{0.0, 1.0}, {2.0, 0.3}}).gamma_limit() == Approx(0.3));
}

TEST_CASE("big_gamma matches trapezoid quadrature of gamma") {
    const std::vector<Schedule> schedules = {
        Schedule::constant(0.7),
        Schedule::rational_decay(1.2, 0.8),
        Schedule::exponential_to_limit(0.2, 1.5, 0.6),
    };
    const double t_end = 4.0;
    const int panels = 10000;
    for (const auto& s : schedules) {
        double quad = 0.0;
        const double h = t_end / panels;
        for (int k = 0; k < panels; ++k)
            quad += 0.5 * h * (s.gamma(k * h) + s.gamma((k + 1) * h));
        const double exact = s.big_gamma(t_end);
        CHECK(std::abs(quad - exact) <= 1e-6 * std::max(1.0, std::abs(exact)));
    }

    // the piecewise kind is integrated segment by segment with midpoint
    // panels (a panel straddling a jump, or a trapezoid endpoint sitting on
    // the right-continuous boundary, would add an O(h) error that is not the
    // integral's)
    auto pw = Schedule::piecewise_constant({{0.0, 0.9}, {0.75, 0.4}, {2.0, 0.1}});
    const std::vector<double> cuts = {0.0, 0.75, 2.0, t_end};
    double quad = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double h = (cuts[c + 1] - cuts[c]) / panels;
        for (int k = 0; k < panels; ++k)
            quad += h * pw.gamma(cuts[c] + (k + 0.5) * h);
    }
    CHECK(std::abs(quad - pw.big_gamma(t_end)) <= 1e-6);
}

TEST_CASE("big_gamma is nondecreasing from zero") {
    auto s = Schedule::exponential_to_limit(0.1, 2.0, 0.5);
    CHECK(s.big_gamma(0.0) == 0.0);
    double prev = 0.0;
    for (int k = 1; k <= 40; ++k) {
        const double cur = s.big_gamma(0.25 * k);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("schedule validation") {
    CHECK_THROWS_AS(Schedule::constant(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(Schedule::rational_decay(1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(Schedule::piecewise_constant({{0.5, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(Schedule::constant(0.5).gamma(-1.0), std::invalid_argument);
}
