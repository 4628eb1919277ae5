#include <catch2/catch.hpp>

#include "helpers.hpp"
#include "sgdflow/hsgd.hpp"
#include "sgdflow/sgd.hpp"
#include "sgdflow/theory.hpp"

using namespace sgdflow;

namespace {

SpectralQuadratic coordinate_reader(Eigen::Index d, Eigen::Index j) {
    SpectralQuadratic sq;
    sq.diagonal_form = true;
    sq.t_diag = Eigen::VectorXd::Zero(d);
    sq.u = Eigen::VectorXd::Zero(d);
    sq.u[j] = 1.0;
    sq.c = 0.0;
    sq.hess_diag = sq.t_diag;
    sq.label = "nu" + std::to_string(j);
    return sq;
}

}  // namespace

TEST_CASE("zero target from zero start is absorbing") {
    Problem p = testutil::random_problem(6, 4, 0.3, 900);
    p.b.setZero();
    auto spec = decompose(p);
    auto loss_sq = spectralize(spec, QuadraticStatistic::loss_as_statistic(p));
    SdeConfig cfg;
    cfg.step_h = 0.01;
    cfg.seed = Seed{1};
    cfg.noise_enabled = true;
    auto traj = run_hsgd(spec, p.delta, Schedule::constant(0.8), Eigen::VectorXd::Zero(4),
                         {loss_sq}, cfg, make_record_times(6, 1.0, 2));
    for (Eigen::Index i = 0; i < traj.points(); ++i)
        CHECK(traj.values(i, 0) == 0.0);
}

TEST_CASE("drift-only integration converges to gradient flow at first order") {
    Problem p = testutil::random_problem(12, 10, 0.3, 910);
    auto spec = decompose(p);
    const Eigen::VectorXd x0 = testutil::random_vector(10, 911);
    auto sched = Schedule::exponential_to_limit(0.3, 1.0, 1.0);
    const double horizon = 2.0;

    auto loss_stat = QuadraticStatistic::loss_as_statistic(p);
    auto loss_sq = spectralize(spec, loss_stat);
    const double exact =
        loss(p, gradient_flow_state(spec, p.delta, x0, sched.big_gamma(horizon)));

    std::vector<double> errors;
    for (double h : {0.05, 0.025, 0.0125, 0.00625}) {
        SdeConfig cfg;
        cfg.step_h = h;
        cfg.noise_enabled = false;
        cfg.seed = Seed{0};
        auto traj = run_hsgd(spec, p.delta, sched, x0, {loss_sq}, cfg, {0.0, horizon});
        errors.push_back(std::abs(traj.values(1, 0) - exact));
    }
    for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
        const double ratio = errors[k] / errors[k + 1];
        CHECK(ratio >= 1.7);
        CHECK(ratio <= 2.3);
    }
}

TEST_CASE("scalar ensemble mean tracks the Volterra solution") {
    Problem p;
    p.a = Eigen::MatrixXd::Constant(1, 1, 1.0);
    p.b = Eigen::VectorXd::Constant(1, 1.0);
    p.delta = 0.0;
    auto spec = decompose(p);
    auto sched = Schedule::constant(0.4);
    auto loss_sq = spectralize(spec, QuadraticStatistic::loss_as_statistic(p));

    auto grid = TimeGrid::make(sched, 2.0, 1e-3);
    auto psi = solve_psi(spec, p.delta, Eigen::VectorXd::Zero(1), sched, grid);
    REQUIRE_FALSE(psi.diverged);

    const std::vector<double> checkpoints = {0.0, 0.5, 1.0, 2.0};
    const int paths = 500;
    Eigen::MatrixXd samples(paths, 3);
    for (int r = 0; r < paths; ++r) {
        SdeConfig cfg;
        cfg.step_h = 1e-3;
        cfg.seed = Seed{5000 + static_cast<std::uint64_t>(r)};
        auto traj = run_hsgd(spec, p.delta, sched, Eigen::VectorXd::Zero(1), {loss_sq}, cfg,
                             checkpoints);
        for (int c = 0; c < 3; ++c) samples(r, c) = traj.values(c + 1, 0);
    }
    const std::array<int, 3> grid_idx = {500, 1000, 2000};
    for (int c = 0; c < 3; ++c) {
        const double mean = samples.col(c).mean();
        const double sd = std::sqrt((samples.col(c).array() - mean).square().sum() /
                                    (paths - 1));
        const double se = sd / std::sqrt(static_cast<double>(paths));
        CHECK(std::abs(mean - psi.values[grid_idx[c]]) <= 3.0 * se);
    }
}

TEST_CASE("one-step noise covariance matches the diffusion coefficient") {
    Problem p = testutil::random_problem(8, 6, 0.2, 920);
    auto spec = decompose(p);
    const Eigen::VectorXd x0 = testutil::random_vector(6, 921);
    const Eigen::VectorXd y0 = spec.to_spectral(x0);
    const double gamma = 0.7;
    const double h = 0.01;
    const double lhat = spec.loss_spectral(y0);

    std::vector<SpectralQuadratic> readers;
    for (Eigen::Index j = 0; j < 6; ++j) readers.push_back(coordinate_reader(6, j));

    const int ensemble = 20000;
    Eigen::MatrixXd deltas(ensemble, 6);
    for (int r = 0; r < ensemble; ++r) {
        SdeConfig cfg;
        cfg.step_h = h;
        cfg.seed = Seed{10000 + static_cast<std::uint64_t>(r)};
        auto traj = run_hsgd(spec, p.delta, Schedule::constant(gamma), x0, readers, cfg,
                             {0.0, h});
        for (Eigen::Index j = 0; j < 6; ++j) deltas(r, j) = traj.values(1, j) - y0[j];
    }
    for (Eigen::Index j = 0; j < 6; ++j) {
        const double mean = deltas.col(j).mean();
        const double var =
            (deltas.col(j).array() - mean).square().sum() / (ensemble - 1);
        const double expected = h * gamma * gamma * (2.0 / 8.0) * lhat * spec.eigenvalues[j];
        const double se = expected * std::sqrt(2.0 / ensemble);
        CHECK(std::abs(var - expected) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("record clock matches the discrete simulator") {
    Problem p = testutil::random_problem(9, 5, 0.1, 930);
    auto spec = decompose(p);
    const Eigen::VectorXd x0 = testutil::random_vector(5, 931);
    auto sched = Schedule::constant(0.3);
    auto stat = QuadraticStatistic::loss_as_statistic(p);
    auto times = make_record_times(9, 1.7, 4);

    auto sgd_traj = run_sgd(p, sched, x0, 1.7, {stat}, Seed{1}, 4);
    SdeConfig cfg;
    cfg.step_h = 0.01;
    cfg.seed = Seed{2};
    auto hsgd_traj = run_hsgd(spec, p.delta, sched, x0, {spectralize(spec, stat)}, cfg, times);

    REQUIRE(sgd_traj.points() == hsgd_traj.points());
    for (Eigen::Index i = 0; i < sgd_traj.points(); ++i)
        CHECK(sgd_traj.times[i] == hsgd_traj.times[i]);
}

TEST_CASE("sde config validation") {
    SdeConfig cfg;
    cfg.step_h = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(default_sde_step(1000) == Approx(1.0 / 4000.0));
    CHECK(default_sde_step(10) == Approx(1e-3));
}
