// experiment.hpp — the experiment runner behind the CLI: builds an instance
// from a config, wires generators → simulators → theory → diagnostics,
// computes comparison metrics, and writes the CSV artifacts and manifest.
//
// Output schemas (version 1):
//   trajectories.csv  run_id,t,stat_label,value,source
//   metrics.csv       metric,stat_label,run_id,t,value
//   limits.csv        stat_label,threshold,gamma_limit,big_gamma_T,
//                     loss_gf_inf,risk_gf_inf,psi_inf,excess_risk_inf,omega_inf
//   diagnostics.csv   check,quantity,value,bound,pass,sampled
//   manifest.json     resolved config + seed lineage + version + wall clock
//
// For a fixed master seed the CSVs are byte-identical across reruns and
// worker counts: per-run streams are derived from the run index and the
// aggregation order is fixed.

#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "sgdflow/config.hpp"
#include "sgdflow/diagnostics.hpp"
#include "sgdflow/generators.hpp"
#include "sgdflow/hsgd.hpp"
#include "sgdflow/matrix_io.hpp"
#include "sgdflow/sgd.hpp"
#include "sgdflow/statistics.hpp"
#include "sgdflow/theory.hpp"
#include "sgdflow/version.hpp"

namespace sgdflow {

inline constexpr const char* trajectories_header = "run_id,t,stat_label,value,source";
inline constexpr const char* metrics_header = "metric,stat_label,run_id,t,value";
inline constexpr const char* limits_header =
    "stat_label,threshold,gamma_limit,big_gamma_T,loss_gf_inf,risk_gf_inf,psi_inf,"
    "excess_risk_inf,omega_inf";
inline constexpr const char* diagnostics_header = "check,quantity,value,bound,pass,sampled";
inline constexpr int csv_schema_version = 1;

inline Schedule make_schedule(const ScheduleConfig& sc) {
    if (sc.kind == "constant") return Schedule::constant(sc.gamma);
    if (sc.kind == "rational_decay") return Schedule::rational_decay(sc.c, sc.scale);
    if (sc.kind == "exponential_to_limit")
        return Schedule::exponential_to_limit(sc.gamma_inf, sc.gamma0, sc.scale);
    std::vector<Schedule::Segment> segs;
    for (const auto& [start, g] : sc.pieces) segs.push_back({start, g});
    return Schedule::piecewise_constant(std::move(segs));
}

inline CovarianceSpec make_covariance(const CovarianceConfig& cc, Eigen::Index dim,
                                      double auto_scale) {
    if (cc.kind == "identity_scaled") {
        const double s = cc.scale < 0 ? auto_scale : cc.scale;
        return CovarianceSpec::identity_scaled(dim, s);
    }
    if (cc.kind == "diagonal") {
        if (cc.path.empty()) throw ConfigError("[covariance].path: required for diagonal kind");
        Eigen::MatrixXd m = load_matrix_csv(cc.path);
        if (m.cols() != 1 || m.rows() != dim)
            throw ConfigError("[covariance].path: expected a " + std::to_string(dim) +
                              "-row single-column CSV");
        return CovarianceSpec::diagonal(m.col(0));
    }
    if (cc.kind == "dense") {
        if (cc.path.empty()) throw ConfigError("[covariance].path: required for dense kind");
        Eigen::MatrixXd m = load_matrix_csv(cc.path);
        if (m.rows() != dim || m.cols() != dim)
            throw ConfigError("[covariance].path: expected a " + std::to_string(dim) + "x" +
                              std::to_string(dim) + " CSV");
        return CovarianceSpec::dense(m);
    }
    throw ConfigError("[covariance].kind: unknown kind '" + cc.kind + "'");
}

inline Activation make_activation(const std::string& kind) {
    if (kind == "normalized_relu") return Activation::normalized_relu();
    if (kind == "tanh") return Activation::tanh_act();
    if (kind == "identity") return Activation::identity();
    throw ConfigError("[activation].kind: unknown kind '" + kind + "'");
}

// The shared clock: stride steps between records, horizon trimmed so the
// final step lands on a stride multiple, h = stride/n.
struct Clock {
    Eigen::Index stride = 1;
    std::int64_t total_steps = 0;
    double horizon = 0.0;  // total_steps / n
    std::vector<double> times;
};

inline Clock make_clock(Eigen::Index n, double horizon, double grid_h) {
    Clock c;
    const double h = grid_h > 0 ? grid_h : default_grid_step(horizon);
    c.stride = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::llround(h * static_cast<double>(n))));
    auto total = static_cast<std::int64_t>(std::floor(horizon * static_cast<double>(n)));
    total -= total % c.stride;
    if (total < c.stride) total = c.stride;
    c.total_steps = total;
    c.horizon = static_cast<double>(total) / static_cast<double>(n);
    c.times = make_record_times(n, (static_cast<double>(total) + 0.5) / static_cast<double>(n),
                                c.stride);
    return c;
}

struct InstanceBundle {
    Problem problem;
    Spectral spec;
    Schedule schedule = Schedule::constant(0.0);
    Eigen::VectorXd beta, noise, x0;
    std::vector<QuadraticStatistic> stats;
    std::vector<SpectralQuadratic> sstats;
    double eta2 = 0.0;        // population-risk noise level actually used
    double post_scale = 1.0;  // applied to (A, b) for the RF recipe
    bool has_rf = false;
    RfMoments moments;
};

namespace detail {

inline void add_stat(InstanceBundle& ib, QuadraticStatistic q) {
    ib.stats.push_back(std::move(q));
}

inline bool wants(const std::vector<std::string>& list, const std::string& name) {
    for (const auto& s : list)
        if (s == name) return true;
    return false;
}

}  // namespace detail

inline InstanceBundle build_instance(const ExperimentConfig& cfg) {
    InstanceBundle ib;
    ib.schedule = make_schedule(cfg.schedule);
    const Seed master{cfg.master_seed};

    Eigen::MatrixXd cov_f_dense;  // population covariance for risk statistics

    switch (cfg.recipe) {
        case Recipe::gaussian_mse:
        case Recipe::erm_risk:
        case Recipe::ood_risk: {
            const CovarianceSpec cov =
                make_covariance(cfg.covariance, cfg.d, 1.0 / static_cast<double>(cfg.d));
            ib.problem.a = gaussian_design(cfg.n, cfg.d, cov, derive(master, stream::design));
            GenerativeTargetSpec ts{cfg.signal_energy, cfg.noise_energy, cfg.init_energy};
            auto tg = generative_targets(ib.problem.a, ts, derive(master, stream::targets));
            ib.problem.b = tg.b;
            ib.beta = tg.beta;
            ib.noise = tg.noise;
            cov_f_dense = cov.materialize();
            break;
        }
        case Recipe::random_features: {
            const CovarianceSpec cov_f = make_covariance(cfg.covariance, cfg.n0, 1.0);
            const Activation act = make_activation(cfg.activation);
            auto rf = random_features_design(cfg.n, cfg.n0, cfg.d, cov_f, act,
                                             derive(master, stream::design));
            GenerativeTargetSpec ts{cfg.signal_energy, cfg.noise_energy, cfg.init_energy};
            auto tg = generative_targets(rf.x, ts, derive(master, stream::targets));
            ib.beta = tg.beta;
            ib.noise = tg.noise;
            ib.post_scale =
                cfg.rf_post_scale > 0 ? cfg.rf_post_scale
                                      : 1.0 / std::sqrt(static_cast<double>(cfg.n));
            ib.problem.a = rf.a * ib.post_scale;
            ib.problem.b = tg.b * ib.post_scale;
            ib.has_rf = true;
            ib.moments = estimate_rf_moments(rf.w, cov_f, act, cfg.rf_mc_samples,
                                             derive(master, stream::rf_moments));
            cov_f_dense = cov_f.materialize();
            break;
        }
        case Recipe::custom: {
            ib.problem.a = load_matrix(cfg.a_path, cfg.a_format == "csv_with_header"
                                                       ? MatrixFormat::csv_with_header
                                                       : MatrixFormat::raw_binary_f64_row_major);
            if (!cfg.b_path.empty()) {
                Eigen::MatrixXd bm =
                    load_matrix(cfg.b_path, cfg.b_format == "csv_with_header"
                                                ? MatrixFormat::csv_with_header
                                                : MatrixFormat::raw_binary_f64_row_major);
                if (bm.cols() != 1 || bm.rows() != ib.problem.a.rows())
                    throw ConfigError("[data].b_path: expected a single-column matrix with " +
                                      std::to_string(ib.problem.a.rows()) + " rows");
                ib.problem.b = bm.col(0);
            } else {
                GenerativeTargetSpec ts{cfg.signal_energy, cfg.noise_energy, cfg.init_energy};
                auto tg = generative_targets(ib.problem.a, ts, derive(master, stream::targets));
                ib.problem.b = tg.b;
                ib.beta = tg.beta;
                ib.noise = tg.noise;
            }
            break;
        }
    }

    ib.problem.delta = cfg.delta;
    ib.problem.validate();
    const Eigen::Index d = ib.problem.d();
    ib.x0 = random_init(d, cfg.init_energy, derive(master, stream::init));
    ib.eta2 = cfg.eta2 >= 0 ? cfg.eta2
                            : cfg.noise_energy / static_cast<double>(ib.problem.n());

    // Statistics: the loss is always tracked (it is the Ψ curve); the recipe
    // adds its risk, and the config list can add mse / norm_sq / objective.
    detail::add_stat(ib, QuadraticStatistic::loss_as_statistic(ib.problem));
    switch (cfg.recipe) {
        case Recipe::gaussian_mse:
            detail::add_stat(ib, QuadraticStatistic::mse_to_signal(ib.beta));
            break;
        case Recipe::erm_risk:
            detail::add_stat(ib,
                             QuadraticStatistic::population_risk(cov_f_dense, ib.beta, ib.eta2));
            break;
        case Recipe::ood_risk: {
            Eigen::MatrixXd test_cov =
                make_covariance(cfg.test_covariance, cfg.d, 1.0 / static_cast<double>(cfg.d))
                    .materialize();
            detail::add_stat(ib, QuadraticStatistic::population_risk(test_cov, ib.beta, ib.eta2,
                                                                     "ood_risk:halved"));
            break;
        }
        case Recipe::random_features:
            detail::add_stat(
                ib, rf_population_risk(ib.moments, cov_f_dense, ib.beta, std::sqrt(ib.eta2)));
            detail::add_stat(ib, QuadraticStatistic::norm_squared(d));
            break;
        case Recipe::custom:
            break;
    }
    if (detail::wants(cfg.statistics, "mse") && cfg.recipe != Recipe::gaussian_mse) {
        if (ib.beta.size() != d)
            throw ConfigError("[statistics].list: mse requires generative targets");
        detail::add_stat(ib, QuadraticStatistic::mse_to_signal(ib.beta));
    }
    if (detail::wants(cfg.statistics, "norm_sq") && cfg.recipe != Recipe::random_features)
        detail::add_stat(ib, QuadraticStatistic::norm_squared(d));
    if (detail::wants(cfg.statistics, "objective"))
        detail::add_stat(ib, QuadraticStatistic::loss_as_statistic(ib.problem, true));

    ib.spec = decompose(ib.problem);
    ib.sstats.reserve(ib.stats.size());
    for (const auto& q : ib.stats) ib.sstats.push_back(spectralize(ib.spec, q));
    return ib;
}

struct LimitRow {
    std::string stat_label;
    double threshold, gamma_limit, big_gamma_T;
    double loss_gf_inf, risk_gf_inf, psi_inf, excess_risk_inf, omega_inf;
};

struct DiagnosticRow {
    std::string check, quantity;
    double value, bound;
    bool pass, sampled;
};

struct ExperimentResult {
    ExperimentConfig config;
    Clock clock;
    TheoryCurves theory;
    std::vector<Trajectory> sgd_runs;
    std::vector<Trajectory> hsgd_runs;
    std::vector<std::string> stat_labels;
    std::vector<LimitRow> limits;
    std::vector<DiagnosticRow> diagnostic_rows;

    Eigen::MatrixXd sgd_mean;                  // common-prefix mean over runs
    std::vector<double> sup_dev_sgd_vs_theory;  // per stat
    Eigen::MatrixXd sup_dev_sgd_vs_hsgd;        // run × stat
    Eigen::MatrixXd across_run_range;           // time × stat

    double rf_se_bound = 0.0;
    double wall_seconds = 0.0;
};

namespace detail {

inline int worker_count() {
    const char* env = std::getenv("SGDFLOW_WORKERS");
    if (!env) return 1;
    const int k = std::atoi(env);
    return k >= 1 ? k : 1;
}

template <typename F>
inline void parallel_runs(int runs, F&& body) {
    const int workers = std::min(worker_count(), std::max(runs, 1));
    if (workers <= 1) {
        for (int r = 0; r < runs; ++r) body(r);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (int r = next.fetch_add(1); r < runs; r = next.fetch_add(1)) body(r);
        });
    for (auto& th : pool) th.join();
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::vector<DiagnosticRow> run_diagnostics(const InstanceBundle& ib,
                                                  const DiagnosticsConfig& dc) {
    std::vector<DiagnosticRow> rows;
    const Contour contour = build_contour(ib.spec, dc.contour_points);
    const auto rep = check_delocalization(ib.spec, ib.problem.b, dc.theta, contour);
    rows.push_back({"delocalization", "max_rb", rep.max_rb, rep.theta_bound, rep.pass_rb,
                    rep.sampled});
    rows.push_back({"delocalization", "max_offdiag", rep.max_offdiag, rep.theta_bound,
                    rep.pass_offdiag, rep.sampled});
    rows.push_back({"delocalization", "max_diag_dev", rep.max_diag_dev, rep.theta_bound,
                    rep.pass_diag, rep.sampled});
    const auto irep = check_init(ib.spec, ib.x0, dc.theta, contour);
    rows.push_back({"init_alignment", "max_abs", irep.max_abs, irep.theta_bound, irep.pass,
                    false});
    if (dc.check_keylemma) {
        for (std::size_t s = 0; s < ib.stats.size(); ++s) {
            const auto krep = check_statistic_keylemma(ib.spec, ib.stats[s], dc.epsilon,
                                                       contour, dc.keylemma_pairs);
            rows.push_back({"keylemma", ib.stats[s].label(), krep.max_dev, krep.bound,
                            krep.pass, false});
        }
    }
    if (dc.warn_row_norm) {
        const auto rn = row_norm_report(ib.problem);
        const double spread = rn.mean_sq > 0 ? (rn.max_sq - rn.min_sq) / rn.mean_sq : 0.0;
        rows.push_back({"row_norm", "relative_spread", spread, 0.5, spread <= 0.5, false});
    }
    // statistic-size warning: the comparison guarantees degrade when the H2
    // norm is large relative to the dimension
    for (const auto& q : ib.stats) {
        const double h2 = q.h2_norm();
        rows.push_back({"h2_norm", q.label(), h2, dc.h2_warn, h2 <= dc.h2_warn, false});
    }
    return rows;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["recipe"] = recipe_name(c.recipe);
    j["output_dir"] = c.output_dir;
    j["master_seed"] = c.master_seed;
    j["runs"] = c.runs;
    j["dimensions"] = {{"n", c.n}, {"d", c.d}, {"n0", c.n0}};
    j["covariance"] = {{"kind", c.covariance.kind},
                       {"scale", c.covariance.scale},
                       {"path", c.covariance.path}};
    j["test_covariance"] = {{"kind", c.test_covariance.kind},
                            {"scale", c.test_covariance.scale},
                            {"path", c.test_covariance.path}};
    j["activation"] = c.activation;
    j["targets"] = {{"signal_energy", c.signal_energy},
                    {"noise_energy", c.noise_energy},
                    {"init_energy", c.init_energy}};
    j["problem"] = {{"delta", c.delta}};
    nlohmann::json pieces = nlohmann::json::array();
    for (const auto& [t, g] : c.schedule.pieces) pieces.push_back({{"start", t}, {"gamma", g}});
    j["schedule"] = {{"kind", c.schedule.kind},     {"gamma", c.schedule.gamma},
                     {"c", c.schedule.c},           {"scale", c.schedule.scale},
                     {"gamma0", c.schedule.gamma0}, {"gamma_inf", c.schedule.gamma_inf},
                     {"pieces", pieces}};
    j["run"] = {{"horizon", c.horizon}, {"grid_h", c.grid_h},       {"sde_h", c.sde_h},
                {"hsgd", c.hsgd_enabled}, {"noise", c.sde_noise}};
    j["statistics"] = c.statistics;
    j["rf"] = {{"mc_samples", c.rf_mc_samples}, {"post_scale", c.rf_post_scale}};
    j["risk"] = {{"eta2", c.eta2}};
    j["data"] = {{"a_path", c.a_path},
                 {"a_format", c.a_format},
                 {"b_path", c.b_path},
                 {"b_format", c.b_format}};
    j["diagnostics"] = {{"enabled", c.diagnostics.enabled},
                        {"theta", c.diagnostics.theta},
                        {"epsilon", c.diagnostics.epsilon},
                        {"contour_points", c.diagnostics.contour_points},
                        {"keylemma_pairs", c.diagnostics.keylemma_pairs},
                        {"check_keylemma", c.diagnostics.check_keylemma},
                        {"warn_row_norm", c.diagnostics.warn_row_norm},
                        {"h2_warn", c.diagnostics.h2_warn}};
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    const std::string rec = j.at("recipe").get<std::string>();
    if (rec == "gaussian_mse") c.recipe = Recipe::gaussian_mse;
    else if (rec == "erm_risk") c.recipe = Recipe::erm_risk;
    else if (rec == "ood_risk") c.recipe = Recipe::ood_risk;
    else if (rec == "random_features") c.recipe = Recipe::random_features;
    else if (rec == "custom") c.recipe = Recipe::custom;
    else throw ConfigError("manifest: unknown recipe '" + rec + "'");
    c.output_dir = j.at("output_dir").get<std::string>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    c.runs = j.at("runs").get<int>();
    c.n = j.at("dimensions").at("n").get<long>();
    c.d = j.at("dimensions").at("d").get<long>();
    c.n0 = j.at("dimensions").at("n0").get<long>();
    c.covariance.kind = j.at("covariance").at("kind").get<std::string>();
    c.covariance.scale = j.at("covariance").at("scale").get<double>();
    c.covariance.path = j.at("covariance").at("path").get<std::string>();
    c.test_covariance.kind = j.at("test_covariance").at("kind").get<std::string>();
    c.test_covariance.scale = j.at("test_covariance").at("scale").get<double>();
    c.test_covariance.path = j.at("test_covariance").at("path").get<std::string>();
    c.activation = j.at("activation").get<std::string>();
    c.signal_energy = j.at("targets").at("signal_energy").get<double>();
    c.noise_energy = j.at("targets").at("noise_energy").get<double>();
    c.init_energy = j.at("targets").at("init_energy").get<double>();
    c.delta = j.at("problem").at("delta").get<double>();
    c.schedule.kind = j.at("schedule").at("kind").get<std::string>();
    c.schedule.gamma = j.at("schedule").at("gamma").get<double>();
    c.schedule.c = j.at("schedule").at("c").get<double>();
    c.schedule.scale = j.at("schedule").at("scale").get<double>();
    c.schedule.gamma0 = j.at("schedule").at("gamma0").get<double>();
    c.schedule.gamma_inf = j.at("schedule").at("gamma_inf").get<double>();
    for (const auto& pc : j.at("schedule").at("pieces"))
        c.schedule.pieces.emplace_back(pc.at("start").get<double>(),
                                       pc.at("gamma").get<double>());
    c.horizon = j.at("run").at("horizon").get<double>();
    c.grid_h = j.at("run").at("grid_h").get<double>();
    c.sde_h = j.at("run").at("sde_h").get<double>();
    c.hsgd_enabled = j.at("run").at("hsgd").get<bool>();
    c.sde_noise = j.at("run").at("noise").get<bool>();
    c.statistics = j.at("statistics").get<std::vector<std::string>>();
    c.rf_mc_samples = j.at("rf").at("mc_samples").get<std::size_t>();
    c.rf_post_scale = j.at("rf").at("post_scale").get<double>();
    c.eta2 = j.at("risk").at("eta2").get<double>();
    c.a_path = j.at("data").at("a_path").get<std::string>();
    c.a_format = j.at("data").at("a_format").get<std::string>();
    c.b_path = j.at("data").at("b_path").get<std::string>();
    c.b_format = j.at("data").at("b_format").get<std::string>();
    c.diagnostics.enabled = j.at("diagnostics").at("enabled").get<bool>();
    c.diagnostics.theta = j.at("diagnostics").at("theta").get<double>();
    c.diagnostics.epsilon = j.at("diagnostics").at("epsilon").get<double>();
    c.diagnostics.contour_points = j.at("diagnostics").at("contour_points").get<int>();
    c.diagnostics.keylemma_pairs = j.at("diagnostics").at("keylemma_pairs").get<std::size_t>();
    c.diagnostics.check_keylemma = j.at("diagnostics").at("check_keylemma").get<bool>();
    c.diagnostics.warn_row_norm = j.at("diagnostics").at("warn_row_norm").get<bool>();
    c.diagnostics.h2_warn = j.at("diagnostics").at("h2_warn").get<double>();
    return c;
}

// Runs the full pipeline in memory. File writing is separate so tests can
// inspect results without touching the filesystem.
inline ExperimentResult run_experiment_in_memory(const ExperimentConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    ExperimentResult res;
    res.config = cfg;

    InstanceBundle ib = build_instance(cfg);
    const Eigen::Index n = ib.problem.n();
    res.clock = make_clock(n, cfg.horizon, cfg.grid_h);
    for (const auto& q : ib.stats) res.stat_labels.push_back(q.label());
    if (ib.has_rf) res.rf_se_bound = ib.moments.standard_error_bound;

    const TimeGrid grid = TimeGrid::from_times(ib.schedule, res.clock.times);
    res.theory = compute_theory_curves(ib.spec, ib.problem.delta, ib.x0, ib.schedule, grid,
                                       ib.sstats);

    // Limits per statistic (threshold, Ψ_∞ and the gradient-flow limits are
    // exact; Γ(T) is reported alongside so slow δ=0 limits are visible).
    {
        const double thr = convergence_threshold(ib.spec, ib.problem.delta);
        const double glim = ib.schedule.gamma_limit();
        const Eigen::VectorXd nu0 = ib.spec.to_spectral(ib.x0);
        const Eigen::VectorXd nu_inf =
            gradient_flow_limit_spectral(ib.spec, ib.problem.delta, nu0);
        const double loss_inf = ib.spec.loss_spectral(nu_inf);
        for (std::size_t s = 0; s < ib.sstats.size(); ++s) {
            const double risk_inf = ib.sstats[s].evaluate(nu_inf);
            const auto lim = limiting_values(ib.spec, ib.problem.delta, glim, loss_inf,
                                             risk_inf,
                                             SpectralStatProjection::from(ib.sstats[s]));
            res.limits.push_back({res.stat_labels[s], thr, glim,
                                  ib.schedule.big_gamma(res.clock.horizon), loss_inf, risk_inf,
                                  lim.psi_inf, lim.excess_risk_inf, lim.omega_inf});
        }
    }

    if (cfg.runs > 0) {
        res.sgd_runs.resize(static_cast<std::size_t>(cfg.runs));
        detail::parallel_runs(cfg.runs, [&](int r) {
            const Seed seed = derive(derive(Seed{cfg.master_seed}, stream::sgd_run),
                                     static_cast<std::uint64_t>(r));
            res.sgd_runs[static_cast<std::size_t>(r)] =
                run_sgd(ib.problem, ib.schedule, ib.x0,
                        (static_cast<double>(res.clock.total_steps) + 0.5) /
                            static_cast<double>(n),
                        ib.stats, seed, res.clock.stride);
        });
        if (cfg.hsgd_enabled) {
            res.hsgd_runs.resize(static_cast<std::size_t>(cfg.runs));
            detail::parallel_runs(cfg.runs, [&](int r) {
                SdeConfig sc;
                sc.step_h = cfg.sde_h > 0 ? cfg.sde_h : default_sde_step(n);
                sc.noise_enabled = cfg.sde_noise;
                sc.seed = derive(derive(Seed{cfg.master_seed}, stream::hsgd_run),
                                 static_cast<std::uint64_t>(r));
                res.hsgd_runs[static_cast<std::size_t>(r)] =
                    run_hsgd(ib.spec, ib.problem.delta, ib.schedule, ib.x0, ib.sstats, sc,
                             res.clock.times);
            });
        }
    }

    // Comparison metrics on the common prefix of recorded times.
    const auto n_stats = static_cast<Eigen::Index>(ib.stats.size());
    if (!res.sgd_runs.empty()) {
        Eigen::Index prefix = res.theory.psi.size();
        for (const auto& tr : res.sgd_runs) prefix = std::min(prefix, tr.points());
        res.sgd_mean = Eigen::MatrixXd::Zero(prefix, n_stats);
        for (const auto& tr : res.sgd_runs)
            res.sgd_mean += tr.values.topRows(prefix);
        res.sgd_mean /= static_cast<double>(res.sgd_runs.size());

        res.across_run_range.resize(prefix, n_stats);
        for (Eigen::Index i = 0; i < prefix; ++i)
            for (Eigen::Index s = 0; s < n_stats; ++s) {
                double lo = res.sgd_runs[0].values(i, s), hi = lo;
                for (const auto& tr : res.sgd_runs) {
                    lo = std::min(lo, tr.values(i, s));
                    hi = std::max(hi, tr.values(i, s));
                }
                res.across_run_range(i, s) = hi - lo;
            }

        res.sup_dev_sgd_vs_theory.assign(static_cast<std::size_t>(n_stats), 0.0);
        for (Eigen::Index s = 0; s < n_stats; ++s) {
            double sup = 0.0;
            for (Eigen::Index i = 0; i < prefix; ++i)
                sup = std::max(sup, std::abs(res.sgd_mean(i, s) - res.theory.omega(i, s)));
            res.sup_dev_sgd_vs_theory[static_cast<std::size_t>(s)] = sup;
        }

        if (!res.hsgd_runs.empty()) {
            res.sup_dev_sgd_vs_hsgd =
                Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(res.sgd_runs.size()), n_stats);
            for (std::size_t r = 0; r < res.sgd_runs.size(); ++r) {
                const Eigen::Index pr = std::min(res.sgd_runs[r].points(),
                                                 res.hsgd_runs[r].points());
                for (Eigen::Index s = 0; s < n_stats; ++s) {
                    double sup = 0.0;
                    for (Eigen::Index i = 0; i < pr; ++i)
                        sup = std::max(sup, std::abs(res.sgd_runs[r].values(i, s) -
                                                     res.hsgd_runs[r].values(i, s)));
                    res.sup_dev_sgd_vs_hsgd(static_cast<Eigen::Index>(r), s) = sup;
                }
            }
        }
    }

    if (cfg.diagnostics.enabled) res.diagnostic_rows = run_diagnostics(ib, cfg.diagnostics);

    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

namespace detail {

inline void write_trajectory_rows(std::ofstream& out, const Trajectory& tr, int run_id,
                                  const std::vector<std::string>& labels,
                                  const char* source) {
    for (Eigen::Index i = 0; i < tr.points(); ++i)
        for (std::size_t s = 0; s < labels.size(); ++s)
            out << run_id << ',' << fmt(tr.times[i]) << ',' << labels[s] << ','
                << fmt(tr.values(i, static_cast<Eigen::Index>(s))) << ',' << source << "\n";
}

}  // namespace detail

inline void write_experiment_files(const ExperimentResult& res, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream out(out_dir + "/trajectories.csv");
        if (!out) throw std::runtime_error("cannot write trajectories.csv");
        out << trajectories_header << "\n";
        const auto& grid_times = res.clock.times;
        // theory rows under run_id -1
        for (Eigen::Index i = 0; i < res.theory.psi.size(); ++i)
            out << -1 << ',' << detail::fmt(grid_times[static_cast<std::size_t>(i)])
                << ",loss," << detail::fmt(res.theory.psi[i]) << ",theory_psi\n";
        for (std::size_t s = 0; s < res.stat_labels.size(); ++s) {
            for (Eigen::Index i = 0; i < res.theory.omega.rows(); ++i)
                out << -1 << ',' << detail::fmt(grid_times[static_cast<std::size_t>(i)]) << ','
                    << res.stat_labels[s] << ','
                    << detail::fmt(res.theory.omega(i, static_cast<Eigen::Index>(s)))
                    << ",theory_omega\n";
            for (Eigen::Index i = 0; i < res.theory.forcing_stat.rows(); ++i)
                out << -1 << ',' << detail::fmt(grid_times[static_cast<std::size_t>(i)]) << ','
                    << res.stat_labels[s] << ','
                    << detail::fmt(res.theory.forcing_stat(i, static_cast<Eigen::Index>(s)))
                    << ",theory_forcing\n";
        }
        for (std::size_t r = 0; r < res.sgd_runs.size(); ++r)
            detail::write_trajectory_rows(out, res.sgd_runs[r], static_cast<int>(r),
                                          res.stat_labels, "sgd");
        for (std::size_t r = 0; r < res.hsgd_runs.size(); ++r)
            detail::write_trajectory_rows(out, res.hsgd_runs[r], static_cast<int>(r),
                                          res.stat_labels, "hsgd");
    }

    {
        std::ofstream out(out_dir + "/metrics.csv");
        if (!out) throw std::runtime_error("cannot write metrics.csv");
        out << metrics_header << "\n";
        for (std::size_t s = 0; s < res.sup_dev_sgd_vs_theory.size(); ++s)
            out << "sup_dev_sgd_vs_theory," << res.stat_labels[s] << ",-1,-1,"
                << detail::fmt(res.sup_dev_sgd_vs_theory[s]) << "\n";
        for (Eigen::Index r = 0; r < res.sup_dev_sgd_vs_hsgd.rows(); ++r)
            for (Eigen::Index s = 0; s < res.sup_dev_sgd_vs_hsgd.cols(); ++s)
                out << "sup_dev_sgd_vs_hsgd," << res.stat_labels[static_cast<std::size_t>(s)]
                    << ',' << r << ",-1," << detail::fmt(res.sup_dev_sgd_vs_hsgd(r, s)) << "\n";
        for (Eigen::Index i = 0; i < res.across_run_range.rows(); ++i)
            for (Eigen::Index s = 0; s < res.across_run_range.cols(); ++s)
                out << "across_run_range," << res.stat_labels[static_cast<std::size_t>(s)]
                    << ",-1," << detail::fmt(res.clock.times[static_cast<std::size_t>(i)])
                    << ',' << detail::fmt(res.across_run_range(i, s)) << "\n";
        for (std::size_t r = 0; r < res.sgd_runs.size(); ++r)
            out << "divergence_sgd,,"
                << r << ",-1," << (res.sgd_runs[r].diverged ? 1 : 0) << "\n";
        for (std::size_t r = 0; r < res.hsgd_runs.size(); ++r)
            out << "divergence_hsgd,,"
                << r << ",-1," << (res.hsgd_runs[r].diverged ? 1 : 0) << "\n";
        out << "divergence_theory,,-1,-1," << (res.theory.diverged ? 1 : 0) << "\n";
        if (res.rf_se_bound > 0)
            out << "rf_moment_se_bound,,-1,-1," << detail::fmt(res.rf_se_bound) << "\n";
    }

    {
        std::ofstream out(out_dir + "/limits.csv");
        if (!out) throw std::runtime_error("cannot write limits.csv");
        out << limits_header << "\n";
        for (const auto& row : res.limits)
            out << row.stat_label << ',' << detail::fmt(row.threshold) << ','
                << detail::fmt(row.gamma_limit) << ',' << detail::fmt(row.big_gamma_T) << ','
                << detail::fmt(row.loss_gf_inf) << ',' << detail::fmt(row.risk_gf_inf) << ','
                << detail::fmt(row.psi_inf) << ',' << detail::fmt(row.excess_risk_inf) << ','
                << detail::fmt(row.omega_inf) << "\n";
    }

    if (!res.diagnostic_rows.empty()) {
        std::ofstream out(out_dir + "/diagnostics.csv");
        if (!out) throw std::runtime_error("cannot write diagnostics.csv");
        out << diagnostics_header << "\n";
        for (const auto& row : res.diagnostic_rows)
            out << row.check << ',' << row.quantity << ',' << detail::fmt(row.value) << ','
                << detail::fmt(row.bound) << ',' << (row.pass ? 1 : 0) << ','
                << (row.sampled ? 1 : 0) << "\n";
    }

    {
        nlohmann::json manifest;
        manifest["toolkit"] = "sgdflow";
        manifest["version"] = version_string;
        manifest["csv_schema_version"] = csv_schema_version;
        manifest["config"] = config_to_json(res.config);
        manifest["seeds"] = {{"master", res.config.master_seed},
                             {"derivation", "splitmix64(master ^ 0xD1B54A32D192ED03*(tag+1))"},
                             {"streams",
                              {{"design", stream::design},
                               {"targets", stream::targets},
                               {"init", stream::init},
                               {"rf_moments", stream::rf_moments},
                               {"sgd_run_base", stream::sgd_run},
                               {"hsgd_run_base", stream::hsgd_run}}}};
        manifest["clock"] = {{"stride", res.clock.stride},
                             {"total_steps", res.clock.total_steps},
                             {"horizon_actual", res.clock.horizon}};
        if (res.rf_se_bound > 0) manifest["rf_moment_se_bound"] = res.rf_se_bound;
        manifest["wall_seconds"] = res.wall_seconds;
        manifest["workers"] = detail::worker_count();
        const auto now = std::chrono::system_clock::now();
        manifest["wall_clock_unix"] =
            std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
        std::ofstream out(out_dir + "/manifest.json");
        if (!out) throw std::runtime_error("cannot write manifest.json");
        out << manifest.dump(2) << "\n";
    }
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult res = run_experiment_in_memory(cfg);
    write_experiment_files(res, cfg.output_dir);
    return res;
}

// Reload a config from a manifest (for byte-identical reruns).
inline ExperimentConfig load_config_any(const std::string& path) {
    std::ifstream probe(path);
    if (!probe) throw ConfigError("cannot open config '" + path + "'");
    char first = 0;
    probe >> first;
    if (first == '{') {
        std::ifstream in(path);
        nlohmann::json j;
        in >> j;
        return config_from_json(j.contains("config") ? j.at("config") : j);
    }
    return load_experiment_config(path);
}

// ---- compare: align trajectory CSVs and report pointwise/sup deviations ----

struct TrajectorySeries {
    // (source, stat_label) -> time-ordered mean over runs
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, double>>> series;
};

inline TrajectorySeries read_trajectories_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("'" + path + "': empty file");
    if (detail::trim(line) != trajectories_header)
        throw std::runtime_error("'" + path + "': unexpected header (schema v" +
                                 std::to_string(csv_schema_version) + " expected)");
    // accumulate sums per (source, stat, t)
    std::map<std::pair<std::string, std::string>, std::map<double, std::pair<double, int>>> acc;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string run_id, t_str, label, value_str, source;
        if (!std::getline(ss, run_id, ',') || !std::getline(ss, t_str, ',') ||
            !std::getline(ss, label, ',') || !std::getline(ss, value_str, ',') ||
            !std::getline(ss, source, ','))
            throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) +
                                     ": malformed row");
        const double t = std::stod(t_str);
        const double v = std::stod(value_str);
        auto& cell = acc[{detail::trim(source), label}][t];
        cell.first += v;
        cell.second += 1;
    }
    TrajectorySeries out;
    for (const auto& [key, times] : acc) {
        auto& vec = out.series[key];
        vec.reserve(times.size());
        for (const auto& [t, sum_count] : times)
            vec.emplace_back(t, sum_count.first / sum_count.second);
    }
    return out;
}

struct CompareRow {
    std::string stat_label;
    double t;  // -1 for the sup row
    double value;
    bool is_sup;
};

// Compares the source_a series of file A against the source_b series of file
// B, per stat label (or one label when stat_filter is nonempty). Time grids
// must agree.
inline std::vector<CompareRow> compare_series(const TrajectorySeries& a,
                                              const TrajectorySeries& b,
                                              const std::string& source_a,
                                              const std::string& source_b,
                                              const std::string& stat_filter) {
    std::vector<CompareRow> rows;
    for (const auto& [key, va] : a.series) {
        if (key.first != source_a) continue;
        if (!stat_filter.empty() && key.second != stat_filter) continue;
        const auto itb = b.series.find({source_b, key.second});
        if (itb == b.series.end()) continue;
        const auto& vb = itb->second;
        const std::size_t m = std::min(va.size(), vb.size());
        if (m == 0) continue;
        double sup = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (std::abs(va[i].first - vb[i].first) > 1e-9)
                throw std::runtime_error("compare: time grids do not match for stat '" +
                                         key.second + "'");
            const double dev = std::abs(va[i].second - vb[i].second);
            rows.push_back({key.second, va[i].first, dev, false});
            sup = std::max(sup, dev);
        }
        rows.push_back({key.second, -1.0, sup, true});
    }
    return rows;
}

inline void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << metrics_header << "\n";
    for (const auto& r : rows)
        out << (r.is_sup ? "sup_abs_dev" : "abs_dev") << ',' << r.stat_label << ",-1,"
            << detail::fmt(r.t) << ',' << detail::fmt(r.value) << "\n";
}

struct ThresholdInfo {
    double threshold = 0.0;
    double gamma_limit = 0.0;
    std::string classification;  // convergent | critical | divergent
};

inline ThresholdInfo threshold_info(const ExperimentConfig& cfg) {
    InstanceBundle ib = build_instance(cfg);
    ThresholdInfo info;
    info.threshold = convergence_threshold(ib.spec, ib.problem.delta);
    info.gamma_limit = ib.schedule.gamma_limit();
    if (info.gamma_limit < info.threshold) info.classification = "convergent";
    else if (info.gamma_limit == info.threshold) info.classification = "critical";
    else info.classification = "divergent";
    return info;
}

}  // namespace sgdflow
