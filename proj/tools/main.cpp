// sgdflow command-line runner.
//
//   sgdflow run <config>            run a recipe, write CSVs + manifest
//   sgdflow diagnose <config>       resolvent-condition audits only
//   sgdflow compare <csv> <csv>     pointwise/sup deviations between files
//   sgdflow threshold <config>      print the convergence threshold
//
// Exit codes: 0 success, 2 config error, 3 I/O error.
// SGDFLOW_WORKERS controls how many runs execute concurrently (default 1);
// outputs are identical for any worker count.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "sgdflow/experiment.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_io = 3;

int cmd_run(const std::string& config_path) {
    const auto cfg = sgdflow::load_config_any(config_path);
    const auto res = sgdflow::run_experiment(cfg);
    std::printf("wrote %s/{trajectories,metrics,limits%s}.csv and manifest.json\n",
                cfg.output_dir.c_str(), res.diagnostic_rows.empty() ? "" : ",diagnostics");
    std::printf("runs=%d stats=%zu grid_points=%zu horizon=%.6g wall=%.2fs\n", cfg.runs,
                res.stat_labels.size(), res.clock.times.size(), res.clock.horizon,
                res.wall_seconds);
    for (std::size_t s = 0; s < res.sup_dev_sgd_vs_theory.size(); ++s)
        std::printf("sup |mean-SGD - Omega| [%s] = %.6g\n", res.stat_labels[s].c_str(),
                    res.sup_dev_sgd_vs_theory[s]);
    return exit_ok;
}

int cmd_diagnose(const std::string& config_path) {
    auto cfg = sgdflow::load_config_any(config_path);
    cfg.diagnostics.enabled = true;
    auto ib = sgdflow::build_instance(cfg);
    const auto rows = sgdflow::run_diagnostics(ib, cfg.diagnostics);
    std::filesystem::create_directories(cfg.output_dir);
    {
        std::ofstream out(cfg.output_dir + "/diagnostics.csv");
        if (!out) throw std::runtime_error("cannot write diagnostics.csv");
        out << sgdflow::diagnostics_header << "\n";
        for (const auto& row : rows)
            out << row.check << ',' << row.quantity << ',' << sgdflow::detail::fmt(row.value)
                << ',' << sgdflow::detail::fmt(row.bound) << ',' << (row.pass ? 1 : 0) << ','
                << (row.sampled ? 1 : 0) << "\n";
    }
    for (const auto& row : rows)
        std::printf("%-16s %-16s value=%-12.5g bound=%-12.5g %s%s\n", row.check.c_str(),
                    row.quantity.c_str(), row.value, row.bound, row.pass ? "pass" : "FAIL",
                    row.sampled ? " (sampled)" : "");
    return exit_ok;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& source_a,
                const std::string& source_b, const std::string& stat,
                const std::string& out_path) {
    if (paths.size() < 2) throw sgdflow::ConfigError("compare: need two csv paths");
    const auto a = sgdflow::read_trajectories_csv(paths[0]);
    const auto b = sgdflow::read_trajectories_csv(paths[1]);
    const auto rows = sgdflow::compare_series(a, b, source_a, source_b, stat);
    sgdflow::write_compare_csv(rows, out_path);
    for (const auto& r : rows)
        if (r.is_sup)
            std::printf("sup |%s(%s) - %s(%s)| = %.6g\n", source_a.c_str(),
                        r.stat_label.c_str(), source_b.c_str(), r.stat_label.c_str(), r.value);
    return exit_ok;
}

int cmd_threshold(const std::string& config_path) {
    const auto cfg = sgdflow::load_config_any(config_path);
    const auto info = sgdflow::threshold_info(cfg);
    std::printf("threshold %.12g\n", info.threshold);
    std::printf("gamma_limit %.12g\n", info.gamma_limit);
    std::printf("classification %s\n", info.classification.c_str());
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sgdflow: SGD dynamics on ridge least squares, with deterministic "
                 "Volterra-equation predictions"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "run an experiment recipe");
    run->add_option("config", config_path, "config file (.ini-style) or manifest.json")
        ->required();

    std::string diag_path;
    auto* diagnose = app.add_subcommand("diagnose", "run resolvent-condition audits");
    diagnose->add_option("config", diag_path, "config file or manifest.json")->required();

    std::vector<std::string> compare_paths;
    std::string source_a = "sgd", source_b = "theory_omega", stat_filter, compare_out =
        "metrics.csv";
    auto* compare = app.add_subcommand("compare", "compare trajectory CSVs");
    compare->add_option("paths", compare_paths, "two trajectories.csv files")->expected(2);
    compare->add_option("--source-a", source_a, "series in the first file (default sgd)");
    compare->add_option("--source-b", source_b,
                        "series in the second file (default theory_omega)");
    compare->add_option("--stat", stat_filter, "restrict to one stat label");
    compare->add_option("--out", compare_out, "output metrics csv (default metrics.csv)");

    std::string thr_path;
    auto* threshold = app.add_subcommand("threshold",
                                         "print convergence threshold and classification");
    threshold->add_option("config", thr_path, "config file or manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (diagnose->parsed()) return cmd_diagnose(diag_path);
        if (compare->parsed())
            return cmd_compare(compare_paths, source_a, source_b, stat_filter, compare_out);
        if (threshold->parsed()) return cmd_threshold(thr_path);
    } catch (const sgdflow::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_io;
    }
    return exit_ok;
}
