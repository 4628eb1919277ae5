// config.hpp — experiment configuration: a plain-text key/value format with
// nested [section]s (see configs/SCHEMA.md for the full key list), plus the
// resolved form that the runner consumes and serializes into manifests.

#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdflow {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace detail

// [section] / key = value text; '#' and ';' start comments. Keys outside any
// section live in the "" section.
class KeyValueFile {
   public:
    static KeyValueFile parse_string(const std::string& text) {
        KeyValueFile f;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": malformed section header");
                section = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": expected key = value");
            const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            f.values_[section + "." + key] = value;
        }
        return f;
    }

    static KeyValueFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str());
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        const auto it = values_.find(detail::lower(section) + "." + detail::lower(key));
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    const std::map<std::string, std::string>& raw() const { return values_; }

   private:
    std::map<std::string, std::string> values_;  // "section.key" -> value
};

enum class Recipe { gaussian_mse, erm_risk, ood_risk, random_features, custom };

inline std::string recipe_name(Recipe r) {
    switch (r) {
        case Recipe::gaussian_mse: return "gaussian_mse";
        case Recipe::erm_risk: return "erm_risk";
        case Recipe::ood_risk: return "ood_risk";
        case Recipe::random_features: return "random_features";
        case Recipe::custom: return "custom";
    }
    return "?";
}

struct CovarianceConfig {
    std::string kind = "identity_scaled";  // identity_scaled | diagonal | dense
    double scale = -1.0;                   // identity_scaled; -1 marks "auto"
    std::string path;                      // diagonal/dense payload file (CSV)
};

struct ScheduleConfig {
    std::string kind = "constant";
    double gamma = 0.0;       // constant
    double c = 0.0;           // rational_decay c
    double scale = 1.0;       // rational_decay / exponential_to_limit s
    double gamma0 = 0.0;      // exponential_to_limit γ₀
    double gamma_inf = 0.0;   // exponential_to_limit γ̃
    std::vector<std::pair<double, double>> pieces;  // piecewise (start, gamma)
};

struct DiagnosticsConfig {
    bool enabled = false;
    double theta = 0.4;
    double epsilon = 0.2;
    int contour_points = 256;
    std::size_t keylemma_pairs = 64;
    bool check_keylemma = false;
    bool warn_row_norm = false;
    double h2_warn = 100.0;  // statistic-size warning threshold, not an error
};

struct ExperimentConfig {
    Recipe recipe = Recipe::gaussian_mse;
    std::string output_dir = "out";
    std::uint64_t master_seed = 1;
    int runs = 1;

    long n = 0, d = 0, n0 = 0;
    CovarianceConfig covariance;       // design covariance (or RF data covariance)
    CovarianceConfig test_covariance;  // ood_risk only
    std::string activation = "normalized_relu";

    double signal_energy = 1.0;
    double noise_energy = 0.0;
    double init_energy = 0.0;

    double delta = 0.0;
    ScheduleConfig schedule;

    double horizon = 1.0;
    double grid_h = -1.0;  // -1 = auto
    double sde_h = -1.0;   // -1 = auto: min(1/(4n), 1e-3)
    bool hsgd_enabled = true;
    bool sde_noise = true;

    std::vector<std::string> statistics;  // empty = recipe default

    std::size_t rf_mc_samples = 200000;
    double rf_post_scale = -1.0;  // -1 = auto: 1/sqrt(n)
    double eta2 = -1.0;           // population-risk noise level; -1 = auto: noise_energy/n

    std::string a_path, a_format = "csv_with_header";
    std::string b_path, b_format = "csv_with_header";

    DiagnosticsConfig diagnostics;
};

namespace detail {

inline double parse_double(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected a number, got '" + v + "'");
    }
}

inline long parse_long(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, const std::string& where) {
    const std::string s = lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(where + ": expected a boolean, got '" + v + "'");
}

inline double parse_double_or_auto(const std::string& v, const std::string& where) {
    if (lower(v) == "auto") return -1.0;
    return parse_double(v, where);
}

inline std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(lower(tok));
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const KeyValueFile& f) {
    ExperimentConfig c;
    auto req = [&](const std::string& sec, const std::string& key) -> std::string {
        auto v = f.get(sec, key);
        if (!v) throw ConfigError("[" + sec + "]." + key + ": missing required key");
        return *v;
    };
    auto opt = [&](const std::string& sec, const std::string& key,
                   const std::string& def) -> std::string {
        auto v = f.get(sec, key);
        return v ? *v : def;
    };

    const std::string rec = detail::lower(req("", "recipe"));
    if (rec == "gaussian_mse") c.recipe = Recipe::gaussian_mse;
    else if (rec == "erm_risk") c.recipe = Recipe::erm_risk;
    else if (rec == "ood_risk") c.recipe = Recipe::ood_risk;
    else if (rec == "random_features") c.recipe = Recipe::random_features;
    else if (rec == "custom") c.recipe = Recipe::custom;
    else throw ConfigError("recipe: unknown recipe '" + rec + "'");

    c.output_dir = opt("", "output_dir", "out");
    c.master_seed = static_cast<std::uint64_t>(
        detail::parse_long(opt("", "master_seed", "1"), "master_seed"));
    c.runs = static_cast<int>(detail::parse_long(opt("", "runs", "1"), "runs"));
    if (c.runs < 0) throw ConfigError("runs: must be >= 0");

    if (c.recipe != Recipe::custom) {
        c.n = detail::parse_long(req("dimensions", "n"), "[dimensions].n");
        c.d = detail::parse_long(req("dimensions", "d"), "[dimensions].d");
        if (c.n < 1 || c.d < 1) throw ConfigError("[dimensions]: n and d must be >= 1");
        if (c.recipe == Recipe::random_features) {
            c.n0 = detail::parse_long(req("dimensions", "n0"), "[dimensions].n0");
            if (c.n0 < 1) throw ConfigError("[dimensions].n0: must be >= 1");
        }
    }

    c.covariance.kind = detail::lower(opt("covariance", "kind", "identity_scaled"));
    c.covariance.scale =
        detail::parse_double_or_auto(opt("covariance", "scale", "auto"), "[covariance].scale");
    c.covariance.path = opt("covariance", "path", "");
    if (c.recipe == Recipe::ood_risk) {
        c.test_covariance.kind = detail::lower(req("test_covariance", "kind"));
        c.test_covariance.scale = detail::parse_double_or_auto(
            opt("test_covariance", "scale", "auto"), "[test_covariance].scale");
        c.test_covariance.path = opt("test_covariance", "path", "");
    }
    c.activation = detail::lower(opt("activation", "kind", "normalized_relu"));

    c.signal_energy =
        detail::parse_double(opt("targets", "signal_energy", "1.0"), "[targets].signal_energy");
    c.noise_energy =
        detail::parse_double(opt("targets", "noise_energy", "0.0"), "[targets].noise_energy");
    c.init_energy =
        detail::parse_double(opt("targets", "init_energy", "0.0"), "[targets].init_energy");
    if (c.signal_energy < 0 || c.noise_energy < 0 || c.init_energy < 0)
        throw ConfigError("[targets]: energies must be >= 0");

    c.delta = detail::parse_double(opt("problem", "delta", "0.0"), "[problem].delta");
    if (c.delta < 0) throw ConfigError("[problem].delta: must be >= 0");

    c.schedule.kind = detail::lower(opt("schedule", "kind", "constant"));
    if (c.schedule.kind == "constant") {
        c.schedule.gamma = detail::parse_double(req("schedule", "gamma"), "[schedule].gamma");
    } else if (c.schedule.kind == "rational_decay") {
        c.schedule.c = detail::parse_double(req("schedule", "c"), "[schedule].c");
        c.schedule.scale =
            detail::parse_double(opt("schedule", "scale", "1.0"), "[schedule].scale");
    } else if (c.schedule.kind == "exponential_to_limit") {
        c.schedule.gamma_inf =
            detail::parse_double(req("schedule", "gamma_inf"), "[schedule].gamma_inf");
        c.schedule.gamma0 = detail::parse_double(req("schedule", "gamma0"), "[schedule].gamma0");
        c.schedule.scale =
            detail::parse_double(opt("schedule", "scale", "1.0"), "[schedule].scale");
    } else if (c.schedule.kind == "piecewise_constant") {
        // pieces = t0:g0, t1:g1, ...
        for (const auto& tok : detail::parse_list(req("schedule", "pieces"))) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw ConfigError("[schedule].pieces: expected start:gamma pairs");
            c.schedule.pieces.emplace_back(
                detail::parse_double(tok.substr(0, colon), "[schedule].pieces"),
                detail::parse_double(tok.substr(colon + 1), "[schedule].pieces"));
        }
        if (c.schedule.pieces.empty())
            throw ConfigError("[schedule].pieces: need at least one segment");
    } else {
        throw ConfigError("[schedule].kind: unknown kind '" + c.schedule.kind + "'");
    }

    c.horizon = detail::parse_double(opt("run", "horizon", "1.0"), "[run].horizon");
    if (!(c.horizon > 0)) throw ConfigError("[run].horizon: must be > 0");
    c.grid_h = detail::parse_double_or_auto(opt("run", "grid_h", "auto"), "[run].grid_h");
    c.sde_h = detail::parse_double_or_auto(opt("run", "sde_h", "auto"), "[run].sde_h");
    c.hsgd_enabled = detail::parse_bool(opt("run", "hsgd", "true"), "[run].hsgd");
    c.sde_noise = detail::parse_bool(opt("run", "noise", "true"), "[run].noise");

    c.statistics = detail::parse_list(opt("statistics", "list", ""));

    c.rf_mc_samples = static_cast<std::size_t>(
        detail::parse_long(opt("rf", "mc_samples", "200000"), "[rf].mc_samples"));
    c.rf_post_scale =
        detail::parse_double_or_auto(opt("rf", "post_scale", "auto"), "[rf].post_scale");
    c.eta2 = detail::parse_double_or_auto(opt("risk", "eta2", "auto"), "[risk].eta2");

    if (c.recipe == Recipe::custom) {
        c.a_path = req("data", "a_path");
        c.a_format = detail::lower(opt("data", "a_format", "csv_with_header"));
        c.b_path = opt("data", "b_path", "");
        c.b_format = detail::lower(opt("data", "b_format", "csv_with_header"));
    }

    c.diagnostics.enabled =
        detail::parse_bool(opt("diagnostics", "enabled", "false"), "[diagnostics].enabled");
    c.diagnostics.theta =
        detail::parse_double(opt("diagnostics", "theta", "0.4"), "[diagnostics].theta");
    c.diagnostics.epsilon =
        detail::parse_double(opt("diagnostics", "epsilon", "0.2"), "[diagnostics].epsilon");
    c.diagnostics.contour_points = static_cast<int>(detail::parse_long(
        opt("diagnostics", "contour_points", "256"), "[diagnostics].contour_points"));
    c.diagnostics.keylemma_pairs = static_cast<std::size_t>(detail::parse_long(
        opt("diagnostics", "keylemma_pairs", "64"), "[diagnostics].keylemma_pairs"));
    c.diagnostics.check_keylemma = detail::parse_bool(
        opt("diagnostics", "check_keylemma", "false"), "[diagnostics].check_keylemma");
    c.diagnostics.warn_row_norm = detail::parse_bool(
        opt("diagnostics", "warn_row_norm", "false"), "[diagnostics].warn_row_norm");
    c.diagnostics.h2_warn =
        detail::parse_double(opt("diagnostics", "h2_warn", "100.0"), "[diagnostics].h2_warn");
    if (!(c.diagnostics.theta > 0.0 && c.diagnostics.theta < 0.5))
        throw ConfigError("[diagnostics].theta: must be in (0, 1/2)");

    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return parse_experiment_config(KeyValueFile::parse_file(path));
}

}  // namespace sgdflow
