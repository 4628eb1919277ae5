// hsgd.hpp — Euler–Maruyama integration of homogenized SGD in the spectral
// basis, where the diffusion matrix is diagonal:
//
//   dY_t = −γ(t)[(ΣᵀΣ + δI)Y_t − ΣᵀUᵀb] dt + γ(t)√((2/n) L̂(Y_t) ΣᵀΣ) dB_t,
//
// with L̂(Y) = ½‖ΣY − Uᵀb‖² recomputed exactly each step — it is the one
// scalar through which all coordinates interact. Cost is O(d) per step.
// With the noise disabled the scheme integrates gradient flow at time Γ(t).

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sgdflow/rng.hpp"
#include "sgdflow/schedules.hpp"
#include "sgdflow/spectral.hpp"
#include "sgdflow/statistics.hpp"
#include "sgdflow/trajectory.hpp"

namespace sgdflow {

struct SdeConfig {
    double step_h = 1e-3;  // integration step in t units
    bool noise_enabled = true;
    Seed seed;

    void validate() const {
        if (!(step_h > 0.0) || step_h > 0.1)
            throw std::invalid_argument("SdeConfig: need 0 < step_h <= 0.1");
    }
};

// Default step from the problem size: 1/(4n), capped at 1e-3.
inline double default_sde_step(Eigen::Index n) {
    return std::min(1e-3, 1.0 / (4.0 * static_cast<double>(n)));
}

// record_times must start at 0 and increase; use make_record_times(n, T,
// stride) to share the clock with run_sgd.
inline Trajectory run_hsgd(const Spectral& spec, double delta, const Schedule& schedule,
                           const Eigen::VectorXd& x0,
                           const std::vector<SpectralQuadratic>& stats,
                           const SdeConfig& cfg, const std::vector<double>& record_times) {
    cfg.validate();
    if (x0.size() != spec.d()) throw std::invalid_argument("run_hsgd: x0 dimension mismatch");
    if (record_times.empty() || record_times.front() != 0.0)
        throw std::invalid_argument("run_hsgd: record times must start at 0");

    const Eigen::Index d = spec.d();
    const Eigen::Index r = spec.rank_bound();
    const double n = static_cast<double>(spec.n());

    Eigen::VectorXd rate = spec.eigenvalues.array() + delta;  // λ_j + δ
    Eigen::VectorXd drive = Eigen::VectorXd::Zero(d);         // (ΣᵀUᵀb)_j = σ_j b̃_j
    Eigen::VectorXd sig = Eigen::VectorXd::Zero(d);           // σ_j (0 beyond rank)
    for (Eigen::Index j = 0; j < r; ++j) {
        sig[j] = spec.singulars[j];
        drive[j] = spec.singulars[j] * spec.b_spectral[j];
    }

    Rng rng(cfg.seed);
    Eigen::VectorXd y = spec.to_spectral(x0);
    Eigen::VectorXd xi(d);

    std::vector<double> times;
    std::vector<double> values;
    bool diverged = false;

    auto record = [&]() -> bool {
        bool bad = !y.allFinite();
        for (const auto& s : stats) {
            const double v = bad ? std::numeric_limits<double>::quiet_NaN() : s.evaluate(y);
            values.push_back(v);
            if (!std::isfinite(v) || std::abs(v) > divergence_threshold) bad = true;
        }
        return bad;
    };

    times.push_back(0.0);
    if (record()) diverged = true;

    double t = 0.0;
    for (std::size_t idx = 1; idx < record_times.size() && !diverged; ++idx) {
        const double target = record_times[idx];
        if (!(target > t)) throw std::invalid_argument("run_hsgd: record times must increase");
        const auto substeps = static_cast<std::int64_t>(std::ceil((target - t) / cfg.step_h - 1e-12));
        const double h = (target - t) / static_cast<double>(std::max<std::int64_t>(substeps, 1));
        const double sqrt_h = std::sqrt(h);
        for (std::int64_t s = 0; s < std::max<std::int64_t>(substeps, 1); ++s) {
            const double gamma_t = schedule.gamma(t);
            const double lhat = spec.loss_spectral(y);
            y.array() -= (h * gamma_t) * (rate.array() * y.array() - drive.array());
            if (cfg.noise_enabled) {
                const double amp = sqrt_h * gamma_t * std::sqrt(2.0 * lhat / n);
                for (Eigen::Index j = 0; j < d; ++j) xi[j] = rng.next_normal();
                y.array() += amp * sig.array() * xi.array();
            }
            t += h;
        }
        t = target;  // accumulated h's sum to the interval exactly up to roundoff
        if (!y.allFinite()) diverged = true;
        times.push_back(target);
        if (record()) diverged = true;
    }

    Trajectory out;
    out.seed = cfg.seed.value;
    out.diverged = diverged;
    out.times = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<Eigen::Index>(times.size()));
    out.values.resize(static_cast<Eigen::Index>(times.size()),
                      static_cast<Eigen::Index>(stats.size()));
    for (Eigen::Index i = 0; i < out.values.rows(); ++i)
        for (Eigen::Index j = 0; j < out.values.cols(); ++j)
            out.values(i, j) = values[static_cast<std::size_t>(i) * stats.size() +
                                      static_cast<std::size_t>(j)];
    return out;
}

}  // namespace sgdflow
