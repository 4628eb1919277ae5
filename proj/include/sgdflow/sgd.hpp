// sgd.hpp — single-batch SGD on the ridge least-squares problem,
//
//   x_{k+1} = x_k − γ_k a_{i_k}(a_{i_k}ᵀ x_k − b_{i_k}) − (γ_k δ/n) x_k,
//
// with i_k uniform on {1..n} with replacement from the seeded stream and
// γ_k = γ(k/n). One unit of t is one epoch (n steps). Per-step cost is O(d):
// the runner keeps a row-major copy of A and touches one row per step.

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sgdflow/rng.hpp"
#include "sgdflow/schedules.hpp"
#include "sgdflow/spectral.hpp"
#include "sgdflow/statistics.hpp"
#include "sgdflow/trajectory.hpp"

namespace sgdflow {

inline Trajectory run_sgd(const Problem& p, const Schedule& schedule,
                          const Eigen::VectorXd& x0, double horizon,
                          const std::vector<QuadraticStatistic>& stats, Seed seed,
                          Eigen::Index record_stride) {
    p.validate();
    if (x0.size() != p.d()) throw std::invalid_argument("run_sgd: x0 dimension mismatch");
    if (!(horizon > 0.0)) throw std::invalid_argument("run_sgd: horizon must be > 0");
    if (record_stride < 1) throw std::invalid_argument("run_sgd: record_stride must be >= 1");

    const Eigen::Index n = p.n();
    const auto total =
        static_cast<std::int64_t>(std::floor(horizon * static_cast<double>(n)));
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor a = p.a;

    Rng rng(seed);
    Eigen::VectorXd x = x0;

    std::vector<double> times;
    std::vector<double> values;
    bool diverged = false;

    auto record = [&](std::int64_t k) -> bool {
        times.push_back(static_cast<double>(k) / static_cast<double>(n));
        bool bad = false;
        for (const auto& s : stats) {
            const double v = s.evaluate(x);
            values.push_back(v);
            if (!std::isfinite(v) || std::abs(v) > divergence_threshold) bad = true;
        }
        return bad;
    };

    if (record(0)) diverged = true;
    for (std::int64_t k = 0; k < total && !diverged; ++k) {
        const std::size_t ik = rng.next_index(static_cast<std::size_t>(n));
        const double gamma_k = schedule.gamma(static_cast<double>(k) / static_cast<double>(n));
        const auto row = a.row(static_cast<Eigen::Index>(ik));
        const double residual = row.dot(x) - p.b[static_cast<Eigen::Index>(ik)];
        const double shrink = 1.0 - gamma_k * p.delta / static_cast<double>(n);
        x = shrink * x - (gamma_k * residual) * row.transpose();
        const std::int64_t next = k + 1;
        if (next % record_stride == 0 || next == total) {
            if (record(next)) {
                diverged = true;
                break;
            }
        }
    }

    Trajectory out;
    out.seed = seed.value;
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
