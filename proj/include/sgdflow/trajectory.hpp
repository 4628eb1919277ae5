// trajectory.hpp — recorded statistic paths on the epoch clock t = k/n.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdflow {

struct Trajectory {
    Eigen::VectorXd times;   // strictly increasing, starts at 0
    Eigen::MatrixXd values;  // (#recorded times) × (#statistics)
    std::uint64_t seed = 0;
    bool diverged = false;
    std::string meta;

    Eigen::Index points() const { return times.size(); }
};

// Any recorded statistic magnitude beyond this truncates the run with the
// divergence flag set; divergence is data, not an error.
inline constexpr double divergence_threshold = 1e12;

// Record times shared by the discrete and SDE simulators: t = k/n at
// k = 0, stride, 2·stride, ..., plus the final step.
inline std::vector<double> make_record_times(Eigen::Index n, double horizon,
                                             Eigen::Index record_stride) {
    if (record_stride < 1)
        throw std::invalid_argument("make_record_times: stride must be >= 1");
    if (!(horizon > 0.0))
        throw std::invalid_argument("make_record_times: horizon must be > 0");
    const auto total = static_cast<std::int64_t>(std::floor(horizon * static_cast<double>(n)));
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(total / record_stride + 2));
    for (std::int64_t k = 0; k < total; k += record_stride)
        times.push_back(static_cast<double>(k) / static_cast<double>(n));
    times.push_back(static_cast<double>(total) / static_cast<double>(n));
    return times;
}

}  // namespace sgdflow
