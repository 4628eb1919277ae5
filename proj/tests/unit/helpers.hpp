#pragma once

#include <Eigen/Dense>

#include "sgdflow/generators.hpp"
#include "sgdflow/spectral.hpp"

namespace testutil {

inline Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed,
                                     double scale = 1.0) {
    sgdflow::Rng rng(sgdflow::Seed{seed});
    Eigen::MatrixXd m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = scale * rng.next_normal();
    return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
    sgdflow::Rng rng(sgdflow::Seed{seed});
    Eigen::VectorXd v(d);
    for (Eigen::Index j = 0; j < d; ++j) v[j] = scale * rng.next_normal();
    return v;
}

// A Gaussian instance with entries N(0, 1/d): eigenvalues of AᵀA stay O(1).
inline sgdflow::Problem random_problem(Eigen::Index n, Eigen::Index d, double delta,
                                       std::uint64_t seed) {
    sgdflow::Problem p;
    p.a = random_matrix(n, d, seed, 1.0 / std::sqrt(static_cast<double>(d)));
    p.b = random_vector(n, seed + 1);
    p.b *= 1.0 / p.b.norm();
    p.delta = delta;
    return p;
}

// Replace the target of a decomposed problem without recomputing the SVD.
inline sgdflow::Spectral with_target(const sgdflow::Spectral& spec, const Eigen::VectorXd& b) {
    sgdflow::Spectral out = spec;
    out.b_spectral = spec.u_full.transpose() * b;
    return out;
}

}  // namespace testutil
