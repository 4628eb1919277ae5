// spectral.hpp — the ridge least-squares problem and its full SVD.
//
// Everything downstream (gradient flow, Volterra kernels, resolvents,
// the HSGD integrator) runs in the eigenbasis of AᵀA, so the
// decomposition is computed once, in full (not thin) form: resolvents of
// both AAᵀ and AᵀA, including null directions, are exact.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <complex>
#include <stdexcept>
#include <string>

namespace sgdflow {

// min_x f(x) = ½‖Ax − b‖² + (δ/2)‖x‖²
struct Problem {
    Eigen::MatrixXd a;  // n × d
    Eigen::VectorXd b;  // n
    double delta = 0.0;

    Eigen::Index n() const { return a.rows(); }
    Eigen::Index d() const { return a.cols(); }

    void validate() const {
        if (a.rows() < 1 || a.cols() < 1)
            throw std::invalid_argument("Problem: need n >= 1 and d >= 1");
        if (b.size() != a.rows())
            throw std::invalid_argument("Problem: b length must equal row count");
        if (!(delta >= 0.0))
            throw std::invalid_argument("Problem: delta must be nonnegative");
        if (!a.allFinite() || !b.allFinite())
            throw std::invalid_argument("Problem: non-finite entries");
    }
};

inline double loss(const Problem& p, const Eigen::VectorXd& x) {
    if (x.size() != p.d()) throw std::invalid_argument("loss: dimension mismatch");
    return 0.5 * (p.a * x - p.b).squaredNorm();
}

inline double objective(const Problem& p, const Eigen::VectorXd& x) {
    if (x.size() != p.d()) throw std::invalid_argument("objective: dimension mismatch");
    return loss(p, x) + 0.5 * p.delta * x.squaredNorm();
}

enum class ResolventSide { rows, columns };  // rows: M = AAᵀ, columns: M = AᵀA

struct ComplexPoint {
    double re = 0.0;
    double im = 0.0;
    std::complex<double> value() const { return {re, im}; }
};

// Full SVD A = U Σ Vᵀ with a fixed sign convention: the first entry of each
// right singular vector exceeding 1e-12 in magnitude is positive (paired U
// columns are flipped along, unpaired ones get the same rule), which makes
// the factorization deterministic across runs for the golden files.
struct Spectral {
    Eigen::MatrixXd u_full;      // n × n
    Eigen::VectorXd singulars;   // min(n, d), descending
    Eigen::MatrixXd v_full;      // d × d
    Eigen::VectorXd eigenvalues; // d, λ_j = σ_j², zero-padded
    Eigen::VectorXd b_spectral;  // Uᵀ b, length n
    double delta = 0.0;          // carried from the problem for convenience

    Eigen::Index n() const { return u_full.rows(); }
    Eigen::Index d() const { return v_full.rows(); }
    Eigen::Index rank_bound() const { return singulars.size(); }  // min(n, d)

    Eigen::VectorXd to_spectral(const Eigen::VectorXd& x) const {
        return v_full.transpose() * x;
    }
    Eigen::VectorXd from_spectral(const Eigen::VectorXd& nu) const {
        return v_full * nu;
    }

    // ½ ‖Σν − Uᵀb‖², i.e. the empirical risk in spectral coordinates.
    double loss_spectral(const Eigen::VectorXd& nu) const {
        const Eigen::Index r = rank_bound();
        double s = 0.0;
        for (Eigen::Index j = 0; j < r; ++j) {
            const double e = singulars[j] * nu[j] - b_spectral[j];
            s += e * e;
        }
        for (Eigen::Index j = r; j < b_spectral.size(); ++j)
            s += b_spectral[j] * b_spectral[j];
        return 0.5 * s;
    }

    // Eigenvalue of the side's matrix at index k (zero-padded beyond rank).
    double side_eigenvalue(ResolventSide side, Eigen::Index k) const {
        const Eigen::Index r = rank_bound();
        if (side == ResolventSide::rows)
            return k < r ? singulars[k] * singulars[k] : 0.0;
        return eigenvalues[k];
    }

    Eigen::Index side_dim(ResolventSide side) const {
        return side == ResolventSide::rows ? n() : d();
    }
};

namespace detail {

inline void fix_sign_column(Eigen::MatrixXd& m, Eigen::Index col, bool& flip) {
    flip = false;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double v = m(i, col);
        if (std::abs(v) > 1e-12) {
            flip = v < 0.0;
            break;
        }
    }
    if (flip) m.col(col) = -m.col(col);
}

}  // namespace detail

inline Spectral decompose(const Problem& p) {
    p.validate();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(p.a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Spectral s;
    s.u_full = svd.matrixU();
    s.v_full = svd.matrixV();
    s.singulars = svd.singularValues();
    if (!s.singulars.allFinite() || !s.u_full.allFinite() || !s.v_full.allFinite())
        throw std::runtime_error("decompose: SVD did not converge");

    const Eigen::Index r = s.singulars.size();
    bool flip = false;
    for (Eigen::Index j = 0; j < s.v_full.cols(); ++j) {
        detail::fix_sign_column(s.v_full, j, flip);
        if (flip && j < r) s.u_full.col(j) = -s.u_full.col(j);
    }
    for (Eigen::Index j = r; j < s.u_full.cols(); ++j)
        detail::fix_sign_column(s.u_full, j, flip);

    s.eigenvalues = Eigen::VectorXd::Zero(p.d());
    for (Eigen::Index j = 0; j < r; ++j)
        s.eigenvalues[j] = s.singulars[j] * s.singulars[j];
    s.b_spectral = s.u_full.transpose() * p.b;
    s.delta = p.delta;
    return s;
}

namespace detail {

inline void check_pole(const Spectral& s, ResolventSide side, std::complex<double> z) {
    const Eigen::Index dim = s.side_dim(side);
    for (Eigen::Index k = 0; k < dim; ++k) {
        if (std::abs(z - s.side_eigenvalue(side, k)) < 1e-12)
            throw std::domain_error("resolvent: z within 1e-12 of an eigenvalue");
    }
}

}  // namespace detail

// e_iᵀ R(z; M) e_j with R(z; M) = (zI − M)⁻¹, evaluated in the eigenbasis as
// Σ_k P_ik P_jk / (z − λ_k); side selects M = AAᵀ (P = U) or M = AᵀA (P = V).
inline std::complex<double> resolvent_entry(const Spectral& s, ResolventSide side,
                                            ComplexPoint zp, Eigen::Index i,
                                            Eigen::Index j) {
    const std::complex<double> z = zp.value();
    detail::check_pole(s, side, z);
    const Eigen::MatrixXd& pmat = side == ResolventSide::rows ? s.u_full : s.v_full;
    const Eigen::Index dim = s.side_dim(side);
    if (i < 0 || i >= dim || j < 0 || j >= dim)
        throw std::invalid_argument("resolvent_entry: index out of range");
    std::complex<double> acc(0.0, 0.0);
    for (Eigen::Index k = 0; k < dim; ++k)
        acc += pmat(i, k) * pmat(j, k) / (z - s.side_eigenvalue(side, k));
    return acc;
}

// e_iᵀ R(z; M) v for a full vector argument.
inline std::complex<double> resolvent_entry(const Spectral& s, ResolventSide side,
                                            ComplexPoint zp, Eigen::Index i,
                                            const Eigen::VectorXd& v) {
    const std::complex<double> z = zp.value();
    detail::check_pole(s, side, z);
    const Eigen::MatrixXd& pmat = side == ResolventSide::rows ? s.u_full : s.v_full;
    const Eigen::Index dim = s.side_dim(side);
    if (i < 0 || i >= dim || v.size() != dim)
        throw std::invalid_argument("resolvent_entry: index/vector size mismatch");
    // Σ_k P_ik (Pᵀ v)_k / (z − λ_k); Pᵀv is O(dim²) but callers that need many
    // i's should use the diagnostics module, which amortizes it.
    Eigen::VectorXd pv = pmat.transpose() * v;
    std::complex<double> acc(0.0, 0.0);
    for (Eigen::Index k = 0; k < dim; ++k)
        acc += pmat(i, k) * pv[k] / (z - s.side_eigenvalue(side, k));
    return acc;
}

}  // namespace sgdflow
