// generators.hpp — random problem instances: Gaussian covariance designs,
// random-features designs, generative targets and initializations, plus the
// external-matrix loader (see matrix_io.hpp for the formats).
//
// Every generator is a pure function of (shape, spec, seed). Matrices are
// filled row-major from the seeded stream so regeneration is bit-identical.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "sgdflow/matrix_io.hpp"
#include "sgdflow/rng.hpp"

namespace sgdflow {

class CovarianceSpec {
   public:
    enum class Kind { identity_scaled, diagonal, dense };

    static CovarianceSpec identity_scaled(Eigen::Index dim, double scale) {
        if (dim < 1) throw std::invalid_argument("CovarianceSpec: dim must be >= 1");
        if (!(scale >= 0.0)) throw std::invalid_argument("CovarianceSpec: scale must be >= 0");
        CovarianceSpec c;
        c.kind_ = Kind::identity_scaled;
        c.dim_ = dim;
        c.scale_ = scale;
        return c;
    }

    static CovarianceSpec diagonal(Eigen::VectorXd eigs) {
        if (eigs.size() < 1) throw std::invalid_argument("CovarianceSpec: empty diagonal");
        if ((eigs.array() < 0.0).any())
            throw std::invalid_argument("CovarianceSpec: diagonal must be nonnegative");
        CovarianceSpec c;
        c.kind_ = Kind::diagonal;
        c.dim_ = eigs.size();
        c.diag_ = std::move(eigs);
        return c;
    }

    static CovarianceSpec dense(Eigen::MatrixXd sigma) {
        if (sigma.rows() != sigma.cols() || sigma.rows() < 1)
            throw std::invalid_argument("CovarianceSpec: dense matrix must be square");
        if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + sigma.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("CovarianceSpec: dense matrix must be symmetric");
        CovarianceSpec c;
        c.kind_ = Kind::dense;
        c.dim_ = sigma.rows();
        c.dense_ = std::move(sigma);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.dense_);
        const double floor = -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        if (es.eigenvalues().minCoeff() < floor)
            throw std::invalid_argument("CovarianceSpec: matrix is not PSD");
        // clamp tiny negative eigenvalues so the square root is real
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
        c.sqrt_dense_ = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
                        es.eigenvectors().transpose();
        return c;
    }

    Kind kind() const { return kind_; }
    Eigen::Index dimension() const { return dim_; }

    double trace() const {
        switch (kind_) {
            case Kind::identity_scaled: return scale_ * static_cast<double>(dim_);
            case Kind::diagonal: return diag_.sum();
            case Kind::dense: return dense_.trace();
        }
        return 0.0;
    }

    // Rescale so the trace equals `target` (the Σ-normalization used by the
    // Gaussian design convention is target = 1).
    CovarianceSpec rescaled_to_trace(double target) const {
        const double tr = trace();
        if (!(tr > 0.0))
            throw std::invalid_argument("CovarianceSpec: cannot rescale zero trace");
        const double f = target / tr;
        switch (kind_) {
            case Kind::identity_scaled: return identity_scaled(dim_, scale_ * f);
            case Kind::diagonal: return diagonal(diag_ * f);
            case Kind::dense: return dense(dense_ * f);
        }
        return *this;
    }

    // Returns Z Σ^{1/2} for a matrix Z with dim() columns.
    Eigen::MatrixXd apply_sqrt_right(const Eigen::MatrixXd& z) const {
        if (z.cols() != dim_)
            throw std::invalid_argument("CovarianceSpec: column mismatch");
        switch (kind_) {
            case Kind::identity_scaled: return z * std::sqrt(scale_);
            case Kind::diagonal: return z * diag_.cwiseSqrt().asDiagonal();
            case Kind::dense: return z * sqrt_dense_;
        }
        return z;
    }

    Eigen::MatrixXd materialize() const {
        switch (kind_) {
            case Kind::identity_scaled:
                return scale_ * Eigen::MatrixXd::Identity(dim_, dim_);
            case Kind::diagonal:
                return diag_.asDiagonal();
            case Kind::dense:
                return dense_;
        }
        return Eigen::MatrixXd();
    }

   private:
    Kind kind_ = Kind::identity_scaled;
    Eigen::Index dim_ = 0;
    double scale_ = 1.0;
    Eigen::VectorXd diag_;
    Eigen::MatrixXd dense_;
    Eigen::MatrixXd sqrt_dense_;
};

// Entrywise activation σ. normalized_relu is σ(x) = (max(0,x) − a)/b with
// a = 1/√(2π), b = √(1/2 − 1/(2π)), chosen analytically so that for standard
// normal Z, E σ(Z) = 0 and E σ²(Z) = 1 hold exactly.
class Activation {
   public:
    enum class Kind { normalized_relu, tanh_act, custom_table };

    static Activation normalized_relu() {
        Activation a;
        a.kind_ = Kind::normalized_relu;
        a.center_ = 0.3989422804014326779399460599344;  // 1/√(2π)
        a.scale_ = 0.58381937010354889583;               // √(1/2 − 1/(2π))
        return a;
    }

    static Activation tanh_act() {
        Activation a;
        a.kind_ = Kind::tanh_act;
        a.center_ = 0.0;
        a.scale_ = 1.0;
        return a;
    }

    // σ(x) = (raw(x) − center)/scale for a caller-supplied closed form; the
    // growth bound of the raw function is declared, not verified.
    static Activation custom(double (*raw)(double), double center, double scale) {
        if (!(scale != 0.0)) throw std::invalid_argument("Activation: scale must be nonzero");
        Activation a;
        a.kind_ = Kind::custom_table;
        a.raw_ = raw;
        a.center_ = center;
        a.scale_ = scale;
        return a;
    }

    static Activation identity() {
        return custom([](double x) { return x; }, 0.0, 1.0);
    }

    double operator()(double x) const {
        switch (kind_) {
            case Kind::normalized_relu:
                return (std::max(0.0, x) - center_) / scale_;
            case Kind::tanh_act:
                return (std::tanh(x) - center_) / scale_;
            case Kind::custom_table:
                return (raw_(x) - center_) / scale_;
        }
        return 0.0;
    }

    Kind kind() const { return kind_; }
    double center() const { return center_; }
    double scale() const { return scale_; }

   private:
    Kind kind_ = Kind::normalized_relu;
    double (*raw_)(double) = nullptr;
    double center_ = 0.0;
    double scale_ = 1.0;
};

struct GenerativeTargetSpec {
    double signal_energy = 0.0;  // ‖β‖² (exact after rescaling)
    double noise_energy = 0.0;   // ‖ξ‖² (exact after rescaling)
    double init_energy = 0.0;    // E‖x₀‖²

    void validate() const {
        if (!(signal_energy >= 0.0) || !(noise_energy >= 0.0) || !(init_energy >= 0.0))
            throw std::invalid_argument("GenerativeTargetSpec: energies must be >= 0");
    }
};

// A = Z Σ^{1/2} with Z iid standard normal, filled row-major from the stream.
inline Eigen::MatrixXd gaussian_design(Eigen::Index n, Eigen::Index d,
                                       const CovarianceSpec& cov, Seed seed) {
    if (cov.dimension() != d)
        throw std::invalid_argument("gaussian_design: covariance dimension must equal d");
    Rng rng(seed);
    Eigen::MatrixXd z(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.next_normal();
    return cov.apply_sqrt_right(z);
}

struct RandomFeaturesDesign {
    Eigen::MatrixXd a;  // n × d, σ(XW/√n₀) entrywise (no 1/√n post-scale)
    Eigen::MatrixXd w;  // n₀ × d, iid standard normal
    Eigen::MatrixXd x;  // n × n₀, rows iid N(0, Σ_f)
};

// X and W come from disjoint child streams of the master seed, so either can
// be regenerated alone.
inline RandomFeaturesDesign random_features_design(Eigen::Index n, Eigen::Index n0,
                                                   Eigen::Index d,
                                                   const CovarianceSpec& cov_f,
                                                   const Activation& act, Seed seed) {
    if (cov_f.dimension() != n0)
        throw std::invalid_argument("random_features_design: covariance dimension must equal n0");
    RandomFeaturesDesign out;
    out.x = gaussian_design(n, n0, cov_f, derive(seed, stream::rf_data));
    Rng wrng(derive(seed, stream::rf_features));
    out.w.resize(n0, d);
    for (Eigen::Index i = 0; i < n0; ++i)
        for (Eigen::Index j = 0; j < d; ++j) out.w(i, j) = wrng.next_normal();
    const double inv = 1.0 / std::sqrt(static_cast<double>(n0));
    out.a = (out.x * out.w) * inv;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) out.a(i, j) = act(out.a(i, j));
    return out;
}

struct GenerativeTargets {
    Eigen::VectorXd b;
    Eigen::VectorXd beta;
    Eigen::VectorXd noise;
};

// b = Aβ + ξ with β and ξ rescaled to the exact requested squared norms.
// Exact rescaling removes one Monte Carlo error source: the deterministic
// forcing formulas are parameterized by exact energies.
inline GenerativeTargets generative_targets(const Eigen::MatrixXd& a,
                                            const GenerativeTargetSpec& spec, Seed seed) {
    spec.validate();
    const Eigen::Index n = a.rows(), d = a.cols();
    if (n < 1 || d < 1)
        throw std::invalid_argument("generative_targets: zero-dimensional input");
    Rng rng(seed);
    GenerativeTargets out;
    out.beta = Eigen::VectorXd::Zero(d);
    if (spec.signal_energy > 0.0) {
        for (Eigen::Index j = 0; j < d; ++j) out.beta[j] = rng.next_normal();
        out.beta *= std::sqrt(spec.signal_energy) / out.beta.norm();
    } else {
        for (Eigen::Index j = 0; j < d; ++j) (void)rng.next_normal();
    }
    out.noise = Eigen::VectorXd::Zero(n);
    if (spec.noise_energy > 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) out.noise[i] = rng.next_normal();
        out.noise *= std::sqrt(spec.noise_energy) / out.noise.norm();
    }
    out.b = a * out.beta + out.noise;
    return out;
}

// iid centered Gaussian with per-coordinate variance R̂/d, so E‖x₀‖² = R̂
// (not exactly rescaled; the comparison theorems condition on the realized x₀).
inline Eigen::VectorXd random_init(Eigen::Index d, double energy, Seed seed) {
    if (!(energy >= 0.0)) throw std::invalid_argument("random_init: energy must be >= 0");
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(d);
    if (energy == 0.0) return x0;
    Rng rng(seed);
    const double sd = std::sqrt(energy / static_cast<double>(d));
    for (Eigen::Index j = 0; j < d; ++j) x0[j] = sd * rng.next_normal();
    return x0;
}

}  // namespace sgdflow
