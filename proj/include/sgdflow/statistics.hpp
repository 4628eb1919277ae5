// statistics.hpp — quadratic observables R(x) = ½xᵀTx + uᵀx + c, their
// H² norms, the constructors for the application risks, and Monte Carlo
// estimation of the random-features moment matrices.
//
// A statistic carries a structural tag so that the hot paths stay cheap:
// scaled_identity (T = sI) evaluates in O(d), least_squares keeps the data
// matrix and evaluates as ½‖Ax−b‖² (+ δ/2‖x‖²) without materializing AᵀA.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "sgdflow/generators.hpp"
#include "sgdflow/spectral.hpp"

namespace sgdflow {

class QuadraticStatistic {
   public:
    enum class Form { dense, scaled_identity, least_squares };

    static QuadraticStatistic make_dense(Eigen::MatrixXd t, Eigen::VectorXd u, double c,
                                         std::string label) {
        if (t.rows() != t.cols() || t.rows() != u.size())
            throw std::invalid_argument("QuadraticStatistic: dimension mismatch");
        if ((t - t.transpose()).cwiseAbs().maxCoeff() >
            1e-12 * std::max(1.0, t.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("QuadraticStatistic: T must be symmetric");
        if (!t.allFinite() || !u.allFinite() || !std::isfinite(c))
            throw std::invalid_argument("QuadraticStatistic: non-finite entries");
        QuadraticStatistic q;
        q.form_ = Form::dense;
        q.t_ = std::move(t);
        q.u_ = std::move(u);
        q.c_ = c;
        q.label_ = std::move(label);
        return q;
    }

    static QuadraticStatistic make_scaled_identity(double s, Eigen::VectorXd u, double c,
                                                   std::string label) {
        if (!u.allFinite() || !std::isfinite(c) || !std::isfinite(s))
            throw std::invalid_argument("QuadraticStatistic: non-finite entries");
        QuadraticStatistic q;
        q.form_ = Form::scaled_identity;
        q.scale_ = s;
        q.u_ = std::move(u);
        q.c_ = c;
        q.label_ = std::move(label);
        return q;
    }

    // ½‖x − β‖²: T = I, u = −β, c = ½‖β‖².
    static QuadraticStatistic mse_to_signal(const Eigen::VectorXd& beta) {
        return make_scaled_identity(1.0, -beta, 0.5 * beta.squaredNorm(), "mse");
    }

    // ‖x‖² (T = 2I), used e.g. to track the iterate energy.
    static QuadraticStatistic norm_squared(Eigen::Index d) {
        return make_scaled_identity(2.0, Eigen::VectorXd::Zero(d), 0.0, "norm_sq");
    }

    // ½η² + ½(β−x)ᵀ Σ_f (β−x); passing a shifted covariance Σ̂_f gives the
    // out-of-distribution risk with the same constructor.
    static QuadraticStatistic population_risk(const Eigen::MatrixXd& cov_f,
                                              const Eigen::VectorXd& beta, double eta2,
                                              std::string label = "population_risk:halved") {
        if (cov_f.rows() != cov_f.cols() || cov_f.rows() != beta.size())
            throw std::invalid_argument("population_risk: dimension mismatch");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_f,
                                                          Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() <
            -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
            throw std::invalid_argument("population_risk: covariance is not PSD");
        Eigen::VectorXd u = -(cov_f * beta);
        const double c = 0.5 * beta.dot(cov_f * beta) + 0.5 * eta2;
        return make_dense(cov_f, std::move(u), c, std::move(label));
    }

    // ½‖Ax − b‖², optionally plus (δ/2)‖x‖² (the regularized objective f).
    static QuadraticStatistic loss_as_statistic(const Problem& p, bool regularized = false,
                                                std::string label = "") {
        p.validate();
        QuadraticStatistic q;
        q.form_ = Form::least_squares;
        q.a_ = p.a;
        q.b_ = p.b;
        q.ls_delta_ = regularized ? p.delta : 0.0;
        q.label_ = label.empty() ? (regularized ? "objective" : "loss") : std::move(label);
        return q;
    }

    Form form() const { return form_; }
    const std::string& label() const { return label_; }
    void set_label(std::string s) { label_ = std::move(s); }

    Eigen::Index d() const {
        switch (form_) {
            case Form::dense: return t_.rows();
            case Form::scaled_identity: return u_.size();
            case Form::least_squares: return a_.cols();
        }
        return 0;
    }

    double evaluate(const Eigen::VectorXd& x) const {
        if (x.size() != d())
            throw std::invalid_argument("QuadraticStatistic::evaluate: dimension mismatch");
        switch (form_) {
            case Form::dense:
                return 0.5 * x.dot(t_ * x) + u_.dot(x) + c_;
            case Form::scaled_identity:
                return 0.5 * scale_ * x.squaredNorm() + u_.dot(x) + c_;
            case Form::least_squares:
                return 0.5 * (a_ * x - b_).squaredNorm() +
                       0.5 * ls_delta_ * x.squaredNorm();
        }
        return 0.0;
    }

    Eigen::MatrixXd hessian() const {
        switch (form_) {
            case Form::dense:
                return t_;
            case Form::scaled_identity:
                return scale_ * Eigen::MatrixXd::Identity(u_.size(), u_.size());
            case Form::least_squares: {
                Eigen::MatrixXd h = a_.transpose() * a_;
                h.diagonal().array() += ls_delta_;
                return h;
            }
        }
        return Eigen::MatrixXd();
    }

    Eigen::VectorXd grad0() const {  // ∇R(0) = u
        switch (form_) {
            case Form::dense:
            case Form::scaled_identity:
                return u_;
            case Form::least_squares:
                return -(a_.transpose() * b_);
        }
        return Eigen::VectorXd();
    }

    double constant() const {  // R(0) = c
        return form_ == Form::least_squares ? 0.5 * b_.squaredNorm() : c_;
    }

    // ‖R‖_{H²} = ‖∇²R‖ + ‖∇R(0)‖ + |R(0)|.  The operator norm is computed on
    // demand (it is only needed by diagnostics and tests).
    double h2_norm() const {
        double tnorm = 0.0;
        switch (form_) {
            case Form::scaled_identity:
                tnorm = std::abs(scale_);
                break;
            case Form::dense: {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t_,
                                                                  Eigen::EigenvaluesOnly);
                tnorm = es.eigenvalues().cwiseAbs().maxCoeff();
                break;
            }
            case Form::least_squares: {
                Eigen::BDCSVD<Eigen::MatrixXd> svd(a_);
                const double s1 = svd.singularValues()(0);
                tnorm = s1 * s1 + ls_delta_;
                break;
            }
        }
        return tnorm + grad0().norm() + std::abs(constant());
    }

    // Least-squares internals, used when conjugating into a spectral basis.
    double ls_delta() const { return ls_delta_; }
    const Eigen::MatrixXd& ls_matrix() const { return a_; }
    const Eigen::VectorXd& ls_target() const { return b_; }
    double identity_scale() const { return scale_; }
    const Eigen::MatrixXd& dense_hessian() const { return t_; }
    const Eigen::VectorXd& linear_term() const { return u_; }

   private:
    Form form_ = Form::scaled_identity;
    Eigen::MatrixXd t_;
    Eigen::VectorXd u_;
    double c_ = 0.0;
    double scale_ = 0.0;
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_;
    double ls_delta_ = 0.0;
    std::string label_;
};

// A statistic conjugated into the eigenbasis of AᵀA: R(Vν) = ½νᵀT̃ν + ũᵀν + c.
// The diagonal of T̃ is the only part of the Hessian the Volterra kernel sees.
struct SpectralQuadratic {
    bool diagonal_form = true;
    Eigen::VectorXd t_diag;   // if diagonal_form
    Eigen::MatrixXd t_dense;  // otherwise (full T̃)
    Eigen::VectorXd u;        // ũ = Vᵀu
    double c = 0.0;
    Eigen::VectorXd hess_diag;  // d_j = T̃_jj
    std::string label;

    double evaluate(const Eigen::VectorXd& nu) const {
        if (diagonal_form)
            return 0.5 * nu.dot(t_diag.cwiseProduct(nu)) + u.dot(nu) + c;
        return 0.5 * nu.dot(t_dense * nu) + u.dot(nu) + c;
    }
};

inline SpectralQuadratic spectralize(const Spectral& spec, const QuadraticStatistic& q) {
    if (q.d() != spec.d())
        throw std::invalid_argument("spectralize: statistic dimension mismatch");
    SpectralQuadratic out;
    out.label = q.label();
    switch (q.form()) {
        case QuadraticStatistic::Form::scaled_identity: {
            out.t_diag = Eigen::VectorXd::Constant(spec.d(), q.identity_scale());
            out.u = spec.to_spectral(q.linear_term());
            out.c = q.constant();
            break;
        }
        case QuadraticStatistic::Form::dense: {
            out.diagonal_form = false;
            out.t_dense = spec.v_full.transpose() * q.dense_hessian() * spec.v_full;
            out.u = spec.to_spectral(q.linear_term());
            out.c = q.constant();
            break;
        }
        case QuadraticStatistic::Form::least_squares: {
            if (q.ls_matrix().rows() != spec.n())
                throw std::invalid_argument("spectralize: least-squares statistic built "
                                            "from a different problem");
            out.t_diag = spec.eigenvalues;
            out.t_diag.array() += q.ls_delta();
            out.u = Eigen::VectorXd::Zero(spec.d());
            const Eigen::Index r = spec.rank_bound();
            for (Eigen::Index j = 0; j < r; ++j)
                out.u[j] = -spec.singulars[j] * spec.b_spectral[j];
            out.c = 0.5 * spec.b_spectral.squaredNorm();
            break;
        }
    }
    out.hess_diag = out.diagonal_form ? out.t_diag
                                      : Eigen::VectorXd(out.t_dense.diagonal());
    return out;
}

// Monte Carlo estimates of Σ_σ(W) = E[σ(X_iW/√n₀)ᵀ σ(X_iW/√n₀) | W] and
// σ̂(W) = E[X_iᵀ σ(X_iW/√n₀) | W] over fresh rows X_i ~ N(0, Σ_f).
struct RfMoments {
    Eigen::MatrixXd sigma_sigma;  // d × d, symmetrized
    Eigen::MatrixXd sigma_hat;    // n₀ × d
    std::size_t mc_samples = 0;
    double standard_error_bound = 0.0;  // max entrywise SE over both blocks
    double se_sigma_sigma = 0.0;
    double se_sigma_hat = 0.0;
};

// Samples are drawn in blocks (one GEMM per block); entrywise standard errors
// come from the spread of the block means. The sample mean itself is exact
// over all mc_samples regardless of the block layout, so a fixed seed gives
// one answer.
inline RfMoments estimate_rf_moments(const Eigen::MatrixXd& w, const CovarianceSpec& cov_f,
                                     const Activation& act, std::size_t mc_samples,
                                     Seed seed) {
    if (mc_samples < 100)
        throw std::invalid_argument("estimate_rf_moments: need mc_samples >= 100");
    const Eigen::Index n0 = w.rows(), d = w.cols();
    if (cov_f.dimension() != n0)
        throw std::invalid_argument("estimate_rf_moments: covariance dimension mismatch");

    // enough blocks that the block-mean variance (hence the SE bound) is a
    // stable estimate, with at least ~100 samples per block
    const std::size_t blocks = std::clamp<std::size_t>(mc_samples / 100, 10, 200);
    const std::size_t block_size = mc_samples / blocks;
    const double inv_sqrt_n0 = 1.0 / std::sqrt(static_cast<double>(n0));

    Rng rng(seed);
    Eigen::MatrixXd total_ss = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd total_sh = Eigen::MatrixXd::Zero(n0, d);
    Eigen::MatrixXd bm_mean_ss = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd bm_m2_ss = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd bm_mean_sh = Eigen::MatrixXd::Zero(n0, d);
    Eigen::MatrixXd bm_m2_sh = Eigen::MatrixXd::Zero(n0, d);

    std::size_t done = 0, block_index = 0;
    while (done < mc_samples) {
        const bool tracked = block_index < blocks;
        const std::size_t m =
            tracked ? block_size : std::min<std::size_t>(mc_samples - done, block_size);
        Eigen::MatrixXd z(m, n0);
        for (std::size_t i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n0; ++j) z(i, j) = rng.next_normal();
        Eigen::MatrixXd x = cov_f.apply_sqrt_right(z);
        Eigen::MatrixXd g = (x * w) * inv_sqrt_n0;
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            for (Eigen::Index j = 0; j < d; ++j) g(i, j) = act(g(i, j));

        Eigen::MatrixXd block_ss = g.transpose() * g;
        Eigen::MatrixXd block_sh = x.transpose() * g;
        total_ss += block_ss;
        total_sh += block_sh;
        if (tracked) {
            // Welford over block means, entrywise
            const double k = static_cast<double>(block_index + 1);
            Eigen::MatrixXd bm = block_ss / static_cast<double>(m);
            Eigen::MatrixXd delta = bm - bm_mean_ss;
            bm_mean_ss += delta / k;
            bm_m2_ss += delta.cwiseProduct(bm - bm_mean_ss);
            bm = block_sh / static_cast<double>(m);
            delta = bm - bm_mean_sh;
            bm_mean_sh += delta / k;
            bm_m2_sh += delta.cwiseProduct(bm - bm_mean_sh);
        }
        done += m;
        ++block_index;
    }

    RfMoments out;
    out.mc_samples = mc_samples;
    const double inv_s = 1.0 / static_cast<double>(mc_samples);
    out.sigma_sigma = 0.5 * inv_s * (total_ss + total_ss.transpose());
    out.sigma_hat = total_sh * inv_s;
    // Var(block mean) = σ²/block_size  ⇒  SE(full mean) = √(Var_bm · block_size / S)
    const double f = static_cast<double>(block_size) /
                     (static_cast<double>(blocks - 1) * static_cast<double>(mc_samples));
    out.se_sigma_sigma = std::sqrt(bm_m2_ss.maxCoeff() * f);
    out.se_sigma_hat = std::sqrt(bm_m2_sh.maxCoeff() * f);
    out.standard_error_bound = std::max(out.se_sigma_sigma, out.se_sigma_hat);
    return out;
}

// η² + βᵀΣ_fβ + xᵀΣ_σ(W)x − 2βᵀσ̂(W)x, mapped into the ½xᵀTx + uᵀx + c
// convention as T = 2Σ_σ(W), u = −2σ̂(W)ᵀβ, c = η² + βᵀΣ_fβ. The source
// convention carries no ½ prefactor, hence the label suffix.
inline QuadraticStatistic rf_population_risk(const RfMoments& moments,
                                             const Eigen::MatrixXd& cov_f,
                                             const Eigen::VectorXd& beta, double eta) {
    if (moments.sigma_hat.rows() != beta.size() || cov_f.rows() != beta.size())
        throw std::invalid_argument("rf_population_risk: dimension mismatch");
    Eigen::MatrixXd t = 2.0 * moments.sigma_sigma;
    Eigen::VectorXd u = -2.0 * (moments.sigma_hat.transpose() * beta);
    const double c = eta * eta + beta.dot(cov_f * beta);
    return QuadraticStatistic::make_dense(std::move(t), std::move(u), c,
                                          "rf_test_risk:unhalved");
}

}  // namespace sgdflow
