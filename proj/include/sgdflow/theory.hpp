// theory.hpp — deterministic predictions for the ridge least-squares
// dynamics: closed-form gradient flow, the Volterra solver for the loss
// curve Ψ and statistic curves Ω, expected forcings under generative
// targets, the convergence threshold, and the limiting values.
//
// All formulas are evaluated in the eigenbasis of AᵀA. The kernel of the
// Volterra equation,
//
//   K(t,s;P) = (γ²(s)/n) tr(P (AᵀA) exp(−2(AᵀA + δI)(Γ(t) − Γ(s)))),
//
// becomes Σ_j d_j λ_j e^{−2(λ_j+δ)(Γ(t)−Γ(s))} with d_j = (VᵀPV)_jj, so the
// marching solver needs only the diagonal projection of a statistic's
// Hessian. The exponential factorizes over the time difference, which lets
// the trapezoidal marching scheme run in O(grid · d) with per-eigenvalue
// accumulators instead of O(grid²).

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sgdflow/schedules.hpp"
#include "sgdflow/spectral.hpp"
#include "sgdflow/statistics.hpp"
#include "sgdflow/trajectory.hpp"

namespace sgdflow {

struct TimeGrid {
    Eigen::VectorXd points;            // uniform, starts at 0
    Eigen::VectorXd gamma_values;      // γ(t_i)
    Eigen::VectorXd big_gamma_values;  // Γ(t_i), exact from the schedule
    double h = 0.0;

    Eigen::Index size() const { return points.size(); }

    static TimeGrid make(const Schedule& schedule, double horizon, double h) {
        if (!(horizon > 0.0) || !(h > 0.0))
            throw std::invalid_argument("TimeGrid: horizon and h must be > 0");
        const auto steps = static_cast<Eigen::Index>(std::floor(horizon / h + 1e-9));
        if (steps < 1) throw std::invalid_argument("TimeGrid: horizon shorter than h");
        std::vector<double> pts(static_cast<std::size_t>(steps) + 1);
        for (Eigen::Index i = 0; i <= steps; ++i)
            pts[static_cast<std::size_t>(i)] = static_cast<double>(i) * h;
        return from_times(schedule, pts);
    }

    static TimeGrid from_times(const Schedule& schedule, const std::vector<double>& times) {
        if (times.size() < 2 || times.front() != 0.0)
            throw std::invalid_argument("TimeGrid: need >= 2 points starting at 0");
        TimeGrid g;
        g.h = times[1] - times[0];
        for (std::size_t i = 1; i < times.size(); ++i) {
            const double dt = times[i] - times[i - 1];
            if (std::abs(dt - g.h) > 1e-9 * std::max(1.0, g.h))
                throw std::invalid_argument("TimeGrid: spacing must be uniform");
        }
        g.points = Eigen::Map<const Eigen::VectorXd>(times.data(),
                                                     static_cast<Eigen::Index>(times.size()));
        g.gamma_values.resize(g.points.size());
        g.big_gamma_values.resize(g.points.size());
        for (Eigen::Index i = 0; i < g.points.size(); ++i) {
            g.gamma_values[i] = schedule.gamma(g.points[i]);
            g.big_gamma_values[i] = schedule.big_gamma(g.points[i]);
        }
        return g;
    }
};

inline double default_grid_step(double horizon) { return std::min(1e-2, horizon / 2000.0); }

struct SpectralStatProjection {
    Eigen::VectorXd hess_diag_spectral;  // d_j = (VᵀTV)_jj

    static SpectralStatProjection from(const SpectralQuadratic& sq) {
        return SpectralStatProjection{sq.hess_diag};
    }
    static SpectralStatProjection from(const Spectral& spec, const QuadraticStatistic& q) {
        return SpectralStatProjection{spectralize(spec, q).hess_diag};
    }
    // The loss kernel projection: ∇²L = AᵀA has d_j = λ_j.
    static SpectralStatProjection loss(const Spectral& spec) {
        return SpectralStatProjection{spec.eigenvalues};
    }
};

namespace detail {

// (1 − e^{−a Γ}) / a with the removable singularity handled by a series
// branch when aΓ < 1e-6 (δ = 0 with zero eigenvalues).
inline double one_minus_exp_over(double a, double big_gamma) {
    const double x = a * big_gamma;
    if (x < 1e-6) return big_gamma * (1.0 - 0.5 * x + x * x / 6.0);
    return -std::expm1(-x) / a;
}

}  // namespace detail

// Gradient flow of f at integrated time Γ, in spectral coordinates:
//   ν_j(Γ) = e^{−(λ_j+δ)Γ} ν0_j + σ_j b̃_j (1 − e^{−(λ_j+δ)Γ})/(λ_j+δ).
inline Eigen::VectorXd gradient_flow_spectral(const Spectral& spec, double delta,
                                              const Eigen::VectorXd& nu0, double big_gamma) {
    if (!(big_gamma >= 0.0))
        throw std::invalid_argument("gradient_flow: big_gamma must be >= 0");
    const Eigen::Index d = spec.d(), r = spec.rank_bound();
    Eigen::VectorXd nu(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double a = spec.eigenvalues[j] + delta;
        const double decay = std::exp(-a * big_gamma);
        const double drive = j < r ? spec.singulars[j] * spec.b_spectral[j] : 0.0;
        nu[j] = decay * nu0[j] + drive * detail::one_minus_exp_over(a, big_gamma);
    }
    return nu;
}

inline Eigen::VectorXd gradient_flow_state(const Spectral& spec, double delta,
                                           const Eigen::VectorXd& x0, double big_gamma) {
    if (x0.size() != spec.d())
        throw std::invalid_argument("gradient_flow_state: x0 dimension mismatch");
    return spec.from_spectral(
        gradient_flow_spectral(spec, delta, spec.to_spectral(x0), big_gamma));
}

// Γ → ∞ limit of the flow. Directions with λ_j + δ = 0 do not move.
inline Eigen::VectorXd gradient_flow_limit_spectral(const Spectral& spec, double delta,
                                                    const Eigen::VectorXd& nu0) {
    const Eigen::Index d = spec.d(), r = spec.rank_bound();
    Eigen::VectorXd nu(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double a = spec.eigenvalues[j] + delta;
        const double drive = j < r ? spec.singulars[j] * spec.b_spectral[j] : 0.0;
        nu[j] = a > 0.0 ? drive / a : nu0[j];
    }
    return nu;
}

// Forcing g(t_i) = R(gradient flow at Γ(t_i)) for a spectralized statistic.
inline Eigen::VectorXd forcing(const Spectral& spec, double delta, const Eigen::VectorXd& x0,
                               const SpectralQuadratic& stat, const TimeGrid& grid) {
    const Eigen::VectorXd nu0 = spec.to_spectral(x0);
    Eigen::VectorXd out(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        out[i] = stat.evaluate(
            gradient_flow_spectral(spec, delta, nu0, grid.big_gamma_values[i]));
    return out;
}

// Forcing for the loss itself, g(t_i) = L̂(ν(Γ(t_i))).
inline Eigen::VectorXd forcing_loss(const Spectral& spec, double delta,
                                    const Eigen::VectorXd& x0, const TimeGrid& grid) {
    const Eigen::VectorXd nu0 = spec.to_spectral(x0);
    Eigen::VectorXd out(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        out[i] = spec.loss_spectral(
            gradient_flow_spectral(spec, delta, nu0, grid.big_gamma_values[i]));
    return out;
}

// K(t, s; P) for t >= s.
inline double kernel(const Spectral& spec, double delta, const SpectralStatProjection& proj,
                     double t, double s, const Schedule& schedule) {
    if (t < s) throw std::invalid_argument("kernel: need t >= s");
    const double dgamma = schedule.big_gamma(t) - schedule.big_gamma(s);
    const double g = schedule.gamma(s);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < spec.d(); ++j) {
        const double lam = spec.eigenvalues[j];
        if (lam == 0.0) continue;
        acc += proj.hess_diag_spectral[j] * lam *
               std::exp(-2.0 * (lam + delta) * dgamma);
    }
    return g * g / static_cast<double>(spec.n()) * acc;
}

struct VolterraSolution {
    Eigen::VectorXd values;  // may be shorter than the grid when diverged
    bool diverged = false;
};

namespace detail {

// The grid caches γ and Γ; reject a grid built for a different schedule.
inline void check_grid_schedule(const TimeGrid& grid, const Schedule& schedule) {
    const Eigen::Index last = grid.size() - 1;
    if (std::abs(grid.big_gamma_values[last] - schedule.big_gamma(grid.points[last])) >
            1e-12 * (1.0 + std::abs(grid.big_gamma_values[last])) ||
        std::abs(grid.gamma_values[0] - schedule.gamma(grid.points[0])) > 1e-12)
        throw std::invalid_argument("grid was built for a different schedule");
}

}  // namespace detail

namespace detail {

// Shared trapezoidal marching core. With q_j = d_j λ_j the running
// accumulator B_j(i) = Σ_{m<i} w_m γ_m² Ψ_m e^{−2(λ_j+δ)(Γ_i−Γ_m)}
// (w_0 = ½, interior weights 1) satisfies
// B_j(i+1) = e^{−2(λ_j+δ)(Γ_{i+1}−Γ_i)} (B_j(i) + w_i γ_i² Ψ_i).
struct KernelAccumulator {
    Eigen::ArrayXd rate2;  // 2(λ_j + δ)
    Eigen::ArrayXd q;      // d_j λ_j
    Eigen::ArrayXd b;
    double q_sum;

    KernelAccumulator(const Spectral& spec, double delta, const Eigen::VectorXd& hess_diag) {
        rate2 = 2.0 * (spec.eigenvalues.array() + delta);
        q = hess_diag.array() * spec.eigenvalues.array();
        b = Eigen::ArrayXd::Zero(spec.d());
        q_sum = q.sum();
    }

    double integral(double h, double n) const { return h / n * (q * b).sum(); }
    double diagonal(double h, double n, double gamma_i) const {
        return 0.5 * h * gamma_i * gamma_i / n * q_sum;
    }
    void advance(double weight, double gamma_i, double psi_i, double dgamma) {
        b = (b + weight * gamma_i * gamma_i * psi_i) * (-rate2 * dgamma).exp();
    }
};

}  // namespace detail

// Ψ on the grid, by trapezoidal marching with the implicit diagonal:
//   Ψ_i = [g_i + h Σ_{m<i} w_m K(t_i,t_m) Ψ_m] / (1 − (h/2) K(t_i,t_i)).
// A non-positive diagonal factor means the grid is too coarse for this
// kernel; the solution is flagged divergent rather than extrapolated.
inline VolterraSolution solve_psi(const Spectral& spec, double delta,
                                  const Eigen::VectorXd& x0, const Schedule& schedule,
                                  const TimeGrid& grid) {
    detail::check_grid_schedule(grid, schedule);
    const double n = static_cast<double>(spec.n());
    const Eigen::VectorXd g = forcing_loss(spec, delta, x0, grid);
    detail::KernelAccumulator acc(spec, delta, spec.eigenvalues);

    VolterraSolution sol;
    sol.values.resize(grid.size());
    Eigen::Index computed = 0;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        double psi_i;
        if (i == 0) {
            psi_i = g[0];
        } else {
            const double denom = 1.0 - acc.diagonal(grid.h, n, grid.gamma_values[i]);
            if (denom <= 0.0) {
                sol.diverged = true;
                break;
            }
            psi_i = (g[i] + acc.integral(grid.h, n)) / denom;
        }
        if (!std::isfinite(psi_i) || std::abs(psi_i) > divergence_threshold) {
            sol.diverged = true;
            break;
        }
        sol.values[i] = psi_i;
        computed = i + 1;
        if (i + 1 < grid.size()) {
            const double w = i == 0 ? 0.5 : 1.0;
            acc.advance(w, grid.gamma_values[i], psi_i,
                        grid.big_gamma_values[i + 1] - grid.big_gamma_values[i]);
        }
    }
    sol.values.conservativeResize(computed);
    return sol;
}

// Ω for a statistic, using the already-computed Ψ in the integrand (no
// implicit solve: the equation for Ω is explicit given Ψ):
//   Ω_i = R(gf(Γ_i)) + h [½K_R(t_i,0)Ψ_0 + Σ_{0<m<i} K_R(t_i,t_m)Ψ_m
//                         + ½K_R(t_i,t_i)Ψ_i].
inline VolterraSolution solve_omega(const Spectral& spec, double delta,
                                    const Eigen::VectorXd& x0, const Schedule& schedule,
                                    const TimeGrid& grid, const Eigen::VectorXd& psi,
                                    const SpectralQuadratic& stat) {
    detail::check_grid_schedule(grid, schedule);
    if (psi.size() > grid.size())
        throw std::invalid_argument("solve_omega: psi longer than grid");
    const double n = static_cast<double>(spec.n());
    const Eigen::VectorXd g = forcing(spec, delta, x0, stat, grid);
    detail::KernelAccumulator acc(spec, delta, stat.hess_diag);

    VolterraSolution sol;
    sol.diverged = psi.size() < grid.size();
    sol.values.resize(psi.size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        double omega_i = g[i];
        if (i > 0) {
            omega_i += acc.integral(grid.h, n);
            omega_i += acc.diagonal(grid.h, n, grid.gamma_values[i]) * psi[i];
        }
        sol.values[i] = omega_i;
        if (!std::isfinite(omega_i) || std::abs(omega_i) > divergence_threshold) {
            sol.diverged = true;
            sol.values.conservativeResize(i + 1);
            break;
        }
        if (i + 1 < psi.size()) {
            const double w = i == 0 ? 0.5 : 1.0;
            acc.advance(w, grid.gamma_values[i], psi[i],
                        grid.big_gamma_values[i + 1] - grid.big_gamma_values[i]);
        }
    }
    return sol;
}

// Largest limiting learning rate with convergent dynamics:
//   γ̃ < 2 ((1/n) tr((AᵀA)² (AᵀA + δI)⁻¹))⁻¹ = 2n / Σ_j λ_j²/(λ_j+δ).
// Zero eigenvalues contribute nothing; with no curvature at all the
// threshold is +∞.
inline double convergence_threshold(const Spectral& spec, double delta) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < spec.d(); ++j) {
        const double lam = spec.eigenvalues[j];
        if (lam > 0.0) s += lam * lam / (lam + delta);
    }
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 * static_cast<double>(spec.n()) / s;
}

struct LimitingValues {
    double psi_inf = 0.0;
    double excess_risk_inf = 0.0;
    double omega_inf = 0.0;  // risk_gf_inf + excess_risk_inf
    bool divergent = false;
};

// Limiting loss Ψ_∞ = L(gf_∞) / (1 − (γ̃/2n) Σ λ²/(λ+δ)) and the limiting
// excess of Ω over the gradient-flow (ridge) value,
// (γ̃/2n) Ψ_∞ Σ d_j λ_j/(λ_j+δ). γ̃ = 0 is the decaying-schedule regime where
// the excess vanishes.
inline LimitingValues limiting_values(const Spectral& spec, double delta, double gamma_limit,
                                      double loss_gf_inf, double risk_gf_inf,
                                      const SpectralStatProjection& proj) {
    if (!(gamma_limit >= 0.0))
        throw std::invalid_argument("limiting_values: gamma_limit must be >= 0");
    LimitingValues out;
    if (gamma_limit == 0.0) {
        out.psi_inf = loss_gf_inf;
        out.omega_inf = risk_gf_inf;
        return out;
    }
    const double n = static_cast<double>(spec.n());
    double loss_mass = 0.0, stat_mass = 0.0;
    for (Eigen::Index j = 0; j < spec.d(); ++j) {
        const double lam = spec.eigenvalues[j];
        if (lam <= 0.0) continue;
        loss_mass += lam * lam / (lam + delta);
        stat_mass += proj.hess_diag_spectral[j] * lam / (lam + delta);
    }
    const double denom = 1.0 - gamma_limit / (2.0 * n) * loss_mass;
    if (denom <= 0.0) {
        out.divergent = true;
        out.psi_inf = std::numeric_limits<double>::infinity();
        out.excess_risk_inf = std::numeric_limits<double>::infinity();
        out.omega_inf = std::numeric_limits<double>::infinity();
        return out;
    }
    out.psi_inf = loss_gf_inf / denom;
    out.excess_risk_inf = gamma_limit / (2.0 * n) * out.psi_inf * stat_mass;
    out.omega_inf = risk_gf_inf + out.excess_risk_inf;
    return out;
}

enum class GenerativeForcingKind { loss, mse_risk };

// Expected forcing over the generative randomness (β, ξ, x₀) at fixed
// energies R = ‖β‖², noise_sq = ‖ξ‖² (the realized squared norm, to avoid
// convention mismatches), R̂ = E‖x₀‖². Evaluated in the eigenbasis with
// c_j = (1−e^{−(λ_j+δ)Γ})/(λ_j+δ):
//   loss: (R/2d) Σ λ_j(λ_j c_j − 1)²
//       + (noise_sq/2n)[Σ_{j<r}(λ_j c_j − 1)² + (n − r)]
//       + (R̂/2d) Σ λ_j e^{−2(λ_j+δ)Γ}
//   mse:  (R/2d) Σ (λ_j c_j − 1)²
//       + (noise_sq/2n) Σ_{j<r} λ_j c_j²
//       + (R̂/2d) Σ e^{−2(λ_j+δ)Γ}
inline Eigen::VectorXd expected_generative_forcing(const Spectral& spec, double delta,
                                                   double signal_energy, double noise_sq,
                                                   double init_energy, const TimeGrid& grid,
                                                   GenerativeForcingKind which) {
    if (!(signal_energy >= 0.0) || !(noise_sq >= 0.0) || !(init_energy >= 0.0))
        throw std::invalid_argument("expected_generative_forcing: energies must be >= 0");
    const double d = static_cast<double>(spec.d());
    const double n = static_cast<double>(spec.n());
    const Eigen::Index r = spec.rank_bound();
    Eigen::VectorXd out(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double big_gamma = grid.big_gamma_values[i];
        double term_r = 0.0, term_noise = 0.0, term_init = 0.0;
        for (Eigen::Index j = 0; j < spec.d(); ++j) {
            const double lam = spec.eigenvalues[j];
            const double a = lam + delta;
            const double c = detail::one_minus_exp_over(a, big_gamma);
            const double lc1 = lam * c - 1.0;
            const double e2 = std::exp(-2.0 * a * big_gamma);
            if (which == GenerativeForcingKind::loss) {
                term_r += lam * lc1 * lc1;
                if (j < r) term_noise += lc1 * lc1;
                term_init += lam * e2;
            } else {
                term_r += lc1 * lc1;
                if (j < r) term_noise += lam * c * c;
                term_init += e2;
            }
        }
        if (which == GenerativeForcingKind::loss)
            term_noise += static_cast<double>(spec.n() - r);
        out[i] = signal_energy / (2.0 * d) * term_r + noise_sq / (2.0 * n) * term_noise +
                 init_energy / (2.0 * d) * term_init;
    }
    return out;
}

struct TheoryCurves {
    TimeGrid grid;
    Eigen::VectorXd psi;            // Ψ at the grid points (possibly truncated)
    Eigen::MatrixXd omega;          // one column per statistic
    Eigen::MatrixXd forcing_stat;   // R(gf(Γ)) per statistic
    Eigen::VectorXd forcing_loss_values;
    bool diverged = false;
};

inline TheoryCurves compute_theory_curves(const Spectral& spec, double delta,
                                          const Eigen::VectorXd& x0, const Schedule& schedule,
                                          const TimeGrid& grid,
                                          const std::vector<SpectralQuadratic>& stats) {
    TheoryCurves tc;
    tc.grid = grid;
    tc.forcing_loss_values = forcing_loss(spec, delta, x0, grid);
    VolterraSolution psi = solve_psi(spec, delta, x0, schedule, grid);
    tc.psi = psi.values;
    tc.diverged = psi.diverged;
    const Eigen::Index rows = psi.values.size();
    tc.omega.resize(rows, static_cast<Eigen::Index>(stats.size()));
    tc.forcing_stat.resize(grid.size(), static_cast<Eigen::Index>(stats.size()));
    for (std::size_t s = 0; s < stats.size(); ++s) {
        tc.forcing_stat.col(static_cast<Eigen::Index>(s)) =
            forcing(spec, delta, x0, stats[s], grid);
        VolterraSolution om =
            solve_omega(spec, delta, x0, schedule, grid, psi.values, stats[s]);
        tc.diverged = tc.diverged || om.diverged;
        const Eigen::Index m = std::min<Eigen::Index>(om.values.size(), rows);
        tc.omega.col(static_cast<Eigen::Index>(s)).head(m) = om.values.head(m);
        for (Eigen::Index i = m; i < rows; ++i)
            tc.omega(i, static_cast<Eigen::Index>(s)) =
                std::numeric_limits<double>::quiet_NaN();
    }
    return tc;
}

}  // namespace sgdflow
