// schedules.hpp — learning-rate schedules γ(t) and their exact integrals Γ(t).
//
// Γ enters matrix exponentials, so each kind carries its closed-form
// antiderivative instead of quadrature. The classic Robbins–Monro 1/k rate is
// intentionally not representable; its epoch-clock analogue is
// rational_decay with c = s = 1, i.e. γ(t) = 1/(1+t).

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdflow {

class Schedule {
   public:
    enum class Kind { constant, rational_decay, exponential_to_limit, piecewise_constant };

    struct Segment {
        double start;  // segment begins here (right-continuous)
        double gamma;
    };

    static Schedule constant(double gamma) {
        check_nonneg(gamma);
        Schedule s;
        s.kind_ = Kind::constant;
        s.a_ = gamma;
        return s;
    }

    // γ(t) = c / (1 + t/s)
    static Schedule rational_decay(double c, double scale) {
        check_nonneg(c);
        if (!(scale > 0.0)) throw std::invalid_argument("rational_decay: scale must be > 0");
        Schedule s;
        s.kind_ = Kind::rational_decay;
        s.a_ = c;
        s.b_ = scale;
        return s;
    }

    // γ(t) = γ̃ + (γ₀ − γ̃) e^{−t/s}
    static Schedule exponential_to_limit(double gamma_inf, double gamma0, double scale) {
        check_nonneg(gamma_inf);
        check_nonneg(gamma0);
        if (!(scale > 0.0))
            throw std::invalid_argument("exponential_to_limit: scale must be > 0");
        Schedule s;
        s.kind_ = Kind::exponential_to_limit;
        s.a_ = gamma_inf;
        s.b_ = gamma0;
        s.c_ = scale;
        return s;
    }

    static Schedule piecewise_constant(std::vector<Segment> segments) {
        if (segments.empty() || segments.front().start != 0.0)
            throw std::invalid_argument("piecewise_constant: first segment must start at 0");
        for (std::size_t i = 0; i < segments.size(); ++i) {
            check_nonneg(segments[i].gamma);
            if (i > 0 && !(segments[i].start > segments[i - 1].start))
                throw std::invalid_argument("piecewise_constant: starts must increase");
        }
        Schedule s;
        s.kind_ = Kind::piecewise_constant;
        s.segments_ = std::move(segments);
        return s;
    }

    Kind kind() const { return kind_; }

    double gamma(double t) const {
        if (!(t >= 0.0)) throw std::invalid_argument("gamma: t must be >= 0");
        switch (kind_) {
            case Kind::constant:
                return a_;
            case Kind::rational_decay:
                return a_ / (1.0 + t / b_);
            case Kind::exponential_to_limit:
                return a_ + (b_ - a_) * std::exp(-t / c_);
            case Kind::piecewise_constant: {
                double g = segments_.front().gamma;
                for (const auto& seg : segments_) {
                    if (t >= seg.start) g = seg.gamma;
                    else break;
                }
                return g;
            }
        }
        return 0.0;
    }

    // Γ(t) = ∫₀ᵗ γ(s) ds, in closed form per kind.
    double big_gamma(double t) const {
        if (!(t >= 0.0)) throw std::invalid_argument("big_gamma: t must be >= 0");
        switch (kind_) {
            case Kind::constant:
                return a_ * t;
            case Kind::rational_decay:
                return a_ * b_ * std::log1p(t / b_);
            case Kind::exponential_to_limit:
                return a_ * t + c_ * (b_ - a_) * (-std::expm1(-t / c_));
            case Kind::piecewise_constant: {
                double acc = 0.0;
                for (std::size_t i = 0; i < segments_.size(); ++i) {
                    const double lo = segments_[i].start;
                    if (t <= lo) break;
                    const double hi =
                        i + 1 < segments_.size() ? std::min(t, segments_[i + 1].start) : t;
                    acc += segments_[i].gamma * (hi - lo);
                }
                return acc;
            }
        }
        return 0.0;
    }

    double gamma_limit() const {
        switch (kind_) {
            case Kind::constant:
                return a_;
            case Kind::rational_decay:
                return 0.0;
            case Kind::exponential_to_limit:
                return a_;
            case Kind::piecewise_constant:
                return segments_.back().gamma;
        }
        return 0.0;
    }

    double gamma_sup() const {
        switch (kind_) {
            case Kind::constant:
                return a_;
            case Kind::rational_decay:
                return a_;
            case Kind::exponential_to_limit:
                return std::max(a_, b_);
            case Kind::piecewise_constant: {
                double m = 0.0;
                for (const auto& seg : segments_) m = std::max(m, seg.gamma);
                return m;
            }
        }
        return 0.0;
    }

    std::string kind_name() const {
        switch (kind_) {
            case Kind::constant: return "constant";
            case Kind::rational_decay: return "rational_decay";
            case Kind::exponential_to_limit: return "exponential_to_limit";
            case Kind::piecewise_constant: return "piecewise_constant";
        }
        return "?";
    }

    double param_a() const { return a_; }
    double param_b() const { return b_; }
    double param_c() const { return c_; }
    const std::vector<Segment>& segments() const { return segments_; }

   private:
    static void check_nonneg(double g) {
        if (!(g >= 0.0)) throw std::invalid_argument("schedule: gamma must be >= 0");
    }

    Kind kind_ = Kind::constant;
    double a_ = 0.0, b_ = 0.0, c_ = 1.0;
    std::vector<Segment> segments_;
};

}  // namespace sgdflow
