#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqdhydro/random.hpp"

namespace sqdh {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Inverse standard normal CDF: Acklam's rational approximation plus one
// Halley refinement against erfc, accurate to ~1e-15 over (0,1).
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step on F(x) - p = 0.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

enum class Family {
    Exponential,       // params: rate
    Erlang,            // params: shape (integer), rate
    HyperExponential,  // params: w1..wk, r1..rk
    Weibull,           // params: shape (>= 1), scale
    LogNormal,         // params: mu, sigma
    ParetoLomax,       // params: shape (> 1), scale
    Uniform,           // params: b  (uniform on [0, b])
};

inline const char* family_name(Family f) {
    switch (f) {
        case Family::Exponential: return "exponential";
        case Family::Erlang: return "erlang";
        case Family::HyperExponential: return "hyperexponential";
        case Family::Weibull: return "weibull";
        case Family::LogNormal: return "lognormal";
        case Family::ParetoLomax: return "paretolomax";
        case Family::Uniform: return "uniform";
    }
    return "?";
}

// A service or inter-arrival law from a closed set of families, all of
// which have a density that is bounded on finite intervals. Exposes CDF,
// survival, log-survival, density, hazard, the support endpoint L, and
// inverse-transform sampling (closed-form quantile where available,
// otherwise bracketed bisection on the log-survival).
class Distribution {
  public:
    static Distribution exponential(double rate) {
        require(rate > 0.0, "exponential: rate must be > 0");
        return Distribution(Family::Exponential, {rate});
    }
    static Distribution erlang(int shape, double rate) {
        require(shape >= 1, "erlang: shape must be an integer >= 1");
        require(rate > 0.0, "erlang: rate must be > 0");
        return Distribution(Family::Erlang, {static_cast<double>(shape), rate});
    }
    static Distribution hyper_exponential(std::vector<double> weights, std::vector<double> rates) {
        require(!weights.empty() && weights.size() == rates.size(),
                "hyperexponential: need equal nonzero counts of weights and rates");
        double wsum = 0.0;
        for (double w : weights) {
            require(w > 0.0, "hyperexponential: weights must be > 0");
            wsum += w;
        }
        require(std::abs(wsum - 1.0) <= 1e-9, "hyperexponential: weights must sum to 1");
        for (double r : rates) require(r > 0.0, "hyperexponential: rates must be > 0");
        std::vector<double> p;
        p.reserve(2 * weights.size());
        for (double w : weights) p.push_back(w / wsum);
        for (double r : rates) p.push_back(r);
        return Distribution(Family::HyperExponential, std::move(p));
    }
    static Distribution weibull(double shape, double scale) {
        // shape < 1 would make the density unbounded at 0, which breaks the
        // bounded-density requirement all families must satisfy.
        require(shape >= 1.0, "weibull: shape must be >= 1 (density unbounded at 0 otherwise)");
        require(scale > 0.0, "weibull: scale must be > 0");
        return Distribution(Family::Weibull, {shape, scale});
    }
    static Distribution log_normal(double mu, double sigma) {
        require(sigma > 0.0, "lognormal: sigma must be > 0");
        return Distribution(Family::LogNormal, {mu, sigma});
    }
    static Distribution pareto_lomax(double shape, double scale) {
        require(shape > 1.0, "paretolomax: shape must be > 1 (finite mean required)");
        require(scale > 0.0, "paretolomax: scale must be > 0");
        return Distribution(Family::ParetoLomax, {shape, scale});
    }
    static Distribution uniform(double b) {
        require(b > 0.0, "uniform: upper endpoint must be > 0");
        return Distribution(Family::Uniform, {b});
    }

    Family family() const { return family_; }
    const std::vector<double>& params() const { return params_; }

    // Supremum of the support, possibly infinite.
    double support_end() const { return support_end_; }
    double mean() const { return mean_; }

    double cdf(double x) const {
        if (x <= 0.0) return 0.0;
        return -std::expm1(log_survival(x));
    }

    double survival(double x) const {
        if (x <= 0.0) return 1.0;
        double ls = log_survival(x);
        return ls == -kInf ? 0.0 : std::exp(ls);
    }

    double log_survival(double x) const {
        if (x <= 0.0) return 0.0;
        switch (family_) {
            case Family::Exponential:
                return -params_[0] * x;
            case Family::Erlang: {
                const int k = static_cast<int>(params_[0]);
                const double rx = params_[1] * x;
                // log( sum_{m<k} (rx)^m/m! ) - rx, summed stably.
                double mx = 0.0;
                const double lrx = std::log(rx);
                std::vector<double> terms(static_cast<std::size_t>(k));
                for (int m = 0; m < k; ++m) {
                    terms[static_cast<std::size_t>(m)] = m * lrx - std::lgamma(m + 1.0);
                    mx = std::max(mx, terms[static_cast<std::size_t>(m)]);
                }
                double s = 0.0;
                for (double t : terms) s += std::exp(t - mx);
                return mx + std::log(s) - rx;
            }
            case Family::HyperExponential: {
                const std::size_t k = params_.size() / 2;
                double mx = -kInf;
                for (std::size_t i = 0; i < k; ++i)
                    mx = std::max(mx, std::log(params_[i]) - params_[k + i] * x);
                double s = 0.0;
                for (std::size_t i = 0; i < k; ++i)
                    s += std::exp(std::log(params_[i]) - params_[k + i] * x - mx);
                return mx + std::log(s);
            }
            case Family::Weibull:
                return -std::pow(x / params_[1], params_[0]);
            case Family::LogNormal: {
                const double z = (std::log(x) - params_[0]) / params_[1];
                const double s = 0.5 * std::erfc(z / std::sqrt(2.0));
                return s > 0.0 ? std::log(s) : -kInf;
            }
            case Family::ParetoLomax:
                return -params_[0] * std::log1p(x / params_[1]);
            case Family::Uniform:
                return x >= params_[0] ? -kInf : std::log1p(-x / params_[0]);
        }
        return -kInf;
    }

    double density(double x) const {
        if (x < 0.0) return 0.0;
        switch (family_) {
            case Family::Exponential:
                return params_[0] * std::exp(-params_[0] * x);
            case Family::Erlang: {
                const int k = static_cast<int>(params_[0]);
                const double r = params_[1];
                if (x == 0.0) return k == 1 ? r : 0.0;
                return std::exp(k * std::log(r) + (k - 1) * std::log(x) - r * x - std::lgamma(k));
            }
            case Family::HyperExponential: {
                const std::size_t k = params_.size() / 2;
                double g = 0.0;
                for (std::size_t i = 0; i < k; ++i)
                    g += params_[i] * params_[k + i] * std::exp(-params_[k + i] * x);
                return g;
            }
            case Family::Weibull: {
                const double k = params_[0], s = params_[1];
                if (x == 0.0) return k == 1.0 ? 1.0 / s : 0.0;
                const double y = x / s;
                return (k / s) * std::pow(y, k - 1.0) * std::exp(-std::pow(y, k));
            }
            case Family::LogNormal: {
                if (x == 0.0) return 0.0;
                const double z = (std::log(x) - params_[0]) / params_[1];
                return std::exp(-0.5 * z * z) / (x * params_[1] * std::sqrt(2.0 * M_PI));
            }
            case Family::ParetoLomax: {
                const double a = params_[0], s = params_[1];
                return (a / s) * std::pow(1.0 + x / s, -a - 1.0);
            }
            case Family::Uniform:
                return x < params_[0] ? 1.0 / params_[0] : 0.0;
        }
        return 0.0;
    }

    // Hazard rate g(x)/survival(x); only defined on [0, L).
    double hazard(double x) const {
        if (x < 0.0 || x >= support_end_)
            throw std::domain_error("hazard: age outside the support [0, L)");
        switch (family_) {
            case Family::Exponential:
                return params_[0];
            case Family::Uniform:
                return 1.0 / (params_[0] - x);
            default:
                return density(x) / survival(x);
        }
    }

    // survival(a + delta) / survival(a); the probability that a job of age a
    // survives another delta. Always in [0,1] and numerically stable even
    // where the hazard blows up near a finite L.
    double survival_ratio(double a, double delta) const {
        if (a < 0.0 || delta < 0.0)
            throw std::domain_error("survival_ratio: negative age or duration");
        const double lsa = log_survival(a);
        if (lsa == -kInf)
            throw std::domain_error("survival_ratio: conditioning on a null event (survival(a)=0)");
        if (delta == 0.0) return 1.0;
        const double lsb = log_survival(a + delta);
        return lsb == -kInf ? 0.0 : std::exp(lsb - lsa);
    }

    // Quantile of the unconditional law; inverse transform target.
    double quantile(double u) const {
        if (!(u > 0.0 && u < 1.0)) throw std::domain_error("quantile: u outside (0,1)");
        switch (family_) {
            case Family::Exponential:
                return -std::log1p(-u) / params_[0];
            case Family::Weibull:
                return params_[1] * std::pow(-std::log1p(-u), 1.0 / params_[0]);
            case Family::LogNormal:
                return std::exp(params_[0] + params_[1] * inverse_normal_cdf(u));
            case Family::ParetoLomax:
                return params_[1] * (std::pow(1.0 - u, -1.0 / params_[0]) - 1.0);
            case Family::Uniform:
                return params_[0] * u;
            default:
                return invert_conditional(0.0, std::log1p(-u));
        }
    }

    double sample(Rng& rng) const { return quantile(rng.uniform01()); }

    // Residual duration b with P{b > x} = survival(a+x)/survival(a).
    double sample_residual(double a, Rng& rng) const {
        const double lsa = log_survival(a);
        if (lsa == -kInf)
            throw std::domain_error("sample_residual: conditioning on a null event (survival(a)=0)");
        const double u = rng.uniform01();
        switch (family_) {
            case Family::Exponential:
                return -std::log1p(-u) / params_[0];
            case Family::Weibull: {
                const double k = params_[0], s = params_[1];
                const double t = std::pow(a / s, k) - std::log1p(-u);
                return s * std::pow(t, 1.0 / k) - a;
            }
            case Family::ParetoLomax:
                return (params_[1] + a) * (std::pow(1.0 - u, -1.0 / params_[0]) - 1.0);
            case Family::Uniform:
                return (params_[0] - a) * u;
            default:
                return invert_conditional(a, lsa + std::log1p(-u)) - a;
        }
    }

    // The law of c*X, c > 0 (used to put an inter-arrival law on the fast
    // network clock).
    Distribution scaled(double c) const {
        require(c > 0.0, "scaled: factor must be > 0");
        std::vector<double> p = params_;
        switch (family_) {
            case Family::Exponential:
                p[0] /= c;
                break;
            case Family::Erlang:
                p[1] /= c;
                break;
            case Family::HyperExponential:
                for (std::size_t i = p.size() / 2; i < p.size(); ++i) p[i] /= c;
                break;
            case Family::Weibull:
                p[1] *= c;
                break;
            case Family::LogNormal:
                p[0] += std::log(c);
                break;
            case Family::ParetoLomax:
                p[1] *= c;
                break;
            case Family::Uniform:
                p[0] *= c;
                break;
        }
        return Distribution(family_, std::move(p));
    }

    Distribution normalized() const { return scaled(1.0 / mean_); }

  private:
    Distribution(Family f, std::vector<double> params)
        : family_(f), params_(std::move(params)) {
        switch (family_) {
            case Family::Exponential:
                mean_ = 1.0 / params_[0];
                support_end_ = kInf;
                break;
            case Family::Erlang:
                mean_ = params_[0] / params_[1];
                support_end_ = kInf;
                break;
            case Family::HyperExponential: {
                const std::size_t k = params_.size() / 2;
                mean_ = 0.0;
                for (std::size_t i = 0; i < k; ++i) mean_ += params_[i] / params_[k + i];
                support_end_ = kInf;
                break;
            }
            case Family::Weibull:
                mean_ = params_[1] * std::tgamma(1.0 + 1.0 / params_[0]);
                support_end_ = kInf;
                break;
            case Family::LogNormal:
                mean_ = std::exp(params_[0] + 0.5 * params_[1] * params_[1]);
                support_end_ = kInf;
                break;
            case Family::ParetoLomax:
                mean_ = params_[1] / (params_[0] - 1.0);
                support_end_ = kInf;
                break;
            case Family::Uniform:
                mean_ = params_[0] / 2.0;
                support_end_ = params_[0];
                break;
        }
    }

    static void require(bool ok, const char* msg) {
        if (!ok) throw std::invalid_argument(msg);
    }

    // Solve log_survival(x) = target for x >= lo by geometric bracketing and
    // bisection to 1e-12 relative tolerance. target must be <= log_survival(lo).
    double invert_conditional(double lo, double target) const {
        double hi = std::max(2.0 * std::max(lo, mean_), lo + mean_);
        if (std::isfinite(support_end_)) {
            hi = support_end_;
        } else {
            while (log_survival(hi) > target) hi *= 2.0;
        }
        double a = lo, b = hi;
        for (int it = 0; it < 200; ++it) {
            const double m = 0.5 * (a + b);
            if (log_survival(m) > target)
                a = m;
            else
                b = m;
            if (b - a <= 1e-12 * std::max(1.0, std::abs(a))) break;
        }
        return 0.5 * (a + b);
    }

    Family family_;
    std::vector<double> params_;
    double mean_ = 0.0;
    double support_end_ = kInf;
};

// First inter-arrival delay after conditioning on an elapsed renewal age R.
inline double sample_delay(const Distribution& arrival, double renewal_age, Rng& rng) {
    return arrival.sample_residual(renewal_age, rng);
}

}  // namespace sqdh
