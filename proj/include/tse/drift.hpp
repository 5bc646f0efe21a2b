#pragma once

// Arbitrage-free drifts. Expectations over the factor increment are exact
// (n+1)-term sums evaluated in log space; nothing here is sampled.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tse/errors.hpp"
#include "tse/factors.hpp"
#include "tse/volstruct.hpp"

namespace tse {

namespace detail {

/// log(sum_i w_i * exp(x_i)) with max subtraction; w_i > 0.
inline double log_sum_exp(const std::vector<double>& x, const std::vector<double>& w) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * std::exp(x[i] - m);
    return m + std::log(acc);
}

inline void check_compatible(const VolatilityTermStructure& v, const FactorDistribution& f) {
    if (v.n() != f.n)
        throw ValidationError("factor count mismatch: volatility n=" + std::to_string(v.n()) +
                              ", distribution n=" + std::to_string(f.n));
    if (std::abs(v.dt - f.dt) > 1e-12 * std::max(1.0, v.dt))
        throw ValidationError("time step mismatch between volatility structure and factor");
}

}  // namespace detail

/// The stationary per-year drift making the forward dynamics fit an exact
/// one-step risk-neutral kernel at every node:
///   mu(T) = (1/dt^2) * log( E[e^{<-rho(T), dw>}] / E[e^{<-rho(T-dt), dw>}] ),
/// with rho(-dt) = 0. Telescoping these increments is what every
/// no-arbitrage identity downstream relies on.
inline std::vector<double> stationary_drift(const VolatilityTermStructure& v,
                                            const FactorDistribution& f) {
    detail::check_compatible(v, f);
    std::vector<double> mu(v.steps);
    // log E[exp<-rho(T-dt), dw>]; at T=0 the exponent is the zero vector
    double prev = f.log_mgf(Eigen::VectorXd::Zero(f.n));
    const double inv = 1.0 / (v.dt * v.dt);
    for (int k = 0; k < v.steps; ++k) {
        double cur = f.log_mgf(-v.rho[k]);
        mu[k] = inv * (cur - prev);
        prev = cur;
    }
    return mu;
}

/// Classical two-state drift for risk-neutral probability pi and constant
/// volatility sigma (unit time step):
///   mu(T) = log( (pi e^{-(T+1)s} + (1-pi) e^{(T+1)s}) /
///                (pi e^{-T s}     + (1-pi) e^{T s}) ).
inline double classical_drift(double pi, double sigma, int T) {
    if (!(pi > 0.0 && pi < 1.0)) throw ValidationError("pi must lie in (0,1)");
    if (T < 0) throw ValidationError("maturity index must be >= 0");
    auto lse2 = [](double a, double wa, double b, double wb) {
        double m = std::max(a, b);
        return m + std::log(wa * std::exp(a - m) + wb * std::exp(b - m));
    };
    double num = lse2(-(T + 1.0) * sigma, pi, (T + 1.0) * sigma, 1.0 - pi);
    double den = lse2(-static_cast<double>(T) * sigma, pi, static_cast<double>(T) * sigma, 1.0 - pi);
    return num - den;
}

inline std::vector<double> classical_drift_map(double pi, double sigma, int max_T) {
    std::vector<double> mu(max_T + 1);
    for (int T = 0; T <= max_T; ++T) mu[T] = classical_drift(pi, sigma, T);
    return mu;
}

/// Multi-state generalization with a probability pi on the outcome set and
/// a constant loading vector (unit time step):
///   mu(T) = log( sum_s pi(s) e^{-(T+1)<sigma, dw(s)>} /
///                sum_s pi(s) e^{-T<sigma, dw(s)>} ).
inline double multi_drift(const std::vector<double>& pi, const Eigen::VectorXd& sigma,
                          const FactorDistribution& f, int T) {
    if (static_cast<int>(pi.size()) != f.num_outcomes())
        throw ValidationError("pi must assign a probability to each outcome");
    double sum = 0.0;
    for (double p : pi) {
        if (!(p > 0.0)) throw ValidationError("pi must be strictly positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("pi must sum to 1");
    if (T < 0) throw ValidationError("maturity index must be >= 0");
    std::vector<double> xn(f.num_outcomes()), xd(f.num_outcomes());
    for (int s = 0; s < f.num_outcomes(); ++s) {
        double ip = sigma.dot(f.outcomes[s]);
        xn[s] = -(T + 1.0) * ip;
        xd[s] = -static_cast<double>(T) * ip;
    }
    return detail::log_sum_exp(xn, pi) - detail::log_sum_exp(xd, pi);
}

inline std::vector<double> multi_drift_map(const std::vector<double>& pi,
                                           const Eigen::VectorXd& sigma,
                                           const FactorDistribution& f, int max_T) {
    std::vector<double> mu(max_T + 1);
    for (int T = 0; T <= max_T; ++T) mu[T] = multi_drift(pi, sigma, f, T);
    return mu;
}

/// Bucket drift over (T, T'], the exact time average of stationary_drift:
///   mu(T,T') = (1/(dt (T'-T))) * log( E[e^{<-rho(T'), dw>}] / E[e^{<-rho(T), dw>}] ).
inline double coarse_drift(const VolatilityTermStructure& v, const FactorDistribution& f,
                           double T_lo, double T_hi) {
    detail::check_compatible(v, f);
    if (!(T_hi > T_lo)) throw ValidationError("bucket right end must exceed left end");
    int lo = v.index_of(T_lo, "tenor");
    int hi = v.index_of(T_hi, "tenor");
    double a = f.log_mgf(-v.rho[lo]);
    double b = f.log_mgf(-v.rho[hi]);
    return (b - a) / (v.dt * (T_hi - T_lo));
}

}  // namespace tse
