#pragma once

// Continuous-time Gaussian limit of the lattice model: coarse forwards driven
// by a Brownian state with separable cumulative volatility rho(T), and the
// convergence diagnostics of the discrete drift and moments toward it as the
// time step is refined. Distributional comparisons are closed-form Gaussian
// moments; nothing is simulated.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tse/drift.hpp"
#include "tse/errors.hpp"
#include "tse/factors.hpp"
#include "tse/volstruct.hpp"

namespace tse {

/// Gaussian coarse-forward model: rho(T) = integral_0^T sigma(u) du over the
/// piecewise-constant buckets, initial forwards given per bucket.
struct GaussianIkrsModel {
    CoarseVolMatrix vol;
    std::vector<double> initial;  // F_0 over each bucket (T_i, T_{i+1}]

    void validate() const {
        if (vol.buckets() < 1) throw ValidationError("empty volatility matrix");
        if (initial.size() != static_cast<std::size_t>(vol.buckets()))
            throw ValidationError("initial coarse forwards must cover every bucket");
        for (std::size_t i = 1; i < vol.tenors.size(); ++i)
            if (!(vol.tenors[i] > vol.tenors[i - 1]))
                throw ValidationError("tenors must be strictly increasing");
    }

    /// Continuous cumulative volatility (piecewise-linear in T).
    Eigen::VectorXd rho(double T) const {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(vol.n());
        if (T <= 0.0) return acc;
        double lo = 0.0;
        for (int b = 0; b < vol.buckets(); ++b) {
            double hi = vol.tenors[b + 1];
            double left = std::max(lo, 0.0);
            double right = std::min(T, hi);
            if (right > left) acc += (right - left) * vol.sigma[b];
            lo = hi;
            if (hi >= T) break;
        }
        if (T > vol.tenors.back())  // flat extension of the last bucket
            acc += (T - vol.tenors.back()) * vol.sigma[vol.buckets() - 1];
        return acc;
    }

    /// Time-averaged initial forward over (T, T'] from the bucket values.
    double initial_coarse(double T_lo, double T_hi) const {
        if (!(T_hi > T_lo)) throw ValidationError("need T' > T");
        double acc = 0.0, lo = 0.0;
        for (int b = 0; b < vol.buckets(); ++b) {
            double hi = vol.tenors[b + 1];
            double left = std::max(lo, T_lo);
            double right = std::min(T_hi, hi);
            if (right > left) acc += (right - left) * initial[b];
            lo = hi;
        }
        if (T_hi > vol.tenors.back()) acc += (T_hi - vol.tenors.back()) * initial.back();
        return acc / (T_hi - T_lo);
    }
};

/// Deterministic drift coefficient of the Gaussian coarse forward: the
/// small-step limit of the discrete bucket drift,
///   (|rho(T')|^2 - |rho(T)|^2) / (2 (T' - T)).
inline double limit_drift(const GaussianIkrsModel& g, double T_lo, double T_hi) {
    if (!(T_hi > T_lo)) throw ValidationError("need T' > T");
    return (g.rho(T_hi).squaredNorm() - g.rho(T_lo).squaredNorm()) / (2.0 * (T_hi - T_lo));
}

/// Coarse forward at time t given a realized Brownian state W:
///   F_t(T,T') = F_0(T,T') + <(rho(T')-rho(T))/(T'-T), W> + limit_drift * t.
inline double ikrs_coarse_forward(const GaussianIkrsModel& g, double t, double T_lo, double T_hi,
                                  const Eigen::VectorXd& w) {
    g.validate();
    if (!(t < T_lo && T_lo < T_hi)) throw ValidationError("need t < T < T'");
    Eigen::VectorXd loading = (g.rho(T_hi) - g.rho(T_lo)) / (T_hi - T_lo);
    return g.initial_coarse(T_lo, T_hi) + loading.dot(w) + limit_drift(g, T_lo, T_hi) * t;
}

struct ConvergenceRow {
    double dt = 0.0;
    double drift_err = 0.0;  // |discrete bucket drift - Gaussian drift coefficient|
    double mean_err = 0.0;   // |E F_t(T,T') discrete - Gaussian|
    double var_err = 0.0;    // |Var F_t(T,T') discrete - Gaussian|
};

/// Gaussian variance of F_t(T,T'): t |rho(T') - rho(T)|^2 / (T'-T)^2.
inline double gaussian_coarse_variance(const GaussianIkrsModel& g, double t, double T_lo,
                                       double T_hi) {
    return t * (g.rho(T_hi) - g.rho(T_lo)).squaredNorm() / ((T_hi - T_lo) * (T_hi - T_lo));
}

/// Refinement sweep: for each step size, rebuild the discrete structure on
/// that grid and compare its bucket drift and the exact first two moments of
/// F_t(T,T') against the Gaussian law. Moments of the discrete model follow
/// from w_t having mean zero and covariance t*I; the drift column is the
/// stationary drift condition on the fine grid.
inline std::vector<ConvergenceRow> convergence_test(
    const GaussianIkrsModel& g, const std::function<FactorDistribution(double)>& factor_family,
    double T_lo, double T_hi, double t, const std::vector<double>& dts) {
    g.validate();
    if (dts.size() < 2) throw ValidationError("need at least two step sizes");
    if (!(t > 0.0 && t < T_lo && T_lo < T_hi)) throw ValidationError("need 0 < t < T < T'");
    std::vector<ConvergenceRow> rows;
    const double width = T_hi - T_lo;
    const double gauss_drift = limit_drift(g, T_lo, T_hi);
    const double gauss_mean = g.initial_coarse(T_lo, T_hi) + gauss_drift * t;
    const double gauss_var = gaussian_coarse_variance(g, t, T_lo, T_hi);
    for (double dt : dts) {
        FactorDistribution f = factor_family(dt);
        int steps = grid_index(T_hi, dt, "tenor") + 1;
        VolatilityTermStructure v = interpolate(g.vol, dt, steps);
        v.mu = stationary_drift(v, f);
        ConvergenceRow row;
        row.dt = dt;
        row.drift_err = std::abs(coarse_drift(v, f, T_lo, T_hi) - gauss_drift);

        int lo = grid_index(T_lo, dt, "tenor");
        int hi = grid_index(T_hi, dt, "tenor");
        // exact discrete moments of F_t(T,T') = F_0 + <loading, w_t> + drift t
        double mu_bucket = 0.0;
        Eigen::VectorXd loading = Eigen::VectorXd::Zero(v.n());
        for (int k = lo; k < hi; ++k) {
            mu_bucket += dt * v.mu[k];
            loading += dt * v.sigma[k];
        }
        mu_bucket /= width;
        loading /= width;
        double f0 = 0.0;
        for (int k = lo; k < hi; ++k) f0 += dt * g.initial_coarse(k * dt, (k + 1) * dt);
        f0 /= width;
        row.mean_err = std::abs(f0 + mu_bucket * t - gauss_mean);
        row.var_err = std::abs(loading.squaredNorm() * t - gauss_var);
        rows.push_back(row);
    }
    return rows;
}

inline std::string convergence_to_csv(const std::vector<ConvergenceRow>& rows) {
    std::ostringstream out;
    out << "dt,drift_err,mean_err,var_err\n";
    for (const auto& r : rows)
        out << format_double(r.dt) << "," << format_double(r.drift_err) << ","
            << format_double(r.mean_err) << "," << format_double(r.var_err) << "\n";
    return out.str();
}

}  // namespace tse
