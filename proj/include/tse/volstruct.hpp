#pragma once

// Term structure of volatilities on the fine grid {0, dt, 2dt, ...}:
// per-maturity factor loadings sigma(T), drift mu(T) (per year) and the
// cumulative vector rho(T) = dt * sum_{0 <= u <= T} sigma(u). rho is stored,
// not recomputed, so sensitivity sweeps stay O(1) per maturity.
//
// Coarse (tenor-bucket) matrices hold one row per bucket; interpolation is
// piecewise constant on left-open buckets (T_i, T_{i+1}], extended flat
// beyond the first and last tenor.

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "tse/csv.hpp"
#include "tse/errors.hpp"

namespace tse {

inline int grid_index(double t, double dt, const char* what = "maturity") {
    double q = t / dt;
    long long k = std::llround(q);
    if (k < 0 || std::abs(t - k * dt) > 1e-9 * std::max(1.0, std::abs(t)))
        throw ValidationError(std::string(what) + " " + std::to_string(t) +
                              " is not on the dt=" + std::to_string(dt) + " grid");
    return static_cast<int>(k);
}

struct VolatilityTermStructure {
    double dt = 0.0;
    int steps = 0;                        // grid points T = 0..(steps-1)*dt
    std::vector<Eigen::VectorXd> sigma;   // size steps, each in R^n
    std::vector<double> mu;               // size steps, per year
    std::vector<Eigen::VectorXd> rho;     // inclusive prefix: rho[k] = dt*sum_{j<=k} sigma[j]

    int n() const { return steps > 0 ? static_cast<int>(sigma.front().size()) : 0; }
    double horizon() const { return steps * dt; }

    static VolatilityTermStructure from_grid(double dt, std::vector<Eigen::VectorXd> sigma_grid,
                                             std::vector<double> mu_grid = {}) {
        if (!(dt > 0.0)) throw ValidationError("dt must be positive");
        if (sigma_grid.empty()) throw ValidationError("empty volatility grid");
        VolatilityTermStructure v;
        v.dt = dt;
        v.steps = static_cast<int>(sigma_grid.size());
        v.sigma = std::move(sigma_grid);
        v.mu = mu_grid.empty() ? std::vector<double>(v.steps, 0.0) : std::move(mu_grid);
        if (static_cast<int>(v.mu.size()) != v.steps)
            throw ValidationError("mu grid size does not match sigma grid");
        const int n = static_cast<int>(v.sigma.front().size());
        for (const auto& s : v.sigma)
            if (static_cast<int>(s.size()) != n)
                throw ValidationError("inconsistent factor dimension in sigma grid");
        v.rho.resize(v.steps);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < v.steps; ++k) {
            acc += dt * v.sigma[k];
            v.rho[k] = acc;
        }
        return v;
    }

    int index_of(double T, const char* what = "maturity") const {
        int k = grid_index(T, dt, what);
        if (k >= steps)
            throw ValidationError(std::string(what) + " " + std::to_string(T) +
                                  " beyond the structure horizon");
        return k;
    }

    /// rho(T), inclusive of sigma(T) itself.
    const Eigen::VectorXd& cumulative_rho(double T) const { return rho[index_of(T)]; }

    /// rho just before grid index k: dt * sum_{j<k} sigma[j]; zero at k=0.
    Eigen::VectorXd rho_before(int k) const {
        if (k <= 0) return Eigen::VectorXd::Zero(n());
        return rho[std::min(k, steps) - 1];
    }

    /// dt * sum_{j<k} mu[j] (cumulative drift actually applied before k).
    double mu_before(int k) const {
        double acc = 0.0;
        for (int j = 0; j < std::min(k, steps); ++j) acc += dt * mu[j];
        return acc;
    }
};

struct CoarseVolMatrix {
    std::vector<double> tenors;           // T_1 < ... < T_k, grid-aligned
    std::vector<double> mu;               // size k-1, bucket drift (per year)
    std::vector<Eigen::VectorXd> sigma;   // size k-1, bucket loadings

    int buckets() const { return static_cast<int>(sigma.size()); }
    int n() const { return buckets() > 0 ? static_cast<int>(sigma.front().size()) : 0; }

    void validate(double dt) const {
        if (tenors.size() < 2) throw ValidationError("coarse matrix needs at least two tenors");
        if (sigma.size() + 1 != tenors.size() || mu.size() != sigma.size())
            throw ValidationError("coarse matrix row count does not match tenor count");
        for (std::size_t i = 1; i < tenors.size(); ++i)
            if (!(tenors[i] > tenors[i - 1]))
                throw ValidationError("tenors must be strictly increasing");
        for (double t : tenors) grid_index(t, dt, "tenor");
    }

    /// Bucket index whose left-open interval (T_i, T_{i+1}] contains T,
    /// clamped to the first/last bucket outside the tenor range.
    int bucket_of(double T) const {
        for (int i = 0; i + 1 < static_cast<int>(tenors.size()); ++i)
            if (T <= tenors[i + 1] + 1e-12) return i;
        return buckets() - 1;
    }
};

/// Piecewise-constant interpolation of a coarse matrix onto the fine grid.
/// The default horizon includes the last tenor itself, so coarsening back
/// over the same tenors is well defined.
inline VolatilityTermStructure interpolate(const CoarseVolMatrix& c, double dt, int steps = -1) {
    c.validate(dt);
    if (steps < 0) steps = grid_index(c.tenors.back(), dt, "tenor") + 1;
    if (steps <= 0) throw ValidationError("interpolation horizon must be positive");
    std::vector<Eigen::VectorXd> sig(steps);
    std::vector<double> mu(steps);
    for (int k = 0; k < steps; ++k) {
        int b = c.bucket_of(k * dt);
        sig[k] = c.sigma[b];
        mu[k] = c.mu[b];
    }
    return VolatilityTermStructure::from_grid(dt, std::move(sig), std::move(mu));
}

/// Bucket averages recovered from the cumulative structure:
/// sigma_i = (rho(T_{i+1}) - rho(T_i)) / (T_{i+1} - T_i), and likewise for
/// the drift column via the cumulative drift.
inline CoarseVolMatrix coarsen(const VolatilityTermStructure& v, const std::vector<double>& tenors) {
    if (tenors.size() < 2) throw ValidationError("coarsen needs at least two tenors");
    CoarseVolMatrix c;
    c.tenors = tenors;
    for (std::size_t i = 1; i < tenors.size(); ++i)
        if (!(tenors[i] > tenors[i - 1]))
            throw ValidationError("tenors must be strictly increasing");
    for (std::size_t i = 0; i + 1 < tenors.size(); ++i) {
        int lo = grid_index(tenors[i], v.dt, "tenor");
        int hi = grid_index(tenors[i + 1], v.dt, "tenor");
        if (hi >= v.steps)
            throw ValidationError("tenor " + std::to_string(tenors[i + 1]) +
                                  " exceeds the structure horizon");
        double width = tenors[i + 1] - tenors[i];
        Eigen::VectorXd num = v.rho[hi] - (lo >= 0 ? v.rho[lo] : Eigen::VectorXd::Zero(v.n()));
        c.sigma.push_back(num / width);
        c.mu.push_back((v.mu_before(hi + 1) - v.mu_before(lo + 1)) / width);
    }
    return c;
}

// --- CSV round trip -------------------------------------------------------
// Header: tenor,mu,sigma1,...,sigman; one row per bucket right endpoint.
// The left end of the first bucket is the grid origin (0).

inline std::string to_csv(const CoarseVolMatrix& c) {
    std::ostringstream out;
    out << "tenor,mu";
    for (int j = 1; j <= c.n(); ++j) out << ",sigma" << j;
    out << "\n";
    for (int i = 0; i < c.buckets(); ++i) {
        out << format_double(c.tenors[i + 1]) << "," << format_double(c.mu[i]);
        for (int j = 0; j < c.n(); ++j) out << "," << format_double(c.sigma[i](j));
        out << "\n";
    }
    return out.str();
}

inline CoarseVolMatrix coarse_vol_from_csv(const CsvTable& t, const std::string& file) {
    int tenor_col = t.require_column("tenor", file);
    int mu_col = t.require_column("mu", file);
    std::vector<int> sigma_cols;
    for (int j = 1;; ++j) {
        int col = t.column("sigma" + std::to_string(j));
        if (col < 0) break;
        sigma_cols.push_back(col);
    }
    if (sigma_cols.empty()) throw ValidationError(file + ": missing required column 'sigma1'");
    if (t.rows.empty()) throw ValidationError(file + ": no bucket rows");
    CoarseVolMatrix c;
    c.tenors.push_back(0.0);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::string ctx = file + ":" + std::to_string(r + 2);
        c.tenors.push_back(parse_double(t.rows[r][tenor_col], ctx));
        c.mu.push_back(parse_double(t.rows[r][mu_col], ctx));
        Eigen::VectorXd s(sigma_cols.size());
        for (std::size_t j = 0; j < sigma_cols.size(); ++j)
            s(j) = parse_double(t.rows[r][sigma_cols[j]], ctx);
        c.sigma.push_back(std::move(s));
    }
    for (std::size_t i = 1; i < c.tenors.size(); ++i)
        if (!(c.tenors[i] > c.tenors[i - 1]))
            throw ValidationError(file + ": tenors must be strictly increasing");
    return c;
}

inline CoarseVolMatrix read_coarse_vol_csv(const std::string& path) {
    return coarse_vol_from_csv(read_csv(path), path);
}

}  // namespace tse
