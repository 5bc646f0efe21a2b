#pragma once

// Term-structure models on the lattice.
//
// TermStructureModel is the engine's pricing model: forwards follow
//   F_t(T) = F_0(T) + <sigma(T), w_t - w_0> + mu(T) * t
// with maturity-stationary loadings and drift. Bond prices come from
//   P^T_t = exp{ -dt * sum_{t <= u < T} F_t(u) },
// which this class evaluates in closed form through prefix sums.
//
// ClassicalModel is the older tenor-stationary family (constant loading,
// per-step drift keyed on time to maturity, unit time step). It is built
// step by step from its defining recursion and is used as an independent
// cross-check against the closed-form solutions below.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tse/csv.hpp"
#include "tse/drift.hpp"
#include "tse/errors.hpp"
#include "tse/factors.hpp"
#include "tse/lattice.hpp"
#include "tse/volstruct.hpp"

namespace tse {

struct ForwardCurve {
    int asof_step = 0;
    std::vector<double> values;  // F_t(T) for grid T = asof, asof+dt, ...
};

class TermStructureModel {
public:
    /// Assembles a model whose pricing drift is already in v.mu.
    /// Martingale verification lives in noarb.hpp (build_verified_model).
    /// lattice_steps < 0 materializes nodes for the full grid; a smaller
    /// depth is enough when only shallow nodes are evaluated.
    static TermStructureModel assemble(const FactorDistribution& f, VolatilityTermStructure v,
                                       std::vector<double> initial_forwards,
                                       std::size_t memory_budget_bytes = 512ull * 1024 * 1024,
                                       int lattice_steps = -1) {
        detail::check_compatible(v, f);
        if (static_cast<int>(initial_forwards.size()) != v.steps)
            throw ValidationError("initial forward curve must cover every grid maturity");
        TermStructureModel m;
        m.vol_ = std::move(v);
        m.f0_ = std::move(initial_forwards);
        if (lattice_steps < 0 || lattice_steps > m.vol_.steps) lattice_steps = m.vol_.steps;
        m.lattice_ = Lattice::build(f, lattice_steps, memory_budget_bytes);
        const int N = m.vol_.steps;
        m.lp0_.assign(N + 1, 0.0);
        m.pm_.assign(N + 1, 0.0);
        m.re_.assign(N + 1, Eigen::VectorXd::Zero(m.vol_.n()));
        for (int k = 0; k < N; ++k) {
            m.lp0_[k + 1] = m.lp0_[k] - m.vol_.dt * m.f0_[k];
            m.pm_[k + 1] = m.pm_[k] + m.vol_.dt * m.vol_.mu[k];
            m.re_[k + 1] = m.re_[k] + m.vol_.dt * m.vol_.sigma[k];
        }
        return m;
    }

    /// Same, with the drift filled in from the stationary drift condition.
    static TermStructureModel assemble_stationary(const FactorDistribution& f,
                                                  VolatilityTermStructure v,
                                                  std::vector<double> initial_forwards,
                                                  std::size_t budget = 512ull * 1024 * 1024,
                                                  int lattice_steps = -1) {
        v.mu = stationary_drift(v, f);
        return assemble(f, std::move(v), std::move(initial_forwards), budget, lattice_steps);
    }

    const FactorDistribution& factor() const { return lattice_.factor(); }
    const VolatilityTermStructure& vol() const { return vol_; }
    const Lattice& lattice() const { return lattice_; }
    double dt() const { return vol_.dt; }
    int steps() const { return vol_.steps; }
    double horizon() const { return vol_.steps * vol_.dt; }
    const std::vector<double>& initial_forwards() const { return f0_; }

    /// Cumulative loading dt * sum_{u < k dt} sigma(u); re(k) - re(t) is the
    /// exact exposure of log P^{k dt}_{t dt} to the state w.
    const Eigen::VectorXd& rho_prefix(int k) const { return re_[k]; }
    /// Cumulative drift dt * sum_{u < k dt} mu(u).
    double mu_prefix(int k) const { return pm_[k]; }
    double log_initial_bond(int k) const { return lp0_[k]; }

    double log_bond(int t_idx, const Eigen::VectorXd& w, int m_idx) const {
        return lp0_[m_idx] - lp0_[t_idx] - (re_[m_idx] - re_[t_idx]).dot(w) -
               t_idx * vol_.dt * (pm_[m_idx] - pm_[t_idx]);
    }

    double forward_at_node(const LatticeNode& node, double T) const {
        int k = maturity_index(node, T, /*allow_horizon=*/false);
        return f0_[k] + vol_.sigma[k].dot(node.w) + vol_.mu[k] * (node.step * vol_.dt);
    }

    double bond_price(const LatticeNode& node, double T) const {
        int k = maturity_index(node, T, /*allow_horizon=*/true);
        return std::exp(log_bond(node.step, node.w, k));
    }

    /// (1/dt) log(P^T / P^{T+dt}); the algebraic inverse of bond_price.
    double forward_from_bonds(const LatticeNode& node, double T) const {
        int k = maturity_index(node, T, /*allow_horizon=*/false);
        return (log_bond(node.step, node.w, k) - log_bond(node.step, node.w, k + 1)) / vol_.dt;
    }

    /// Continuously compounded zero rate: r_t(T) = -(1/(T-t)) log P^T_t.
    double spot_rate(const LatticeNode& node, double T) const {
        int k = maturity_index(node, T, /*allow_horizon=*/true);
        if (k == node.step)
            throw ValidationError("spot rate undefined at the node's own time");
        double tau = (k - node.step) * vol_.dt;
        return -log_bond(node.step, node.w, k) / tau;
    }

    /// Pre-agreed rate over (T, T']: ((T'-t) r_t(T') - (T-t) r_t(T)) / (T'-T).
    double coarse_forward(const LatticeNode& node, double T_lo, double T_hi) const {
        int lo = maturity_index(node, T_lo, /*allow_horizon=*/true);
        int hi = maturity_index(node, T_hi, /*allow_horizon=*/true);
        if (hi <= lo) throw ValidationError("coarse forward needs T' > T");
        double width = (hi - lo) * vol_.dt;
        return (log_bond(node.step, node.w, lo) - log_bond(node.step, node.w, hi)) / width;
    }

    ForwardCurve forward_curve(const LatticeNode& node) const {
        ForwardCurve c;
        c.asof_step = node.step;
        c.values.reserve(vol_.steps - node.step);
        for (int k = node.step; k < vol_.steps; ++k)
            c.values.push_back(f0_[k] + vol_.sigma[k].dot(node.w) +
                               vol_.mu[k] * (node.step * vol_.dt));
        return c;
    }

private:
    int maturity_index(const LatticeNode& node, double T, bool allow_horizon) const {
        int k = grid_index(T, vol_.dt);
        if (k < node.step)
            throw ValidationError("maturity " + std::to_string(T) + " precedes the node time");
        int limit = allow_horizon ? vol_.steps : vol_.steps - 1;
        if (k > limit)
            throw ValidationError("maturity " + std::to_string(T) + " beyond the model horizon");
        return k;
    }

    VolatilityTermStructure vol_;
    std::vector<double> f0_;
    Lattice lattice_;
    std::vector<double> lp0_;            // log initial bond prices, size steps+1
    std::vector<double> pm_;             // drift prefix, size steps+1
    std::vector<Eigen::VectorXd> re_;    // loading prefix, size steps+1
};

// --- Classical (tenor-stationary) family ----------------------------------

/// Closed-form two-state bond price: with up-count i out of t steps,
///   P^{(t)}_i(T) = (P0(t+T)/P0(t)) exp{ -T sigma (2i-t)
///                                       - sum_{u<T} sum_{1<=v<=t} mu(u+v-1) }.
inline double ho_lee_closed_form(const std::vector<double>& p0, double sigma,
                                 const std::vector<double>& mu, int t, int i, int T) {
    if (i < 0 || i > t) throw ValidationError("state index i must lie in [0, t]");
    if (T < 0 || t < 0) throw ValidationError("negative time index");
    if (static_cast<std::size_t>(t + T) >= p0.size())
        throw ValidationError("initial bond curve too short for t+T");
    double dd = 0.0;
    for (int u = 0; u < T; ++u)
        for (int v = 1; v <= t; ++v) dd += mu.at(u + v - 1);
    return p0[t + T] / p0[t] * std::exp(-T * sigma * (2.0 * i - t) - dd);
}

/// Multi-factor version with state w:
///   P^{(t)}(T) = (P0(t+T)/P0(t)) exp{ -T <sigma, w_t - w_0> - sum sum mu }.
inline double multi_closed_form(const std::vector<double>& p0, const Eigen::VectorXd& sigma,
                                const std::vector<double>& mu, int t, const Eigen::VectorXd& w,
                                int T) {
    if (T < 0 || t < 0) throw ValidationError("negative time index");
    if (static_cast<std::size_t>(t + T) >= p0.size())
        throw ValidationError("initial bond curve too short for t+T");
    double dd = 0.0;
    for (int u = 0; u < T; ++u)
        for (int v = 1; v <= t; ++v) dd += mu.at(u + v - 1);
    return p0[t + T] / p0[t] * std::exp(-T * sigma.dot(w) - dd);
}

/// One-step multiplicative curve adjustments of the two-state model:
///   h(T) = 1 / (pi + (1-pi) delta^T),  h*(T) = delta^T / (pi + (1-pi) delta^T),
/// with delta = e^{2 sigma}.
struct PerturbationFunctions {
    double pi = 0.5;
    double delta = 1.0;

    double h(int T) const { return 1.0 / (pi + (1.0 - pi) * std::pow(delta, T)); }
    double h_star(int T) const {
        double d = std::pow(delta, T);
        return d / (pi + (1.0 - pi) * d);
    }
};

inline PerturbationFunctions perturbation_functions(double pi, double sigma) {
    if (!(pi > 0.0 && pi < 1.0)) throw ValidationError("pi must lie in (0,1)");
    return PerturbationFunctions{pi, std::exp(2.0 * sigma)};
}

/// log H(T, dw) = -T <sigma, dw> - sum_{u<T} mu(u): the stationary one-step
/// price ratio of the classical family.
inline double classical_log_h(const Eigen::VectorXd& sigma, const std::vector<double>& mu, int T,
                              const Eigen::VectorXd& dw) {
    double acc = -T * sigma.dot(dw);
    for (int u = 0; u < T; ++u) acc -= mu.at(u);
    return acc;
}

/// Tenor-stationary model built iteratively from its defining recursion
///   f_t(tau) = f_{t-1}(tau+1) + <sigma, dw_t> + mu(tau),
/// one term-structure vector per lattice node. Unit time step.
class ClassicalModel {
public:
    static ClassicalModel build(const std::vector<double>& initial_bonds,
                                const Eigen::VectorXd& sigma, std::vector<double> mu,
                                const FactorDistribution& f, int horizon) {
        if (std::abs(f.dt - 1.0) > 1e-12)
            throw ValidationError("the classical family uses a unit time step");
        if (static_cast<int>(initial_bonds.size()) < horizon + 1)
            throw ValidationError("initial bond curve shorter than the horizon");
        if (std::abs(initial_bonds.at(0) - 1.0) > 1e-12)
            throw ValidationError("P0(0) must be 1");
        if (static_cast<int>(mu.size()) < horizon)
            throw ValidationError("drift map shorter than the horizon");
        ClassicalModel m;
        m.sigma_ = sigma;
        m.mu_ = std::move(mu);
        m.horizon_ = horizon;
        m.lattice_ = Lattice::build(f, horizon);
        m.fwd_.resize(horizon + 1);
        m.fwd_[0].resize(1);
        m.fwd_[0][0].resize(horizon);
        for (int tau = 0; tau < horizon; ++tau)
            m.fwd_[0][0][tau] = std::log(initial_bonds[tau] / initial_bonds[tau + 1]);
        for (int t = 1; t <= horizon; ++t) {
            const auto& level = m.lattice_.level(t);
            m.fwd_[t].resize(level.size());
            for (std::size_t i = 0; i < level.size(); ++i) {
                const LatticeNode& node = level[i];
                int s = 0;
                while (node.counts[s] == 0) ++s;
                std::vector<int> pc = node.counts;
                --pc[s];
                int pi_idx = m.lattice_.locate(LatticeNode{t - 1, pc, Eigen::VectorXd()});
                const auto& parent = m.fwd_[t - 1][pi_idx];
                double shock = sigma.dot(f.outcomes[s]);
                auto& cur = m.fwd_[t][i];
                cur.resize(horizon - t);
                for (int tau = 0; tau < horizon - t; ++tau)
                    cur[tau] = parent[tau + 1] + shock + m.mu_[tau];
            }
        }
        return m;
    }

    const Lattice& lattice() const { return lattice_; }
    int horizon() const { return horizon_; }

    /// f_t(tau) at a node (time to maturity tau).
    double forward(const LatticeNode& node, int tau) const {
        int i = lattice_.locate(node);
        return fwd_[node.step].at(i).at(tau);
    }

    /// P^{(t)}(ttm) = exp{-sum_{u<ttm} f_t(u)}.
    double bond_price(const LatticeNode& node, int ttm) const {
        int i = lattice_.locate(node);
        if (ttm < 0 || ttm > horizon_ - node.step)
            throw ValidationError("time to maturity outside the remaining horizon");
        double acc = 0.0;
        for (int u = 0; u < ttm; ++u) acc += fwd_[node.step][i][u];
        return std::exp(-acc);
    }

    /// Tree-derived H(T, outcome) = P^{(t+1)}(T) P^{(t)}(1) / P^{(t)}(T+1).
    double h_ratio(const LatticeNode& node, int outcome, int T) const {
        const LatticeNode& c = lattice_.child(node, outcome);
        return bond_price(c, T) * bond_price(node, 1) / bond_price(node, T + 1);
    }

private:
    Eigen::VectorXd sigma_;
    std::vector<double> mu_;
    int horizon_ = 0;
    Lattice lattice_;
    std::vector<std::vector<std::vector<double>>> fwd_;  // [t][node][tau]
};

// --- initial curve CSV (header: T,F0) --------------------------------------

inline std::vector<double> read_initial_curve_csv(const std::string& path, double dt, int steps) {
    CsvTable t = read_csv(path);
    int t_col = t.require_column("T", path);
    int f_col = t.require_column("F0", path);
    std::vector<double> f0(steps, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::string ctx = path + ":" + std::to_string(r + 2);
        double T = parse_double(t.rows[r][t_col], ctx);
        int k = grid_index(T, dt, "curve maturity");
        if (k >= steps) continue;  // rows past the horizon are tolerated
        f0[k] = parse_double(t.rows[r][f_col], ctx);
    }
    for (int k = 0; k < steps; ++k)
        if (std::isnan(f0[k]))
            throw ValidationError(path + ": missing forward for T=" + std::to_string(k * dt));
    return f0;
}

inline std::string initial_curve_to_csv(const std::vector<double>& f0, double dt) {
    std::ostringstream out;
    out << "T,F0\n";
    for (std::size_t k = 0; k < f0.size(); ++k)
        out << format_double(k * dt) << "," << format_double(f0[k]) << "\n";
    return out.str();
}

}  // namespace tse
