#pragma once

// State-price densities, risk-neutral kernels and the martingale checks
// tying them together. Everything here is read-only analysis of an
// immutable model; conditional expectations run by backward induction over
// the recombining lattice, never by path enumeration.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tse/errors.hpp"
#include "tse/factors.hpp"
#include "tse/lattice.hpp"
#include "tse/model.hpp"
#include "tse/volstruct.hpp"

namespace tse {

struct StatePriceDensity {
    std::vector<std::vector<double>> values;      // D, [level][node index]
    std::vector<std::vector<double>> normalized;  // D-hat, level means are 1
};

/// The density pricing the stationary model exactly. Its random part is the
/// exponential tilt exp< -rho(t - dt), w_t > (cumulative loading up to,
/// excluding, t); the normalized variant divides by the closed-form level
/// mean E[exp<x, w_t>] = E[exp<x, dw>]^{t/dt}, and the raw density scales
/// D_t = P^t_0 * D-hat_t so that conditional-expectation ratios reproduce
/// the model's bond prices including its initial curve.
inline StatePriceDensity canonical_spd(const TermStructureModel& m) {
    const Lattice& lat = m.lattice();
    const FactorDistribution& f = m.factor();
    StatePriceDensity spd;
    spd.values.resize(lat.horizon() + 1);
    spd.normalized.resize(lat.horizon() + 1);
    for (int t = 0; t <= lat.horizon(); ++t) {
        const auto& level = lat.level(t);
        Eigen::VectorXd expo = -m.rho_prefix(t);
        double log_level_mean = t * f.log_mgf(expo);
        double log_p0 = m.log_initial_bond(t);
        auto& vals = spd.values[t];
        auto& norm = spd.normalized[t];
        vals.resize(level.size());
        norm.resize(level.size());
        for (std::size_t i = 0; i < level.size(); ++i) {
            norm[i] = std::exp(expo.dot(level[i].w) - log_level_mean);
            vals[i] = std::exp(log_p0) * norm[i];
        }
    }
    return spd;
}

/// P^T_t = E[D_T | F_t] / D_t via a backward sweep under real-world
/// probabilities.
inline double spd_bond_price(const StatePriceDensity& spd, const Lattice& lat,
                             const LatticeNode& node, double T) {
    const double dt = lat.factor().dt;
    int m_idx = grid_index(T, dt);
    if (m_idx < node.step) throw ValidationError("maturity precedes the node time");
    if (m_idx > lat.horizon()) throw ValidationError("maturity beyond the lattice horizon");
    int node_idx = lat.locate(node);
    std::vector<double> cond = spd.values[m_idx];
    for (int t = m_idx - 1; t >= node.step; --t) {
        const auto& level = lat.level(t);
        std::vector<double> next(level.size());
        for (std::size_t i = 0; i < level.size(); ++i) {
            double acc = 0.0;
            for (int s = 0; s <= lat.factor().n; ++s)
                acc += lat.factor().probs[s] * cond[lat.child_index(t, static_cast<int>(i), s)];
            next[i] = acc;
        }
        cond = std::move(next);
    }
    return cond[node_idx] / spd.values[node.step][node_idx];
}

/// One-step risk-neutral kernel of the stationary model,
///   pi_t(s) = p_s exp< -rho(t), dw(s) > / E[ exp< -rho(t), dw > ],
/// node-independent by stationarity.
inline Eigen::VectorXd risk_neutral_probs(const TermStructureModel& m, const LatticeNode& node) {
    if (node.step >= m.steps())
        throw ValidationError("no transition out of a node at the model horizon");
    const FactorDistribution& f = m.factor();
    const Eigen::VectorXd x = -m.rho_prefix(node.step + 1);
    double logz = f.log_mgf(x);
    Eigen::VectorXd pi(f.num_outcomes());
    for (int s = 0; s < f.num_outcomes(); ++s) {
        pi(s) = f.probs[s] * std::exp(x.dot(f.outcomes[s]) - logz);
        if (!(pi(s) > 0.0))
            throw ValidationError("degenerate risk-neutral weight: arbitrage flagged");
    }
    return pi;
}

struct MartingaleReport {
    double max_error = 0.0;
    std::vector<double> per_level;  // worst one-step residual per level

    std::string summary() const {
        return "max martingale error " + std::to_string(max_error);
    }
};

/// Worst absolute deviation of E^pi[ P^T_{t+dt} P^{t+dt}_t / P^T_t ] from 1
/// over all nodes and maturities, with the canonical kernel.
inline MartingaleReport verify_martingale(const TermStructureModel& m) {
    MartingaleReport rep;
    const FactorDistribution& f = m.factor();
    const int N = m.steps();
    rep.per_level.assign(N, 0.0);
    for (int t = 0; t < N; ++t) {
        const auto& level = m.lattice().level(t);
        Eigen::VectorXd pi = risk_neutral_probs(m, level.front());
        for (const auto& node : level) {
            double one_step = m.log_bond(t, node.w, t + 1);
            for (int k = t + 1; k <= N; ++k) {
                double lp_parent = m.log_bond(t, node.w, k);
                double acc = 0.0;
                for (int s = 0; s < f.num_outcomes(); ++s) {
                    double lp_child = m.log_bond(t + 1, node.w + f.outcomes[s], k);
                    acc += pi(s) * std::exp(lp_child + one_step - lp_parent);
                }
                double err = std::abs(acc - 1.0);
                rep.per_level[t] = std::max(rep.per_level[t], err);
            }
        }
        rep.max_error = std::max(rep.max_error, rep.per_level[t]);
    }
    return rep;
}

struct NasReport {
    double pi_roundtrip_dev = 0.0;    // kernel from D-ratios vs canonical kernel
    double spd_roundtrip_dev = 0.0;   // normalized density rebuilt from pi vs canonical
    double recombination_dev = 0.0;   // path consistency of the rebuilt density
    double level_mean_dev = 0.0;      // |E[D-hat_t] - 1|
    double martingale_error = 0.0;    // one-step pricing residual

    double worst() const {
        return std::max({pi_roundtrip_dev, spd_roundtrip_dev, recombination_dev, level_mean_dev,
                         martingale_error});
    }
};

/// Round-trips the equivalent no-arbitrage representations: density -> kernel
/// (pi(s) proportional to p_s D_child / D_node) and kernel -> density
/// (one-step state prices accumulated through the tree), reporting the
/// worst deviations.
inline NasReport nas_equivalence_check(const TermStructureModel& m) {
    NasReport rep;
    const FactorDistribution& f = m.factor();
    const Lattice& lat = m.lattice();
    const int N = m.steps();
    StatePriceDensity spd = canonical_spd(m);

    for (int t = 0; t <= N; ++t) {
        const auto& level = lat.level(t);
        double mean = 0.0;
        for (std::size_t i = 0; i < level.size(); ++i)
            mean += lat.node_probability(level[i]) * spd.normalized[t][i];
        rep.level_mean_dev = std::max(rep.level_mean_dev, std::abs(mean - 1.0));
    }

    // kernel from density ratios, against the closed-form kernel
    for (int t = 0; t < N; ++t) {
        const auto& level = lat.level(t);
        Eigen::VectorXd canonical = risk_neutral_probs(m, level.front());
        for (std::size_t i = 0; i < level.size(); ++i) {
            Eigen::VectorXd delta(f.num_outcomes());
            for (int s = 0; s < f.num_outcomes(); ++s)
                delta(s) = spd.values[t + 1][lat.child_index(t, static_cast<int>(i), s)] /
                           spd.values[t][i];
            double z = 0.0;
            for (int s = 0; s < f.num_outcomes(); ++s) z += f.probs[s] * delta(s);
            for (int s = 0; s < f.num_outcomes(); ++s) {
                double pi_s = f.probs[s] * delta(s) / z;
                rep.pi_roundtrip_dev =
                    std::max(rep.pi_roundtrip_dev, std::abs(pi_s - canonical(s)));
            }
        }
    }

    // density rebuilt from the kernel: D(child) = D(node) * pi(s) P^{t+dt}_t / p_s,
    // checked for recombination consistency, then compared after normalization
    std::vector<std::vector<double>> rebuilt(N + 1);
    rebuilt[0] = {1.0};
    for (int t = 0; t < N; ++t) {
        const auto& level = lat.level(t);
        const auto& next = lat.level(t + 1);
        Eigen::VectorXd pi = risk_neutral_probs(m, level.front());
        rebuilt[t + 1].assign(next.size(), 0.0);
        std::vector<bool> seen(next.size(), false);
        for (std::size_t i = 0; i < level.size(); ++i) {
            double p_short = std::exp(m.log_bond(t, level[i].w, t + 1));
            for (int s = 0; s < f.num_outcomes(); ++s) {
                int ci = lat.child_index(t, static_cast<int>(i), s);
                double cand = rebuilt[t][i] * pi(s) * p_short / f.probs[s];
                if (seen[ci]) {
                    double rel = std::abs(cand - rebuilt[t + 1][ci]) /
                                 std::max(1e-300, std::abs(rebuilt[t + 1][ci]));
                    rep.recombination_dev = std::max(rep.recombination_dev, rel);
                } else {
                    rebuilt[t + 1][ci] = cand;
                    seen[ci] = true;
                }
            }
        }
        double mean = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i)
            mean += lat.node_probability(next[i]) * rebuilt[t + 1][i];
        for (std::size_t i = 0; i < next.size(); ++i) {
            double rel = std::abs(rebuilt[t + 1][i] / mean - spd.normalized[t + 1][i]) /
                         std::max(1e-300, spd.normalized[t + 1][i]);
            rep.spd_roundtrip_dev = std::max(rep.spd_roundtrip_dev, rel);
        }
    }

    rep.martingale_error = verify_martingale(m).max_error;
    return rep;
}

/// Least-squares one-step measure from pricing constraints: each row of H
/// holds the n+1 outcome ratios that must average to 1. Used to recover the
/// constant kernel of tenor-stationary models node by node.
struct OneStepMeasure {
    Eigen::VectorXd pi;
    double residual = 0.0;
    bool strictly_positive = false;
};

inline OneStepMeasure solve_one_step_measure(const Eigen::MatrixXd& H) {
    const int k = static_cast<int>(H.cols());
    Eigen::MatrixXd A(H.rows() + 1, k);
    A.topRows(H.rows()) = H;
    A.bottomRows(1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Ones(H.rows() + 1);
    OneStepMeasure out;
    out.pi = A.completeOrthogonalDecomposition().solve(b);
    out.residual = (A * out.pi - b).cwiseAbs().maxCoeff();
    out.strictly_positive = (out.pi.array() > 0.0).all();
    return out;
}

/// Assembles a stationary-drift model and enforces the construction-time
/// martingale tolerance.
inline std::pair<TermStructureModel, MartingaleReport> build_verified_model(
    const FactorDistribution& f, VolatilityTermStructure v, std::vector<double> initial_forwards,
    double tolerance = 1e-10, std::size_t budget = 512ull * 1024 * 1024) {
    TermStructureModel m =
        TermStructureModel::assemble(f, std::move(v), std::move(initial_forwards), budget);
    MartingaleReport rep = verify_martingale(m);
    if (!(rep.max_error <= tolerance)) {
        std::string detail;
        for (std::size_t t = 0; t < rep.per_level.size(); ++t)
            detail += "\n  level " + std::to_string(t) + ": " + std::to_string(rep.per_level[t]);
        throw ValidationError("martingale verification failed: max error " +
                              std::to_string(rep.max_error) + " > tolerance " +
                              std::to_string(tolerance) + detail);
    }
    return {std::move(m), std::move(rep)};
}

/// Worst one-step residual, minimized over a single constant two-state
/// measure, for the yield-parameterized stationary family
///   -(1/tau) log P^{(t)}(tau) = sigma_y(tau) w_t + mu_y(tau) t.
/// A floor bounded away from zero certifies that no constant kernel prices
/// the tree, i.e. the family admits only parallel shifts.
inline double yield_stationary_min_residual(const std::function<double(int)>& sigma_y,
                                            const std::function<double(int)>& mu_y,
                                            const FactorDistribution& f, int horizon) {
    if (f.n != 1) throw ValidationError("two-state check expects a single factor");
    Lattice lat = Lattice::build(f, horizon);
    auto log_p = [&](int t, double w, int tau) {
        if (tau == 0) return 0.0;
        return -tau * (sigma_y(tau) * w + mu_y(tau) * t);
    };
    // H(T, s) at each (node, maturity): collect the residual terms once
    std::vector<std::pair<double, double>> hh;  // (H_up, H_down)
    for (int t = 0; t + 1 <= horizon; ++t) {
        for (const auto& node : lat.level(t)) {
            for (int T = 1; T + 1 <= horizon - t; ++T) {
                double base = log_p(t, node.w(0), 1) - log_p(t, node.w(0), T + 1);
                double up = std::exp(log_p(t + 1, node.w(0) + f.outcomes[0](0), T) + base);
                double dn = std::exp(log_p(t + 1, node.w(0) + f.outcomes[1](0), T) + base);
                hh.emplace_back(up, dn);
            }
        }
    }
    auto residual = [&](double pi) {
        double worst = 0.0;
        for (const auto& [up, dn] : hh)
            worst = std::max(worst, std::abs(pi * up + (1.0 - pi) * dn - 1.0));
        return worst;
    };
    // max of |affine in pi| terms is convex: golden-section over (0,1)
    double lo = 1e-9, hi = 1.0 - 1e-9;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = residual(x1), f2 = residual(x2);
    for (int it = 0; it < 200; ++it) {
        if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = residual(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = residual(x2);
        }
    }
    return std::min(f1, f2);
}

}  // namespace tse
