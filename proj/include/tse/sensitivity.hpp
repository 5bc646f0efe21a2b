#pragma once

// Cash-flow analytics on a model node: present value, classical and
// factor-wise durations/convexities, the truncated one-step expansion of
// dPV/PV, and its exact finite-state counterpart
//   dPV/PV = -sum_j Dt_j dw^j + (1/2) Dt2 dt,
// whose coefficients come from expanding each leg's exact one-step discount
// change in the orthonormal basis {1, dw^j/sqrt(dt)} of the outcome space.
// The exact expansion holds with equality at every outcome, not just
// asymptotically.
//
// Conventions: durations and convexities are reported positive for a long
// single cash flow; the expansion terms keep their own signs. Maturities sit
// on the grid; the factor-weight operations need sigma at the leg maturity
// and therefore accept legs up to horizon - dt (plain pricing goes to the
// horizon).

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tse/csv.hpp"
#include "tse/errors.hpp"
#include "tse/model.hpp"

namespace tse {

struct CashFlow {
    std::vector<std::pair<double, double>> legs;  // (maturity years, amount)

    void validate() const {
        for (std::size_t l = 0; l < legs.size(); ++l) {
            if (!std::isfinite(legs[l].second) || !std::isfinite(legs[l].first))
                throw ValidationError("non-finite cash-flow leg");
            if (l > 0 && !(legs[l].first > legs[l - 1].first))
                throw ValidationError("cash-flow maturities must be strictly increasing");
        }
    }
};

struct SensitivityReport {
    double pv = 0.0;
    double duration = 0.0;
    double convexity = 0.0;
    Eigen::VectorXd gen_durations;
    Eigen::MatrixXd gen_convexities;
    Eigen::VectorXd ito_d;   // exact first-order coefficients Dt_j
    double ito_d2 = 0.0;     // exact second-order coefficient Dt2
};

namespace detail {

struct LegTerms {
    std::vector<int> idx;        // grid index of each leg maturity
    std::vector<double> amount;
    std::vector<double> disc;    // P^{T_l}_t at the node
    double pv = 0.0;
};

inline LegTerms leg_terms(const CashFlow& cf, const TermStructureModel& m,
                          const LatticeNode& node, bool need_sigma_at_maturity) {
    cf.validate();
    LegTerms lt;
    for (const auto& [T, amount] : cf.legs) {
        int k = grid_index(T, m.dt(), "leg maturity");
        if (k <= node.step)
            throw ValidationError("cash-flow leg at or before the valuation time");
        int limit = need_sigma_at_maturity ? m.steps() - 1 : m.steps();
        if (k > limit)
            throw ValidationError("cash-flow leg beyond the model horizon for this operation");
        lt.idx.push_back(k);
        lt.amount.push_back(amount);
        lt.disc.push_back(std::exp(m.log_bond(node.step, node.w, k)));
        lt.pv += amount * lt.disc.back();
    }
    return lt;
}

inline void require_nonzero_pv(const LegTerms& lt) {
    if (lt.pv == 0.0) throw ValidationError("present value is zero; sensitivity undefined");
}

}  // namespace detail

inline double present_value(const CashFlow& cf, const TermStructureModel& m,
                            const LatticeNode& node) {
    return detail::leg_terms(cf, m, node, false).pv;
}

inline double duration(const CashFlow& cf, const TermStructureModel& m, const LatticeNode& node) {
    auto lt = detail::leg_terms(cf, m, node, false);
    detail::require_nonzero_pv(lt);
    double acc = 0.0;
    for (std::size_t l = 0; l < lt.idx.size(); ++l)
        acc += (lt.idx[l] - node.step) * m.dt() * lt.amount[l] * lt.disc[l];
    return acc / lt.pv;
}

inline double convexity(const CashFlow& cf, const TermStructureModel& m, const LatticeNode& node) {
    auto lt = detail::leg_terms(cf, m, node, false);
    detail::require_nonzero_pv(lt);
    double acc = 0.0;
    for (std::size_t l = 0; l < lt.idx.size(); ++l) {
        double tau = (lt.idx[l] - node.step) * m.dt();
        acc += tau * tau * lt.amount[l] * lt.disc[l];
    }
    return acc / lt.pv;
}

/// Factor-wise first-order sensitivities with weights rho^j(T_l) - rho^j(t).
inline Eigen::VectorXd generalized_durations(const CashFlow& cf, const TermStructureModel& m,
                                             const LatticeNode& node) {
    auto lt = detail::leg_terms(cf, m, node, true);
    detail::require_nonzero_pv(lt);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m.vol().n());
    for (std::size_t l = 0; l < lt.idx.size(); ++l) {
        Eigen::VectorXd weight = m.rho_prefix(lt.idx[l] + 1) - m.rho_prefix(node.step + 1);
        acc += weight * (lt.amount[l] * lt.disc[l]);
    }
    return acc / lt.pv;
}

/// Factor-pair second-order sensitivities; symmetric by construction.
inline Eigen::MatrixXd generalized_convexities(const CashFlow& cf, const TermStructureModel& m,
                                               const LatticeNode& node) {
    auto lt = detail::leg_terms(cf, m, node, true);
    detail::require_nonzero_pv(lt);
    const int n = m.vol().n();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t l = 0; l < lt.idx.size(); ++l) {
        Eigen::VectorXd weight = m.rho_prefix(lt.idx[l] + 1) - m.rho_prefix(node.step + 1);
        acc += weight * weight.transpose() * (lt.amount[l] * lt.disc[l]);
    }
    return acc / lt.pv;
}

namespace detail {

// Exact one-step change of each leg's discount factor from node (t, w) to
// the outcome-s child: log P^{M}_{t+dt}(w + dw(s)) - log P^{M}_t(w)
//   = alpha_l - <beta_l, dw(s)>,
// with beta_l the cumulative loading over [t+dt, M) and alpha_l collecting
// the short rate and the drift accumulated over the same window.
struct OneStepTerms {
    std::vector<double> alpha;
    std::vector<Eigen::VectorXd> beta;
};

inline OneStepTerms one_step_terms(const LegTerms& lt, const TermStructureModel& m,
                                   const LatticeNode& node) {
    OneStepTerms ot;
    const int t = node.step;
    double short_forward = m.forward_at_node(node, t * m.dt());
    for (std::size_t l = 0; l < lt.idx.size(); ++l) {
        int k = lt.idx[l];
        ot.alpha.push_back(m.dt() * short_forward -
                           m.dt() * (m.mu_prefix(k) - m.mu_prefix(t + 1)));
        ot.beta.push_back(m.rho_prefix(k) - m.rho_prefix(t + 1));
    }
    return ot;
}

}  // namespace detail

/// Exact relative one-step P&L at a given outcome: revaluing every leg at the
/// child node, expressed through the closed-form discount changes.
inline double ito_pnl(const CashFlow& cf, const TermStructureModel& m, const LatticeNode& node,
                      int outcome) {
    if (outcome < 0 || outcome > m.factor().n) throw ValidationError("outcome index out of range");
    auto lt = detail::leg_terms(cf, m, node, false);
    detail::require_nonzero_pv(lt);
    auto ot = detail::one_step_terms(lt, m, node);
    const Eigen::VectorXd& dw = m.factor().outcomes[outcome];
    double acc = 0.0;
    for (std::size_t l = 0; l < lt.idx.size(); ++l)
        acc += lt.amount[l] * lt.disc[l] * (std::exp(ot.alpha[l] - ot.beta[l].dot(dw)) - 1.0);
    return acc / lt.pv;
}

/// Coefficients of the exact expansion: ito_pnl(s) = -<Dt, dw(s)> + Dt2 dt/2
/// holds with equality at every outcome.
inline std::pair<Eigen::VectorXd, double> ito_coefficients(const CashFlow& cf,
                                                           const TermStructureModel& m,
                                                           const LatticeNode& node) {
    auto lt = detail::leg_terms(cf, m, node, false);
    detail::require_nonzero_pv(lt);
    auto ot = detail::one_step_terms(lt, m, node);
    const FactorDistribution& f = m.factor();
    Eigen::VectorXd d = Eigen::VectorXd::Zero(f.n);
    double d2 = 0.0;
    for (std::size_t l = 0; l < lt.idx.size(); ++l) {
        double w_l = lt.amount[l] * lt.disc[l] / lt.pv;
        double mean = 0.0;
        Eigen::VectorXd cross = Eigen::VectorXd::Zero(f.n);
        for (int s = 0; s <= f.n; ++s) {
            double e = std::exp(ot.alpha[l] - ot.beta[l].dot(f.outcomes[s]));
            mean += f.probs[s] * e;
            cross += f.probs[s] * e * f.outcomes[s];
        }
        d -= w_l / m.dt() * cross;        // E[dw^j e^F] / dt, leg-weighted
        d2 += 2.0 * w_l * (mean - 1.0) / m.dt();
    }
    return {std::move(d), d2};
}

/// Truncated one-step expansion: first order in the factor weights
/// rho(T_l) - rho(t), half their square, and the exact deterministic
/// drift term. The gap to ito_pnl vanishes faster than dt.
inline double taylor_pnl(const CashFlow& cf, const TermStructureModel& m, const LatticeNode& node,
                         int outcome) {
    if (outcome < 0 || outcome > m.factor().n) throw ValidationError("outcome index out of range");
    auto lt = detail::leg_terms(cf, m, node, true);
    detail::require_nonzero_pv(lt);
    auto ot = detail::one_step_terms(lt, m, node);
    const Eigen::VectorXd& dw = m.factor().outcomes[outcome];
    double acc = 0.0;
    for (std::size_t l = 0; l < lt.idx.size(); ++l) {
        Eigen::VectorXd weight = m.rho_prefix(lt.idx[l] + 1) - m.rho_prefix(node.step + 1);
        double x = weight.dot(dw);
        acc += lt.amount[l] * lt.disc[l] * (-x + 0.5 * x * x + ot.alpha[l]);
    }
    return acc / lt.pv;
}

inline SensitivityReport sensitivity_report(const CashFlow& cf, const TermStructureModel& m,
                                            const LatticeNode& node) {
    SensitivityReport rep;
    rep.pv = present_value(cf, m, node);
    rep.duration = duration(cf, m, node);
    rep.convexity = convexity(cf, m, node);
    rep.gen_durations = generalized_durations(cf, m, node);
    rep.gen_convexities = generalized_convexities(cf, m, node);
    auto [d, d2] = ito_coefficients(cf, m, node);
    rep.ito_d = std::move(d);
    rep.ito_d2 = d2;
    return rep;
}

enum class HedgeMode { Delta, DeltaGamma };

inline HedgeMode hedge_mode_from_string(const std::string& s) {
    if (s == "delta") return HedgeMode::Delta;
    if (s == "delta-gamma") return HedgeMode::DeltaGamma;
    throw ValidationError("unknown hedge mode '" + s + "' (want delta or delta-gamma)");
}

/// Instrument weights zeroing the portfolio's factor-wise durations (and,
/// in delta-gamma mode, convexities). Exactly determined systems solve
/// directly, overdetermined ones by least squares, underdetermined ones by
/// minimum norm.
inline Eigen::VectorXd hedge(const CashFlow& target, const std::vector<CashFlow>& instruments,
                             const TermStructureModel& m, const LatticeNode& node,
                             HedgeMode mode = HedgeMode::Delta) {
    if (instruments.empty()) throw ValidationError("need at least one hedge instrument");
    const int n = m.vol().n();
    const int n_rows = mode == HedgeMode::Delta ? n : n + n * (n + 1) / 2;
    const int n_cols = static_cast<int>(instruments.size());
    Eigen::MatrixXd a(n_rows, n_cols);
    Eigen::VectorXd b(n_rows);

    auto fill = [&](const CashFlow& cf, auto&& sink) {
        double pv = present_value(cf, m, node);
        Eigen::VectorXd d = generalized_durations(cf, m, node) * pv;
        int r = 0;
        for (int j = 0; j < n; ++j) sink(r++, d(j));
        if (mode == HedgeMode::DeltaGamma) {
            Eigen::MatrixXd c = generalized_convexities(cf, m, node) * pv;
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) sink(r++, c(i, j));
        }
        return pv;
    };

    for (int i = 0; i < n_cols; ++i) {
        double pv = fill(instruments[i], [&](int r, double v) { a(r, i) = v; });
        if (pv == 0.0)
            throw ValidationError("hedge instrument " + std::to_string(i) + " has zero value");
    }
    fill(target, [&](int r, double v) { b(r) = -v; });

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    cod.setThreshold(1e-10);
    if (cod.rank() < std::min(n_rows, n_cols))
        throw ValidationError("singular hedge system: rank " + std::to_string(cod.rank()) +
                              " for " + std::to_string(n_rows) + "x" + std::to_string(n_cols) +
                              " constraints");
    return cod.solve(b);
}

// --- cash-flow CSV (header: T,amount) ---------------------------------------

inline CashFlow read_cashflow_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    int t_col = t.require_column("T", path);
    int a_col = t.require_column("amount", path);
    CashFlow cf;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::string ctx = path + ":" + std::to_string(r + 2);
        cf.legs.emplace_back(parse_double(t.rows[r][t_col], ctx),
                             parse_double(t.rows[r][a_col], ctx));
    }
    cf.validate();
    return cf;
}

inline std::string cashflow_to_csv(const CashFlow& cf) {
    std::ostringstream out;
    out << "T,amount\n";
    for (const auto& [T, a] : cf.legs) out << format_double(T) << "," << format_double(a) << "\n";
    return out.str();
}

}  // namespace tse
