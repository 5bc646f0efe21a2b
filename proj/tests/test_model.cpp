#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tse/drift.hpp"
#include "tse/model.hpp"

using namespace tse;

namespace {

VolatilityTermStructure constant_vol(double c, double dt, int steps, int n = 1) {
    std::vector<Eigen::VectorXd> sig(steps, Eigen::VectorXd::Constant(n, c));
    return VolatilityTermStructure::from_grid(dt, std::move(sig));
}

VolatilityTermStructure random_vol(double cap, double dt, int steps, int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-cap, cap);
    std::vector<Eigen::VectorXd> sig(steps);
    for (auto& s : sig) {
        s.resize(n);
        for (int i = 0; i < n; ++i) s(i) = u(rng);
    }
    return VolatilityTermStructure::from_grid(dt, std::move(sig));
}

std::vector<double> flat_curve(double r, int steps) { return std::vector<double>(steps, r); }

TermStructureModel small_model(unsigned seed = 1, int n = 2, double dt = 0.5, int steps = 16) {
    FactorDistribution f = equal_probability_factor(n, dt);
    VolatilityTermStructure v = random_vol(0.03, dt, steps, n, seed);
    std::mt19937 rng(seed + 1000);
    std::uniform_real_distribution<double> u(0.005, 0.06);
    std::vector<double> f0(steps);
    for (double& x : f0) x = u(rng);
    return TermStructureModel::assemble_stationary(f, std::move(v), std::move(f0));
}

// Accumulate the one-step forward dynamics along an explicit outcome path.
double forward_by_path(const TermStructureModel& m, const std::vector<int>& path, double T) {
    int k = grid_index(T, m.dt());
    double f = m.initial_forwards()[k];
    for (int s : path)
        f += m.vol().sigma[k].dot(m.factor().outcomes[s]) + m.vol().mu[k] * m.dt();
    return f;
}

const LatticeNode* walk(const TermStructureModel& m, const std::vector<int>& path) {
    const LatticeNode* node = &m.lattice().root();
    for (int s : path) node = &m.lattice().child(*node, s);
    return node;
}

}  // namespace

TEST(ForwardAtNode, RootReproducesInitialCurve) {
    TermStructureModel m = small_model();
    for (int k = 0; k < m.steps(); ++k)
        EXPECT_EQ(m.forward_at_node(m.lattice().root(), k * m.dt()), m.initial_forwards()[k]);
}

TEST(ForwardAtNode, FrozenWhenVolAndDriftVanish) {
    FactorDistribution f = binary_ho_lee(0.5);
    TermStructureModel m = TermStructureModel::assemble(f, constant_vol(0.0, 0.5, 10),
                                                        flat_curve(0.04, 10));
    for (int t = 0; t <= 10; ++t)
        for (const auto& node : m.lattice().level(t))
            for (int k = t; k < 10; ++k)
                EXPECT_EQ(m.forward_at_node(node, k * 0.5), 0.04);
}

TEST(ForwardAtNode, MatchesPathAccumulationInBothOrders) {
    FactorDistribution f = binary_ho_lee(1.0);
    VolatilityTermStructure v = constant_vol(0.02, 1.0, 8);
    TermStructureModel m =
        TermStructureModel::assemble_stationary(f, std::move(v), flat_curve(0.05, 8));
    for (std::vector<int> path : {std::vector<int>{0, 1}, std::vector<int>{1, 0}}) {
        const LatticeNode* node = walk(m, path);
        for (int k = 2; k < 8; ++k) {
            double direct = m.forward_at_node(*node, k * 1.0);
            EXPECT_NEAR(direct, forward_by_path(m, path, k * 1.0), 1e-13);
        }
    }
}

TEST(ForwardAtNode, RejectsMaturityOutsideWindow) {
    TermStructureModel m = small_model();
    const LatticeNode& node = m.lattice().level(4)[2];
    EXPECT_THROW(m.forward_at_node(node, 3 * m.dt()), ValidationError);
    EXPECT_THROW(m.forward_at_node(node, m.horizon()), ValidationError);
}

TEST(BondPrice, OneAtOwnMaturity) {
    TermStructureModel m = small_model(7);
    for (int t = 0; t <= m.steps(); t += 4)
        for (const auto& node : m.lattice().level(t))
            EXPECT_EQ(m.bond_price(node, t * m.dt()), 1.0);
}

TEST(BondPrice, FlatCurveDiscountsExponentially) {
    FactorDistribution f = binary_ho_lee(0.25);
    TermStructureModel m = TermStructureModel::assemble(f, constant_vol(0.0, 0.25, 20),
                                                        flat_curve(0.03, 20));
    const LatticeNode& root = m.lattice().root();
    for (int k = 0; k <= 20; ++k)
        EXPECT_NEAR(m.bond_price(root, k * 0.25), std::exp(-0.03 * k * 0.25), 1e-15);
}

TEST(BondPrice, StrictlyPositiveWithNegativeRates) {
    FactorDistribution f = binary_ho_lee(0.5);
    TermStructureModel m = TermStructureModel::assemble_stationary(f, constant_vol(0.02, 0.5, 12),
                                                                   flat_curve(-0.01, 12));
    for (int t = 0; t <= 12; ++t)
        for (const auto& node : m.lattice().level(t))
            for (int k = t; k <= 12; ++k) EXPECT_GT(m.bond_price(node, k * 0.5), 0.0);
}

TEST(ForwardFromBonds, InvertsBondPrices) {
    TermStructureModel m = small_model(3);
    for (int t = 0; t < m.steps(); t += 3)
        for (const auto& node : m.lattice().level(t))
            for (int k = t; k + 1 < m.steps(); ++k) {
                double implied = m.forward_from_bonds(node, k * m.dt());
                double direct = m.forward_at_node(node, k * m.dt());
                EXPECT_NEAR(implied, direct, 1e-12);
                double rebuilt = m.bond_price(node, k * m.dt()) *
                                 std::exp(-implied * m.dt());
                EXPECT_NEAR(rebuilt / m.bond_price(node, (k + 1) * m.dt()), 1.0, 1e-14);
            }
}

TEST(SpotRate, FlatCurveReturnsTheRate) {
    FactorDistribution f = binary_ho_lee(0.25);
    TermStructureModel m = TermStructureModel::assemble(f, constant_vol(0.0, 0.25, 16),
                                                        flat_curve(0.045, 16));
    const LatticeNode& root = m.lattice().root();
    for (int k = 1; k <= 16; ++k) EXPECT_NEAR(m.spot_rate(root, k * 0.25), 0.045, 1e-14);
}

TEST(SpotRate, ZeroCurveGivesZero) {
    FactorDistribution f = binary_ho_lee(0.5);
    TermStructureModel m = TermStructureModel::assemble(f, constant_vol(0.0, 0.5, 8),
                                                        flat_curve(0.0, 8));
    EXPECT_EQ(m.spot_rate(m.lattice().root(), 2.0), 0.0);
}

TEST(SpotRate, RejectsAtOwnTime) {
    TermStructureModel m = small_model();
    const LatticeNode& node = m.lattice().level(2)[0];
    EXPECT_THROW(m.spot_rate(node, 2 * m.dt()), ValidationError);
}

TEST(SpotRate, MatchesPrefixExpansionOnRandomNodes) {
    TermStructureModel m = small_model(11);
    const auto& v = m.vol();
    std::mt19937 rng(4);
    for (int rep = 0; rep < 30; ++rep) {
        int t = std::uniform_int_distribution<int>(0, m.steps() - 1)(rng);
        const auto& level = m.lattice().level(t);
        const LatticeNode& node =
            level[std::uniform_int_distribution<std::size_t>(0, level.size() - 1)(rng)];
        int k = std::uniform_int_distribution<int>(t + 1, m.steps())(rng);
        // independent evaluation from raw grids
        double lp0 = 0.0, lpt = 0.0, pm = 0.0;
        Eigen::VectorXd re = Eigen::VectorXd::Zero(v.n());
        for (int u = 0; u < k; ++u) lp0 -= v.dt * m.initial_forwards()[u];
        for (int u = 0; u < t; ++u) lpt -= v.dt * m.initial_forwards()[u];
        for (int u = t; u < k; ++u) {
            pm += v.dt * v.mu[u];
            re += v.dt * v.sigma[u];
        }
        double expansion =
            (re.dot(node.w) + t * v.dt * pm + lpt - lp0) / ((k - t) * v.dt);
        EXPECT_NEAR(m.spot_rate(node, k * v.dt), expansion, 1e-12);
    }
}

TEST(CoarseForward, SingleStepEqualsInstantaneousForward) {
    TermStructureModel m = small_model(13);
    for (int t = 0; t < m.steps(); t += 5)
        for (const auto& node : m.lattice().level(t))
            for (int k = t; k + 1 < m.steps(); ++k)
                EXPECT_NEAR(m.coarse_forward(node, k * m.dt(), (k + 1) * m.dt()),
                            m.forward_from_bonds(node, k * m.dt()), 1e-14);
}

TEST(CoarseForward, FlatCurveGivesTheRate) {
    FactorDistribution f = binary_ho_lee(0.5);
    TermStructureModel m = TermStructureModel::assemble(f, constant_vol(0.0, 0.5, 12),
                                                        flat_curve(0.02, 12));
    EXPECT_NEAR(m.coarse_forward(m.lattice().root(), 1.0, 4.0), 0.02, 1e-15);
}

TEST(CoarseForward, AdditivityAcrossAdjacentIntervals) {
    TermStructureModel m = small_model(17);
    std::mt19937 rng(9);
    for (int rep = 0; rep < 25; ++rep) {
        int t = std::uniform_int_distribution<int>(0, 4)(rng);
        const auto& level = m.lattice().level(t);
        const LatticeNode& node =
            level[std::uniform_int_distribution<std::size_t>(0, level.size() - 1)(rng)];
        int a = t + 1, b = a + 3, c = b + 5;
        double lhs = (b - a) * m.dt() * m.coarse_forward(node, a * m.dt(), b * m.dt()) +
                     (c - b) * m.dt() * m.coarse_forward(node, b * m.dt(), c * m.dt());
        double rhs = (c - a) * m.dt() * m.coarse_forward(node, a * m.dt(), c * m.dt());
        EXPECT_NEAR(lhs, rhs, 1e-13);
    }
}

TEST(CoarseForward, RejectsBadOrdering) {
    TermStructureModel m = small_model();
    EXPECT_THROW(m.coarse_forward(m.lattice().root(), 2.0, 2.0), ValidationError);
}

// --- classical family -------------------------------------------------------

namespace {

std::vector<double> discount_bonds(double r, int len) {
    std::vector<double> p(len);
    for (int k = 0; k < len; ++k) p[k] = std::exp(-r * k);
    return p;
}

}  // namespace

TEST(HoLeeClosedForm, InitialConditionsAndDegenerateVol) {
    auto p0 = discount_bonds(0.04, 20);
    std::vector<double> mu(20, 0.0);
    for (int T = 0; T < 12; ++T) {
        EXPECT_NEAR(ho_lee_closed_form(p0, 0.1, mu, 0, 0, T), p0[T], 1e-16);
        EXPECT_NEAR(ho_lee_closed_form(p0, 0.0, mu, 5, 2, T), p0[5 + T] / p0[5], 1e-16);
    }
    EXPECT_THROW(ho_lee_closed_form(p0, 0.1, mu, 3, 4, 2), ValidationError);
    EXPECT_THROW(ho_lee_closed_form(p0, 0.1, mu, 3, -1, 2), ValidationError);
}

TEST(HoLeeClosedForm, MatchesRecursionBuiltTree) {
    const double sigma = 0.02, pi = 0.4;
    const int horizon = 8;
    auto p0 = discount_bonds(0.05, horizon + 14);
    std::vector<double> mu = classical_drift_map(pi, sigma, horizon + 13);
    FactorDistribution f = binary_ho_lee(1.0);
    ClassicalModel tree =
        ClassicalModel::build(p0, Eigen::VectorXd::Constant(1, sigma), mu, f, horizon);
    for (int t = 0; t <= horizon; ++t)
        for (const auto& node : tree.lattice().level(t)) {
            int i = node.counts[0];  // up moves (outcome 0 carries +sqrt(dt))
            for (int T = 0; T <= horizon - t; ++T)
                EXPECT_NEAR(tree.bond_price(node, T), ho_lee_closed_form(p0, sigma, mu, t, i, T),
                            1e-13)
                    << "t=" << t << " i=" << i << " T=" << T;
        }
}

TEST(MultiClosedForm, MatchesRecursionBuiltTreeTwoFactors) {
    const int horizon = 6;
    auto p0 = discount_bonds(0.03, horizon + 12);
    Eigen::VectorXd sigma(2);
    sigma << 0.015, -0.01;
    FactorDistribution f = equal_probability_factor(2, 1.0);
    // any strictly positive one-step measure yields a valid stationary drift
    std::vector<double> pi = {0.5, 0.2, 0.3};
    std::vector<double> mu = multi_drift_map(pi, sigma, f, horizon + 11);
    ClassicalModel tree = ClassicalModel::build(p0, sigma, mu, f, horizon);
    for (int t = 0; t <= horizon; ++t)
        for (const auto& node : tree.lattice().level(t))
            for (int T = 0; T <= horizon - t; ++T)
                EXPECT_NEAR(tree.bond_price(node, T),
                            multi_closed_form(p0, sigma, mu, t, node.w, T), 1e-13);
}

TEST(MultiClosedForm, TrivialCases) {
    auto p0 = discount_bonds(0.02, 15);
    std::vector<double> mu(15, 0.0);
    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd w(2);
    w << 0.7, -0.3;
    for (int T = 0; T < 8; ++T) {
        EXPECT_NEAR(multi_closed_form(p0, sigma, mu, 4, w, T), p0[4 + T] / p0[4], 1e-16);
        EXPECT_NEAR(multi_closed_form(p0, sigma, mu, 0, Eigen::VectorXd::Zero(2), T), p0[T],
                    1e-16);
    }
}

TEST(ClassicalTree, PathEnumerationCrossCheck) {
    // every explicit 6-step outcome path reaches the node's term structure
    const int horizon = 6;
    auto p0 = discount_bonds(0.04, horizon + 10);
    Eigen::VectorXd sigma(1);
    sigma << 0.02;
    std::vector<double> mu = classical_drift_map(0.55, 0.02, horizon + 9);
    FactorDistribution f = binary_ho_lee(1.0);
    ClassicalModel tree = ClassicalModel::build(p0, sigma, mu, f, horizon);
    std::vector<double> f0(horizon + 9);
    for (std::size_t k = 0; k < f0.size(); ++k) f0[k] = std::log(p0[k] / p0[k + 1]);
    for (int mask = 0; mask < (1 << horizon); ++mask) {
        std::vector<double> fwd(f0);
        const LatticeNode* node = &tree.lattice().root();
        for (int step = 0; step < horizon; ++step) {
            int s = (mask >> step) & 1;
            std::vector<double> next(fwd.size() - 1);
            for (std::size_t tau = 0; tau + 1 < fwd.size(); ++tau)
                next[tau] = fwd[tau + 1] + sigma.dot(f.outcomes[s]) + mu[tau];
            fwd = std::move(next);
            node = &tree.lattice().child(*node, s);
            for (int tau = 0; tau < horizon - (step + 1); ++tau)
                EXPECT_NEAR(tree.forward(*node, tau), fwd[tau], 1e-12)
                    << "mask=" << mask << " step=" << step << " tau=" << tau;
        }
    }
}

TEST(ClassicalTree, HRatioIsNodeIndependentAndMatchesClosedForm) {
    const double sigma = 0.02, pi = 0.3;
    const int horizon = 10;
    auto p0 = discount_bonds(0.05, horizon + 22);
    std::vector<double> mu = classical_drift_map(pi, sigma, horizon + 21);
    FactorDistribution f = binary_ho_lee(1.0);
    Eigen::VectorXd sv = Eigen::VectorXd::Constant(1, sigma);
    ClassicalModel tree = ClassicalModel::build(p0, sv, mu, f, horizon);
    for (int t = 0; t + 1 <= horizon; ++t)
        for (const auto& node : tree.lattice().level(t))
            for (int s = 0; s <= 1; ++s)
                for (int T = 0; T + 1 <= horizon - t; ++T) {
                    double expected = std::exp(classical_log_h(sv, mu, T, f.outcomes[s]));
                    EXPECT_NEAR(tree.h_ratio(node, s, T), expected, 1e-12);
                }
}

TEST(Perturbation, AlgebraicIdentities) {
    for (double pi : {0.3, 0.5, 0.7})
        for (double sigma : {0.005, 0.02}) {
            PerturbationFunctions pf = perturbation_functions(pi, sigma);
            EXPECT_EQ(pf.h(0), 1.0);
            EXPECT_EQ(pf.h_star(0), 1.0);
            for (int T = 0; T <= 20; ++T) {
                EXPECT_NEAR(pi * pf.h(T) + (1 - pi) * pf.h_star(T), 1.0, 1e-14);
                EXPECT_NEAR(pf.h(T) / pf.h_star(T), std::pow(pf.delta, -T), 1e-12);
            }
        }
    EXPECT_THROW(perturbation_functions(1.2, 0.1), ValidationError);
}

TEST(Perturbation, MatchesTreeDerivedH) {
    const double sigma = 0.02, pi = 0.7;
    const int horizon = 6;
    auto p0 = discount_bonds(0.03, horizon + 22);
    std::vector<double> mu = classical_drift_map(pi, sigma, horizon + 21);
    FactorDistribution f = binary_ho_lee(1.0);
    ClassicalModel tree =
        ClassicalModel::build(p0, Eigen::VectorXd::Constant(1, sigma), mu, f, horizon);
    PerturbationFunctions pf = perturbation_functions(pi, sigma);
    const LatticeNode& node = tree.lattice().level(2)[1];
    for (int T = 0; T + 1 <= horizon - 2; ++T) {
        EXPECT_NEAR(tree.h_ratio(node, 0, T), pf.h(T), 1e-13);       // up move
        EXPECT_NEAR(tree.h_ratio(node, 1, T), pf.h_star(T), 1e-13);  // down move
    }
}

TEST(InitialCurveCsv, RoundTripAndValidation) {
    std::vector<double> f0 = {0.01, 0.015, 0.02, 0.018};
    std::string path = testing::TempDir() + "tse_curve.csv";
    write_text_file(path, initial_curve_to_csv(f0, 0.5));
    std::vector<double> back = read_initial_curve_csv(path, 0.5, 4);
    EXPECT_EQ(back, f0);
    write_text_file(path, "T,F0\n0.0,0.01\n1.0,0.02\n");
    EXPECT_THROW(read_initial_curve_csv(path, 0.5, 3), ValidationError);  // 0.5 missing
}
