#pragma once

// Recombining tree of cumulative factor states. A node is identified by its
// outcome-count multiset (c_0,...,c_n) -- integer and therefore exact -- and
// carries the state w = sum_j c_j * dw(j). Level t holds C(t+n, n) nodes.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "tse/errors.hpp"
#include "tse/factors.hpp"

namespace tse {

struct LatticeNode {
    int step = 0;                 // time index t/dt
    std::vector<int> counts;      // outcome occurrences, sums to step
    Eigen::VectorXd w;            // cumulative factor state in R^n
};

class Lattice {
public:
    /// Eagerly materializes all levels 0..horizon. Rejects builds whose
    /// node storage would exceed the memory budget, reporting the estimate.
    static Lattice build(const FactorDistribution& f, int horizon_steps,
                         std::size_t memory_budget_bytes = kDefaultBudgetBytes) {
        if (horizon_steps < 0) throw ValidationError("horizon must be >= 0 steps");
        double est = estimated_bytes(f.n, horizon_steps);
        if (est > static_cast<double>(memory_budget_bytes))
            throw ValidationError("lattice build would need about " +
                                  std::to_string(static_cast<long long>(est / (1024 * 1024)) + 1) +
                                  " MiB, over the budget of " +
                                  std::to_string(memory_budget_bytes / (1024 * 1024)) + " MiB");
        Lattice lat;
        lat.factor_ = f;
        lat.horizon_ = horizon_steps;
        lat.levels_.resize(horizon_steps + 1);
        lat.index_.resize(horizon_steps + 1);
        lat.children_.resize(horizon_steps + 1);

        std::vector<int> counts(f.n + 1, 0);
        lat.emit_level(0, counts, 0);
        for (int t = 1; t <= horizon_steps; ++t) {
            std::fill(counts.begin(), counts.end(), 0);
            lat.emit_level(t, counts, t);
        }
        for (int t = 0; t < horizon_steps; ++t) {
            auto& level = lat.levels_[t];
            auto& kids = lat.children_[t];
            kids.resize(level.size());
            for (std::size_t i = 0; i < level.size(); ++i) {
                kids[i].resize(f.n + 1);
                std::vector<int> c = level[i].counts;
                for (int s = 0; s <= f.n; ++s) {
                    ++c[s];
                    kids[i][s] = lat.index_[t + 1].at(c);
                    --c[s];
                }
            }
        }
        return lat;
    }

    static double estimated_bytes(int n, int horizon_steps) {
        // sum_t C(t+n, n) = C(horizon+n+1, n+1) nodes in total
        double nodes = 1.0;
        for (int i = 1; i <= n + 1; ++i)
            nodes = nodes * (horizon_steps + i) / i;
        double per_node = sizeof(LatticeNode) + (n + 1) * sizeof(int) + n * sizeof(double) +
                          (n + 1) * sizeof(std::int32_t) + 48.0 /* index map overhead */;
        return nodes * per_node;
    }

    const FactorDistribution& factor() const { return factor_; }
    int horizon() const { return horizon_; }

    const std::vector<LatticeNode>& level(int step) const {
        check_step(step);
        return levels_[step];
    }

    std::size_t level_size(int step) const { return level(step).size(); }

    const LatticeNode& root() const { return levels_[0][0]; }

    /// Index of a node within its level; rejects nodes not in this lattice.
    int locate(const LatticeNode& node) const {
        check_step(node.step);
        if (static_cast<int>(node.counts.size()) != factor_.n + 1)
            throw ValidationError("node has wrong outcome arity for this lattice");
        long sum = std::accumulate(node.counts.begin(), node.counts.end(), 0L);
        if (sum != node.step)
            throw ValidationError("node counts sum to " + std::to_string(sum) +
                                  ", expected step " + std::to_string(node.step));
        auto it = index_[node.step].find(node.counts);
        if (it == index_[node.step].end())
            throw ValidationError("node is not part of this lattice");
        return it->second;
    }

    const LatticeNode& node_at(int step, const std::vector<int>& counts) const {
        check_step(step);
        auto it = index_[step].find(counts);
        if (it == index_[step].end())
            throw ValidationError("no node with the given counts at step " + std::to_string(step));
        return levels_[step][it->second];
    }

    /// The n+1 (outcome index, child) pairs of a node below the horizon.
    std::vector<std::pair<int, const LatticeNode*>> children(const LatticeNode& node) const {
        int i = locate(node);
        if (node.step >= horizon_)
            throw ValidationError("node at the horizon has no children");
        std::vector<std::pair<int, const LatticeNode*>> out;
        out.reserve(factor_.n + 1);
        for (int s = 0; s <= factor_.n; ++s)
            out.emplace_back(s, &levels_[node.step + 1][children_[node.step][i][s]]);
        return out;
    }

    const LatticeNode& child(const LatticeNode& node, int outcome) const {
        int i = locate(node);
        if (node.step >= horizon_) throw ValidationError("node at the horizon has no children");
        if (outcome < 0 || outcome > factor_.n) throw ValidationError("outcome index out of range");
        return levels_[node.step + 1][children_[node.step][i][outcome]];
    }

    int child_index(int step, int node_index, int outcome) const {
        return children_[step][node_index][outcome];
    }

    /// Real-world probability of reaching a node: the multinomial weight
    /// of its counts under i.i.d. steps.
    double node_probability(const LatticeNode& node) const {
        locate(node);
        double logp = std::lgamma(node.step + 1.0);
        for (int s = 0; s <= factor_.n; ++s) {
            logp -= std::lgamma(node.counts[s] + 1.0);
            if (node.counts[s] > 0) logp += node.counts[s] * std::log(factor_.probs[s]);
        }
        return std::exp(logp);
    }

private:
    static constexpr std::size_t kDefaultBudgetBytes = 512ull * 1024 * 1024;

    void check_step(int step) const {
        if (step < 0 || step > horizon_)
            throw ValidationError("step " + std::to_string(step) + " outside [0, " +
                                  std::to_string(horizon_) + "]");
    }

    // Enumerate count vectors in lexicographic order, filling position pos
    // with every split of `remaining`.
    void emit_level(int t, std::vector<int>& counts, int remaining, std::size_t pos = 0) {
        if (pos + 1 == counts.size()) {
            counts[pos] = remaining;
            LatticeNode node;
            node.step = t;
            node.counts = counts;
            node.w = Eigen::VectorXd::Zero(factor_.n);
            for (int s = 0; s <= factor_.n; ++s)
                if (counts[s] > 0) node.w += static_cast<double>(counts[s]) * factor_.outcomes[s];
            index_[t][counts] = static_cast<int>(levels_[t].size());
            levels_[t].push_back(std::move(node));
            counts[pos] = 0;
            return;
        }
        for (int c = 0; c <= remaining; ++c) {
            counts[pos] = c;
            emit_level(t, counts, remaining - c, pos + 1);
        }
        counts[pos] = 0;
    }

    FactorDistribution factor_;
    int horizon_ = 0;
    std::vector<std::vector<LatticeNode>> levels_;
    std::vector<std::map<std::vector<int>, int>> index_;
    std::vector<std::vector<std::vector<std::int32_t>>> children_;
};

}  // namespace tse
