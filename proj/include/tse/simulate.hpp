#pragma once

// Deterministic sampling of the model's bucket-forward dynamics. Increments
//   dF(T_i, T_{i+1}) = <sigma_bucket, dw> + mu_bucket dt
// are i.i.d. under the real-world measure, so a history is a cumulative sum
// of independent draws. Sampling uses an explicit inverse-CDF walk over the
// outcome probabilities driven by mt19937_64, which is bit-stable across
// platforms for a fixed seed.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tse/errors.hpp"
#include "tse/model.hpp"
#include "tse/pca.hpp"

namespace tse {

inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int sample_outcome(const FactorDistribution& f, std::mt19937_64& rng) {
    double u = uniform_unit(rng);
    double acc = 0.0;
    for (int s = 0; s < f.num_outcomes(); ++s) {
        acc += f.probs[s];
        if (u < acc) return s;
    }
    return f.num_outcomes() - 1;
}

struct BucketDynamics {
    std::vector<double> tenors;            // k+1 points, origin first
    std::vector<Eigen::VectorXd> loading;  // per bucket, applied to dw
    std::vector<double> drift;             // per bucket, per year
    std::vector<double> initial;           // starting levels F_0(T_i, T_{i+1})
};

/// Exact per-bucket increment law implied by a model: the loading window is
/// [T_i, T_{i+1}) on the fine grid because bond prices integrate forwards
/// over that window.
inline BucketDynamics bucket_dynamics(const TermStructureModel& m,
                                      const std::vector<double>& tenors) {
    if (tenors.size() < 2) throw ValidationError("need at least one tenor bucket");
    BucketDynamics dyn;
    dyn.tenors = tenors;
    for (std::size_t i = 0; i + 1 < tenors.size(); ++i) {
        int lo = grid_index(tenors[i], m.dt(), "tenor");
        int hi = grid_index(tenors[i + 1], m.dt(), "tenor");
        if (hi > m.steps()) throw ValidationError("tenor beyond the model horizon");
        double width = tenors[i + 1] - tenors[i];
        dyn.loading.push_back((m.rho_prefix(hi) - m.rho_prefix(lo)) / width);
        dyn.drift.push_back((m.mu_prefix(hi) - m.mu_prefix(lo)) / width);
        dyn.initial.push_back((m.log_initial_bond(lo) - m.log_initial_bond(hi)) / width);
    }
    return dyn;
}

/// Levels matrix with steps+1 rows (row 0 = initial levels).
inline Eigen::MatrixXd simulate_bucket_levels(const BucketDynamics& dyn,
                                              const FactorDistribution& f, int steps,
                                              std::uint64_t seed) {
    if (steps < 2) throw ValidationError("need at least two simulation steps");
    const int k = static_cast<int>(dyn.loading.size());
    Eigen::MatrixXd levels(steps + 1, k);
    for (int i = 0; i < k; ++i) levels(0, i) = dyn.initial[i];
    std::mt19937_64 rng(seed);
    for (int p = 1; p <= steps; ++p) {
        int s = sample_outcome(f, rng);
        for (int i = 0; i < k; ++i)
            levels(p, i) =
                levels(p - 1, i) + dyn.loading[i].dot(f.outcomes[s]) + dyn.drift[i] * f.dt;
    }
    return levels;
}

/// History CSV (header: date,F_1,...,F_k) with synthetic equally spaced
/// ISO-8601 dates starting from 2000-01-03.
inline std::string history_to_csv(const Eigen::MatrixXd& levels, double dt) {
    std::ostringstream out;
    out << "date";
    for (int j = 1; j <= levels.cols(); ++j) out << ",F_" << j;
    out << "\n";
    const long base = detail::days_from_civil(2000, 1, 3);
    const long spacing = std::max(1L, std::lround(dt * 365.25));
    for (int r = 0; r < levels.rows(); ++r) {
        out << detail::civil_from_days(base + r * spacing);
        for (int j = 0; j < levels.cols(); ++j) out << "," << format_double(levels(r, j));
        out << "\n";
    }
    return out.str();
}

}  // namespace tse
