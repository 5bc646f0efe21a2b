#pragma once

// Factor extraction from historical bucket-forward increments: sample
// covariance (1/N normalization), symmetric eigendecomposition, factor-count
// selection and the mapping from principal components to bucket loadings.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tse/csv.hpp"
#include "tse/errors.hpp"
#include "tse/volstruct.hpp"

namespace tse {

/// Equally spaced observations of per-step bucket-forward increments.
struct SampleSet {
    Eigen::MatrixXd increments;   // N rows, k columns
    std::vector<double> tenors;   // k+1 tenor points (origin + right endpoints)

    int size() const { return static_cast<int>(increments.rows()); }
    int dim() const { return static_cast<int>(increments.cols()); }

    void validate() const {
        if (size() < 2) throw ValidationError("need at least two increment samples");
        if (!increments.allFinite()) throw ValidationError("non-finite increment sample");
        if (static_cast<int>(tenors.size()) != dim() + 1)
            throw ValidationError("tenor count does not match increment dimension");
    }
};

struct PcaResult {
    Eigen::VectorXd mean;         // sample mean of the increments
    Eigen::VectorXd eigenvalues;  // descending, tiny negatives clamped to 0
    Eigen::MatrixXd eigenvectors; // columns, orthonormal, sign-fixed
    int selected = 0;             // chosen factor count n
    Eigen::MatrixXd loadings;     // k x n, X * Lambda^{1/2} for the top n

    double total_variance() const { return eigenvalues.sum(); }

    double explained_variance(int n) const {
        double tot = total_variance();
        if (tot <= 0.0) return 1.0;
        return eigenvalues.head(n).sum() / tot;
    }
};

/// Selection policy: a fixed factor count, or the smallest n reaching an
/// explained-variance threshold theta in (0, 1].
struct FactorPolicy {
    int fixed = 0;        // > 0 takes precedence
    double theta = 0.99;

    static FactorPolicy fixed_count(int n) { return FactorPolicy{n, 0.0}; }
    static FactorPolicy variance_threshold(double theta) { return FactorPolicy{0, theta}; }
};

/// Sample covariance with 1/N normalization,
///   c_lm = (1/N) sum_p (y_p^l - mean^l)(y_p^m - mean^m),
/// symmetrized so downstream eigensolves see an exactly symmetric matrix.
inline Eigen::MatrixXd covariance(const SampleSet& s) {
    s.validate();
    Eigen::RowVectorXd mean = s.increments.colwise().mean();
    Eigen::MatrixXd centered = s.increments.rowwise() - mean;
    Eigen::MatrixXd c = centered.transpose() * centered / static_cast<double>(s.size());
    return 0.5 * (c + c.transpose());
}

/// Symmetric eigendecomposition with descending eigenvalues and the sign
/// convention: each eigenvector's largest-magnitude entry is positive, ties
/// broken by lowest index.
inline PcaResult decompose(const Eigen::MatrixXd& c) {
    if (c.rows() != c.cols()) throw ValidationError("covariance matrix must be square");
    double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw ValidationError("covariance matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    if (es.info() != Eigen::Success) throw ValidationError("eigendecomposition failed");
    const int k = static_cast<int>(c.rows());
    PcaResult r;
    r.eigenvalues.resize(k);
    r.eigenvectors.resize(k, k);
    for (int j = 0; j < k; ++j) {  // solver returns ascending order
        double lam = es.eigenvalues()(k - 1 - j);
        if (lam < 0.0) {
            if (lam < -1e-14 * scale)
                throw ValidationError("covariance matrix has a significantly negative eigenvalue");
            lam = 0.0;
        }
        r.eigenvalues(j) = lam;
        Eigen::VectorXd vec = es.eigenvectors().col(k - 1 - j);
        int arg = 0;
        for (int i = 1; i < k; ++i)
            if (std::abs(vec(i)) > std::abs(vec(arg))) arg = i;
        if (vec(arg) < 0.0) vec = -vec;
        r.eigenvectors.col(j) = vec;
    }
    return r;
}

inline int select_factors(const PcaResult& r, const FactorPolicy& policy) {
    const int k = static_cast<int>(r.eigenvalues.size());
    if (policy.fixed > 0) {
        if (policy.fixed > k)
            throw ValidationError("requested factor count exceeds the bucket dimension");
        return policy.fixed;
    }
    if (!(policy.theta > 0.0 && policy.theta <= 1.0))
        throw ValidationError("variance threshold must lie in (0, 1]");
    double tot = r.total_variance();
    if (tot <= 0.0) return 1;  // degenerate data still yields one (zero) factor
    double acc = 0.0;
    for (int n = 1; n <= k; ++n) {
        acc += r.eigenvalues(n - 1);
        if (acc / tot >= policy.theta - 1e-15) return n;
    }
    return k;
}

/// Full calibration: increments -> covariance -> eigenstructure -> bucket
/// loadings sigma_ij = x_{j,i} sqrt(lambda_j) / sqrt(dt) (the model increment
/// has variance dt where the principal component has variance 1). The drift
/// column is the sample average over dt; it is descriptive output only, the
/// drift condition decides pricing.
inline std::pair<CoarseVolMatrix, PcaResult> calibrate(const SampleSet& s, double dt,
                                                       const FactorPolicy& policy) {
    s.validate();
    for (double t : s.tenors) grid_index(t, dt, "tenor");
    PcaResult r = decompose(covariance(s));
    r.mean = s.increments.colwise().mean();
    r.selected = select_factors(r, policy);
    const int k = s.dim();
    r.loadings.resize(k, r.selected);
    for (int j = 0; j < r.selected; ++j)
        r.loadings.col(j) = r.eigenvectors.col(j) * std::sqrt(r.eigenvalues(j));

    CoarseVolMatrix c;
    c.tenors = s.tenors;
    const double root_dt = std::sqrt(dt);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd sig(r.selected);
        for (int j = 0; j < r.selected; ++j) sig(j) = r.loadings(i, j) / root_dt;
        c.sigma.push_back(std::move(sig));
        c.mu.push_back(r.mean(i) / dt);
    }
    return {std::move(c), std::move(r)};
}

// --- history CSV ingestion --------------------------------------------------
// Header: date,F_1,...,F_k with bucket-forward levels per observation date.
// Increments are consecutive differences; observation dates must be equally
// spaced or the file is rejected.

namespace detail {

inline long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

inline long parse_iso_date(const std::string& s, const std::string& context) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
        throw ValidationError(context + ": cannot parse ISO-8601 date from '" + s + "'");
    return days_from_civil(y, m, d);
}

inline std::string civil_from_days(long z) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02u", y + (m <= 2), m, d);
    return buf;
}

}  // namespace detail

/// Reads bucket-forward history and forms increments. `tenors` supplies the
/// k+1 tenor points (origin first) matching the k forward columns.
inline SampleSet read_history_csv(const std::string& path, const std::vector<double>& tenors) {
    CsvTable t = read_csv(path);
    int date_col = t.require_column("date", path);
    std::vector<int> cols;
    for (int j = 1;; ++j) {
        int col = t.column("F_" + std::to_string(j));
        if (col < 0) break;
        cols.push_back(col);
    }
    if (cols.empty()) throw ValidationError(path + ": missing required column 'F_1'");
    if (t.rows.size() < 3)
        throw ValidationError(path + ": need at least three observations to form increments");
    if (tenors.size() != cols.size() + 1)
        throw ValidationError(path + ": got " + std::to_string(cols.size()) +
                              " forward columns but " + std::to_string(tenors.size()) +
                              " tenor points (want columns+1)");
    const int n_obs = static_cast<int>(t.rows.size());
    std::vector<long> days(n_obs);
    Eigen::MatrixXd levels(n_obs, static_cast<int>(cols.size()));
    for (int r = 0; r < n_obs; ++r) {
        std::string ctx = path + ":" + std::to_string(r + 2);
        days[r] = detail::parse_iso_date(t.rows[r][date_col], ctx);
        for (std::size_t j = 0; j < cols.size(); ++j)
            levels(r, j) = parse_double(t.rows[r][cols[j]], ctx);
    }
    long spacing = days[1] - days[0];
    if (spacing <= 0) throw ValidationError(path + ": observation dates must be increasing");
    for (int r = 2; r < n_obs; ++r)
        if (days[r] - days[r - 1] != spacing)
            throw ValidationError(path + ":" + std::to_string(r + 2) +
                                  ": observations must be equally spaced (expected " +
                                  std::to_string(spacing) + " days)");
    SampleSet s;
    s.tenors = tenors;
    s.increments = levels.bottomRows(n_obs - 1) - levels.topRows(n_obs - 1);
    return s;
}

}  // namespace tse
