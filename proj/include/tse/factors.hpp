#pragma once

// Factor increments: the (n+1)-outcome random vector dw driving every curve
// move. Outcomes are constructed from an orthogonal matrix so that
// E[dw] = 0 and Cov(dw^i, dw^j) = dt * delta_ij hold by construction.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tse/errors.hpp"

namespace tse {

inline constexpr int kMaxFactors = 6;  // node counts grow as C(t+n, n)

/// An (n+1)x(n+1) orthogonal matrix with strictly positive first row.
/// Row 0 encodes outcome probabilities (squared), rows 1..n the factors.
struct OrthogonalSpec {
    Eigen::MatrixXd m;

    int n() const { return static_cast<int>(m.rows()) - 1; }

    /// Largest absolute deviation of m*m^T from the identity.
    double orthogonality_deviation() const {
        Eigen::MatrixXd g = m * m.transpose();
        g.diagonal().array() -= 1.0;
        return g.cwiseAbs().maxCoeff();
    }

    void validate(double tol = 1e-10) const {
        if (m.rows() < 2 || m.rows() != m.cols())
            throw ValidationError("orthogonal spec must be a square matrix of size >= 2");
        if (m.rows() - 1 > kMaxFactors)
            throw ValidationError("factor count " + std::to_string(m.rows() - 1) +
                                  " exceeds supported maximum " + std::to_string(kMaxFactors));
        double dev = orthogonality_deviation();
        if (!(dev <= tol))
            throw ValidationError("matrix is not orthogonal: max |M M^T - I| = " +
                                  std::to_string(dev) + " exceeds tolerance " + std::to_string(tol));
        for (int j = 0; j < m.cols(); ++j)
            if (!(m(0, j) > 0.0))
                throw ValidationError("first-row entry " + std::to_string(j) +
                                      " is not strictly positive");
    }
};

/// Worst-case deviations from the moment and support requirements of a
/// factor distribution. All entries are absolute deviations; 0 is perfect.
struct MomentReport {
    double prob_sum_dev = 0.0;   // |sum p - 1|
    double min_prob = 0.0;       // smallest probability (should be > 0)
    double mean_dev = 0.0;       // max_i |E[dw^i]|
    double cov_dev = 0.0;        // max_ij |Cov(dw^i,dw^j) - dt*delta_ij|
    double distinct_sep = 0.0;   // smallest pairwise outcome distance
    double span_sigma_min = 0.0; // smallest singular value of the difference set

    double worst() const { return std::max({prob_sum_dev, mean_dev, cov_dev}); }
};

/// The engine's randomness source: n+1 outcomes of dw in R^n with strictly
/// positive probabilities, zero mean and covariance dt * I.
struct FactorDistribution {
    int n = 0;
    double dt = 0.0;
    std::vector<Eigen::VectorXd> outcomes;  // size n+1, each in R^n
    std::vector<double> probs;              // size n+1

    int num_outcomes() const { return n + 1; }

    /// E[exp<x, dw>] by exact enumeration, evaluated in log space.
    double log_mgf(const Eigen::VectorXd& x) const {
        double m = -std::numeric_limits<double>::infinity();
        std::vector<double> expo(probs.size());
        for (std::size_t s = 0; s < probs.size(); ++s) {
            expo[s] = x.dot(outcomes[s]);
            m = std::max(m, expo[s]);
        }
        double acc = 0.0;
        for (std::size_t s = 0; s < probs.size(); ++s)
            acc += probs[s] * std::exp(expo[s] - m);
        return m + std::log(acc);
    }

    double mgf(const Eigen::VectorXd& x) const { return std::exp(log_mgf(x)); }
};

inline MomentReport validate_moments(const FactorDistribution& f) {
    MomentReport r;
    const int k = f.num_outcomes();
    double psum = 0.0;
    r.min_prob = std::numeric_limits<double>::infinity();
    for (double p : f.probs) {
        psum += p;
        r.min_prob = std::min(r.min_prob, p);
    }
    r.prob_sum_dev = std::abs(psum - 1.0);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(f.n);
    for (int s = 0; s < k; ++s) mean += f.probs[s] * f.outcomes[s];
    r.mean_dev = f.n > 0 ? mean.cwiseAbs().maxCoeff() : 0.0;

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(f.n, f.n);
    for (int s = 0; s < k; ++s) {
        Eigen::VectorXd c = f.outcomes[s] - mean;
        cov += f.probs[s] * c * c.transpose();
    }
    cov.diagonal().array() -= f.dt;
    r.cov_dev = f.n > 0 ? cov.cwiseAbs().maxCoeff() : 0.0;

    r.distinct_sep = std::numeric_limits<double>::infinity();
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b)
            r.distinct_sep = std::min(r.distinct_sep, (f.outcomes[a] - f.outcomes[b]).norm());

    if (f.n > 0) {
        Eigen::MatrixXd diff(f.n, f.n);
        for (int j = 1; j <= f.n; ++j) diff.col(j - 1) = f.outcomes[j] - f.outcomes[0];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(diff);
        r.span_sigma_min = svd.singularValues().minCoeff();
    }
    return r;
}

/// Build the factor distribution implied by an orthogonal matrix:
/// prob_j = m(0,j)^2 and dw^i(j) = sqrt(dt) * m(i,j) / m(0,j), so that
/// {1, dw^1/sqrt(dt), ..., dw^n/sqrt(dt)} is orthonormal under E[xy].
inline FactorDistribution from_orthogonal_matrix(const OrthogonalSpec& spec, double dt) {
    spec.validate();
    if (!(dt > 0.0)) throw ValidationError("time step dt must be positive");
    const int n = spec.n();
    FactorDistribution f;
    f.n = n;
    f.dt = dt;
    f.probs.resize(n + 1);
    f.outcomes.resize(n + 1);
    const double scale = std::sqrt(dt);
    for (int j = 0; j <= n; ++j) {
        f.probs[j] = spec.m(0, j) * spec.m(0, j);
        Eigen::VectorXd w(n);
        for (int i = 1; i <= n; ++i) w(i - 1) = scale * spec.m(i, j) / spec.m(0, j);
        f.outcomes[j] = std::move(w);
    }
    return f;
}

/// Reconstruct the generating matrix from a distribution (inverse of
/// from_orthogonal_matrix up to the construction identities).
inline OrthogonalSpec to_orthogonal_matrix(const FactorDistribution& f) {
    OrthogonalSpec spec;
    spec.m.resize(f.n + 1, f.n + 1);
    const double scale = 1.0 / std::sqrt(f.dt);
    for (int j = 0; j <= f.n; ++j) {
        double root_p = std::sqrt(f.probs[j]);
        spec.m(0, j) = root_p;
        for (int i = 1; i <= f.n; ++i) spec.m(i, j) = f.outcomes[j](i - 1) * scale * root_p;
    }
    return spec;
}

/// The two-outcome coin toss: dw = +-sqrt(dt) with probability 1/2 each.
/// Built directly (not through a matrix) so the moments are bit-exact.
inline FactorDistribution binary_ho_lee(double dt) {
    if (!(dt > 0.0)) throw ValidationError("time step dt must be positive");
    FactorDistribution f;
    f.n = 1;
    f.dt = dt;
    f.probs = {0.5, 0.5};
    const double step = std::sqrt(dt);
    f.outcomes = {Eigen::VectorXd::Constant(1, step), Eigen::VectorXd::Constant(1, -step)};
    return f;
}

/// Helmert-style orthogonal matrix with constant first row: the canonical
/// equal-probability (n+1)-outcome family used when no matrix is supplied.
inline OrthogonalSpec equal_probability_spec(int n) {
    if (n < 1 || n > kMaxFactors)
        throw ValidationError("factor count must be in [1, " + std::to_string(kMaxFactors) + "]");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
    m.row(0).setConstant(1.0 / std::sqrt(n + 1.0));
    for (int i = 1; i <= n; ++i) {
        double norm = std::sqrt(static_cast<double>(i) * (i + 1));
        for (int j = 0; j < i; ++j) m(i, j) = 1.0 / norm;
        m(i, i) = -static_cast<double>(i) / norm;
    }
    return OrthogonalSpec{std::move(m)};
}

inline FactorDistribution equal_probability_factor(int n, double dt) {
    return from_orthogonal_matrix(equal_probability_spec(n), dt);
}

/// Plain-text matrix file: one row per line, whitespace-separated reals.
inline OrthogonalSpec read_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::vector<double> row;
        double v;
        while (ss >> v) row.push_back(v);
        if (row.empty()) continue;
        if (!rows.empty() && row.size() != rows.front().size())
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": ragged row (expected " +
                                  std::to_string(rows.front().size()) + " entries)");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError(path + ": no matrix rows found");
    if (rows.size() != rows.front().size())
        throw ValidationError(path + ": matrix must be square, got " +
                              std::to_string(rows.size()) + "x" +
                              std::to_string(rows.front().size()));
    OrthogonalSpec spec;
    spec.m.resize(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.size(); ++j) spec.m(i, j) = rows[i][j];
    return spec;
}

}  // namespace tse
