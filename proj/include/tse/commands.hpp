#pragma once

// Batch command surface shared by the CLI binary and the test suites.
// Every command is deterministic given its inputs and seed; reports are
// JSON-shaped structured text, data files are CSV. Validation failures
// raise ValidationError (exit 2 in the binary), filesystem problems raise
// IoError (exit 3).

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tse/drift.hpp"
#include "tse/errors.hpp"
#include "tse/factors.hpp"
#include "tse/ikrs.hpp"
#include "tse/model.hpp"
#include "tse/noarb.hpp"
#include "tse/pca.hpp"
#include "tse/sensitivity.hpp"
#include "tse/simulate.hpp"
#include "tse/volstruct.hpp"

namespace tse {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline std::vector<double> to_vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(m.rows());
    for (int i = 0; i < m.rows(); ++i) {
        rows[i].resize(m.cols());
        for (int j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
    }
    return rows;
}

}  // namespace detail

/// Flat key=value configuration; every key can be overridden by a
/// command-line flag of the same name.
struct EngineConfig {
    double dt = 0.25;
    double horizon = 10.0;
    int factors = 0;       // 0 = select by variance threshold
    double theta = 0.99;
    double tol = 1e-10;
    std::uint64_t seed = 1;
    std::string out;
    std::string mode = "delta";
    std::string node;      // node-spec, empty = root
    std::vector<double> tenors;
    std::string drift = "stationary";  // or "matrix": price with the CSV mu column
    std::size_t budget_mb = 512;
    std::string matrix;    // optional orthogonal-matrix file for the factor law
    double limit_time = 0.0;  // 0 = half of the first bucket's left tenor
    int pair = 1;          // 1-based consecutive tenor pair used by `limit`
    bool flat = false;     // also emit the flat spreadsheet table from `sens`

    void set(const std::string& key, const std::string& value) {
        auto ctx = "config key '" + key + "'";
        if (key == "dt") dt = parse_double(value, ctx);
        else if (key == "horizon") horizon = parse_double(value, ctx);
        else if (key == "factors") factors = static_cast<int>(parse_double(value, ctx));
        else if (key == "theta") theta = parse_double(value, ctx);
        else if (key == "tol") tol = parse_double(value, ctx);
        else if (key == "seed") seed = static_cast<std::uint64_t>(parse_double(value, ctx));
        else if (key == "out") out = value;
        else if (key == "mode") mode = value;
        else if (key == "node") node = value;
        else if (key == "drift") drift = value;
        else if (key == "matrix") matrix = value;
        else if (key == "budget_mb") budget_mb = static_cast<std::size_t>(parse_double(value, ctx));
        else if (key == "limit_time") limit_time = parse_double(value, ctx);
        else if (key == "pair") pair = static_cast<int>(parse_double(value, ctx));
        else if (key == "flat") flat = (value == "1" || value == "true");
        else if (key == "tenors") {
            tenors.clear();
            std::istringstream ss(value);
            std::string cell;
            while (std::getline(ss, cell, ',')) tenors.push_back(parse_double(cell, ctx));
        } else {
            throw ValidationError("unknown config key '" + key + "'");
        }
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        std::string line;
        long n_line = 0;
        while (std::getline(in, line)) {
            ++n_line;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ValidationError(path + ":" + std::to_string(n_line) +
                                      ": expected key=value");
            set(line.substr(0, eq), line.substr(eq + 1));
        }
    }

    int steps() const { return grid_index(horizon, dt, "horizon"); }

    void validate() const {
        if (!(dt > 0.0)) throw ValidationError("dt must be positive");
        grid_index(horizon, dt, "horizon");
        if (!(theta > 0.0 && theta <= 1.0)) throw ValidationError("theta must lie in (0,1]");
        if (!(tol > 0.0)) throw ValidationError("tol must be positive");
    }
};

// --- model bundle -----------------------------------------------------------

struct ModelBundle {
    double dt = 0.0;
    int steps = 0;
    FactorDistribution factor;
    std::vector<double> tenors;
    std::vector<Eigen::VectorXd> sigma;
    std::vector<double> mu;
    std::vector<double> f0;
    std::string drift_mode;
    double martingale_error = 0.0;

    TermStructureModel to_model(std::size_t budget_mb = 512) const {
        VolatilityTermStructure v = VolatilityTermStructure::from_grid(dt, sigma, mu);
        return TermStructureModel::assemble(factor, std::move(v), f0,
                                            budget_mb * 1024ull * 1024ull);
    }
};

inline ordered_json bundle_to_json(const ModelBundle& b) {
    ordered_json j;
    j["dt"] = b.dt;
    j["steps"] = b.steps;
    j["n"] = b.factor.n;
    j["factor"]["probs"] = b.factor.probs;
    j["factor"]["outcomes"] = ordered_json::array();
    for (const auto& o : b.factor.outcomes)
        j["factor"]["outcomes"].push_back(std::vector<double>(o.data(), o.data() + o.size()));
    j["tenors"] = b.tenors;
    j["sigma"] = ordered_json::array();
    for (const auto& s : b.sigma)
        j["sigma"].push_back(std::vector<double>(s.data(), s.data() + s.size()));
    j["mu"] = b.mu;
    j["f0"] = b.f0;
    j["drift_mode"] = b.drift_mode;
    j["martingale_error"] = b.martingale_error;
    return j;
}

inline ModelBundle bundle_from_json(const ordered_json& j, const std::string& path) {
    try {
        ModelBundle b;
        b.dt = j.at("dt").get<double>();
        b.steps = j.at("steps").get<int>();
        b.factor.n = j.at("n").get<int>();
        b.factor.dt = b.dt;
        b.factor.probs = j.at("factor").at("probs").get<std::vector<double>>();
        for (const auto& o : j.at("factor").at("outcomes")) {
            auto v = o.get<std::vector<double>>();
            b.factor.outcomes.push_back(
                Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<int>(v.size())));
        }
        for (const auto& s : j.at("sigma")) {
            auto v = s.get<std::vector<double>>();
            b.sigma.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<int>(v.size())));
        }
        b.tenors = j.at("tenors").get<std::vector<double>>();
        b.mu = j.at("mu").get<std::vector<double>>();
        b.f0 = j.at("f0").get<std::vector<double>>();
        b.drift_mode = j.at("drift_mode").get<std::string>();
        b.martingale_error = j.at("martingale_error").get<double>();
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": malformed bundle: " + e.what());
    }
}

inline ModelBundle read_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open bundle '" + path + "'");
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": not valid JSON: " + e.what());
    }
    return bundle_from_json(j, path);
}

// --- node addressing --------------------------------------------------------
// Syntax: t=<step>:counts=<c0,...,cn>; empty means the root.

inline const LatticeNode& resolve_node(const Lattice& lat, const std::string& spec) {
    if (spec.empty()) return lat.root();
    int step = -1;
    std::vector<int> counts;
    std::istringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) {
        auto eq = part.find('=');
        if (eq == std::string::npos)
            throw ValidationError("bad node spec '" + spec + "' (want t=<step>:counts=<c0,...>)");
        std::string key = part.substr(0, eq), value = part.substr(eq + 1);
        if (key == "t") {
            step = static_cast<int>(parse_double(value, "node spec"));
        } else if (key == "counts") {
            std::istringstream cs(value);
            std::string cell;
            while (std::getline(cs, cell, ','))
                counts.push_back(static_cast<int>(parse_double(cell, "node spec")));
        } else {
            throw ValidationError("bad node spec field '" + key + "'");
        }
    }
    if (step < 0) throw ValidationError("node spec missing t=<step>");
    return lat.node_at(step, counts);
}

inline std::string node_spec_string(const LatticeNode& node) {
    std::string s = "t=" + std::to_string(node.step) + ":counts=";
    for (std::size_t i = 0; i < node.counts.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(node.counts[i]);
    }
    return s;
}

// --- commands ---------------------------------------------------------------

namespace detail {

inline FactorDistribution factor_for(const EngineConfig& cfg, int n) {
    if (!cfg.matrix.empty()) {
        FactorDistribution f = from_orthogonal_matrix(read_matrix_file(cfg.matrix), cfg.dt);
        if (f.n != n)
            throw ValidationError("factor matrix has n=" + std::to_string(f.n) +
                                  " but the volatility matrix carries " + std::to_string(n) +
                                  " factor columns");
        return f;
    }
    if (n == 1) return binary_ho_lee(cfg.dt);
    return equal_probability_factor(n, cfg.dt);
}

inline void emit(const EngineConfig& cfg, const std::string& content) {
    if (cfg.out.empty()) throw ValidationError("this command requires --out <path>");
    write_text_file(cfg.out, content);
}

}  // namespace detail

/// history.csv -> volatility matrix CSV (--out) + eigenstructure report.
inline ordered_json cmd_calibrate(const std::string& history_path, EngineConfig cfg) {
    cfg.validate();
    if (cfg.tenors.size() < 2)
        throw ValidationError("calibrate needs config tenors=<t0,t1,...> (origin first)");
    SampleSet samples = read_history_csv(history_path, cfg.tenors);
    FactorPolicy policy = cfg.factors > 0 ? FactorPolicy::fixed_count(cfg.factors)
                                          : FactorPolicy::variance_threshold(cfg.theta);
    auto [matrix, pca] = calibrate(samples, cfg.dt, policy);
    detail::emit(cfg, to_csv(matrix));

    ordered_json rep;
    rep["command"] = "calibrate";
    rep["history"] = history_path;
    rep["samples"] = samples.size();
    rep["selected_factors"] = pca.selected;
    rep["eigenvalues"] = detail::to_vec(pca.eigenvalues);
    std::vector<double> explained(pca.eigenvalues.size());
    for (int n = 1; n <= pca.eigenvalues.size(); ++n)
        explained[n - 1] = pca.explained_variance(n);
    rep["explained_variance"] = explained;
    rep["loadings"] = detail::to_rows(pca.loadings);
    rep["volmatrix"] = cfg.out;
    return rep;
}

/// volmatrix.csv + curve.csv -> verified model bundle (--out).
inline ordered_json cmd_build(const std::string& volmatrix_path, const std::string& curve_path,
                              EngineConfig cfg) {
    cfg.validate();
    CoarseVolMatrix matrix = read_coarse_vol_csv(volmatrix_path);
    const int steps = cfg.steps();
    VolatilityTermStructure v = interpolate(matrix, cfg.dt, steps);
    FactorDistribution f = detail::factor_for(cfg, matrix.n());
    if (cfg.drift == "stationary") {
        v.mu = stationary_drift(v, f);
    } else if (cfg.drift != "matrix") {
        throw ValidationError("config drift must be 'stationary' or 'matrix'");
    }
    std::vector<double> f0 = read_initial_curve_csv(curve_path, cfg.dt, steps);
    auto [model, report] =
        build_verified_model(f, v, f0, cfg.tol, cfg.budget_mb * 1024ull * 1024ull);

    ModelBundle b;
    b.dt = cfg.dt;
    b.steps = steps;
    b.factor = f;
    b.tenors = matrix.tenors;
    b.sigma = model.vol().sigma;
    b.mu = model.vol().mu;
    b.f0 = f0;
    b.drift_mode = cfg.drift;
    b.martingale_error = report.max_error;
    detail::emit(cfg, bundle_to_json(b).dump(2) + "\n");

    ordered_json rep;
    rep["command"] = "build";
    rep["bundle"] = cfg.out;
    rep["n"] = f.n;
    rep["dt"] = cfg.dt;
    rep["steps"] = steps;
    rep["drift_mode"] = cfg.drift;
    rep["martingale_error"] = report.max_error;
    return rep;
}

/// bundle -> no-arbitrage report (per-level errors, kernel table, round trips).
inline ordered_json cmd_verify(const std::string& bundle_path, EngineConfig cfg) {
    ModelBundle b = read_bundle(bundle_path);
    TermStructureModel m = b.to_model(cfg.budget_mb);
    MartingaleReport mart = verify_martingale(m);
    NasReport nas = nas_equivalence_check(m);
    ordered_json rep;
    rep["command"] = "verify";
    rep["bundle"] = bundle_path;
    rep["martingale_error"] = mart.max_error;
    rep["per_level_error"] = mart.per_level;
    rep["risk_neutral_kernel"] = ordered_json::array();
    for (int t = 0; t < m.steps(); ++t) {
        Eigen::VectorXd pi = risk_neutral_probs(m, m.lattice().level(t).front());
        rep["risk_neutral_kernel"].push_back(detail::to_vec(pi));
    }
    rep["nas_roundtrip"]["pi_dev"] = nas.pi_roundtrip_dev;
    rep["nas_roundtrip"]["spd_dev"] = nas.spd_roundtrip_dev;
    rep["nas_roundtrip"]["recombination_dev"] = nas.recombination_dev;
    rep["nas_roundtrip"]["level_mean_dev"] = nas.level_mean_dev;
    if (!(mart.max_error <= cfg.tol))
        throw ValidationError("martingale error " + std::to_string(mart.max_error) +
                              " exceeds tolerance " + std::to_string(cfg.tol) + "\n" +
                              rep.dump(2));
    return rep;
}

/// bundle + cashflows.csv -> PV table at a node.
inline ordered_json cmd_price(const std::string& bundle_path, const std::string& cashflow_path,
                              EngineConfig cfg) {
    ModelBundle b = read_bundle(bundle_path);
    TermStructureModel m = b.to_model(cfg.budget_mb);
    CashFlow cf = read_cashflow_csv(cashflow_path);
    const LatticeNode& node = resolve_node(m.lattice(), cfg.node);
    ordered_json rep;
    rep["command"] = "price";
    rep["node"] = node_spec_string(node);
    rep["legs"] = ordered_json::array();
    double pv = 0.0;
    for (const auto& [T, amount] : cf.legs) {
        double disc = m.bond_price(node, T);
        ordered_json leg;
        leg["T"] = T;
        leg["amount"] = amount;
        leg["discount"] = disc;
        leg["pv"] = amount * disc;
        pv += amount * disc;
        rep["legs"].push_back(leg);
    }
    rep["pv"] = pv;
    ForwardCurve curve = m.forward_curve(node);
    rep["forward_curve"]["asof_step"] = curve.asof_step;
    rep["forward_curve"]["values"] = curve.values;
    return rep;
}

/// bundle + cashflows.csv -> full sensitivity report at a node.
inline ordered_json cmd_sens(const std::string& bundle_path, const std::string& cashflow_path,
                             EngineConfig cfg) {
    ModelBundle b = read_bundle(bundle_path);
    TermStructureModel m = b.to_model(cfg.budget_mb);
    CashFlow cf = read_cashflow_csv(cashflow_path);
    const LatticeNode& node = resolve_node(m.lattice(), cfg.node);
    SensitivityReport r = sensitivity_report(cf, m, node);
    ordered_json rep;
    rep["command"] = "sens";
    rep["node"] = node_spec_string(node);
    rep["pv"] = r.pv;
    rep["duration"] = r.duration;
    rep["convexity"] = r.convexity;
    rep["gen_durations"] = detail::to_vec(r.gen_durations);
    rep["gen_convexities"] = detail::to_rows(r.gen_convexities);
    rep["ito_d"] = detail::to_vec(r.ito_d);
    rep["ito_d2"] = r.ito_d2;
    if (cfg.flat) {
        std::ostringstream flat;
        flat << "field,i,j,value\n";
        flat << "pv,,," << format_double(r.pv) << "\n";
        flat << "duration,,," << format_double(r.duration) << "\n";
        flat << "convexity,,," << format_double(r.convexity) << "\n";
        for (int i = 0; i < r.gen_durations.size(); ++i)
            flat << "gen_duration," << i + 1 << ",," << format_double(r.gen_durations(i)) << "\n";
        for (int i = 0; i < r.gen_convexities.rows(); ++i)
            for (int j = 0; j < r.gen_convexities.cols(); ++j)
                flat << "gen_convexity," << i + 1 << "," << j + 1 << ","
                     << format_double(r.gen_convexities(i, j)) << "\n";
        for (int i = 0; i < r.ito_d.size(); ++i)
            flat << "ito_d," << i + 1 << ",," << format_double(r.ito_d(i)) << "\n";
        flat << "ito_d2,,," << format_double(r.ito_d2) << "\n";
        detail::emit(cfg, flat.str());
        rep["flat_table"] = cfg.out;
    }
    return rep;
}

/// bundle + target.csv + instrument CSVs -> hedge weights.
inline ordered_json cmd_hedge(const std::string& bundle_path, const std::string& target_path,
                              const std::vector<std::string>& instrument_paths, EngineConfig cfg) {
    ModelBundle b = read_bundle(bundle_path);
    TermStructureModel m = b.to_model(cfg.budget_mb);
    CashFlow target = read_cashflow_csv(target_path);
    std::vector<CashFlow> instruments;
    for (const auto& p : instrument_paths) instruments.push_back(read_cashflow_csv(p));
    const LatticeNode& node = resolve_node(m.lattice(), cfg.node);
    HedgeMode mode = hedge_mode_from_string(cfg.mode);
    Eigen::VectorXd w = hedge(target, instruments, m, node, mode);

    // residual factor durations of the combined portfolio, value-weighted
    Eigen::VectorXd residual =
        present_value(target, m, node) * generalized_durations(target, m, node);
    double pv_total = present_value(target, m, node);
    for (std::size_t i = 0; i < instruments.size(); ++i) {
        double pv_i = present_value(instruments[i], m, node);
        residual += w(i) * pv_i * generalized_durations(instruments[i], m, node);
        pv_total += w(i) * pv_i;
    }
    ordered_json rep;
    rep["command"] = "hedge";
    rep["mode"] = cfg.mode;
    rep["node"] = node_spec_string(node);
    rep["weights"] = detail::to_vec(w);
    rep["portfolio_pv"] = pv_total;
    rep["residual_value_durations"] = detail::to_vec(residual);
    return rep;
}

/// volmatrix.csv + step ladder -> convergence table CSV (--out).
inline ordered_json cmd_limit(const std::string& volmatrix_path, const std::string& ladder,
                              EngineConfig cfg) {
    CoarseVolMatrix matrix = read_coarse_vol_csv(volmatrix_path);
    std::vector<double> dts;
    std::istringstream ss(ladder);
    std::string cell;
    while (std::getline(ss, cell, ',')) dts.push_back(parse_double(cell, "dt ladder"));
    if (cfg.pair < 1 || cfg.pair + 1 >= static_cast<int>(matrix.tenors.size()))
        throw ValidationError("pair index outside the tenor list");
    double t_lo = matrix.tenors[cfg.pair];
    double t_hi = matrix.tenors[cfg.pair + 1];
    if (t_lo <= 0.0)
        throw ValidationError("the selected tenor pair must start after time 0");
    double t = cfg.limit_time > 0.0 ? cfg.limit_time : 0.5 * t_lo;
    GaussianIkrsModel g;
    g.vol = matrix;
    g.initial.assign(matrix.buckets(), 0.0);
    const int n = matrix.n();
    auto family = [n](double dt) {
        return n == 1 ? binary_ho_lee(dt) : equal_probability_factor(n, dt);
    };
    auto rows = convergence_test(g, family, t_lo, t_hi, t, dts);
    detail::emit(cfg, convergence_to_csv(rows));
    ordered_json rep;
    rep["command"] = "limit";
    rep["T"] = t_lo;
    rep["T_prime"] = t_hi;
    rep["t"] = t;
    rep["limit_drift"] = limit_drift(g, t_lo, t_hi);
    rep["rows"] = static_cast<int>(rows.size());
    rep["table"] = cfg.out;
    return rep;
}

/// bundle + steps -> synthetic bucket-forward history CSV (--out).
inline ordered_json cmd_simulate(const std::string& bundle_path, int steps, EngineConfig cfg) {
    ModelBundle b = read_bundle(bundle_path);
    TermStructureModel m = b.to_model(cfg.budget_mb);
    if (b.tenors.size() < 2) throw ValidationError("bundle carries no tenor buckets");
    BucketDynamics dyn = bucket_dynamics(m, b.tenors);
    Eigen::MatrixXd levels = simulate_bucket_levels(dyn, m.factor(), steps, cfg.seed);
    detail::emit(cfg, history_to_csv(levels, b.dt));
    ordered_json rep;
    rep["command"] = "simulate";
    rep["steps"] = steps;
    rep["seed"] = cfg.seed;
    rep["buckets"] = static_cast<int>(b.tenors.size()) - 1;
    rep["history"] = cfg.out;
    return rep;
}

}  // namespace tse
