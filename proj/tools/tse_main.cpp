// Command-line front end: calibrate, build, verify, price, sens, hedge,
// limit, simulate. Exit codes: 0 success, 2 validation failure, 3 I/O
// failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "tse/commands.hpp"

namespace {

struct Cli {
    tse::EngineConfig cfg;
    std::string config_path;
    // raw flag values; only applied when the flag was actually given
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common_options(CLI::App* cmd, Cli& cli) {
    cmd->add_option("--config", cli.config_path, "flat key=value config file");
    for (const char* key : {"dt", "horizon", "factors", "theta", "tol", "seed", "out", "mode",
                            "node", "tenors", "drift", "matrix", "budget_mb", "limit_time",
                            "pair", "flat"}) {
        std::string name = key;
        cmd->add_option_function<std::string>(
            "--" + name, [&cli, name](const std::string& v) { cli.overrides.emplace_back(name, v); },
            "config key " + name);
    }
}

tse::EngineConfig resolve_config(Cli& cli) {
    tse::EngineConfig cfg;
    if (!cli.config_path.empty()) cfg.load_file(cli.config_path);
    for (const auto& [key, value] : cli.overrides) cfg.set(key, value);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"term-structure lattice engine"};
    app.require_subcommand(1);
    Cli cli;

    std::string history, volmatrix, curve, bundle, cashflows, target, ladder;
    std::vector<std::string> instruments;
    int steps = 0;

    CLI::App* c_cal = app.add_subcommand("calibrate", "estimate a volatility matrix from history");
    c_cal->add_option("history", history, "history CSV (date,F_1,...)")->required();
    add_common_options(c_cal, cli);

    CLI::App* c_build = app.add_subcommand("build", "assemble and verify a model bundle");
    c_build->add_option("volmatrix", volmatrix, "volatility matrix CSV")->required();
    c_build->add_option("curve", curve, "initial forward curve CSV (T,F0)")->required();
    add_common_options(c_build, cli);

    CLI::App* c_verify = app.add_subcommand("verify", "no-arbitrage report for a bundle");
    c_verify->add_option("bundle", bundle, "model bundle JSON")->required();
    add_common_options(c_verify, cli);

    CLI::App* c_price = app.add_subcommand("price", "present-value table at a node");
    c_price->add_option("bundle", bundle, "model bundle JSON")->required();
    c_price->add_option("cashflows", cashflows, "cash-flow CSV (T,amount)")->required();
    c_price->add_option("nodespec", cli.cfg.node, "node spec t=<step>:counts=<c0,...>");
    add_common_options(c_price, cli);

    CLI::App* c_sens = app.add_subcommand("sens", "sensitivity report at a node");
    c_sens->add_option("bundle", bundle, "model bundle JSON")->required();
    c_sens->add_option("cashflows", cashflows, "cash-flow CSV (T,amount)")->required();
    c_sens->add_option("nodespec", cli.cfg.node, "node spec t=<step>:counts=<c0,...>");
    add_common_options(c_sens, cli);

    CLI::App* c_hedge = app.add_subcommand("hedge", "hedge weights for a target cash flow");
    c_hedge->add_option("bundle", bundle, "model bundle JSON")->required();
    c_hedge->add_option("target", target, "target cash-flow CSV")->required();
    c_hedge->add_option("instruments", instruments, "instrument cash-flow CSVs")
        ->required()
        ->expected(-1);
    add_common_options(c_hedge, cli);

    CLI::App* c_limit = app.add_subcommand("limit", "continuous-limit convergence table");
    c_limit->add_option("volmatrix", volmatrix, "volatility matrix CSV")->required();
    c_limit->add_option("ladder", ladder, "comma-separated dt ladder")->required();
    add_common_options(c_limit, cli);

    CLI::App* c_sim = app.add_subcommand("simulate", "sample a synthetic bucket history");
    c_sim->add_option("bundle", bundle, "model bundle JSON")->required();
    c_sim->add_option("steps", steps, "number of increments")->required();
    add_common_options(c_sim, cli);

    CLI11_PARSE(app, argc, argv);

    try {
        tse::EngineConfig cfg = resolve_config(cli);
        if (!cli.cfg.node.empty()) cfg.node = cli.cfg.node;  // positional node spec
        tse::ordered_json rep;
        if (c_cal->parsed()) rep = tse::cmd_calibrate(history, cfg);
        else if (c_build->parsed()) rep = tse::cmd_build(volmatrix, curve, cfg);
        else if (c_verify->parsed()) rep = tse::cmd_verify(bundle, cfg);
        else if (c_price->parsed()) rep = tse::cmd_price(bundle, cashflows, cfg);
        else if (c_sens->parsed()) rep = tse::cmd_sens(bundle, cashflows, cfg);
        else if (c_hedge->parsed()) rep = tse::cmd_hedge(bundle, target, instruments, cfg);
        else if (c_limit->parsed()) rep = tse::cmd_limit(volmatrix, ladder, cfg);
        else if (c_sim->parsed()) rep = tse::cmd_simulate(bundle, steps, cfg);
        std::cout << rep.dump(2) << "\n";
        return 0;
    } catch (const tse::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const tse::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
