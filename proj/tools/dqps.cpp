// Command-line front end: simulate, optimize, montecarlo, randomtest, sift.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "dqps/cli.hpp"

namespace {

using namespace dqps;
using namespace dqps::cli;

/// --config plus one --<key> override per config key.
struct ParamOptions {
    std::string config_path;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "key = value parameter file");
        for (const auto& key : config_keys()) {
            app->add_option("--" + key, overrides[key], "override `" + key + "`");
        }
    }

    SystemParams resolve(const SystemParams& defaults = {}) const {
        SystemParams p = config_path.empty() ? defaults : load_config(config_path, defaults);
        for (const auto& [key, value] : overrides) {
            if (!value.empty()) apply_setting(p, key, value);
        }
        return p;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DQPS quantum key distribution laboratory"};
    app.require_subcommand(1);

    // simulate / optimize
    ParamOptions sweep_params;
    std::string atten = "0:22:2";
    std::string mu_text = "auto";
    std::string L_text = "auto";
    std::string protocol_text = "dqps";
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::string output;

    auto* simulate = app.add_subcommand("simulate", "analytic key-rate sweep over channel attenuation");
    sweep_params.attach(simulate);
    simulate->add_option("--atten", atten, "attenuation grid start:stop:step in dB (inclusive)");
    simulate->add_option("--mu-grid", mu_text, "mean photon number grid: auto or comma list");
    simulate->add_option("--L-set", L_text, "block lengths: auto or comma list");
    simulate->add_option("--protocol", protocol_text, "dqps or bb84");
    simulate->add_option("--seed", seed, "seed (the analytic sweep is deterministic)");
    simulate->add_option("--jobs", jobs, "parallel sweep workers");
    simulate->add_option("--out", output, "CSV output path (default stdout)");

    ParamOptions opt_params;
    std::string opt_atten;
    auto* optimize_cmd = app.add_subcommand("optimize", "best (mu, L) at one attenuation");
    opt_params.attach(optimize_cmd);
    optimize_cmd->add_option("--atten", opt_atten, "attenuation in dB (default: channel_loss_db)");
    optimize_cmd->add_option("--mu-grid", mu_text, "mean photon number grid: auto or comma list");
    optimize_cmd->add_option("--L-set", L_text, "block lengths: auto or comma list");
    optimize_cmd->add_option("--protocol", protocol_text, "dqps or bb84");
    optimize_cmd->add_option("--out", output, "CSV output path (default stdout)");

    // montecarlo
    ParamOptions mc_params;
    std::uint64_t n_blocks = 100000;
    double sample_fraction = 0.1;
    auto* montecarlo = app.add_subcommand("montecarlo", "pulse-level protocol simulation in one process");
    mc_params.attach(montecarlo);
    montecarlo->add_option("--n-blocks", n_blocks, "blocks sent");
    montecarlo->add_option("--seed", seed, "random seed");
    montecarlo->add_option("--sample-fraction", sample_fraction, "share of sifted bits disclosed for QBER");
    montecarlo->add_option("--out", output, "CSV output path (default stdout)");

    // randomtest
    RandomTestSpec rt;
    std::string rt_input;
    auto* randomtest = app.add_subcommand("randomtest", "inter-block phase randomness checks");
    randomtest->add_option("--input", rt_input, "intensity trace, one value per line (default: simulate)");
    randomtest->add_flag("--normalize", rt.normalize, "rescale an out-of-range trace to [0,1]");
    randomtest->add_option("--samples", rt.samples, "simulated sample count");
    randomtest->add_option("--noise", rt.noise_sigma, "additive Gaussian noise sigma");
    randomtest->add_option("--lags", rt.lags, "autocorrelation lags");
    randomtest->add_option("--bins", rt.bins, "histogram bins");
    randomtest->add_option("--alpha", rt.alpha, "KS significance level");
    randomtest->add_option("--seed", rt.seed, "random seed");
    randomtest->add_option("--hist-out", rt.histogram_output, "histogram CSV path");
    randomtest->add_option("--acf-out", rt.autocorr_output, "autocorrelation CSV path");

    // sift
    ParamOptions sift_params;
    std::string role_text;
    std::string listen_text;
    std::string connect_text;
    int timeout_ms = 30000;
    auto* sift_cmd = app.add_subcommand("sift", "one endpoint of a networked sifting session");
    sift_params.attach(sift_cmd);
    sift_cmd->add_option("--role", role_text, "alice or bob")->required();
    sift_cmd->add_option("--listen", listen_text, "host:port to accept the peer on");
    sift_cmd->add_option("--connect", connect_text, "host:port of the peer");
    sift_cmd->add_option("--n-blocks", n_blocks, "blocks sent");
    sift_cmd->add_option("--seed", seed, "shared session seed");
    sift_cmd->add_option("--sample-fraction", sample_fraction, "share of sifted bits disclosed for QBER");
    sift_cmd->add_option("--timeout-ms", timeout_ms, "per-message timeout");
    sift_cmd->add_option("--out", output, "report CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*simulate || *optimize_cmd) {
            const bool single = optimize_cmd->parsed();
            SweepSpec spec;
            spec.base = (single ? opt_params : sweep_params).resolve();
            spec.attenuations_db = single ? (opt_atten.empty() ? std::vector<double>{spec.base.channel_loss_db}
                                                               : parse_range(opt_atten))
                                          : parse_range(atten);
            spec.mu_grid = parse_mu_grid(mu_text);
            spec.block_lengths = parse_block_lengths(L_text);
            spec.protocol = parse_protocol(protocol_text);
            spec.seed = seed;
            spec.jobs = jobs;
            spec.output = output;
            return single ? cmd_optimize(spec, std::cout, std::cerr) : cmd_simulate(spec, std::cout, std::cerr);
        }
        if (*montecarlo) {
            MonteCarloSpec spec;
            spec.config = {mc_params.resolve(), n_blocks, seed, sample_fraction};
            spec.output = output;
            return cmd_montecarlo(spec, std::cout, std::cerr);
        }
        if (*randomtest) {
            if (!rt_input.empty()) rt.input = rt_input;
            return cmd_randomtest(rt, std::cout, std::cerr);
        }
        if (*sift_cmd) {
            SiftSpec spec;
            if (role_text == "alice") spec.role = wire::Role::Alice;
            else if (role_text == "bob") spec.role = wire::Role::Bob;
            else throw UsageError("--role must be alice or bob");
            if (!listen_text.empty()) spec.listen = parse_endpoint(listen_text);
            if (!connect_text.empty()) spec.connect = parse_endpoint(connect_text);
            spec.config = {sift_params.resolve(), n_blocks, seed, sample_fraction};
            spec.timeout = std::chrono::milliseconds(timeout_ms);
            spec.output = output;
            return cmd_sift(spec, std::cout, std::cerr);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIoError;
    }
    return kUsage;
}
