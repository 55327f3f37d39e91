#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqps/keyrate.hpp"
#include "dqps/params.hpp"
#include "dqps/protocol.hpp"
#include "dqps/siftwire.hpp"

namespace dqps::cli {

// Fixed for scripting.
enum ExitCode : int {
    kOk = 0,
    kRandomnessFailed = 1,
    kUsage = 2,
    kNoKey = 3,
    kProtocolError = 4,
    kIoError = 5,
    kTimeout = 6,
};

class UsageError : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kRateCsvHeader =
    "attenuation_db,L,mu,q_gain,qber,r_tag,f_pa,f_ec,raw_bps,secure_bps";

/// "start:stop:step" (stop inclusive) or a single value.
std::vector<double> parse_range(const std::string& text);
/// "auto" (nullopt) or a comma-separated list.
std::optional<std::vector<double>> parse_mu_grid(const std::string& text);
std::optional<std::vector<int>> parse_block_lengths(const std::string& text);

enum class ProtocolKind { Dqps, Bb84 };
ProtocolKind parse_protocol(const std::string& text);

struct SweepSpec {
    SystemParams base;
    std::vector<double> attenuations_db;
    std::optional<std::vector<double>> mu_grid;  // nullopt = auto
    std::optional<std::vector<int>> block_lengths;
    ProtocolKind protocol = ProtocolKind::Dqps;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::string output;  // empty = stdout
};

struct SweepRow {
    double attenuation_db = 0.0;
    OptimumResult optimum;
};

/// One optimized (or fixed, for single-point grids) row per attenuation, in input order.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

std::string format_rate_row(double attenuation_db, int L, double mu, double qber, const KeyRateBreakdown& b);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
void write_session_csv(std::ostream& out, const SystemParams& params, const SessionReport& report);
void write_session_summary(std::ostream& out, const SessionReport& report);

int cmd_simulate(const SweepSpec& spec, std::ostream& out, std::ostream& err);
/// Single attenuation (spec.attenuations_db must hold one value).
int cmd_optimize(const SweepSpec& spec, std::ostream& out, std::ostream& err);

struct MonteCarloSpec {
    SessionConfig config;
    std::string output;
};

int cmd_montecarlo(const MonteCarloSpec& spec, std::ostream& out, std::ostream& err);

struct RandomTestSpec {
    std::optional<std::string> input;  // trace file; simulated when empty
    bool normalize = false;
    std::size_t samples = 100000;
    double noise_sigma = 0.0;
    std::size_t lags = 100;
    std::size_t bins = 50;
    double alpha = 0.01;
    double min_fraction_within = 0.93;
    std::uint64_t seed = 1;
    std::string histogram_output;
    std::string autocorr_output;
};

int cmd_randomtest(const RandomTestSpec& spec, std::ostream& out, std::ostream& err);

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;
};

Endpoint parse_endpoint(const std::string& text);

struct SiftSpec {
    wire::Role role = wire::Role::Alice;
    std::optional<Endpoint> listen;
    std::optional<Endpoint> connect;
    SessionConfig config;
    std::chrono::milliseconds timeout{30000};
    std::string output;
};

int cmd_sift(const SiftSpec& spec, std::ostream& out, std::ostream& err);

}  // namespace dqps::cli
