#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "dqps/params.hpp"

namespace dqps {

class NumericError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-block quantities feeding the asymptotic key rate for one operating point.
/// Error fractions e0/e1 are per block, i.e. QBER times q_gain.
struct KeyRateBreakdown {
    double q_gain = 0.0;
    double e0 = 0.0;
    double e1 = 0.0;
    double r_tag = 0.0;
    double f_pa = 0.0;
    double f_ec = 0.0;
    double secure_rate = 0.0;
    double raw_rate = 0.0;

    double qber() const { return q_gain > 0.0 ? e0 / q_gain : 0.0; }

    bool operator==(const KeyRateBreakdown&) const = default;
};

/// Binary entropy in bits, truncated to 1 above x = 0.5.
double binary_entropy(double x);

/// Probability that a block of L pulses is tagged (photons in adjacent pulses).
double r_tag(double mu, int L);

/// Probability of at least one click among the L-1 interference slots of a block.
double block_gain(double p_click, int L);

double privacy_amp(double q, double e1, double rtag);

double error_correction(double e0, double q);

KeyRateBreakdown secure_key_rate(const SystemParams& params, double q, double e0, double e1);

struct ChannelStats {
    double p_signal = 0.0;
    double p_dark = 0.0;
    double p_click = 0.0;
    double qber = 0.0;
    // No clicks at all; qber is meaningless and reported as 0.
    bool no_clicks = false;
};

/// Per-slot click probability and QBER expected from the physical parameters.
ChannelStats predict_channel_stats(const SystemParams& params);

/// Full analytic chain: channel stats, block gain, and the key-rate breakdown.
/// The check-basis error uses e_check when set and matches the data basis otherwise.
KeyRateBreakdown analyze(const SystemParams& params);

struct OptimumResult {
    bool positive_key = false;
    double mu = 0.0;
    int L = 0;
    KeyRateBreakdown breakdown;
};

/// Exhaustive grid search of mu x L at the given channel attenuation.
/// Ties go to the smaller L, then the smaller mu. Without any positive key
/// rate, positive_key is false and the smallest (L, mu) pair is reported.
OptimumResult optimize(const SystemParams& base, double attenuation_db,
                       std::span<const double> mu_grid, std::span<const int> L_set);

/// 40 log-spaced points in [1e-4, 0.2].
std::vector<double> default_mu_grid();
/// {2, 3, 5, 9, ..., 257}.
std::vector<int> default_block_lengths();

}  // namespace dqps
