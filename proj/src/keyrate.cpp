#include "dqps/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dqps {

namespace {

void require_probability(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::invalid_argument(std::string(what) + " must lie in [0,1], got " + std::to_string(x));
    }
}

double ratio_clamped(double num, double den) { return std::clamp(num / den, 0.0, 1.0); }

}  // namespace

double binary_entropy(double x) {
    require_probability(x, "entropy argument");
    if (x == 0.0) return 0.0;
    if (x >= 0.5) return 1.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

double r_tag(double mu, int L) {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("mu must be finite and non-negative");
    if (L < 2) throw std::invalid_argument("block length must be at least 2");
    if (mu == 0.0) return 0.0;

    // log of mu^m (L+1-m)! / (m! (L+1-2m)!) for m = 0..floor(L/2), built from
    // consecutive-term ratios; lgamma differences lose digits for long blocks.
    const int m_max = L / 2;
    const double log_mu = std::log(mu);
    std::vector<double> log_terms(static_cast<std::size_t>(m_max) + 1);
    log_terms[0] = 0.0;
    for (int m = 0; m < m_max; ++m) {
        const double num = static_cast<double>(L + 1 - 2 * m) * static_cast<double>(L - 2 * m);
        const double den = static_cast<double>(m + 1) * static_cast<double>(L + 1 - m);
        log_terms[m + 1] = log_terms[m] + log_mu + std::log(num / den);
    }
    const double peak = *std::max_element(log_terms.begin(), log_terms.end());

    // Neumaier summation in ascending m.
    double sum = 0.0;
    double carry = 0.0;
    for (double lt : log_terms) {
        const double term = std::exp(lt - peak);
        const double t = sum + term;
        if (std::abs(sum) >= std::abs(term)) carry += (sum - t) + term;
        else carry += (term - t) + sum;
        sum = t;
    }
    const double log_sum = peak + std::log(sum + carry);
    const double r = -std::expm1(log_sum - mu * L);
    if (!std::isfinite(r)) {
        throw NumericError("r_tag evaluation is not finite for mu=" + std::to_string(mu) + ", L=" + std::to_string(L));
    }
    return std::clamp(r, 0.0, 1.0);
}

double block_gain(double p_click, int L) {
    require_probability(p_click, "click probability");
    if (L < 2) throw std::invalid_argument("block length must be at least 2");
    if (p_click == 1.0) return 1.0;
    return -std::expm1((L - 1) * std::log1p(-p_click));
}

double privacy_amp(double q, double e1, double rtag) {
    if (!(q > 0.0 && q <= 1.0)) throw std::domain_error("privacy amplification undefined for gain q=" + std::to_string(q));
    require_probability(rtag, "r_tag");
    if (!(e1 >= 0.0)) throw std::invalid_argument("check-basis error must be non-negative");
    if (rtag >= q) return 1.0;
    const double tagged = rtag / q;
    return tagged + (1.0 - tagged) * binary_entropy(ratio_clamped(e1, q - rtag));
}

double error_correction(double e0, double q) {
    if (!(q > 0.0)) throw std::domain_error("error correction undefined for gain q=" + std::to_string(q));
    if (!(e0 >= 0.0)) throw std::invalid_argument("data-basis error must be non-negative");
    return binary_entropy(ratio_clamped(e0, q));
}

KeyRateBreakdown secure_key_rate(const SystemParams& params, double q, double e0, double e1) {
    require_probability(q, "gain");
    KeyRateBreakdown out;
    out.q_gain = q;
    out.e0 = e0;
    out.e1 = e1;
    out.r_tag = r_tag(params.mu, params.L);
    if (q == 0.0) {
        // Nothing detected: every penalty is total and nothing is sifted.
        out.f_pa = 1.0;
        out.f_ec = 1.0;
        return out;
    }
    if (e0 > q || e1 > q) throw std::invalid_argument("error fractions cannot exceed the gain");
    out.f_pa = privacy_amp(q, e1, out.r_tag);
    out.f_ec = error_correction(e0, q);
    out.raw_rate = params.n_rep * params.p0 * params.p0 * q / params.L;
    const double bracket = 1.0 - out.f_pa - out.f_ec;
    out.secure_rate = bracket > 0.0 ? out.raw_rate * bracket : 0.0;
    if (!std::isfinite(out.secure_rate)) throw NumericError("secure key rate is not finite");
    return out;
}

ChannelStats predict_channel_stats(const SystemParams& params) {
    ChannelStats s;
    s.p_signal = -std::expm1(-params.mu * transmittance(params));
    s.p_dark = params.dark_outcomes * params.dark_rate / params.n_rep;
    s.p_click = s.p_signal + s.p_dark - s.p_signal * s.p_dark;
    const double denom = s.p_signal + s.p_dark;
    if (denom == 0.0) {
        s.no_clicks = true;
        s.qber = 0.0;
    } else {
        s.qber = (params.e_mis * s.p_signal + 0.5 * s.p_dark) / denom;
    }
    return s;
}

KeyRateBreakdown analyze(const SystemParams& params) {
    const ChannelStats stats = predict_channel_stats(params);
    const double q = block_gain(stats.p_click, params.L);
    double check_qber = stats.qber;
    if (params.e_check && !stats.no_clicks) {
        check_qber = (*params.e_check * stats.p_signal + 0.5 * stats.p_dark) / (stats.p_signal + stats.p_dark);
    }
    return secure_key_rate(params, q, stats.qber * q, check_qber * q);
}

OptimumResult optimize(const SystemParams& base, double attenuation_db, std::span<const double> mu_grid,
                       std::span<const int> L_set) {
    if (mu_grid.empty() || L_set.empty()) throw std::invalid_argument("optimization grids must be non-empty");
    std::vector<int> lengths(L_set.begin(), L_set.end());
    std::sort(lengths.begin(), lengths.end());
    for (int L : lengths) {
        if (L != 2 && !is_power_of_two_plus_one(L)) {
            throw std::invalid_argument("block lengths must be 2 or 2^n + 1, got " + std::to_string(L));
        }
    }
    std::vector<double> mus(mu_grid.begin(), mu_grid.end());
    std::sort(mus.begin(), mus.end());

    SystemParams p = base;
    p.channel_loss_db = attenuation_db;
    OptimumResult best;
    bool first = true;
    for (int L : lengths) {
        p.L = L;
        for (double mu : mus) {
            p.mu = mu;
            validate(p);
            const KeyRateBreakdown b = analyze(p);
            // The first grid point stands in when no point yields key.
            if (first || b.secure_rate > best.breakdown.secure_rate) {
                best = {b.secure_rate > 0.0, mu, L, b};
                first = false;
            }
        }
    }
    return best;
}

std::vector<double> default_mu_grid() {
    constexpr int n = 40;
    const double lo = std::log10(1e-4);
    const double hi = std::log10(0.2);
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = std::pow(10.0, lo + (hi - lo) * i / (n - 1));
    return grid;
}

std::vector<int> default_block_lengths() { return {2, 3, 5, 9, 17, 33, 65, 129, 257}; }

}  // namespace dqps
