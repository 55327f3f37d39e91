#include "dqps/randomtest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "dqps/photonics.hpp"

namespace dqps {

namespace {

double noisy(double intensity, double sigma, std::normal_distribution<double>& noise, Rng& rng) {
    if (sigma > 0.0) intensity += sigma * noise(rng);
    return std::clamp(intensity, 0.0, 1.0);
}

}  // namespace

IntensitySeries simulate_interblock(std::size_t n_samples, double noise_sigma, Rng& rng) {
    if (n_samples == 0) throw std::invalid_argument("need at least one sample");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
    std::normal_distribution<double> noise(0.0, 1.0);
    IntensitySeries out;
    out.samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double dphi = rng.uniform() * kTwoPi;
        out.samples.push_back(noisy(interference_intensity(dphi), noise_sigma, noise, rng));
    }
    return out;
}

IntensitySeries simulate_modulation(double delta_phi, std::size_t n_samples, double noise_sigma, Rng& rng) {
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be non-negative");
    std::normal_distribution<double> noise(0.0, 1.0);
    const double clean = interference_intensity(delta_phi);
    IntensitySeries out;
    out.samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) out.samples.push_back(noisy(clean, noise_sigma, noise, rng));
    return out;
}

double arcsine_cdf(double intensity) {
    const double x = std::clamp(intensity, 0.0, 1.0);
    return 2.0 / kPi * std::asin(std::sqrt(x));
}

double ks_critical_value(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("significance must lie in (0, 1)");
    return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

KsResult ks_against_arcsine(std::span<const double> series, double alpha) {
    if (series.empty()) throw std::invalid_argument("KS test needs a non-empty series");
    std::vector<double> sorted(series.begin(), series.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = arcsine_cdf(sorted[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    KsResult r;
    r.statistic = d;
    r.threshold = ks_critical_value(alpha) / std::sqrt(n);
    r.pass = d < r.threshold;
    return r;
}

AutocorrReport autocorrelation(std::span<const double> series, std::size_t max_lag, double z) {
    const std::size_t n = series.size();
    if (max_lag < 1 || n <= max_lag) throw std::invalid_argument("autocorrelation needs 1 <= max_lag < N");
    double mean = 0.0;
    for (double x : series) mean += x;
    mean /= static_cast<double>(n);
    std::vector<double> centered(n);
    double variance = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        centered[t] = series[t] - mean;
        variance += centered[t] * centered[t];
    }
    if (!(variance > 0.0)) {
        throw std::domain_error("autocorrelation undefined for a series with zero variance");
    }

    AutocorrReport r;
    r.bound = z / std::sqrt(static_cast<double>(n));
    r.coefficients.resize(max_lag);
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
        double acc = 0.0;
        for (std::size_t t = 0; t + lag < n; ++t) acc += centered[t] * centered[t + lag];
        const double c = acc / variance;
        r.coefficients[lag - 1] = c;
        if (std::abs(c) <= r.bound) ++r.within_bounds;
    }
    r.fraction_within_bounds = static_cast<double>(r.within_bounds) / static_cast<double>(max_lag);
    return r;
}

std::vector<std::uint64_t> histogram(std::span<const double> series, std::size_t n_bins) {
    if (n_bins < 2) throw std::invalid_argument("histogram needs at least two bins");
    std::vector<std::uint64_t> counts(n_bins, 0);
    for (double x : series) {
        const double clamped = std::clamp(x, 0.0, 1.0);
        auto bin = static_cast<std::size_t>(clamped * static_cast<double>(n_bins));
        ++counts[std::min(bin, n_bins - 1)];
    }
    return counts;
}

IntensitySeries read_series(std::istream& in, bool normalize) {
    IntensitySeries out;
    out.source = SeriesSource::File;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r,");
        double v = 0.0;
        const char* begin = line.data() + first;
        const char* end = line.data() + last + 1;
        auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": not a number");
        }
        out.samples.push_back(v);
    }
    if (out.samples.empty()) throw std::runtime_error("intensity trace is empty");
    const auto [lo, hi] = std::minmax_element(out.samples.begin(), out.samples.end());
    if (*lo >= 0.0 && *hi <= 1.0) return out;
    if (!normalize) throw std::runtime_error("intensity values outside [0,1]; enable normalization");
    const double low = *lo;
    const double span = *hi - *lo;
    if (!(span > 0.0)) throw std::runtime_error("cannot normalize a constant trace");
    for (double& v : out.samples) v = (v - low) / span;
    return out;
}

IntensitySeries load_series(const std::string& path, bool normalize) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open intensity trace: " + path);
    return read_series(in, normalize);
}

void write_histogram_csv(std::ostream& out, std::span<const std::uint64_t> counts) {
    out << "bin_lo,bin_hi,count\n";
    const double width = 1.0 / static_cast<double>(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out << i * width << ',' << (i + 1) * width << ',' << counts[i] << '\n';
    }
}

void write_autocorr_csv(std::ostream& out, const AutocorrReport& report) {
    out << "lag,coefficient,bound,within\n";
    for (std::size_t i = 0; i < report.coefficients.size(); ++i) {
        const double c = report.coefficients[i];
        out << i + 1 << ',' << c << ',' << report.bound << ',' << (std::abs(c) <= report.bound ? 1 : 0) << '\n';
    }
}

}  // namespace dqps
