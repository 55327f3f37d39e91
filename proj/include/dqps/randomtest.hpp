#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dqps/rng.hpp"

namespace dqps {

enum class SeriesSource { Simulated, File };

struct IntensitySeries {
    std::vector<double> samples;
    SeriesSource source = SeriesSource::Simulated;
};

/// Interference intensity between pulses of independent blocks:
/// cos^2(dphi/2) with dphi uniform, plus clipped Gaussian noise.
IntensitySeries simulate_interblock(std::size_t n_samples, double noise_sigma, Rng& rng);

/// Intensities of a fixed differential phase (one DQPS modulation value) with the same noise model.
IntensitySeries simulate_modulation(double delta_phi, std::size_t n_samples, double noise_sigma, Rng& rng);

/// CDF of cos^2(theta/2) for uniform theta: (2/pi) asin(sqrt(I)).
double arcsine_cdf(double intensity);

struct KsResult {
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

/// Asymptotic Kolmogorov critical value c(alpha) = sqrt(-ln(alpha/2) / 2).
double ks_critical_value(double alpha);

KsResult ks_against_arcsine(std::span<const double> series, double alpha = 0.01);

struct AutocorrReport {
    std::vector<double> coefficients;  // lags 1..max_lag
    double bound = 0.0;
    std::size_t within_bounds = 0;
    double fraction_within_bounds = 0.0;

    bool pass(double min_fraction = 0.93) const { return fraction_within_bounds >= min_fraction; }
};

AutocorrReport autocorrelation(std::span<const double> series, std::size_t max_lag, double z = 1.96);

std::vector<std::uint64_t> histogram(std::span<const double> series, std::size_t n_bins);

/// One value per line; blank lines and `#` comments are skipped. Values
/// outside [0, 1] are rejected unless `normalize` rescales the trace to [0, 1].
IntensitySeries read_series(std::istream& in, bool normalize = false);
IntensitySeries load_series(const std::string& path, bool normalize = false);

void write_histogram_csv(std::ostream& out, std::span<const std::uint64_t> counts);
void write_autocorr_csv(std::ostream& out, const AutocorrReport& report);

}  // namespace dqps
