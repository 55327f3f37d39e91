#include "dqps/randomtest.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dqps/photonics.hpp"
#include "gtest/gtest.h"

using namespace dqps;

TEST(ArcsineCdf, shape) {
    EXPECT_EQ(arcsine_cdf(0.0), 0.0);
    EXPECT_NEAR(arcsine_cdf(1.0), 1.0, 1e-15);
    EXPECT_NEAR(arcsine_cdf(0.5), 0.5, 1e-15);
    for (int i = 1; i < 100; ++i) {
        const double x = i / 100.0;
        EXPECT_NEAR(arcsine_cdf(x) + arcsine_cdf(1 - x), 1.0, 1e-14);
        EXPECT_GT(arcsine_cdf(x), arcsine_cdf(x - 0.01));
    }
}

TEST(Ks, critical_values) {
    EXPECT_NEAR(ks_critical_value(0.05), 1.3581015157406195, 1e-12);
    EXPECT_NEAR(ks_critical_value(0.01), 1.6276236307187293, 1e-12);
    EXPECT_THROW(ks_critical_value(0.0), std::invalid_argument);
}

TEST(Ks, accepts_uniform_phase_and_rejects_fixed_phase) {
    Rng rng = Rng::stream(1, streams::interblock, 0);
    const auto random = simulate_interblock(100000, 0.0, rng);
    EXPECT_TRUE(ks_against_arcsine(random.samples).pass);

    const auto fixed = simulate_modulation(kPi / 2, 100000, 0.05, rng);
    EXPECT_FALSE(ks_against_arcsine(fixed.samples).pass);

    std::vector<double> uniform(10000);
    for (std::size_t i = 0; i < uniform.size(); ++i) uniform[i] = (i + 0.5) / uniform.size();
    EXPECT_FALSE(ks_against_arcsine(uniform).pass);
}

TEST(Ks, exact_quantiles_have_tiny_statistic) {
    // Samples placed at F^-1((i+0.5)/n): D = 0.5/n.
    const std::size_t n = 1000;
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = std::sin(kPi / 2 * (i + 0.5) / n);
        q[i] = s * s;
    }
    EXPECT_NEAR(ks_against_arcsine(q).statistic, 0.5 / n, 1e-12);
}

TEST(Autocorr, white_sequence_within_bounds) {
    Rng rng(4);
    const auto s = simulate_interblock(100000, 0.0, rng);
    const auto r = autocorrelation(s.samples, 100);
    ASSERT_EQ(r.coefficients.size(), 100u);
    EXPECT_NEAR(r.bound, 1.96 / std::sqrt(100000.0), 1e-15);
    EXPECT_TRUE(r.pass());
}

TEST(Autocorr, period_two_sequence_fails) {
    std::vector<double> alt(10000);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2;
    const auto r = autocorrelation(alt, 20);
    EXPECT_EQ(r.within_bounds, 0u);
    EXPECT_FALSE(r.pass());
    EXPECT_NEAR(r.coefficients[0], -1.0, 1e-3);
    EXPECT_NEAR(r.coefficients[1], 1.0, 1e-3);
    EXPECT_FALSE(ks_against_arcsine(alt).pass);
}

TEST(Autocorr, error_paths) {
    const std::vector<double> flat(100, 0.5);
    EXPECT_THROW(autocorrelation(flat, 5), std::domain_error);
    const std::vector<double> few = {0.1, 0.2, 0.3};
    EXPECT_THROW(autocorrelation(few, 3), std::invalid_argument);
    EXPECT_THROW(autocorrelation(few, 0), std::invalid_argument);
}

TEST(Histogram, matches_arcsine_bin_masses) {
    Rng rng(99);
    const std::size_t n = 200000;
    const auto s = simulate_interblock(n, 0.0, rng);
    const auto counts = histogram(s.samples, 10);
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}), n);
    for (std::size_t b = 0; b < 10; ++b) {
        const double mass = arcsine_cdf((b + 1) / 10.0) - arcsine_cdf(b / 10.0);
        EXPECT_NEAR(counts[b] / double(n), mass, 5 * std::sqrt(mass / n)) << b;
    }
    EXPECT_NEAR(arcsine_cdf(0.1), 0.2048327646991335, 1e-12);
    EXPECT_NEAR(arcsine_cdf(0.5) - arcsine_cdf(0.4), 0.0640942168489749, 1e-12);
    EXPECT_THROW(histogram(s.samples, 1), std::invalid_argument);
}

TEST(Series, noise_is_clipped) {
    Rng rng(3);
    const auto s = simulate_interblock(10000, 0.3, rng);
    for (double x : s.samples) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
}

TEST(Series, read_and_normalize) {
    std::istringstream good("# trace\n0.1\n0.9\n\n0.5  \n");
    const auto s = read_series(good);
    EXPECT_EQ(s.samples, (std::vector<double>{0.1, 0.9, 0.5}));
    EXPECT_EQ(s.source, SeriesSource::File);

    std::istringstream raw("2\n4\n3\n");
    EXPECT_THROW(read_series(raw), std::runtime_error);
    std::istringstream raw2("2\n4\n3\n");
    EXPECT_EQ(read_series(raw2, true).samples, (std::vector<double>{0.0, 1.0, 0.5}));

    std::istringstream bad("0.1\nabc\n");
    EXPECT_THROW(read_series(bad), std::runtime_error);
    std::istringstream empty("# nothing\n");
    EXPECT_THROW(read_series(empty), std::runtime_error);
    std::istringstream constant("5\n5\n");
    EXPECT_THROW(read_series(constant, true), std::runtime_error);
    EXPECT_THROW(load_series("/nonexistent/trace.txt"), std::runtime_error);
}

TEST(Series, csv_writers) {
    std::ostringstream h;
    const std::vector<std::uint64_t> counts = {3, 1};
    write_histogram_csv(h, counts);
    EXPECT_EQ(h.str().substr(0, h.str().find('\n')), "bin_lo,bin_hi,count");
    EXPECT_NE(h.str().find("0.5,1,1"), std::string::npos);

    std::ostringstream a;
    AutocorrReport r;
    r.coefficients = {0.5};
    r.bound = 0.1;
    write_autocorr_csv(a, r);
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "lag,coefficient,bound,within");
}

TEST(Series, noiseless_moments) {
    Rng rng = Rng::stream(3, streams::interblock, 0);
    const auto s = simulate_interblock(100000, 0.0, rng);
    const double n = 1e5;
    const double mean = std::accumulate(s.samples.begin(), s.samples.end(), 0.0) / n;
    // Var[cos^2(theta/2)] = 1/8.
    EXPECT_NEAR(mean, 0.5, 3 * std::sqrt(0.125 / n));
    const double below = std::count_if(s.samples.begin(), s.samples.end(), [](double x) { return x <= 0.5; }) / n;
    EXPECT_NEAR(below, 0.5, 3 * std::sqrt(0.25 / n));
}

TEST(Ks, accepts_arcsine_for_nearly_all_seeds) {
    int passes = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = Rng::stream(seed, streams::interblock, 0);
        passes += ks_against_arcsine(simulate_interblock(20000, 0.0, rng).samples, 0.01).pass;
    }
    EXPECT_GE(passes, 97);
}

TEST(Ks, constant_series_fails) {
    const std::vector<double> flat(10000, 0.5);
    EXPECT_FALSE(ks_against_arcsine(flat).pass);
}

TEST(Autocorr, tiny_noise_around_constant_is_uncorrelated) {
    Rng rng(12);
    const auto s = simulate_modulation(kPi / 2, 100000, 1e-6, rng);
    const auto r = autocorrelation(s.samples, 50);
    for (double c : r.coefficients) EXPECT_LT(std::abs(c), 0.02);
}

TEST(Histogram, end_bins_exceed_middle_and_point_mass) {
    Rng rng(21);
    const auto s = simulate_interblock(10000, 0.0, rng);
    const auto counts = histogram(s.samples, 11);
    EXPECT_GT(counts.front(), counts[5]);
    EXPECT_GT(counts.back(), counts[5]);

    const std::vector<double> half(1000, 0.5);
    const auto single = histogram(half, 10);
    EXPECT_EQ(std::count_if(single.begin(), single.end(), [](auto c) { return c > 0; }), 1);
    EXPECT_EQ(single[5], 1000u);
}
