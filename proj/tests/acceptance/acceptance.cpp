// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dqps/keyrate.hpp"
#include "dqps/protocol.hpp"
#include "dqps/randomtest.hpp"
#include "dqps/siftwire.hpp"

using namespace dqps;
using namespace std::chrono_literals;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double optimized_rate(double db, bool bb84) {
    const auto mus = default_mu_grid();
    const std::vector<int> lengths = bb84 ? std::vector<int>{2} : default_block_lengths();
    return optimize(SystemParams{}, db, mus, lengths).breakdown.secure_rate;
}

Outcome ac1() {
    double worst = 0.0;
    for (double mu : {1e-4, 1e-3, 1e-2, 0.1, 0.5}) {
        worst = std::max(worst, std::abs(r_tag(mu, 2) - (1.0 - std::exp(-2 * mu) * (1 + 2 * mu))));
    }
    return {worst < 1e-12, fmt("max |r_tag(mu,2) - closed form| = %.3g", worst)};
}

Outcome ac2() {
    bool ok = binary_entropy(0.0) == 0.0 && binary_entropy(0.5) == 1.0;
    for (int i = 1; i <= 1000; ++i) ok = ok && binary_entropy(0.5 + 0.5 * i / 1000.0) == 1.0;
    const double h = binary_entropy(0.11);
    ok = ok && std::abs(h - 0.5) <= 1e-3;
    return {ok, fmt("h(0.11) = %.6f", h)};
}

Outcome ac3() {
    SystemParams p;
    p.channel_loss_db = 8.0;
    p.L = 65;
    p.mu = 0.00722;
    p.p0 = 1.0;
    p.e_mis = 0.0203;
    const double rate = analyze(p).secure_rate;
    const double rel = rate / 171.272e3 - 1.0;
    return {std::abs(rel) <= 0.15, fmt("rate %.4g bps", rate) + fmt(" (%+.1f%% vs 171.3 kbps)", 100 * rel)};
}

Outcome ac4() {
    const double at22 = optimized_rate(22.0, false);
    bool ok = at22 > 0.0;
    double beyond = 0.0;
    for (double db : {28.0, 30.0, 35.0, 40.0, 50.0}) beyond = std::max(beyond, optimized_rate(db, false));
    ok = ok && beyond == 0.0;
    return {ok, fmt("22 dB: %.4g bps", at22) + fmt(", max over >=28 dB: %.3g bps", beyond)};
}

Outcome ac5() {
    const double r0 = optimized_rate(0.0, false);
    return {r0 >= 1e6, fmt("0 dB: %.4g bps", r0)};
}

Outcome ac6() {
    double sum = 0.0;
    double lo = 1e300;
    int n = 0;
    for (int db = 0; db <= 16; ++db) {
        const double ratio = optimized_rate(db, false) / optimized_rate(db, true);
        lo = std::min(lo, ratio);
        sum += ratio;
        ++n;
    }
    const double mean = sum / n;
    return {lo > 1.0 && mean >= 1.8 && mean <= 4.0, fmt("min ratio %.3f", lo) + fmt(", mean %.3f", mean)};
}

Outcome ac7() {
    struct Point {
        int L;
        double mu;
        double db;
    };
    bool ok = true;
    std::string detail;
    for (const Point& pt : {Point{3, 0.05, 3}, Point{9, 0.02, 6}, Point{65, 0.00722, 8}}) {
        SessionConfig c;
        c.params.L = pt.L;
        c.params.mu = pt.mu;
        c.params.channel_loss_db = pt.db;
        c.n_blocks = 1000000;
        c.seed = 2024 + static_cast<std::uint64_t>(pt.L);
        c.sample_fraction = 1.0;
        const auto s = simulate_session(c);

        const auto stats = predict_channel_stats(c.params);
        const double n = static_cast<double>(c.n_blocks);
        const double q_model = block_gain(stats.p_click, pt.L);
        // Blocks that delivered a (first) click.
        const double q_emp = static_cast<double>(s.bob.kept.size()) / n;
        const double q_sigma = std::sqrt(q_model * (1 - q_model) / n);
        std::uint64_t bits = 0, errors = 0;
        for (std::size_t i = 0; i < s.sifted.bob.size(); ++i) {
            ++bits;
            errors += s.sifted.bob.bits[i] != s.sifted.alice.bits[i];
        }
        const double e_emp = static_cast<double>(errors) / static_cast<double>(bits);
        const double e_sigma = std::sqrt(stats.qber * (1 - stats.qber) / static_cast<double>(bits));
        const double zq = (q_emp - q_model) / q_sigma;
        const double ze = (e_emp - stats.qber) / e_sigma;
        ok = ok && std::abs(zq) <= 3 && std::abs(ze) <= 3;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%sL=%d: Q %.5g (z=%+.2f), QBER %.4f (z=%+.2f)", detail.empty() ? "" : "; ",
                      pt.L, q_emp, zq, e_emp, ze);
        detail += buf;
    }
    return {ok, detail};
}

Outcome ac8() {
    Rng rng = Rng::stream(1, streams::interblock, 0);
    const auto series = simulate_interblock(100000, 0.0, rng);
    const auto ks = ks_against_arcsine(series.samples, 0.01);
    const auto acf = autocorrelation(series.samples, 100);
    std::vector<double> alt(100000);
    for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = static_cast<double>(i % 2);
    const bool alt_ks = ks_against_arcsine(alt, 0.01).pass;
    const bool alt_acf = autocorrelation(alt, 100).within_bounds >= 93;
    const bool ok = ks.pass && acf.within_bounds >= 93 && !alt_ks && !alt_acf;
    return {ok, fmt("KS D=%.4g", ks.statistic) + fmt(" < %.4g", ks.threshold) +
                    ", " + std::to_string(acf.within_bounds) + "/100 lags in bounds; period-2 series " +
                    (alt_ks || alt_acf ? "not rejected" : "rejected by both")};
}

Outcome ac9() {
    SessionConfig c;
    c.params.e_mis = 0.0;
    c.params.dark_rate = 0.0;
    c.params.L = 9;
    c.params.mu = 0.05;
    c.params.p0 = 0.7;
    c.params.channel_loss_db = 2.0;
    c.n_blocks = 200000;
    c.seed = 99;
    c.sample_fraction = 1.0;  // disclose the whole key: zero errors means identical keys

    const auto local = simulate_session(c);
    const bool local_keys_equal = local.sifted.alice.bits == local.sifted.bob.bits;

    wire::TcpListener listener("127.0.0.1", 0);
    const pid_t child = fork();
    if (child == 0) {
        int rc = 1;
        try {
            auto t = listener.accept(20s);
            const auto report = wire::run_session(wire::Role::Bob, *t, c, 20s);
            rc = report == local.report ? 0 : 2;
        } catch (...) {
            rc = 3;
        }
        _exit(rc);
    }
    SessionReport alice;
    std::string error;
    try {
        auto t = wire::TcpTransport::connect("127.0.0.1", listener.port(), 10s);
        alice = wire::run_session(wire::Role::Alice, *t, c, 20s);
    } catch (const std::exception& e) {
        error = e.what();
    }
    int status = 0;
    waitpid(child, &status, 0);
    const bool bob_ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    const auto& s = alice.sample;
    const bool ok = error.empty() && bob_ok && local_keys_equal && alice == local.report &&
                    alice.sifted_bits_alice == alice.sifted_bits_bob && s.z_bits + s.x_bits == alice.sifted_bits_bob &&
                    s.z_errors + s.x_errors == 0 && alice.qber_z == 0.0 && alice.qber_x == 0.0 &&
                    alice.sifted_bits_bob > 0;
    return {ok, std::to_string(alice.sifted_bits_bob) + " sifted bits, " + std::to_string(s.z_errors + s.x_errors) +
                    " errors, reports " + (alice == local.report ? "match" : "differ") +
                    (bob_ok ? "" : ", bob process failed") + (error.empty() ? "" : ", " + error)};
}

std::vector<wire::Message> seed_messages(Rng& rng) {
    SessionReport rep;
    rep.blocks_sent = rng();
    rep.p_click = rng.uniform();
    rep.breakdown.secure_rate = rng.uniform() * 1e6;
    std::vector<SlotRef> slots;
    for (std::uint32_t b = 0; b < 40; b += 1 + rng() % 3) slots.push_back({b, static_cast<std::uint16_t>(rng() % 64)});
    std::vector<std::uint8_t> bits(1 + rng() % 70);
    for (auto& b : bits) b = rng.coin();
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < bits.size(); ++i) idx.push_back(3 * i + static_cast<std::uint32_t>(rng() % 3));
    return {wire::SessionInit{rng(), rng()}, wire::Detections{slots}, wire::BasisRevealBob{bits},
            wire::BasisRevealAlice{bits}, wire::QberSample{idx, bits}, wire::Report{rep},
            wire::Terminate{static_cast<std::uint32_t>(rng() % 4)}};
}

Outcome ac10() {
    Rng rng(0x5eed);
    const auto messages = seed_messages(rng);
    std::vector<std::vector<std::uint8_t>> frames;
    for (const auto& m : messages) frames.push_back(wire::encode(m));

    std::size_t valid = 0, typed = 0, crashes = 0;
    for (int i = 0; i < 1000000; ++i) {
        std::vector<std::uint8_t> f;
        switch (rng() % 4) {
            case 0: {  // random bytes, sometimes behind a valid header
                f.resize(rng() % 64);
                for (auto& b : f) b = static_cast<std::uint8_t>(rng());
                if (rng.coin() && f.size() >= wire::kHeaderSize) std::copy_n(frames[rng() % 7].begin(), 6, f.begin());
                break;
            }
            case 1: {  // bit flips
                f = frames[rng() % frames.size()];
                for (int k = 1 + static_cast<int>(rng() % 3); k > 0; --k) f[rng() % f.size()] ^= 1u << (rng() % 8);
                break;
            }
            case 2: {  // truncation or extension
                f = frames[rng() % frames.size()];
                if (rng.coin()) f.resize(rng() % f.size());
                else for (int k = 1 + static_cast<int>(rng() % 8); k > 0; --k) f.push_back(static_cast<std::uint8_t>(rng()));
                break;
            }
            default: {  // rewrite the length or type field
                f = frames[rng() % frames.size()];
                if (rng.coin()) f[5] = static_cast<std::uint8_t>(rng());
                else for (int k = 6; k < 10; ++k) f[k] = static_cast<std::uint8_t>(rng());
                break;
            }
        }
        try {
            const auto r = wire::try_decode(f);
            if (std::holds_alternative<wire::Message>(r)) {
                ++valid;
                if (wire::decode(wire::encode(std::get<wire::Message>(r))) != std::get<wire::Message>(r)) ++crashes;
            } else {
                ++typed;
            }
        } catch (...) {
            ++crashes;
        }
    }

    // Re-segment a 1000-frame stream at random boundaries.
    std::vector<std::uint8_t> stream;
    std::vector<wire::Message> sent;
    for (int i = 0; i < 1000; ++i) {
        const auto& m = messages[rng() % messages.size()];
        const auto f = wire::encode(m);
        stream.insert(stream.end(), f.begin(), f.end());
        sent.push_back(m);
    }
    bool chunks_ok = true;
    for (int trial = 0; trial < 50 && chunks_ok; ++trial) {
        wire::FrameDecoder dec;
        std::vector<wire::Message> got;
        std::size_t pos = 0;
        const std::size_t max_chunk = trial == 0 ? 1 : 1 + rng() % 4096;
        try {
            while (pos < stream.size()) {
                const std::size_t n = std::min<std::size_t>(stream.size() - pos, 1 + rng() % max_chunk);
                dec.feed(std::span(stream).subspan(pos, n));
                pos += n;
                while (auto m = dec.next()) got.push_back(std::move(*m));
            }
        } catch (...) {
            chunks_ok = false;
        }
        chunks_ok = chunks_ok && got == sent && dec.buffered() == 0;
    }
    return {crashes == 0 && chunks_ok, std::to_string(valid) + " valid, " + std::to_string(typed) +
                                           " typed errors, " + std::to_string(crashes) +
                                           " untyped; re-segmentation " + (chunks_ok ? "invariant" : "BROKEN")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"AC1  r_tag closed form (L=2)", ac1},
        {"AC2  binary entropy contract", ac2},
        {"AC3  8 dB operating point", ac3},
        {"AC4  reach", ac4},
        {"AC5  short-distance rate", ac5},
        {"AC6  DQPS vs BB84", ac6},
        {"AC7  Monte Carlo vs analytic", ac7},
        {"AC8  randomness suite", ac8},
        {"AC9  noiseless two-process session", ac9},
        {"AC10 wire robustness", ac10},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %-36s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
