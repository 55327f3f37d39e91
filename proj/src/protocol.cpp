#include "dqps/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "dqps/rng.hpp"

namespace dqps {

const char* to_string(ProtocolErrorKind kind) {
    switch (kind) {
        case ProtocolErrorKind::Malformed: return "malformed announcement";
        case ProtocolErrorKind::OutOfOrder: return "message out of order";
        case ProtocolErrorKind::DigestMismatch: return "configuration digest mismatch";
        case ProtocolErrorKind::Timeout: return "timeout";
        case ProtocolErrorKind::PeerClosed: return "peer closed the connection";
        case ProtocolErrorKind::Aborted: return "session aborted by peer";
    }
    return "unknown";
}

std::uint64_t digest(const SessionConfig& config) {
    std::uint64_t h = digest(config.params);
    auto fold = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    fold(config.n_blocks);
    fold(config.seed);
    fold(std::bit_cast<std::uint64_t>(config.sample_fraction));
    return h;
}

AliceRecord::AliceRecord(const SystemParams& params, std::uint64_t n_blocks)
    : params_(params),
      bases_(n_blocks, Basis::Z),
      global_phases_(n_blocks, 0.0),
      bits_(n_blocks * static_cast<std::uint64_t>(params.L - 1), false) {}

PulseBlock AliceRecord::pulse_block(std::uint64_t block) const {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(slots_per_block()));
    for (int k = 0; k < slots_per_block(); ++k) bits[k] = bit(block, k);
    return encode_block(bits, bases_[block], global_phases_[block]);
}

AliceRecord alice_prepare(const SystemParams& params, std::uint64_t n_blocks, std::uint64_t seed) {
    validate(params);
    if (n_blocks == 0) throw std::invalid_argument("a session needs at least one block");
    if (n_blocks > 0xffffffffULL) throw std::invalid_argument("block indices are limited to 32 bits");
    AliceRecord record(params, n_blocks);
    const int slots = params.L - 1;
    for (std::uint64_t i = 0; i < n_blocks; ++i) {
        Rng rng = Rng::stream(seed, streams::alice, i);
        record.bases_[i] = rng.uniform() < params.p0 ? Basis::Z : Basis::X;
        const std::uint64_t base = i * static_cast<std::uint64_t>(slots);
        for (int k = 0; k < slots; ++k) record.bits_[base + k] = rng.coin();
        record.global_phases_[i] = rng.uniform() * kTwoPi;
    }
    return record;
}

std::optional<PulseBlock> PulseStream::next() {
    if (cursor_ >= record_->n_blocks()) return std::nullopt;
    return record_->pulse_block(cursor_++);
}

BobRecord bob_measure(PulseStream& pulses, const SystemParams& params, std::uint64_t seed) {
    validate(params);
    const SlotDetector detector(params);
    BobRecord bob;
    bob.settings.reserve(pulses.size());
    std::uint32_t index = 0;
    while (auto block = pulses.next()) {
        if (block->length() != params.L) throw std::invalid_argument("pulse block length does not match L");
        Rng rng = Rng::stream(seed, streams::bob, index);
        const Basis setting = rng.coin() ? Basis::X : Basis::Z;
        const double phi = bob_phase(setting);
        bob.settings.push_back(setting);
        bool kept = false;
        for (int k = 0; k < params.L - 1; ++k) {
            const auto click = detector.detect(block->slot_phase(k), phi, rng);
            if (!click) continue;
            ++bob.clicks;
            if (!kept) {
                bob.kept.push_back({index, static_cast<std::uint16_t>(k), static_cast<std::uint8_t>(click->detector),
                                    click->cause});
                kept = true;
            }
        }
        bob.slots_offered += static_cast<std::uint64_t>(params.L - 1);
        ++index;
    }
    return bob;
}

std::vector<SlotRef> announced_slots(const BobRecord& bob) {
    std::vector<SlotRef> out;
    out.reserve(bob.kept.size());
    for (const auto& e : bob.kept) out.push_back({e.block_index, e.slot_index});
    return out;
}

SiftedKey sift_alice(const AliceRecord& alice, std::span<const SlotRef> detections,
                     std::span<const Basis> bob_settings) {
    if (bob_settings.size() != alice.n_blocks()) {
        throw ProtocolError(ProtocolErrorKind::Malformed, "basis announcement covers " +
                                                              std::to_string(bob_settings.size()) + " blocks, expected " +
                                                              std::to_string(alice.n_blocks()));
    }
    SiftedKey key;
    std::optional<std::uint32_t> previous;
    for (const SlotRef& d : detections) {
        if (d.block >= alice.n_blocks() || d.slot >= alice.slots_per_block()) {
            throw ProtocolError(ProtocolErrorKind::Malformed, "detection outside the session: block " +
                                                                  std::to_string(d.block) + ", slot " +
                                                                  std::to_string(d.slot));
        }
        if (previous && d.block <= *previous) {
            throw ProtocolError(ProtocolErrorKind::Malformed, "more than one detection announced for a block");
        }
        previous = d.block;
        const Basis basis = alice.basis(d.block);
        if (basis != bob_settings[d.block]) continue;
        key.bits.push_back(alice.bit(d.block, d.slot));
        key.bases.push_back(basis);
        key.slots.push_back(d);
    }
    return key;
}

SiftedKey sift_bob(const BobRecord& bob, std::span<const Basis> alice_bases) {
    if (alice_bases.size() != bob.settings.size()) {
        throw ProtocolError(ProtocolErrorKind::Malformed, "basis announcement covers " +
                                                              std::to_string(alice_bases.size()) + " blocks, expected " +
                                                              std::to_string(bob.settings.size()));
    }
    SiftedKey key;
    for (const auto& e : bob.kept) {
        const Basis basis = bob.settings[e.block_index];
        if (basis != alice_bases[e.block_index]) continue;
        key.bits.push_back(e.detector);
        key.bases.push_back(basis);
        key.slots.push_back({e.block_index, e.slot_index});
    }
    return key;
}

SiftResult sift(const AliceRecord& alice, const BobRecord& bob) {
    const auto slots = announced_slots(bob);
    return {sift_alice(alice, slots, bob.settings), sift_bob(bob, alice.bases())};
}

std::vector<std::uint32_t> choose_sample(std::size_t sifted_bits, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("sample fraction must lie in (0, 1]");
    const auto count = std::min<std::size_t>(
        sifted_bits, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sifted_bits))));
    std::vector<std::uint32_t> indices;
    indices.reserve(count);
    // Selection sampling keeps the output sorted.
    Rng rng = Rng::stream(seed, streams::sample, 0);
    std::size_t needed = count;
    for (std::size_t i = 0; i < sifted_bits && needed > 0; ++i) {
        const std::size_t remaining = sifted_bits - i;
        if (rng.uniform() * static_cast<double>(remaining) < static_cast<double>(needed)) {
            indices.push_back(static_cast<std::uint32_t>(i));
            --needed;
        }
    }
    return indices;
}

SampleTally tally_sample(const SiftedKey& key, std::span<const std::uint32_t> indices,
                         std::span<const std::uint8_t> disclosed) {
    if (indices.size() != disclosed.size()) {
        throw ProtocolError(ProtocolErrorKind::Malformed, "sample indices and disclosed bits differ in length");
    }
    SampleTally t;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= key.size()) {
            throw ProtocolError(ProtocolErrorKind::Malformed, "sample index beyond the sifted key");
        }
        const bool error = key.bits[indices[i]] != disclosed[i];
        if (key.bases[indices[i]] == Basis::Z) {
            ++t.z_bits;
            t.z_errors += error;
        } else {
            ++t.x_bits;
            t.x_errors += error;
        }
    }
    return t;
}

SessionReport estimate(const EstimateInputs& in) {
    SessionReport r;
    r.blocks_sent = in.blocks_sent;
    r.slots_offered = in.slots_offered;
    r.clicks = in.clicks;
    r.kept_events = in.kept_events;
    r.sifted_bits_alice = in.sifted_bits_alice;
    r.sifted_bits_bob = in.sifted_bits_bob;
    r.sample = in.sample;
    r.p_click = in.slots_offered > 0 ? static_cast<double>(in.clicks) / static_cast<double>(in.slots_offered) : 0.0;
    r.q_gain_estimate = block_gain(r.p_click, in.params.L);

    const auto& s = in.sample;
    if (s.z_bits > 0) r.qber_z = static_cast<double>(s.z_errors) / static_cast<double>(s.z_bits);
    if (s.x_bits > 0) r.qber_x = static_cast<double>(s.x_errors) / static_cast<double>(s.x_bits);

    const bool have_sample = s.z_bits + s.x_bits > 0;
    if (in.sifted_bits_bob == 0 || !have_sample || r.q_gain_estimate == 0.0) {
        r.no_key = true;
        r.breakdown.q_gain = r.q_gain_estimate;
        r.breakdown.r_tag = r_tag(in.params.mu, in.params.L);
        r.breakdown.f_pa = 1.0;
        r.breakdown.f_ec = 1.0;
        r.breakdown.raw_rate = in.params.n_rep * in.params.p0 * in.params.p0 * r.q_gain_estimate / in.params.L;
        return r;
    }
    // A basis absent from the sample borrows the other basis' error rate.
    const double data_qber = s.z_bits > 0 ? r.qber_z : r.qber_x;
    const double check_qber = s.x_bits > 0 ? r.qber_x : r.qber_z;
    const double q = r.q_gain_estimate;
    r.breakdown = secure_key_rate(in.params, q, data_qber * q, check_qber * q);
    r.no_key = r.breakdown.secure_rate <= 0.0;
    return r;
}

LocalSession simulate_session(const SessionConfig& config) {
    AliceRecord alice = alice_prepare(config.params, config.n_blocks, config.seed);
    PulseStream pulses(alice);
    BobRecord bob = bob_measure(pulses, config.params, config.seed);
    SiftResult sifted = sift(alice, bob);
    auto indices = choose_sample(sifted.alice.size(), config.sample_fraction, config.seed);
    std::vector<std::uint8_t> disclosed;
    disclosed.reserve(indices.size());
    for (auto i : indices) disclosed.push_back(sifted.alice.bits[i]);

    EstimateInputs in;
    in.params = config.params;
    in.blocks_sent = alice.n_blocks();
    in.slots_offered = bob.slots_offered;
    in.clicks = bob.clicks;
    in.kept_events = bob.kept.size();
    in.sifted_bits_alice = sifted.alice.size();
    in.sifted_bits_bob = sifted.bob.size();
    in.sample = tally_sample(sifted.bob, indices, disclosed);
    SessionReport report = estimate(in);
    return {std::move(alice), std::move(bob), std::move(sifted), std::move(indices), report};
}

SessionReport run_local(const SessionConfig& config) { return simulate_session(config).report; }

SystemParams bb84_config(SystemParams params) {
    params.L = 2;
    return params;
}

}  // namespace dqps
