#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dqps/keyrate.hpp"
#include "dqps/params.hpp"
#include "dqps/photonics.hpp"

namespace dqps {

enum class ProtocolErrorKind {
    Malformed,       // announcement references invalid blocks/slots
    OutOfOrder,      // unexpected message for the current session state
    DigestMismatch,  // peers run different configurations
    Timeout,
    PeerClosed,
    Aborted,         // peer sent TERMINATE with a failure reason
};

const char* to_string(ProtocolErrorKind kind);

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ProtocolErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ProtocolErrorKind kind() const { return kind_; }

private:
    ProtocolErrorKind kind_;
};

/// Everything both endpoints must agree on before a session starts.
struct SessionConfig {
    SystemParams params;
    std::uint64_t n_blocks = 100000;
    std::uint64_t seed = 1;
    // Fraction of the sifted key disclosed for error estimation.
    double sample_fraction = 0.1;
};

std::uint64_t digest(const SessionConfig& config);

/// Alice's private record: basis, global phase and bits of every block sent.
class AliceRecord {
public:
    AliceRecord(const SystemParams& params, std::uint64_t n_blocks);

    const SystemParams& params() const { return params_; }
    std::uint64_t n_blocks() const { return bases_.size(); }
    int slots_per_block() const { return params_.L - 1; }

    Basis basis(std::uint64_t block) const { return bases_[block]; }
    double global_phase(std::uint64_t block) const { return global_phases_[block]; }
    std::uint8_t bit(std::uint64_t block, int slot) const {
        return bits_[block * static_cast<std::uint64_t>(slots_per_block()) + static_cast<std::uint64_t>(slot)];
    }
    const std::vector<Basis>& bases() const { return bases_; }

    PulseBlock pulse_block(std::uint64_t block) const;

private:
    friend AliceRecord alice_prepare(const SystemParams&, std::uint64_t, std::uint64_t);

    SystemParams params_;
    std::vector<Basis> bases_;
    std::vector<double> global_phases_;
    std::vector<bool> bits_;
};

/// Random basis (data basis with probability p0), fair bits and uniform global
/// phase for each block, drawn from per-block streams of `seed`.
AliceRecord alice_prepare(const SystemParams& params, std::uint64_t n_blocks, std::uint64_t seed);

/// Ordered pulses leaving Alice; blocks are materialised one at a time.
class PulseStream {
public:
    explicit PulseStream(const AliceRecord& record) : record_(&record) {}

    std::optional<PulseBlock> next();
    std::uint64_t size() const { return record_->n_blocks(); }

private:
    const AliceRecord* record_;
    std::uint64_t cursor_ = 0;
};

struct BobRecord {
    std::vector<Basis> settings;
    // At most one per block, ordered by block index.
    std::vector<DetectionEvent> kept;
    std::uint64_t clicks = 0;
    std::uint64_t slots_offered = 0;
};

/// Random basis per block, every slot measured, first click kept.
BobRecord bob_measure(PulseStream& pulses, const SystemParams& params, std::uint64_t seed);

struct SlotRef {
    std::uint32_t block = 0;
    std::uint16_t slot = 0;
    bool operator==(const SlotRef&) const = default;
    auto operator<=>(const SlotRef&) const = default;
};

std::vector<SlotRef> announced_slots(const BobRecord& bob);

struct SiftedKey {
    std::vector<std::uint8_t> bits;
    std::vector<Basis> bases;
    std::vector<SlotRef> slots;

    std::size_t size() const { return bits.size(); }
};

/// Alice keeps her bit at every announced slot whose block was measured in her basis.
SiftedKey sift_alice(const AliceRecord& alice, std::span<const SlotRef> detections,
                     std::span<const Basis> bob_settings);

/// Bob keeps his detector outcome wherever Alice's basis matched his setting.
SiftedKey sift_bob(const BobRecord& bob, std::span<const Basis> alice_bases);

struct SiftResult {
    SiftedKey alice;
    SiftedKey bob;
};

SiftResult sift(const AliceRecord& alice, const BobRecord& bob);

/// Sorted distinct positions of the sifted key disclosed for QBER estimation.
std::vector<std::uint32_t> choose_sample(std::size_t sifted_bits, double fraction, std::uint64_t seed);

struct SampleTally {
    std::uint64_t z_bits = 0;
    std::uint64_t z_errors = 0;
    std::uint64_t x_bits = 0;
    std::uint64_t x_errors = 0;

    bool operator==(const SampleTally&) const = default;
};

/// Compare disclosed bits from the other side against `key` at `indices`.
SampleTally tally_sample(const SiftedKey& key, std::span<const std::uint32_t> indices,
                         std::span<const std::uint8_t> disclosed);

struct SessionReport {
    std::uint64_t blocks_sent = 0;
    std::uint64_t slots_offered = 0;
    std::uint64_t clicks = 0;
    std::uint64_t kept_events = 0;
    double p_click = 0.0;
    double q_gain_estimate = 0.0;
    std::uint64_t sifted_bits_alice = 0;
    std::uint64_t sifted_bits_bob = 0;
    SampleTally sample;
    double qber_z = 0.0;
    double qber_x = 0.0;
    KeyRateBreakdown breakdown;
    bool no_key = false;

    bool operator==(const SessionReport&) const = default;
};

struct EstimateInputs {
    SystemParams params;
    std::uint64_t blocks_sent = 0;
    std::uint64_t slots_offered = 0;
    std::uint64_t clicks = 0;
    std::uint64_t kept_events = 0;
    std::uint64_t sifted_bits_alice = 0;
    std::uint64_t sifted_bits_bob = 0;
    SampleTally sample;
};

/// Empirical per-slot click probability, block gain, per-basis QBER and the
/// resulting key-rate breakdown.
SessionReport estimate(const EstimateInputs& inputs);

/// All intermediate records of an in-process session.
struct LocalSession {
    AliceRecord alice;
    BobRecord bob;
    SiftResult sifted;
    std::vector<std::uint32_t> sample_indices;
    SessionReport report;
};

LocalSession simulate_session(const SessionConfig& config);

/// In-process session; produces the same report as the networked run.
SessionReport run_local(const SessionConfig& config);

/// The same pipeline configured as phase-encoded BB84 (two-pulse blocks).
SystemParams bb84_config(SystemParams params);

}  // namespace dqps
