#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dqps/params.hpp"
#include "dqps/rng.hpp"

namespace dqps {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

enum class Basis : std::uint8_t { Z = 0, X = 1 };

/// Differential offset between adjacent pulses for a basis: 0 for Z, pi/2 for X.
double basis_offset(Basis basis);

/// Bob's interferometer phase setting that measures `basis`.
double bob_phase(Basis basis);

/// Reduce an angle to [0, 2pi).
double wrap_phase(double phi);

/// One block of L coherent pulses. Bit k lives on the phase difference
/// between pulses k and k+1, so a block carries L-1 bits.
struct PulseBlock {
    Basis basis = Basis::Z;
    std::vector<std::uint8_t> bits;
    double global_phase = 0.0;
    std::vector<double> phases;

    int length() const { return static_cast<int>(phases.size()); }
    /// Phase difference seen by interference slot k (pulses k and k+1).
    double slot_phase(int k) const { return phases[k + 1] - phases[k]; }
};

PulseBlock encode_block(std::span<const std::uint8_t> bits, Basis basis, double global_phase);

/// Recover the bits of a block from its phase differences.
std::vector<std::uint8_t> decode_bits(const PulseBlock& block);

struct PortProbabilities {
    double det0 = 0.0;
    double det1 = 0.0;
};

/// Which output port a single photon leaves through, given the phase difference
/// between interfering pulses and Bob's phase setting.
PortProbabilities mzi_click_probabilities(double delta_phi, double bob_phase);

/// cos^2(delta_phi / 2)
double interference_intensity(double delta_phi);

enum class ClickCause : std::uint8_t { Signal = 0, Dark = 1, DoubleClick = 2 };

struct SlotClick {
    int detector = 0;
    ClickCause cause = ClickCause::Signal;
};

struct DetectionEvent {
    std::uint32_t block_index = 0;
    std::uint16_t slot_index = 0;
    std::uint8_t detector = 0;
    ClickCause cause = ClickCause::Signal;

    bool operator==(const DetectionEvent&) const = default;
};

/// Per-slot click model for one parameter set. Misalignment sends a
/// fraction of the light to the wrong port; dark clicks are split evenly
/// between the two detectors.
class SlotDetector {
public:
    explicit SlotDetector(const SystemParams& params);

    /// Click probability of each detector for one slot.
    std::pair<double, double> click_probabilities(double delta_phi, double bob_phase) const;

    std::optional<SlotClick> detect(double delta_phi, double bob_phase, Rng& rng) const;

private:
    static constexpr double kAngleTolerance = 1e-9;

    std::pair<double, double> compute(double relative_phase, bool check_basis) const;

    double mean_photons_;
    double dark_per_detector_;
    double misalign_z_;
    double misalign_x_;
    // Click probabilities at relative phases 0, pi/2, pi, 3pi/2 for the Z and X settings.
    std::pair<double, double> quarter_turns_[2][4];
};

std::optional<SlotClick> detect_slot(double delta_phi, double bob_phase, const SystemParams& params, Rng& rng);

}  // namespace dqps
