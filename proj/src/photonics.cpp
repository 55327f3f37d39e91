#include "dqps/photonics.hpp"

#include <cmath>
#include <stdexcept>

namespace dqps {

double basis_offset(Basis basis) { return basis == Basis::Z ? 0.0 : kPi / 2.0; }

double bob_phase(Basis basis) { return basis == Basis::Z ? 0.0 : kPi / 2.0; }

double wrap_phase(double phi) {
    double r = std::fmod(phi, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

PulseBlock encode_block(std::span<const std::uint8_t> bits, Basis basis, double global_phase) {
    if (bits.empty()) throw std::invalid_argument("a block needs at least one bit (L >= 2)");
    if (!(global_phase >= 0.0 && global_phase < kTwoPi)) {
        throw std::invalid_argument("global phase must lie in [0, 2pi)");
    }
    PulseBlock block;
    block.basis = basis;
    block.bits.assign(bits.begin(), bits.end());
    block.global_phase = global_phase;
    block.phases.resize(bits.size() + 1);
    block.phases[0] = global_phase;
    const double offset = basis_offset(basis);
    for (std::size_t k = 0; k < bits.size(); ++k) {
        if (bits[k] > 1) throw std::invalid_argument("bits must be 0 or 1");
        block.phases[k + 1] = wrap_phase(block.phases[k] + bits[k] * kPi + offset);
    }
    return block;
}

std::vector<std::uint8_t> decode_bits(const PulseBlock& block) {
    std::vector<std::uint8_t> bits(block.phases.size() - 1);
    const double offset = basis_offset(block.basis);
    for (std::size_t k = 0; k + 1 < block.phases.size(); ++k) {
        const double d = wrap_phase(block.slot_phase(static_cast<int>(k)) - offset);
        bits[k] = std::abs(d - kPi) < kPi / 2.0 ? 1 : 0;
    }
    return bits;
}

PortProbabilities mzi_click_probabilities(double delta_phi, double bob_phase) {
    const double c = std::cos(wrap_phase(delta_phi - bob_phase) / 2.0);
    const double p0 = c * c;
    return {p0, 1.0 - p0};
}

double interference_intensity(double delta_phi) {
    const double c = std::cos(wrap_phase(delta_phi) / 2.0);
    return c * c;
}

SlotDetector::SlotDetector(const SystemParams& params)
    : mean_photons_(params.mu * transmittance(params)),
      dark_per_detector_(0.0),
      misalign_z_(params.e_mis),
      misalign_x_(params.check_misalignment()) {
    // Two detectors with equal dark probability d reproduce the receiver-level
    // dark probability D: (1 - d)^2 = 1 - D.
    const double total_dark = params.dark_outcomes * params.dark_rate / params.n_rep;
    dark_per_detector_ = -std::expm1(0.5 * std::log1p(-total_dark));
    for (int basis = 0; basis < 2; ++basis) {
        for (int q = 0; q < 4; ++q) quarter_turns_[basis][q] = compute(q * kPi / 2.0, basis == 1);
    }
}

std::pair<double, double> SlotDetector::compute(double relative_phase, bool check_basis) const {
    const double c = std::cos(relative_phase / 2.0);
    const double port0 = c * c;
    const double e = check_basis ? misalign_x_ : misalign_z_;
    const double share0 = (1.0 - e) * port0 + e * (1.0 - port0);
    const double share1 = 1.0 - share0;
    const double sig0 = -std::expm1(-mean_photons_ * share0);
    const double sig1 = -std::expm1(-mean_photons_ * share1);
    const double d = dark_per_detector_;
    return {1.0 - (1.0 - sig0) * (1.0 - d), 1.0 - (1.0 - sig1) * (1.0 - d)};
}

std::pair<double, double> SlotDetector::click_probabilities(double delta_phi, double bob_phase) const {
    const double setting = wrap_phase(bob_phase);
    const bool check = std::abs(setting - kPi / 2.0) < kAngleTolerance || std::abs(setting - 1.5 * kPi) < kAngleTolerance;
    const double relative = wrap_phase(delta_phi - bob_phase);
    const double quarter = std::nearbyint(relative / (kPi / 2.0));
    if (std::abs(relative - quarter * (kPi / 2.0)) < kAngleTolerance) {
        return quarter_turns_[check ? 1 : 0][static_cast<int>(quarter) % 4];
    }
    return compute(relative, check);
}

std::optional<SlotClick> SlotDetector::detect(double delta_phi, double bob_phase, Rng& rng) const {
    const auto [p0, p1] = click_probabilities(delta_phi, bob_phase);
    const double p_any = 1.0 - (1.0 - p0) * (1.0 - p1);
    const double u = rng.uniform();
    if (!(u < p_any)) return std::nullopt;

    // [0, p_any) splits into: only detector 0, only detector 1, both.
    const double only0 = p0 * (1.0 - p1);
    const double only1 = (1.0 - p0) * p1;
    SlotClick click;
    if (u < only0) {
        click.detector = 0;
    } else if (u < only0 + only1) {
        click.detector = 1;
    } else {
        click.detector = rng.coin() ? 1 : 0;
        click.cause = ClickCause::DoubleClick;
        return click;
    }
    const double p_det = click.detector == 0 ? p0 : p1;
    // P(dark, no photon) = d (1 - s) with p_det = 1 - (1 - s)(1 - d).
    const double p_dark_only =
        dark_per_detector_ < 1.0 ? dark_per_detector_ * (1.0 - p_det) / (1.0 - dark_per_detector_) : p_det;
    click.cause = rng.uniform() * p_det < p_dark_only ? ClickCause::Dark : ClickCause::Signal;
    return click;
}

std::optional<SlotClick> detect_slot(double delta_phi, double bob_phase, const SystemParams& params, Rng& rng) {
    return SlotDetector(params).detect(delta_phi, bob_phase, rng);
}

}  // namespace dqps
