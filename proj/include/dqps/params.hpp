#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqps {

/// Physical and protocol configuration of one DQPS link.
///
/// Mean photon number is referenced to Alice's output (the channel input).
/// Rates are in Hz, losses in dB, everything else is a probability.
struct SystemParams {
    double n_rep = 2.0e9;
    double mu = 0.01;
    int L = 65;
    double p0 = 1.0;
    double eta_det = 0.386;
    double dark_rate = 15.0;
    double mzi_loss_db = 3.0;
    double channel_loss_db = 0.0;
    double fiber_coeff_db_per_km = 0.2;
    double e_mis = 0.0215;
    // Check-basis misalignment; falls back to e_mis when unset.
    std::optional<double> e_check;
    // Number of detection outcomes that can produce a dark click per slot (1 or 2).
    int dark_outcomes = 2;
    // Require L = 2^n + 1 (L = 2 is always accepted as the BB84 configuration).
    bool strict_block_length = false;

    double check_misalignment() const { return e_check.value_or(e_mis); }

    bool operator==(const SystemParams&) const = default;
};

struct FieldError {
    std::string field;
    std::string reason;
    bool operator==(const FieldError&) const = default;
};

class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(std::vector<FieldError> errors);
    const std::vector<FieldError>& errors() const { return errors_; }

private:
    std::vector<FieldError> errors_;
};

/// Every violated invariant, empty if the parameters are consistent.
std::vector<FieldError> check(const SystemParams& params);

/// Returns `params` unchanged or throws ValidationError listing all problems.
const SystemParams& validate(const SystemParams& params);

bool is_power_of_two_plus_one(int L);

/// Overall probability that a photon leaving Alice reaches a detector and is registered.
double transmittance(const SystemParams& params);

double km_to_db(double km, double coeff_db_per_km = 0.2);

// Text config: one `key = value` per line, `#` starts a comment.
std::vector<std::string> config_keys();
void apply_setting(SystemParams& params, const std::string& key, const std::string& value);
SystemParams parse_config(std::istream& in, SystemParams base = {});
SystemParams load_config(const std::string& path, SystemParams base = {});
std::string to_config_text(const SystemParams& params);

/// Stable 64-bit digest of the canonical config text.
std::uint64_t digest(const SystemParams& params);

}  // namespace dqps
