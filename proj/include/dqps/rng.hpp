#pragma once

#include <cstdint>
#include <limits>

namespace dqps {

/// SplitMix64 generator. Cheap to construct, so every block gets its own
/// stream keyed by (seed, stream, index); outcomes then do not depend on
/// the order in which blocks are processed.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t state) : state_(state) {}

    static Rng stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
        std::uint64_t s = mix(seed ^ 0x6a09e667f3bcc909ULL);
        s = mix(s ^ (stream * 0x9e3779b97f4a7c15ULL + 0xbb67ae8584caa73bULL));
        s = mix(s ^ (index * 0xd1b54a32d192ed03ULL + 0x3c6ef372fe94f82bULL));
        return Rng(s);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool coin() { return ((*this)() >> 63) != 0; }

    bool bernoulli(double p) { return uniform() < p; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

// Stream identifiers shared by every component that draws randomness for a session.
namespace streams {
inline constexpr std::uint64_t alice = 1;
inline constexpr std::uint64_t bob = 2;
inline constexpr std::uint64_t sample = 3;
inline constexpr std::uint64_t interblock = 4;
}  // namespace streams

}  // namespace dqps
