#ifndef IASIM_COMMON_HPP
#define IASIM_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace iasim {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr int kNumUsers = 3;
inline constexpr int kNumAntennas = 2;

// ---------------------------------------------------------------------------
// Error types. Every failure mode surfaces as one of these so callers can
// react per category instead of string-matching.
// ---------------------------------------------------------------------------
struct SimError : std::runtime_error {
    explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateEigenbasis : SimError { using SimError::SimError; };
struct DegeneratePencil     : SimError { using SimError::SimError; };
struct NotPositiveDefinite  : SimError { using SimError::SimError; };
struct ZeroMatrix           : SimError { using SimError::SimError; };
struct BadLength            : SimError { using SimError::SimError; };
struct LengthMismatch       : SimError { using SimError::SimError; };
struct SingularChannel      : SimError { using SimError::SimError; };
struct MissingPrecoder      : SimError { using SimError::SimError; };
struct ZeroReference        : SimError { using SimError::SimError; };
struct EmptyInput           : SimError { using SimError::SimError; };
struct ParseError           : SimError { using SimError::SimError; };
struct IoError              : SimError { using SimError::SimError; };
struct ConfigError          : SimError { using SimError::SimError; };
struct UnknownFigure        : SimError { using SimError::SimError; };

// ---------------------------------------------------------------------------
// Deterministic random numbers.
//
// std:: distributions are not guaranteed to produce the same sequence across
// standard library implementations, so uniforms and Gaussians are derived
// from raw mt19937_64 output here. Same seed, same stream, everywhere.
// ---------------------------------------------------------------------------
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives independent sub-seeds from a master seed. Each stochastic
/// component of the simulator owns a tag so that changing how one component
/// consumes randomness never shifts the draws of another.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag));
}
inline uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t idx) {
    return splitmix64(mix_seed(seed, tag) ^ splitmix64(idx * 0x9e3779b97f4a7c15ULL + 1));
}
inline uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t a, uint64_t b) {
    return mix_seed(mix_seed(seed, tag, a), tag ^ 0xabcdef1234567890ULL, b);
}

// Fixed tags for the documented seed-derivation scheme (see README):
// every random stream is keyed by mix_seed(master, tag, index...).
namespace seed_tag {
inline constexpr uint64_t kTrial       = 0x745269616cULL;
inline constexpr uint64_t kChannelGen  = 0x6368616e67656eULL;
inline constexpr uint64_t kTrainNoise  = 0x7472616e6f69ULL;
inline constexpr uint64_t kDataNoise   = 0x646174616e6f69ULL;
inline constexpr uint64_t kPayloadBits = 0x62697473ULL;
inline constexpr uint64_t kMaxSinrInit = 0x6d617873696eULL;
inline constexpr uint64_t kAging       = 0x6167696e67ULL;
inline constexpr uint64_t kAsyncDelays = 0x6173796e63ULL;
}  // namespace seed_tag

class Rng {
  public:
    explicit Rng(uint64_t seed) : s_(splitmix64(seed)) {}

    uint64_t next_u64() {
        // xorshift-multiply (splitmix64 stream): stable and fast.
        s_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = s_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (no cached spare; keeps the stream
    /// position independent of call parity).
    double gauss() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Circularly-symmetric complex normal with E|z|^2 = 1.
    cplx cgauss() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-std::log(u1));
        return cplx(r * std::cos(2.0 * kPi * u2), r * std::sin(2.0 * kPi * u2));
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

  private:
    uint64_t s_;
};

}  // namespace iasim

#endif  // IASIM_COMMON_HPP
