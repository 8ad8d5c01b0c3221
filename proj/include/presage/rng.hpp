#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace presage {

/// splitmix64 step (Steele, Lea & Flood; the standard 0x9E3779B97F4A7C15
/// increment with 30/27/31-bit xor-shift finalizer). Used for seeding and
/// for deriving per-host substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ (Blackman & Vigna). Chosen over std::mt19937 because the
/// standard distributions are not bit-reproducible across standard library
/// implementations; this generator plus the explicit draws below is, so
/// seeded outputs are identical on every platform.
class Xoshiro256pp {
 public:
  explicit Xoshiro256pp(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  /// Substream for one host: the host index is folded into the seed with
  /// one splitmix64 round before state expansion, so streams are
  /// independent of generation order.
  static Xoshiro256pp substream(std::uint64_t seed, std::uint64_t stream_index) {
    std::uint64_t sm = seed;
    std::uint64_t mixed = splitmix64(sm) ^ (0x9E3779B97F4A7C15ULL * (stream_index + 1));
    return Xoshiro256pp(mixed);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; complements uniform01 so left-open interval
  /// sampling never produces the excluded endpoint.
  double uniform01_open_low() { return 1.0 - uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // multiply-shift bounded draw; bias is < 2^-64 * n, irrelevant here
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Samples an index proportional to the given non-negative weights.
  /// Weights need not be normalised. Returns the last positive index when
  /// rounding pushes the draw past the cumulative total.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    double cum = 0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0) continue;
      last_positive = i;
      cum += weights[i];
      if (u < cum) return i;
    }
    return last_positive;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> s_{};
};

}  // namespace presage
