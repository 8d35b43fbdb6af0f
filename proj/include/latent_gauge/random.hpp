#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace latent_gauge {

// SplitMix64 finalizer; used to derive independent stream seeds and as a
// stable integer hash.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a over bytes, length-prefixed per field by the callers that need it.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// One random stream. The engine is std::mt19937_64 (bit-exact across
// standard libraries); the distributions are implemented here because the
// standard ones are implementation-defined.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream_id)
      : engine_(splitmix64(seed ^ splitmix64(stream_id + 0x5851F42D4C957F2DULL))) {}

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Named stream ids so each generated column draws from its own sequence.
namespace streams {
inline constexpr std::uint64_t latent = 1;
inline constexpr std::uint64_t noise_a = 2;
inline constexpr std::uint64_t noise_b = 3;
inline constexpr std::uint64_t outcome = 4;
inline constexpr std::uint64_t noise_shared = 5;
inline constexpr std::uint64_t task_effect = 16;
inline constexpr std::uint64_t prompt_effect = 17;
inline constexpr std::uint64_t cell_noise = 18;
inline constexpr std::uint64_t occupation = 32;
inline constexpr std::uint64_t rater_base = 64;   // + rater index
inline constexpr std::uint64_t index_base = 128;  // + external index column
inline constexpr std::uint64_t measure_extra = 256;  // + measure index beyond the second
}  // namespace streams

}  // namespace latent_gauge
