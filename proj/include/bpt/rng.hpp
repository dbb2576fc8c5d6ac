#pragma once

#include <cstdint>
#include <initializer_list>
#include <utility>

namespace bpt {

// Counter-based generator: output i is a stateless mix of (key, i), so a
// stream is fully identified by its key. Keys are derived from a master seed
// and a path of integers, which lets independent work units draw from
// disjoint streams without coordination.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t key = mix(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t p : path) key = mix(key ^ mix(p + 0xbb67ae8584caa73bULL));
    return Rng(key);
  }

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGamma); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n); unbiased (Lemire's multiply-and-reject). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform in [lo, hi], inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Stream domains, kept distinct so that e.g. NSP pairing and masking never
// share draws.
namespace stream {
inline constexpr std::uint64_t simpt_sample = 1;
inline constexpr std::uint64_t simpt_pairing = 2;
inline constexpr std::uint64_t simpt_masking = 3;
inline constexpr std::uint64_t conventional_pairing = 4;
inline constexpr std::uint64_t conventional_masking = 5;
}  // namespace stream

}  // namespace bpt
