#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace bpt {

// Incremental 64-bit FNV-1a. Used for vocabulary identity and file checksums.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= kPrime;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  Fnv1a64 h;
  h.update(s);
  return h.digest();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace bpt
