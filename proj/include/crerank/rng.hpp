#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace crerank {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

struct RngSeed {
  std::uint64_t value = 0;
};

// Deterministic stream over std::mt19937_64 (the engine itself is fully
// specified by the standard). Uniform draws are hand-rolled from the raw
// 64-bit output so streams are bit-identical across standard libraries;
// std::uniform_*_distribution is implementation-defined and never used.
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value), seed_(seed.value) {}

  // Named substream: same seed + same name => same stream, independent of
  // draws taken from the parent.
  Rng substream(std::string_view name) const {
    return Rng(RngSeed{splitmix64(seed_ ^ fnv1a64(name))});
  }

  Rng substream(std::string_view name, std::uint64_t index) const {
    return Rng(RngSeed{splitmix64(splitmix64(seed_ ^ fnv1a64(name)) + index)});
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform in [0, n) via the 128-bit multiply reduction.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace crerank
