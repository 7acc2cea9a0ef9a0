#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace carol {

// All sampling in the library goes through this wrapper. Raw mt19937_64
// output is mapped to doubles/integers by hand so that a seed fixes the
// stream independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1), 53 bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  std::uint64_t next() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Independent substream per (master seed, tag). Used to keep the noise,
// contrastive-sampling and shuffling streams from perturbing each other.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (h | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t salt) {
  return derive_seed(base ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull), tag);
}

}  // namespace carol
