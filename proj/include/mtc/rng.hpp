#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace mtc {

/// SplitMix64 generator. The output sequence depends only on the seed, so
/// runs are reproducible across compilers and platforms (no std::
/// distributions are used anywhere).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection, n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream derived from this generator's seed and a label.
  /// Does not advance this generator.
  Rng split(std::string_view label) const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    Rng mixer(seed_mix(state_ ^ h));
    return Rng(mixer.next_u64());
  }

  Rng split(std::string_view label, std::uint64_t index) const {
    Rng base = split(label);
    return Rng(seed_mix(base.state_ + index * 0xD1B54A32D192ED03ULL));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  static std::uint64_t seed_mix(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
    return z ^ (z >> 33);
  }

  std::uint64_t state_;
};

}  // namespace mtc
