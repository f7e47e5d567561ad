#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ntk {

// Deterministic RNG wrapper. The engine is std::mt19937_64 (bit-exact output
// is pinned by the standard); distributions are implemented here because the
// standard library ones are implementation-defined and would break
// byte-for-byte reproducibility of emitted files across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Unbiased integer in [0, n) via rejection sampling. n must be > 0.
  uint64_t below(uint64_t n) {
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform real in [0, 1) with 53 bits of precision.
  double real() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform real in [lo, hi).
  double real(double lo, double hi) { return lo + (hi - lo) * real(); }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // First k elements of a shuffled index range: k distinct indices in [0, n).
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k && i + 1 < n; ++i) {
      const size_t j = i + static_cast<size_t>(below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k < n ? k : n);
    return idx;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ntk
