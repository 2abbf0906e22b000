#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cascalign {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard, and all distributions are implemented
// here by hand because the std:: distribution objects are
// implementation-defined. Identical seed therefore means identical draws on
// every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Exact uniform integer in [0, n) via rejection sampling.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller, one spare cached.
  double normal();

  // Derived generator for an independent stream; splitmix64 over seed ^ tag.
  Rng fork(uint64_t tag) const;

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cascalign
