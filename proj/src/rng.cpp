#include "cascalign/rng.hpp"

#include <cmath>
#include <numbers>

#include "cascalign/errors.hpp"

namespace cascalign {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) throw ConfigError("uniform_int: n must be positive");
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Rng Rng::fork(uint64_t tag) const {
  return Rng(splitmix64(seed_ ^ splitmix64(tag)));
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  if (k < 0 || k > n) throw ConfigError("sample_without_replacement: k out of range");
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  std::vector<int> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    const size_t j = static_cast<size_t>(uniform_int(n - i));
    out.push_back(pool[j]);
    std::swap(pool[j], pool[n - i - 1]);
  }
  return out;
}

}  // namespace cascalign
