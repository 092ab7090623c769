#include "mekf/rng.hpp"

#include <cmath>
#include <limits>

namespace mekf {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream RngStream::from(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  RngStream s;
  std::uint64_t x = seed ^ (fnv1a(name) + 0x632be59bd9b4e019ull * (index + 1));
  std::seed_seq seq{splitmix64(x), splitmix64(x), splitmix64(x), splitmix64(x)};
  s.engine_.seed(seq);
  s.key_seed_ = seed;
  s.key_name_ = std::string(name);
  s.key_index_ = index;
  return s;
}

RngStream RngStream::child(std::string_view name, std::uint64_t index) const {
  std::uint64_t x = key_seed_ ^ (fnv1a(key_name_) * 0x9e3779b97f4a7c15ull) ^ (key_index_ + 0x2545f4914f6cdd1dull);
  std::uint64_t base = splitmix64(x);
  return RngStream::from(base, name, index);
}

double RngStream::uniform_open0() {
  // 53-bit mantissa, shifted into (0,1]
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  double u1 = uniform_open0();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

double RngStream::exponential() {
  return -std::log(uniform_open0());
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  // rejection sampling to avoid modulo bias
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::vector<int> RngStream::permutation(int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace mekf
