#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace mekf {

// All randomness in an analysis flows from one 64-bit seed, expanded into
// independent named streams (e.g. "knockoffs", "swap-matrix", "pvalue-u").
// Streams are keyed by (seed, name, index) so any run replays exactly.
class RngStream {
public:
  RngStream() : engine_(0) {}

  static RngStream from(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

  // child stream derived from this stream's key, not its state
  RngStream child(std::string_view name, std::uint64_t index = 0) const;

  std::uint64_t next_u64() { return engine_(); }

  // uniform on (0,1]: never returns 0, so randomized p-values stay in (0,1]
  double uniform_open0();
  // uniform on [0,1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // standard normal via Box-Muller (two uniforms per draw, no cached spare)
  double normal();
  double exponential() ;
  bool bernoulli(double p) { return uniform() < p; }
  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n);

  // fisher-yates shuffle of 0..n-1
  std::vector<int> permutation(int n);

  std::uint64_t key_seed() const { return key_seed_; }
  const std::string& key_name() const { return key_name_; }
  std::uint64_t key_index() const { return key_index_; }

private:
  std::mt19937_64 engine_;
  std::uint64_t key_seed_ = 0;
  std::string key_name_;
  std::uint64_t key_index_ = 0;
};

}  // namespace mekf
