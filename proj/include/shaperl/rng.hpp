#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace shaperl {

// Deterministic PRNG with a fully specified algorithm (xoshiro256**), so a
// given seed produces the same stream on every platform and toolchain.  The
// standard <random> distributions are implementation-defined, which would
// break byte-identical reruns across environments; everything here is spelled
// out instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller; caches the second variate.
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);

  // State round-trip for checkpointing.  Layout: s[0..3], spare flag, spare.
  struct State {
    std::array<std::uint64_t, 4> s;
    bool have_spare;
    double spare;
  };
  State state() const;
  void set_state(const State& st);

 private:
  std::array<std::uint64_t, 4> s_{};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 step; used for seeding and stream derivation.
std::uint64_t splitmix64(std::uint64_t& x);

// Derives the seed of a named sub-stream from a root seed.  Every consumer of
// randomness (env dynamics, masks, net init, noise, ...) gets its own stream
// so adding draws in one place never perturbs another.
std::uint64_t substream_seed(std::uint64_t root_seed, std::string_view name);
Rng substream(std::uint64_t root_seed, std::string_view name);

}  // namespace shaperl
