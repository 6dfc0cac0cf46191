#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "gapnas/tensor.hpp"

namespace gapnas {

using Rng = std::mt19937_64;

/// Generator seeded from (seed, label); distinct labels give unrelated streams.
Rng derive_rng(std::uint64_t seed, std::string_view label);
/// Child generator drawn from a parent stream (advances the parent).
Rng split_rng(Rng& parent, std::string_view label);

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
/// Gumbel(0, 1) sample.
double gumbel(Rng& rng);

Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);

/// Serialized engine state (the standard's textual representation).
std::string rng_state(const Rng& rng);
void set_rng_state(Rng& rng, const std::string& state);

/// One seeded generator split into labelled substreams (data, init,
/// search-batches, gap-inner-G, gap-inner-D, gumbel, ...). Substreams are
/// created lazily and never share state, so enabling a feature that draws
/// from one stream leaves every other stream untouched.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed) : seed_(seed) {}

  Rng& stream(std::string_view label);
  std::uint64_t seed() const { return seed_; }

  /// Hex digest over the states of every substream created so far.
  std::string checksum() const;
  const std::map<std::string, Rng, std::less<>>& streams() const { return streams_; }
  void restore(const std::string& label, const std::string& state);

 private:
  std::uint64_t seed_;
  std::map<std::string, Rng, std::less<>> streams_;
};

}  // namespace gapnas
