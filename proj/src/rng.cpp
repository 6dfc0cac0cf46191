#include "gapnas/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <openssl/sha.h>

#include "gapnas/error.hpp"
#include "gapnas/hash.hpp"

namespace gapnas {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Rng derive_rng(std::uint64_t seed, std::string_view label) {
  const std::uint64_t h = fnv1a(label);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

Rng split_rng(Rng& parent, std::string_view label) { return derive_rng(parent(), label); }

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double gumbel(Rng& rng) {
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  return -std::log(-std::log(u));
}

Tensor randn(const Shape& shape, Rng& rng, double stddev) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ConfigError("malformed rng state");
}

Rng& RngStreams::stream(std::string_view label) {
  auto it = streams_.find(label);
  if (it == streams_.end()) it = streams_.emplace(std::string(label), derive_rng(seed_, label)).first;
  return it->second;
}

std::string RngStreams::checksum() const {
  std::string all;
  for (const auto& [label, rng] : streams_) all += label + '\n' + rng_state(rng) + '\n';
  return sha256_hex(all).substr(0, 16);
}

void RngStreams::restore(const std::string& label, const std::string& state) { set_rng_state(stream(label), state); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace gapnas
