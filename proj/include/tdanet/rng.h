#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tdanet {

std::uint64_t splitmix64(std::uint64_t x);
// Stable 64-bit FNV-1a, used to derive per-purpose seeds from names.
std::uint64_t hash_string(std::string_view s);

// Seeded generator. All randomness in the project flows from one root seed
// split per purpose ("init", "data", "dropout", ...).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }
  Rng split(std::string_view purpose) const {
    return Rng(splitmix64(seed_ ^ hash_string(purpose)));
  }
  Rng split(std::uint64_t index) const { return Rng(splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * (index + 1))); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace tdanet
