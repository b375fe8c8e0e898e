#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "emm/matrix.hpp"

namespace emm {

// Seeded random stream. Wraps std::mt19937_64 with distribution code written
// here so draws are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                          // [0, 1)
  std::uint64_t below(std::uint64_t bound);  // uniform in [0, bound)
  double normal();                           // standard normal

  Matrix normal_matrix(std::size_t rows, std::size_t cols);

  // Independent child stream keyed by `stream`; does not advance *this.
  Rng fork(std::uint64_t stream) const;

  // First `count` entries of a uniformly random permutation of [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);
  void shuffle(std::vector<std::size_t>& values);

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace emm
