#include "emm/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "emm/errors.hpp"

namespace emm {

namespace {

// splitmix64 finalizer, used to decorrelate derived seeds.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(mix(seed)), seed_(seed) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw InputError("Rng::below requires a positive bound");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  for (double& v : out.values()) v = normal();
  return out;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix(seed_ ^ mix(stream + 0x5bd1e995ULL)));
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t count) {
  if (count > n) throw InputError("cannot draw more items than available");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

void Rng::shuffle(std::vector<std::size_t>& values) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(i));
    std::swap(values[i - 1], values[j]);
  }
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << seed_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
  out << std::hexfloat << spare_ << std::defaultfloat << ' ' << engine_;
  return out.str();
}

Rng Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  Rng rng;
  int spare_flag = 0;
  std::string spare_text;
  in >> rng.seed_ >> spare_flag >> spare_text >> rng.engine_;
  if (!in) throw InputError("malformed random stream state");
  rng.has_spare_ = spare_flag != 0;
  rng.spare_ = std::strtod(spare_text.c_str(), nullptr);
  return rng;
}

bool operator==(const Rng& a, const Rng& b) {
  return a.engine_ == b.engine_ && a.seed_ == b.seed_ && a.has_spare_ == b.has_spare_ &&
         (!a.has_spare_ || a.spare_ == b.spare_);
}

}  // namespace emm
