#include "emm/memory.hpp"

#include <algorithm>
#include <string>

#include "emm/errors.hpp"

namespace emm {

Matrix feature_matrix(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  const std::size_t d = samples.front().features.size();
  Matrix out(samples.size(), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != d) throw ShapeError("samples have differing widths");
    std::copy(samples[i].features.begin(), samples[i].features.end(), out.row(i).begin());
  }
  return out;
}

std::string_view drop_policy_name(DropPolicy p) {
  return p == DropPolicy::sliding_window ? "sliding_window" : "random";
}

DropPolicy parse_drop_policy(std::string_view name) {
  if (name == "sliding_window" || name == "sw") return DropPolicy::sliding_window;
  if (name == "random") return DropPolicy::random;
  throw ConfigError("unknown drop policy '" + std::string(name) + "'");
}

MemoryBuffer::MemoryBuffer(std::size_t capacity, DropPolicy policy, std::size_t drop_count)
    : capacity_(capacity), policy_(policy), drop_count_(drop_count) {
  if (capacity == 0) throw ConfigError("memory capacity must be positive");
}

void MemoryBuffer::update(std::span<const Sample> batch) {
  items_.insert(items_.end(), batch.begin(), batch.end());
}

void MemoryBuffer::dropout_sw(std::size_t n) {
  if (n > items_.size())
    throw InputError("cannot drop " + std::to_string(n) + " of " +
                     std::to_string(items_.size()) + " items");
  items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(n));
}

void MemoryBuffer::dropout_random(std::size_t n, Rng& rng) {
  if (n > items_.size())
    throw InputError("cannot drop " + std::to_string(n) + " of " +
                     std::to_string(items_.size()) + " items");
  if (n == 0) return;
  std::vector<bool> gone(items_.size(), false);
  for (std::size_t i : rng.sample_without_replacement(items_.size(), n)) gone[i] = true;
  std::size_t w = 0;
  for (std::size_t r = 0; r < items_.size(); ++r) {
    if (gone[r]) continue;
    if (w != r) items_[w] = std::move(items_[r]);
    ++w;
  }
  items_.resize(w);
}

void MemoryBuffer::drop(Rng& rng) {
  const std::size_t n = std::min(drop_count_, items_.size());
  if (policy_ == DropPolicy::sliding_window)
    dropout_sw(n);
  else
    dropout_random(n, rng);
}

}  // namespace emm
