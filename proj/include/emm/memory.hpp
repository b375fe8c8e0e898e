#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "emm/matrix.hpp"
#include "emm/rng.hpp"
#include "emm/sample.hpp"

namespace emm {

enum class DropPolicy { sliding_window, random };

std::string_view drop_policy_name(DropPolicy p);
DropPolicy parse_drop_policy(std::string_view name);

// Bounded, insertion-ordered store of stream samples. The buffer may exceed
// its capacity between an update and the following dropout.
class MemoryBuffer {
 public:
  MemoryBuffer(std::size_t capacity, DropPolicy policy, std::size_t drop_count = 10);

  // Appends the batch in order.
  void update(std::span<const Sample> batch);

  bool is_full() const noexcept { return items_.size() >= capacity_; }

  // Removes the n oldest items.
  void dropout_sw(std::size_t n);

  // Removes n items chosen uniformly without replacement; survivors keep order.
  void dropout_random(std::size_t n, Rng& rng);

  // Applies the configured policy with drop_count.
  void drop(Rng& rng);

  void clear() noexcept { items_.clear(); }

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  DropPolicy policy() const noexcept { return policy_; }
  std::size_t drop_count() const noexcept { return drop_count_; }
  const std::vector<Sample>& items() const noexcept { return items_; }

  // Restores contents verbatim, e.g. from a checkpoint.
  void assign(std::vector<Sample> items) { items_ = std::move(items); }

  Matrix features() const { return feature_matrix(items_); }

  friend bool operator==(const MemoryBuffer&, const MemoryBuffer&) = default;

 private:
  std::size_t capacity_;
  DropPolicy policy_;
  std::size_t drop_count_;
  std::vector<Sample> items_;
};

}  // namespace emm
