#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "emm/matrix.hpp"

namespace emm {

// One stream item: features, an optional class label, and the index of the
// training step at which it arrived. Task identity is deliberately absent.
struct Sample {
  std::vector<double> features;
  std::optional<int> label;
  std::uint64_t arrival_step = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

using Batch = std::vector<Sample>;

// Features of `samples` stacked one per row; all must share a width.
Matrix feature_matrix(std::span<const Sample> samples);

}  // namespace emm
