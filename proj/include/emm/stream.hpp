#pragma once

// Task-free sample streams: ordered segments delivered in fixed-size batches
// that carry features, labels and a step index, never a task id.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "emm/matrix.hpp"
#include "emm/rng.hpp"
#include "emm/sample.hpp"

namespace emm {

struct Dataset {
  Matrix features;  // n x d, values in [0, 1] for image sources
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::size_t image_rows = 0;  // 0 for non-image sources
  std::size_t image_cols = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  // Throws ShapeError / InputError on inconsistent contents.
  void validate() const;
};

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
// Any structural problem raises FormatError carrying the byte offset.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Average-pools images by `factor` in both directions.
Dataset downsample(const Dataset& data, std::size_t factor);

// Keeps only samples whose label is below `class_limit`.
Dataset restrict_classes(const Dataset& data, std::size_t class_limit);

struct Segment {
  std::vector<std::size_t> indices;  // rows of the source dataset, in delivery order
};

struct StreamSpec {
  std::vector<Segment> segments;
  std::size_t batch_size = 10;
};

class Stream {
 public:
  // `source` must outlive the stream.
  Stream(const Dataset& source, StreamSpec spec);

  // Next batch of up to batch_size samples; empty optional at end of stream.
  std::optional<Batch> next_batch();

  std::size_t total_samples() const noexcept { return order_.size(); }
  std::size_t delivered() const noexcept { return cursor_; }
  std::size_t batch_count() const noexcept;
  const StreamSpec& spec() const noexcept { return spec_; }

 private:
  const Dataset* source_;
  StreamSpec spec_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t step_ = 0;
};

// Consecutive class groups {0..c-1}, {c..2c-1}, ...; each segment holds every
// sample of its classes in a seed-shuffled order.
StreamSpec build_split_stream(const Dataset& data, std::size_t classes_per_task,
                              std::size_t batch_size, std::uint64_t seed);

struct GaussianModes {
  std::vector<std::vector<double>> means;  // one mean per mode
  double stddev = 1.0;                     // isotropic per-coordinate sd
};

// Modes on successive coordinate axes, mode i centred at
// (separation / sqrt 2) * (1 + i / dim) * e_(i mod dim), so the first `dim`
// modes are exactly `separation` apart pairwise.
GaussianModes spaced_modes(std::size_t k_modes, std::size_t dim, double separation,
                           double stddev);

// Draws per_mode samples from every mode; label = mode index.
Dataset sample_gaussian_modes(const GaussianModes& modes, std::size_t per_mode, Rng& rng);

struct SyntheticStream {
  Dataset train;
  StreamSpec spec;
};

// Segment i holds the per_mode samples of mode i.
SyntheticStream synthetic_gaussian_stream(const GaussianModes& modes, std::size_t per_mode,
                                          std::size_t batch_size, std::uint64_t seed);

}  // namespace emm
