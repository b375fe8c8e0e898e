#include "emm/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "emm/errors.hpp"

namespace emm {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::string& what) {
  if (offset + 4 > bytes.size())
    throw FormatError(what + ": truncated header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != labels.size()) throw ShapeError("dataset rows and labels differ");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= class_count)
      throw InputError("dataset label " + std::to_string(y) + " outside class range");
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  const std::string img_name = images.string();
  const std::string lab_name = labels.string();

  if (read_be32(img, 0, img_name) != kImageMagic)
    throw FormatError(img_name + ": bad image magic", 0);
  if (read_be32(lab, 0, lab_name) != kLabelMagic)
    throw FormatError(lab_name + ": bad label magic", 0);
  const std::size_t n = read_be32(img, 4, img_name);
  const std::size_t rows = read_be32(img, 8, img_name);
  const std::size_t cols = read_be32(img, 12, img_name);
  const std::size_t n_labels = read_be32(lab, 4, lab_name);
  if (n_labels != n)
    throw FormatError(lab_name + ": " + std::to_string(n_labels) + " labels for " +
                          std::to_string(n) + " images",
                      4);
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n * d) throw FormatError(img_name + ": truncated pixel data", img.size());
  if (lab.size() < 8 + n) throw FormatError(lab_name + ": truncated label data", lab.size());

  Dataset out;
  out.image_rows = rows;
  out.image_cols = cols;
  out.features = Matrix(n, d);
  for (std::size_t i = 0; i < n * d; ++i) out.features.data()[i] = img[16 + i] / 255.0;
  out.labels.resize(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = lab[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.class_count = static_cast<std::size_t>(std::max(max_label + 1, 10));
  return out;
}

Dataset downsample(const Dataset& data, std::size_t factor) {
  if (factor == 0) throw ConfigError("downsample factor must be positive");
  if (factor == 1) return data;
  if (data.image_rows == 0 || data.image_rows % factor != 0 || data.image_cols % factor != 0)
    throw ConfigError("image size is not divisible by the downsample factor");
  const std::size_t r2 = data.image_rows / factor;
  const std::size_t c2 = data.image_cols / factor;
  Dataset out;
  out.labels = data.labels;
  out.class_count = data.class_count;
  out.image_rows = r2;
  out.image_cols = c2;
  out.features = Matrix(data.size(), r2 * c2);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto src = data.features.row(n);
    auto dst = out.features.row(n);
    for (std::size_t r = 0; r < data.image_rows; ++r)
      for (std::size_t c = 0; c < data.image_cols; ++c)
        dst[(r / factor) * c2 + c / factor] += src[r * data.image_cols + c] * inv;
  }
  return out;
}

Dataset restrict_classes(const Dataset& data, std::size_t class_limit) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (static_cast<std::size_t>(data.labels[i]) < class_limit) keep.push_back(i);
  Dataset out;
  out.features = gather_rows(data.features, keep);
  for (std::size_t i : keep) out.labels.push_back(data.labels[i]);
  out.class_count = data.class_count;
  out.image_rows = data.image_rows;
  out.image_cols = data.image_cols;
  return out;
}

Stream::Stream(const Dataset& source, StreamSpec spec) : source_(&source), spec_(std::move(spec)) {
  if (spec_.batch_size == 0) throw ConfigError("batch size must be at least 1");
  for (const auto& seg : spec_.segments) {
    if (seg.indices.empty()) throw ConfigError("stream segment is empty");
    for (std::size_t i : seg.indices)
      if (i >= source.size()) throw ConfigError("stream index outside the dataset");
    order_.insert(order_.end(), seg.indices.begin(), seg.indices.end());
  }
}

std::size_t Stream::batch_count() const noexcept {
  return (order_.size() + spec_.batch_size - 1) / spec_.batch_size;
}

std::optional<Batch> Stream::next_batch() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + spec_.batch_size);
  Batch batch;
  batch.reserve(end - cursor_);
  for (; cursor_ < end; ++cursor_) {
    const std::size_t i = order_[cursor_];
    const auto row = source_->features.row(i);
    batch.push_back(Sample{{row.begin(), row.end()}, source_->labels[i], step_});
  }
  ++step_;
  return batch;
}

StreamSpec build_split_stream(const Dataset& data, std::size_t classes_per_task,
                              std::size_t batch_size, std::uint64_t seed) {
  if (classes_per_task == 0 || data.class_count % classes_per_task != 0)
    throw ConfigError(std::to_string(data.class_count) + " classes cannot be split into tasks of " +
                      std::to_string(classes_per_task));
  Rng rng(seed);
  StreamSpec spec;
  spec.batch_size = batch_size;
  const std::size_t tasks = data.class_count / classes_per_task;
  for (std::size_t t = 0; t < tasks; ++t) {
    Segment seg;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (static_cast<std::size_t>(data.labels[i]) / classes_per_task == t)
        seg.indices.push_back(i);
    if (seg.indices.empty()) continue;
    rng.shuffle(seg.indices);
    spec.segments.push_back(std::move(seg));
  }
  return spec;
}

GaussianModes spaced_modes(std::size_t k_modes, std::size_t dim, double separation,
                           double stddev) {
  if (k_modes == 0 || dim == 0) throw ConfigError("need at least one mode and one dimension");
  GaussianModes modes;
  modes.stddev = stddev;
  for (std::size_t i = 0; i < k_modes; ++i) {
    std::vector<double> mean(dim, 0.0);
    mean[i % dim] = separation * std::sqrt(0.5) * static_cast<double>(1 + i / dim);
    modes.means.push_back(std::move(mean));
  }
  return modes;
}

Dataset sample_gaussian_modes(const GaussianModes& modes, std::size_t per_mode, Rng& rng) {
  if (modes.means.empty()) throw ConfigError("need at least one mode");
  const std::size_t dim = modes.means.front().size();
  Dataset out;
  out.class_count = std::max<std::size_t>(modes.means.size(), 2);
  out.features = Matrix(modes.means.size() * per_mode, dim);
  std::size_t r = 0;
  for (std::size_t k = 0; k < modes.means.size(); ++k) {
    if (modes.means[k].size() != dim) throw ConfigError("modes have differing dimensions");
    for (std::size_t i = 0; i < per_mode; ++i, ++r) {
      auto row = out.features.row(r);
      for (std::size_t j = 0; j < dim; ++j) row[j] = modes.means[k][j] + modes.stddev * rng.normal();
      out.labels.push_back(static_cast<int>(k));
    }
  }
  return out;
}

SyntheticStream synthetic_gaussian_stream(const GaussianModes& modes, std::size_t per_mode,
                                          std::size_t batch_size, std::uint64_t seed) {
  if (per_mode == 0) throw ConfigError("per-mode sample count must be positive");
  Rng rng(seed);
  SyntheticStream s;
  s.train = sample_gaussian_modes(modes, per_mode, rng);
  s.spec.batch_size = batch_size;
  for (std::size_t k = 0; k < modes.means.size(); ++k) {
    Segment seg;
    seg.indices.resize(per_mode);
    std::iota(seg.indices.begin(), seg.indices.end(), k * per_mode);
    s.spec.segments.push_back(std::move(seg));
  }
  return s;
}

}  // namespace emm
