#pragma once

// Run configuration and its key-value file format.
//
// One `key = value` per line; `#` starts a comment; blank lines are ignored.
// Unknown keys and malformed values are rejected with the line number. The
// accepted keys are listed in README.md and by `emm schema`.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "emm/memory.hpp"
#include "emm/mixture.hpp"

namespace emm {

enum class SourceKind { synthetic, idx };

struct SyntheticSource {
  std::size_t modes = 2;
  std::size_t dim = 8;
  double separation = 12.0;  // distance between mode means, in units of stddev
  double stddev = 1.0;
  std::size_t per_mode = 2000;
  std::size_t test_per_mode = 250;
};

struct IdxSource {
  std::filesystem::path dir;  // holds the four canonical MNIST file names
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::size_t downsample = 1;
  std::size_t classes_per_task = 2;

  // Explicit paths win; otherwise the canonical names inside `dir`.
  std::filesystem::path resolved(const std::filesystem::path& explicit_path,
                                 const char* canonical) const;
};

struct RunConfig {
  SourceKind source = SourceKind::idx;
  SyntheticSource synthetic;
  IdxSource idx;
  std::size_t batch_size = 10;
  MixtureConfig model;  // arch.input_dim and class_count come from the data
  std::size_t capacity = 2000;
  DropPolicy policy = DropPolicy::sliding_window;
  std::size_t drop_count = 10;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path out = "emm-out";
  bool write_checkpoints = true;
  std::size_t eval_chunk = 1000;
};

struct KeyValueEntry {
  std::string value;
  std::size_t line = 0;
};

using KeyValueMap = std::map<std::string, KeyValueEntry>;

// Parses the text into a key map; duplicate keys and lines without '=' raise
// ConfigError naming `origin` and the line.
KeyValueMap parse_key_values(const std::string& text, const std::string& origin);

// Applies every entry over the defaults. Relative data paths resolve against
// `base_dir`.
RunConfig run_config_from(const KeyValueMap& entries, const std::filesystem::path& base_dir);

// Reads and parses a file, then applies the EMM_MNIST_DIR environment
// override to idx.dir when that variable is set.
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical key-value rendering; parsing it back yields the same config.
std::string to_key_values(const RunConfig& cfg);

// Keys with a one-line description each, in schema order.
const std::vector<std::pair<std::string, std::string>>& config_schema();

}  // namespace emm
