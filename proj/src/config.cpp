#include "emm/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "emm/errors.hpp"

namespace emm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("key '" + key + "': '" + value + "' is not " + want);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    bad_value(key, v, "a finite number");
  return out;
}

bool to_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> to_counts(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_count(key, item));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string real_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
  if (v.empty()) return {};
  const std::filesystem::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

#define EMM_COUNT(KEY, MEMBER, DOC)                                                          \
  Field {                                                                                    \
    KEY, DOC,                                                                                \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) {               \
          c.MEMBER = to_count(KEY, v);                                                       \
        },                                                                                   \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                          \
  }
#define EMM_REAL(KEY, MEMBER, DOC)                                                           \
  Field {                                                                                    \
    KEY, DOC,                                                                                \
        [](RunConfig& c, const std::string& v, const std::filesystem::path&) {               \
          c.MEMBER = to_real(KEY, v);                                                        \
        },                                                                                   \
        [](const RunConfig& c) { return real_text(c.MEMBER); }                               \
  }
#define EMM_PATH(KEY, MEMBER, DOC)                                                           \
  Field {                                                                                    \
    KEY, DOC,                                                                                \
        [](RunConfig& c, const std::string& v, const std::filesystem::path& base) {          \
          c.MEMBER = resolve(base, v);                                                       \
        },                                                                                   \
        [](const RunConfig& c) { return c.MEMBER.string(); }                                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"source", "synthetic | idx",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              if (v == "synthetic")
                c.source = SourceKind::synthetic;
              else if (v == "idx")
                c.source = SourceKind::idx;
              else
                bad_value("source", v, "synthetic or idx");
            },
            [](const RunConfig& c) {
              return std::string(c.source == SourceKind::synthetic ? "synthetic" : "idx");
            }},
      EMM_PATH("data.dir", idx.dir, "directory with the four MNIST IDX files (env EMM_MNIST_DIR wins)"),
      EMM_PATH("data.train_images", idx.train_images, "explicit training image file"),
      EMM_PATH("data.train_labels", idx.train_labels, "explicit training label file"),
      EMM_PATH("data.test_images", idx.test_images, "explicit test image file"),
      EMM_PATH("data.test_labels", idx.test_labels, "explicit test label file"),
      EMM_COUNT("data.downsample", idx.downsample, "average-pool factor per image side (1 = none)"),
      EMM_COUNT("data.classes_per_task", idx.classes_per_task, "classes per stream segment"),
      EMM_COUNT("synthetic.modes", synthetic.modes, "number of Gaussian modes, one segment each"),
      EMM_COUNT("synthetic.dim", synthetic.dim, "feature dimension"),
      EMM_REAL("synthetic.separation", synthetic.separation, "distance between mode means in stddev units"),
      EMM_REAL("synthetic.stddev", synthetic.stddev, "per-coordinate standard deviation"),
      EMM_COUNT("synthetic.per_mode", synthetic.per_mode, "training samples per mode"),
      EMM_COUNT("synthetic.test_per_mode", synthetic.test_per_mode, "held-out samples per mode"),
      EMM_COUNT("stream.batch_size", batch_size, "samples per stream batch b"),
      EMM_COUNT("memory.capacity", capacity, "buffer capacity |G|max"),
      Field{"memory.policy", "sliding_window | random",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.policy = parse_drop_policy(v);
            },
            [](const RunConfig& c) { return std::string(drop_policy_name(c.policy)); }},
      EMM_COUNT("memory.drop_count", drop_count, "samples removed per dropout"),
      EMM_REAL("model.lambda", model.lambda, "expansion threshold"),
      Field{"model.direction", "above (expand when min HSIC > lambda) | below",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.direction = parse_direction(v);
            },
            [](const RunConfig& c) { return std::string(direction_name(c.model.direction)); }},
      EMM_COUNT("model.latent_dim", model.arch.latent_dim, "VAE latent width"),
      Field{"model.vae_hidden", "comma-separated hidden widths of encoder and decoder",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.arch.vae_hidden = to_counts("model.vae_hidden", v);
            },
            [](const RunConfig& c) { return join(c.model.arch.vae_hidden); }},
      Field{"model.classifier_hidden", "comma-separated hidden widths of the classifier",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.arch.classifier_hidden = to_counts("model.classifier_hidden", v);
            },
            [](const RunConfig& c) { return join(c.model.arch.classifier_hidden); }},
      EMM_REAL("model.decoder_variance", model.arch.decoder_variance, "fixed per-pixel variance of the Gaussian decoder"),
      EMM_COUNT("model.n_draws", model.n_draws, "ELBO draws per selection score"),
      EMM_COUNT("model.warmup_updates", model.warmup_updates, "optimizer steps an expert takes before its expansion checks start"),
      EMM_COUNT("hsic.m", model.hsic.m, "samples per side of each HSIC estimate (capped at buffer size)"),
      Field{"hsic.coupling", "two_sample | independent",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.hsic.coupling = parse_coupling(v);
            },
            [](const RunConfig& c) { return std::string(coupling_name(c.model.hsic.coupling)); }},
      Field{"hsic.kernel", "latent kernel: rbf | linear",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.hsic.left_kernel.kind = parse_kernel_kind(v);
            },
            [](const RunConfig& c) {
              return std::string(kernel_kind_name(c.model.hsic.left_kernel.kind));
            }},
      Field{"hsic.bandwidth", "rbf width or 'median'",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              if (v == "median")
                c.model.hsic.left_kernel.bandwidth.reset();
              else
                c.model.hsic.left_kernel.bandwidth = to_real("hsic.bandwidth", v);
            },
            [](const RunConfig& c) {
              const auto& b = c.model.hsic.left_kernel.bandwidth;
              return b ? real_text(*b) : std::string("median");
            }},
      Field{"hsic.memory_kernel", "memory-side kernel for the independent coupling",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.model.hsic.right_kernel.kind = parse_kernel_kind(v);
            },
            [](const RunConfig& c) {
              return std::string(kernel_kind_name(c.model.hsic.right_kernel.kind));
            }},
      Field{"hsic.memory_bandwidth", "memory-side rbf width or 'median'",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              if (v == "median")
                c.model.hsic.right_kernel.bandwidth.reset();
              else
                c.model.hsic.right_kernel.bandwidth = to_real("hsic.memory_bandwidth", v);
            },
            [](const RunConfig& c) {
              const auto& b = c.model.hsic.right_kernel.bandwidth;
              return b ? real_text(*b) : std::string("median");
            }},
      EMM_COUNT("train.epochs_per_step", model.train.epochs_per_step, "passes over the buffer per stream batch"),
      EMM_COUNT("train.max_updates_per_step", model.train.max_updates_per_step, "cap on optimizer steps per stream batch (0 = none)"),
      EMM_COUNT("train.batch_size", model.train.batch_size, "minibatch size of the inner optimization"),
      EMM_REAL("train.learning_rate", model.train.adam.learning_rate, "Adam step size"),
      EMM_REAL("train.beta1", model.train.adam.beta1, "Adam first-moment decay"),
      EMM_REAL("train.beta2", model.train.adam.beta2, "Adam second-moment decay"),
      EMM_REAL("train.epsilon", model.train.adam.epsilon, "Adam epsilon"),
      Field{"run.seeds", "comma-separated seeds, one run each",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              const auto s = to_counts("run.seeds", v);
              c.seeds.assign(s.begin(), s.end());
            },
            [](const RunConfig& c) { return join(c.seeds); }},
      Field{"run.out", "output directory, relative to the working directory (--out wins)",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) { c.out = v; },
            [](const RunConfig& c) { return c.out.string(); }},
      Field{"run.checkpoints", "write a checkpoint per seed (true | false)",
            [](RunConfig& c, const std::string& v, const std::filesystem::path&) {
              c.write_checkpoints = to_flag("run.checkpoints", v);
            },
            [](const RunConfig& c) {
              return std::string(c.write_checkpoints ? "true" : "false");
            }},
      EMM_COUNT("run.eval_chunk", eval_chunk, "test rows scored per batch during evaluation"),
  };
  return table;
}

#undef EMM_COUNT
#undef EMM_REAL
#undef EMM_PATH

}  // namespace

std::filesystem::path IdxSource::resolved(const std::filesystem::path& explicit_path,
                                          const char* canonical) const {
  if (!explicit_path.empty()) return explicit_path;
  return dir / canonical;
}

KeyValueMap parse_key_values(const std::string& text, const std::string& origin) {
  KeyValueMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (out.contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    out.emplace(key, KeyValueEntry{trim(body.substr(eq + 1)), number});
  }
  return out;
}

RunConfig run_config_from(const KeyValueMap& entries, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  for (const auto& [key, entry] : entries) {
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (f.key == key) field = &f;
    if (field == nullptr)
      throw ConfigError("line " + std::to_string(entry.line) + ": unknown key '" + key + "'");
    try {
      field->set(cfg, entry.value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(entry.line) + ": " + e.what());
    }
  }
  if (cfg.seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (cfg.batch_size == 0) throw ConfigError("stream.batch_size must be positive");
  if (cfg.capacity == 0) throw ConfigError("memory.capacity must be positive");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream text;
  text << in.rdbuf();
  RunConfig cfg;
  try {
    cfg = run_config_from(parse_key_values(text.str(), path.string()), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (const char* env = std::getenv("EMM_MNIST_DIR"); env != nullptr && *env != '\0')
    cfg.idx.dir = env;
  return cfg;
}

std::string to_key_values(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

const std::vector<std::pair<std::string, std::string>>& config_schema() {
  static const auto schema = [] {
    std::vector<std::pair<std::string, std::string>> s;
    for (const auto& f : fields()) s.emplace_back(f.key, f.doc);
    return s;
  }();
  return schema;
}

}  // namespace emm
