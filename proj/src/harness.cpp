#include "emm/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "emm/checkpoint.hpp"
#include "emm/errors.hpp"
#include "emm/simd.hpp"

namespace emm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kTrainStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kTestDataStream = 4;

GaussianModes modes_for(const SyntheticSource& s) {
  return spaced_modes(s.modes, s.dim, s.separation * s.stddev, s.stddev);
}

std::size_t segment_of(const RunConfig& cfg, int label) {
  if (cfg.source == SourceKind::synthetic) return static_cast<std::size_t>(label);
  return static_cast<std::size_t>(label) / std::max<std::size_t>(cfg.idx.classes_per_task, 1);
}

std::size_t segment_count(const RunConfig& cfg, const Dataset& d) {
  if (cfg.source == SourceKind::synthetic) return cfg.synthetic.modes;
  return d.class_count / std::max<std::size_t>(cfg.idx.classes_per_task, 1);
}

void write_event(std::ostream* out, const nlohmann::json& e) {
  if (out != nullptr) *out << e.dump() << '\n';
}

}  // namespace

Dataset synthetic_test_set(const RunConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(kTestDataStream);
  return sample_gaussian_modes(modes_for(cfg.synthetic), cfg.synthetic.test_per_mode, rng);
}

DataSource::DataSource(const RunConfig& cfg) : cfg_(cfg) {
  if (cfg.source != SourceKind::idx) return;
  const auto& s = cfg.idx;
  train_ = downsample(load_idx(s.resolved(s.train_images, "train-images-idx3-ubyte"),
                               s.resolved(s.train_labels, "train-labels-idx1-ubyte")),
                      s.downsample);
  test_ = downsample(load_idx(s.resolved(s.test_images, "t10k-images-idx3-ubyte"),
                              s.resolved(s.test_labels, "t10k-labels-idx1-ubyte")),
                     s.downsample);
  test_->class_count = train_->class_count = std::max(train_->class_count, test_->class_count);
}

SeedData DataSource::for_seed(std::uint64_t seed) const {
  if (cfg_.source == SourceKind::synthetic) {
    auto s = synthetic_gaussian_stream(modes_for(cfg_.synthetic), cfg_.synthetic.per_mode,
                                       cfg_.batch_size, seed);
    return {std::move(s.train), synthetic_test_set(cfg_, seed), std::move(s.spec)};
  }
  SeedData d{*train_, *test_, {}};
  d.spec = build_split_stream(d.train, cfg_.idx.classes_per_task, cfg_.batch_size, seed);
  return d;
}

MixtureConfig model_config_for(const RunConfig& cfg, const Dataset& train) {
  MixtureConfig m = cfg.model;
  m.arch.input_dim = train.dim();
  m.arch.class_count = train.class_count;
  m.validate();
  return m;
}

double evaluate_accuracy(const MixtureModel& model, const Dataset& test, Rng& rng,
                         std::size_t chunk, std::vector<std::size_t>* routed) {
  if (test.size() == 0) throw InputError("evaluation needs a non-empty test set");
  const simd::FlushDenormals flush;
  if (chunk == 0) chunk = test.size();
  std::size_t correct = 0;
  if (routed != nullptr) routed->assign(test.size(), 0);
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    const std::size_t end = std::min(test.size(), start + chunk);
    std::vector<std::size_t> rows(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const Routing r = predict_batch(model, gather_rows(test.features, rows), rng);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (r.label[i] == test.labels[start + i]) ++correct;
      if (routed != nullptr) (*routed)[start + i] = r.expert[i];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

SeedResult run_seed(const RunConfig& cfg, const SeedData& data, std::uint64_t seed,
                    const RunOptions& opts) {
  const simd::FlushDenormals flush;
  const auto t0 = Clock::now();
  const Rng master(seed);
  Rng init = master.fork(kInitStream);
  Rng train = master.fork(kTrainStream);
  Rng eval = master.fork(kEvalStream);

  MixtureModel model(model_config_for(cfg, data.train), init);
  MemoryBuffer buffer(cfg.capacity, cfg.policy, cfg.drop_count);
  Stream stream(data.train, data.spec);

  SeedResult result;
  result.seed = seed;
  result.occupancy.reserve(stream.batch_count());
  write_event(opts.events, {{"event", "seed_start"},
                            {"seed", seed},
                            {"batches", stream.batch_count()},
                            {"kernels", simd::active().name}});
  std::size_t batches = 0;
  while (auto batch = stream.next_batch()) {
    const StepOutcome out = train_step(model, *batch, buffer, train);
    result.occupancy.push_back({out.buffer_after_update, out.buffer_after_step});
    if (out.report) {
      result.reports.push_back(*out.report);
      if (out.report->expanded) result.expansion_steps.push_back(out.report->step);
      auto e = hsic_report_json(*out.report);
      e["event"] = "hsic_check";
      e["seed"] = seed;
      e["experts_after"] = model.size();
      write_event(opts.events, e);
      if (out.report->expanded && opts.progress != nullptr)
        *opts.progress << "seed " << seed << ": expert " << model.size() << " added at step "
                       << out.report->step << " (min hsic " << out.report->min_value << ")\n";
    }
    if (opts.observer) opts.observer(seed, out, model, buffer);
    ++batches;
    if (opts.progress != nullptr && batches % 1000 == 0)
      *opts.progress << "seed " << seed << ": " << batches << "/" << stream.batch_count()
                     << " batches, " << model.size() << " experts, "
                     << static_cast<int>(seconds_since(t0)) << " s\n"
                     << std::flush;
  }
  result.train_seconds = seconds_since(t0);
  result.expert_count = model.size();

  const auto t1 = Clock::now();
  std::vector<std::size_t> routed;
  result.accuracy = evaluate_accuracy(model, data.test, eval, cfg.eval_chunk, &routed);
  result.eval_seconds = seconds_since(t1);
  const std::size_t segments = segment_count(cfg, data.test);
  result.selection.assign(model.size(), std::vector<std::size_t>(segments, 0));
  for (std::size_t i = 0; i < routed.size(); ++i) {
    const std::size_t seg = segment_of(cfg, data.test.labels[i]);
    if (seg < segments) ++result.selection[routed[i]][seg];
  }
  write_event(opts.events, {{"event", "seed_end"},
                            {"seed", seed},
                            {"accuracy", result.accuracy},
                            {"experts", result.expert_count}});
  if (opts.progress != nullptr)
    *opts.progress << "seed " << seed << ": accuracy " << result.accuracy << " with "
                   << result.expert_count << " experts (" << static_cast<int>(result.train_seconds)
                   << " s train, " << static_cast<int>(result.eval_seconds) << " s eval)\n"
                   << std::flush;
  if (opts.write_checkpoints) {
    std::filesystem::create_directories(opts.checkpoint_dir);
    save_checkpoint(opts.checkpoint_dir / ("seed-" + std::to_string(seed) + ".ckpt"), model,
                    buffer, train);
  }
  return result;
}

void aggregate(RunMetrics& m) {
  const double n = static_cast<double>(m.seeds.size());
  if (m.seeds.empty()) return;
  double sum = 0.0;
  for (const auto& s : m.seeds) sum += s.accuracy;
  m.mean_accuracy = sum / n;
  double ss = 0.0;
  for (const auto& s : m.seeds) ss += (s.accuracy - m.mean_accuracy) * (s.accuracy - m.mean_accuracy);
  m.std_accuracy = m.seeds.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

RunMetrics run_experiment(const RunConfig& cfg, const DataSource& data, const RunOptions& opts) {
  if (cfg.seeds.empty()) throw ConfigError("no seeds to run");
  const auto t0 = Clock::now();
  RunMetrics m;
  for (std::uint64_t seed : cfg.seeds) m.seeds.push_back(run_seed(cfg, data.for_seed(seed), seed, opts));
  aggregate(m);
  m.wall_seconds = seconds_since(t0);
  return m;
}

RunMetrics run_experiment(const RunConfig& cfg, const RunOptions& opts) {
  return run_experiment(cfg, DataSource(cfg), opts);
}

std::vector<SweepRow> lambda_sweep(const RunConfig& cfg, const std::vector<double>& grid,
                                   const RunOptions& opts) {
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ConfigError("lambda grid must be strictly ascending");
  const DataSource data(cfg);
  std::vector<SweepRow> rows;
  for (double lambda : grid) {
    RunConfig c = cfg;
    c.model.lambda = lambda;
    const RunMetrics m = run_experiment(c, data, opts);
    SweepRow row;
    row.lambda = lambda;
    for (const auto& s : m.seeds) row.expert_counts.push_back(s.expert_count);
    row.mean_experts = std::accumulate(row.expert_counts.begin(), row.expert_counts.end(), 0.0) /
                       static_cast<double>(row.expert_counts.size());
    row.mean_accuracy = m.mean_accuracy;
    row.std_accuracy = m.std_accuracy;
    write_event(opts.events, {{"event", "sweep_point"},
                              {"lambda", lambda},
                              {"experts", row.expert_counts},
                              {"accuracy_mean", row.mean_accuracy}});
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json hsic_report_json(const HsicReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [id, v] : r.per_expert) per.push_back({{"expert", id}, {"hsic", v}});
  return {{"step", r.step}, {"per_expert", per}, {"min", r.min_value}, {"expanded", r.expanded}};
}

namespace {

nlohmann::json config_json(const RunConfig& cfg) {
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [key, doc] : config_schema()) (void)doc, c[key] = nullptr;
  const std::string text = to_key_values(cfg);
  for (const auto& [key, entry] : parse_key_values(text, "config")) c[key] = entry.value;
  return c;
}

}  // namespace

nlohmann::json report_json(const RunConfig& cfg, const RunMetrics& m) {
  nlohmann::json seeds = nlohmann::json::array();
  nlohmann::json timing = nlohmann::json::array();
  for (const auto& s : m.seeds) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& r : s.reports) log.push_back(hsic_report_json(r));
    std::size_t peak_mid = 0;
    std::size_t peak_end = 0;
    for (const auto& o : s.occupancy) {
      peak_mid = std::max(peak_mid, o.after_update);
      peak_end = std::max(peak_end, o.after_step);
    }
    seeds.push_back({{"seed", s.seed},
                     {"accuracy", s.accuracy},
                     {"experts", s.expert_count},
                     {"expansion_steps", s.expansion_steps},
                     {"selection_by_segment", s.selection},
                     {"buffer_peak_mid_step", peak_mid},
                     {"buffer_peak_step_end", peak_end},
                     {"hsic_log", log}});
    timing.push_back({{"seed", s.seed}, {"train_seconds", s.train_seconds},
                      {"eval_seconds", s.eval_seconds}});
  }
  return {{"schema", "emm-run/1"},
          {"config", config_json(cfg)},
          {"seeds", seeds},
          {"aggregate",
           {{"seeds", m.seeds.size()},
            {"accuracy_mean", m.mean_accuracy},
            {"accuracy_std", m.std_accuracy}}},
          {"timing", {{"wall_seconds", m.wall_seconds}, {"per_seed", timing}}}};
}

nlohmann::json sweep_json(const RunConfig& cfg, const std::vector<SweepRow>& rows) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows)
    table.push_back({{"lambda", r.lambda},
                     {"experts", r.expert_counts},
                     {"experts_mean", r.mean_experts},
                     {"accuracy_mean", r.mean_accuracy},
                     {"accuracy_std", r.std_accuracy}});
  return {{"schema", "emm-sweep/1"}, {"config", config_json(cfg)}, {"rows", table}};
}

void emit_report(const nlohmann::json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("short write to report '" + path.string() + "'");
}

}  // namespace emm
