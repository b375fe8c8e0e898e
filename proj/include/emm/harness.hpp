#pragma once

// Experiment driver: seeded runs over a stream, held-out evaluation,
// lambda sweeps and JSON reports.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "emm/config.hpp"
#include "emm/memory.hpp"
#include "emm/mixture.hpp"
#include "emm/stream.hpp"

#include <json.hpp>

namespace emm {

// Train and test sets for one seed.
struct SeedData {
  Dataset train;
  Dataset test;
  StreamSpec spec;
};

// Loads IDX files once; synthetic data is generated per seed.
class DataSource {
 public:
  explicit DataSource(const RunConfig& cfg);
  SeedData for_seed(std::uint64_t seed) const;

 private:
  RunConfig cfg_;
  std::optional<Dataset> train_;
  std::optional<Dataset> test_;
};

// Synthetic held-out set matching the training modes of `cfg`.
Dataset synthetic_test_set(const RunConfig& cfg, std::uint64_t seed);

struct OccupancyPoint {
  std::size_t after_update = 0;
  std::size_t after_step = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t expert_count = 0;
  std::vector<HsicReport> reports;
  std::vector<std::uint64_t> expansion_steps;
  std::vector<OccupancyPoint> occupancy;
  // selection[e][t]: test samples of segment t routed to expert e
  std::vector<std::vector<std::size_t>> selection;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct RunMetrics {
  std::vector<SeedResult> seeds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation; 0 for one seed
  double wall_seconds = 0.0;
};

// Called after every train_step.
using StepObserver = std::function<void(std::uint64_t seed, const StepOutcome& outcome,
                                        const MixtureModel& model, const MemoryBuffer& buffer)>;

struct RunOptions {
  StepObserver observer;
  std::ostream* events = nullptr;   // JSON lines, one per event
  std::ostream* progress = nullptr;  // human-readable progress
  bool write_checkpoints = false;
  std::filesystem::path checkpoint_dir;
};

// Mixture config with input width and class count taken from the data.
MixtureConfig model_config_for(const RunConfig& cfg, const Dataset& train);

SeedResult run_seed(const RunConfig& cfg, const SeedData& data, std::uint64_t seed,
                    const RunOptions& opts = {});

RunMetrics run_experiment(const RunConfig& cfg, const DataSource& data,
                          const RunOptions& opts = {});
RunMetrics run_experiment(const RunConfig& cfg, const RunOptions& opts = {});

// Fraction of rows whose predicted class matches the label; `chunk` rows are
// scored at a time. Throws InputError on an empty test set.
double evaluate_accuracy(const MixtureModel& model, const Dataset& test, Rng& rng,
                         std::size_t chunk = 1000, std::vector<std::size_t>* routed = nullptr);

struct SweepRow {
  double lambda = 0.0;
  std::vector<std::size_t> expert_counts;  // per seed
  double mean_experts = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// Throws ConfigError unless `grid` is non-empty and ascending.
std::vector<SweepRow> lambda_sweep(const RunConfig& cfg, const std::vector<double>& grid,
                                   const RunOptions& opts = {});

void aggregate(RunMetrics& m);

// Report document; wall-clock values live only under "timing".
nlohmann::json report_json(const RunConfig& cfg, const RunMetrics& m);
nlohmann::json sweep_json(const RunConfig& cfg, const std::vector<SweepRow>& rows);
nlohmann::json hsic_report_json(const HsicReport& r);

// Writes `doc` to `path` (pretty-printed); IoError names the path.
void emit_report(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace emm
