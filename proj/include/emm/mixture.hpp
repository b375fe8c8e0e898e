#pragma once

// The mixture controller: trains the single active expert on the memory
// buffer, checks the expansion criterion whenever the buffer is full, and
// routes predictions to the expert with the highest ELBO.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "emm/expert.hpp"
#include "emm/hsic.hpp"
#include "emm/memory.hpp"
#include "emm/rng.hpp"
#include "emm/sample.hpp"

namespace emm {

// below: expand when min HSIC < lambda.  above: expand when min HSIC > lambda.
enum class Direction { below, above };

std::string_view direction_name(Direction d);
Direction parse_direction(std::string_view name);

struct TrainConfig {
  std::size_t epochs_per_step = 1;
  // Upper bound on optimizer steps per stream batch; 0 means no bound.
  std::size_t max_updates_per_step = 0;
  std::size_t batch_size = 32;
  nn::AdamConfig adam;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct MixtureConfig {
  ExpertArchitecture arch;
  double lambda = 0.02;
  Direction direction = Direction::above;
  HsicConfig hsic;
  TrainConfig train;
  std::size_t n_draws = 8;
  // Expansion checks are skipped until the active expert has taken this many
  // optimizer steps; 0 checks on every full buffer.
  std::size_t warmup_updates = 0;

  // Throws ConfigError on an unusable combination.
  void validate() const;

  friend bool operator==(const MixtureConfig&, const MixtureConfig&) = default;
};

struct HsicReport {
  std::vector<std::pair<std::size_t, double>> per_expert;  // (expert id, value)
  double min_value = 0.0;
  bool expanded = false;
  std::uint64_t step = 0;  // 1-based index of the stream batch being processed

  friend bool operator==(const HsicReport&, const HsicReport&) = default;
};

struct StepOutcome {
  std::size_t buffer_after_update = 0;  // occupancy between Step 1 and Step 3
  std::size_t buffer_after_step = 0;
  std::size_t updates = 0;  // optimizer steps taken by the active expert
  std::optional<HsicReport> report;
};

class MixtureModel {
 public:
  // Creates the first, trainable expert from `init`.
  MixtureModel(MixtureConfig config, Rng& init);

  // Rebuilds a model from saved parts; validates the freeze invariant.
  MixtureModel(MixtureConfig config, std::vector<Expert> experts, std::uint64_t step);

  const MixtureConfig& config() const noexcept { return config_; }
  const std::vector<Expert>& experts() const noexcept { return experts_; }
  std::size_t size() const noexcept { return experts_.size(); }
  std::size_t active_index() const noexcept { return experts_.size() - 1; }
  const Expert& active() const { return experts_.back(); }
  Expert& active() { return experts_.back(); }
  std::uint64_t step() const noexcept { return step_; }

  void set_lambda(double lambda) { config_.lambda = lambda; }

 private:
  friend void expand(MixtureModel& model, MemoryBuffer& buffer, Rng& rng);
  friend StepOutcome train_step(MixtureModel& model, std::span<const Sample> batch,
                                MemoryBuffer& buffer, Rng& rng);

  MixtureConfig config_;
  std::vector<Expert> experts_;
  std::uint64_t step_ = 0;
};

// Step 1: append the batch and train the active expert on the buffer.
// Step 2: if full and the active expert is past its warm-up, run the
//         expansion check (and expand).
// Step 3: if still full, drop drop_count samples by the buffer's policy.
StepOutcome train_step(MixtureModel& model, std::span<const Sample> batch, MemoryBuffer& buffer,
                       Rng& rng);

// Per-expert HSIC against the buffer and the thresholded decision; expands
// the model when the decision fires. Requires a full buffer.
HsicReport expansion_check(MixtureModel& model, MemoryBuffer& buffer, Rng& rng);

// Freezes the active expert, appends a fresh one and clears the buffer.
void expand(MixtureModel& model, MemoryBuffer& buffer, Rng& rng);

// argmax of loglik_score over experts; ties go to the lowest index.
std::size_t select_expert(const MixtureModel& model, std::span<const double> x, Rng& rng);

// Class predicted by the selected expert's classifier.
int predict(const MixtureModel& model, std::span<const double> x, Rng& rng);

struct Routing {
  std::vector<std::size_t> expert;
  std::vector<int> label;
};

// Batched select_expert + predict over the rows of `x`.
Routing predict_batch(const MixtureModel& model, const Matrix& x, Rng& rng);

}  // namespace emm
