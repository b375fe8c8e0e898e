#include "emm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "emm/errors.hpp"

namespace emm {

std::string_view direction_name(Direction d) { return d == Direction::below ? "below" : "above"; }

Direction parse_direction(std::string_view name) {
  if (name == "below") return Direction::below;
  if (name == "above") return Direction::above;
  throw ConfigError("unknown direction '" + std::string(name) + "'");
}

void MixtureConfig::validate() const {
  if (!(std::isfinite(lambda) && lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (hsic.m < 2) throw ConfigError("hsic m must be at least 2");
  hsic.left_kernel.validate();
  hsic.right_kernel.validate();
  if (train.batch_size == 0) throw ConfigError("training batch size must be positive");
  if (train.epochs_per_step == 0) throw ConfigError("epochs per step must be positive");
  if (n_draws == 0) throw ConfigError("n_draws must be positive");
  if (arch.input_dim == 0 || arch.latent_dim == 0 || arch.class_count < 2)
    throw ConfigError("architecture needs positive widths and two or more classes");
  if (!(std::isfinite(arch.decoder_variance) && arch.decoder_variance > 0.0))
    throw ConfigError("decoder variance must be positive");
}

MixtureModel::MixtureModel(MixtureConfig config, Rng& init) : config_(std::move(config)) {
  config_.validate();
  experts_.push_back(make_expert(config_.arch, 0, init, config_.train.adam));
}

MixtureModel::MixtureModel(MixtureConfig config, std::vector<Expert> experts, std::uint64_t step)
    : config_(std::move(config)), experts_(std::move(experts)), step_(step) {
  config_.validate();
  if (experts_.empty()) throw InputError("a mixture needs at least one expert");
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    experts_[i].validate();
    if (experts_[i].frozen != (i + 1 < experts_.size()))
      throw InputError("exactly the last expert must be trainable");
  }
}

namespace {

std::size_t updates_for(const TrainConfig& cfg, std::size_t buffer_size) {
  const std::size_t per_epoch = (buffer_size + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t n = per_epoch * cfg.epochs_per_step;
  if (cfg.max_updates_per_step > 0) n = std::min(n, cfg.max_updates_per_step);
  return n;
}

// Minibatch passes over the buffer in shuffled order, truncated to the
// configured number of optimizer steps.
std::size_t train_active(Expert& expert, const MemoryBuffer& buffer, const TrainConfig& cfg,
                         Rng& rng) {
  const auto& items = buffer.items();
  const std::size_t total = updates_for(cfg, items.size());
  std::size_t done = 0;
  std::vector<std::size_t> order(items.size());
  while (done < total) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size() && done < total;
         start += cfg.batch_size, ++done) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t d = items[order[start]].features.size();
      Matrix x(end - start, d);
      std::vector<int> labels;
      labels.reserve(end - start);
      bool all_labelled = true;
      for (std::size_t r = start; r < end; ++r) {
        const Sample& s = items[order[r]];
        std::copy(s.features.begin(), s.features.end(), x.row(r - start).begin());
        if (s.label)
          labels.push_back(*s.label);
        else
          all_labelled = false;
      }
      if (!all_labelled) labels.clear();
      train_minibatch(expert, x, labels, rng);
    }
  }
  return done;
}

bool decide(Direction d, double min_value, double lambda) {
  return d == Direction::below ? min_value < lambda : min_value > lambda;
}

}  // namespace

StepOutcome train_step(MixtureModel& model, std::span<const Sample> batch, MemoryBuffer& buffer,
                       Rng& rng) {
  StepOutcome out;
  buffer.update(batch);
  out.buffer_after_update = buffer.size();
  out.updates = train_active(model.active(), buffer, model.config_.train, rng);
  const bool warmed_up = model.active().optim.encoder.step >= model.config_.warmup_updates;
  if (buffer.is_full() && warmed_up) out.report = expansion_check(model, buffer, rng);
  if (buffer.is_full()) buffer.drop(rng);
  out.buffer_after_step = buffer.size();
  ++model.step_;
  return out;
}

HsicReport expansion_check(MixtureModel& model, MemoryBuffer& buffer, Rng& rng) {
  if (!buffer.is_full()) throw InputError("expansion check requires a full memory buffer");
  HsicConfig hcfg = model.config().hsic;
  hcfg.m = std::min(hcfg.m, buffer.size());
  const Matrix samples = buffer.features();
  HsicReport report;
  report.step = model.step() + 1;
  report.min_value = std::numeric_limits<double>::infinity();
  for (const Expert& e : model.experts()) {
    const double v = expert_memory_hsic(e, samples, hcfg, rng);
    report.per_expert.emplace_back(e.id, v);
    report.min_value = std::min(report.min_value, v);
  }
  report.expanded = decide(model.config().direction, report.min_value, model.config().lambda);
  if (report.expanded) expand(model, buffer, rng);
  return report;
}

void expand(MixtureModel& model, MemoryBuffer& buffer, Rng& rng) {
  model.experts_.back().frozen = true;
  const std::size_t id = model.experts_.size();
  model.experts_.push_back(make_expert(model.config_.arch, id, rng, model.config_.train.adam));
  buffer.clear();
}

std::size_t select_expert(const MixtureModel& model, std::span<const double> x, Rng& rng) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double s = loglik_score(model.experts()[i], x, model.config().n_draws, rng);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

namespace {

int argmax_row(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

int predict(const MixtureModel& model, std::span<const double> x, Rng& rng) {
  const Expert& e = model.experts()[select_expert(model, x, rng)];
  const Matrix in(1, x.size(), std::vector<double>(x.begin(), x.end()));
  return argmax_row(nn::mlp_predict(e.classifier, in).row(0));
}

Routing predict_batch(const MixtureModel& model, const Matrix& x, Rng& rng) {
  Routing out;
  out.expert.assign(x.rows(), 0);
  out.label.assign(x.rows(), 0);
  if (x.rows() == 0) return out;
  std::vector<double> best(x.rows(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto scores = loglik_scores(model.experts()[i], x, model.config().n_draws, rng);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (scores[r] > best[r]) {
        best[r] = scores[r];
        out.expert[r] = i;
      }
    }
  }
  for (std::size_t i = 0; i < model.size(); ++i) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < x.rows(); ++r)
      if (out.expert[r] == i) rows.push_back(r);
    if (rows.empty()) continue;
    const Matrix logits = nn::mlp_predict(model.experts()[i].classifier, gather_rows(x, rows));
    for (std::size_t k = 0; k < rows.size(); ++k) out.label[rows[k]] = argmax_row(logits.row(k));
  }
  return out;
}

}  // namespace emm
