// Acceptance runner. Each criterion prints one line:
//   PASS <name>: <measurements>
//   FAIL <name>: <measurements>
// Usage: emm_acceptance <criterion>|all

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "emm/checkpoint.hpp"
#include "emm/config.hpp"
#include "emm/errors.hpp"
#include "emm/expert.hpp"
#include "emm/harness.hpp"
#include "emm/hsic.hpp"
#include "emm/nn.hpp"
#include "oracles.hpp"

using namespace emm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kSkip = 77;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int verdict(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  return ok ? 0 : 1;
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig config_named(const std::string& file) {
  return load_run_config(fs::path(EMM_CONFIG_DIR) / file);
}

// ---------------------------------------------------------------------------

int hsic_correctness() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  double worst_raw_ratio_error = 0.0;
  int cases = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t m = 2 + static_cast<std::size_t>(i % 19);
    PairedSampleSet p{rng.normal_matrix(m, 1 + rng.below(5)), rng.normal_matrix(m, 1 + rng.below(5))};
    for (std::size_t r = 0; r < m; ++r) p.right(r, 0) += 0.7 * p.left(r, 0);
    for (const KernelSpec& spec : {KernelSpec::rbf_median(), KernelSpec::linear()}) {
      const double lib = hsic_paired(p, spec, spec);
      const double naive = oracle::hsic_naive(p, spec, spec);
      // The library normalizes tr(KHLH) by (m-1)^2, the three-term oracle by m^2.
      const double md = static_cast<double>(m);
      const double scale = md * md / ((md - 1) * (md - 1));
      worst = std::max(worst, std::abs(lib - naive * scale));
      if (naive > 1e-12)
        worst_raw_ratio_error = std::max(worst_raw_ratio_error, std::abs(lib / naive - scale));
      ++cases;
    }
  }
  const double secs = since(t0);
  return verdict("hsic-correctness", worst <= 1e-10 && secs < 1.0,
                 fmt("%d sets x 2 kernels, max |lib - oracle*m^2/(m-1)^2| = %.3g (tol 1e-10), "
                     "max ratio deviation %.3g, %.3f s (limit 1 s)",
                     cases / 2, worst, worst_raw_ratio_error, secs));
}

int hsic_properties() {
  Rng rng(202);
  int failures = 0;
  double min_value = 1e300, max_asym = 0, max_perm = 0, max_const = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t m = 2 + rng.below(30);
    const std::size_t d1 = 1 + rng.below(5), d2 = 1 + rng.below(5);
    PairedSampleSet p{rng.normal_matrix(m, d1), rng.normal_matrix(m, d2)};
    if (i % 2 == 0)
      for (std::size_t r = 0; r < m; ++r) p.right(r, 0) += p.left(r, 0);
    const KernelSpec ks = i % 3 == 0 ? KernelSpec::linear() : KernelSpec::rbf_median();
    const KernelSpec ls = i % 5 == 0 ? KernelSpec::linear() : KernelSpec::rbf(0.5 + rng.uniform());
    const auto K = gram(p.left, ks), L = gram(p.right, ls);
    const double h = hsic_biased(K, L);
    min_value = std::min(min_value, h);
    const double asym = std::abs(h - hsic_biased(L, K));
    max_asym = std::max(max_asym, asym);

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const double hp = hsic_paired({gather_rows(p.left, perm), gather_rows(p.right, perm)}, ks, ls);
    const double perm_err = std::abs(hp - h);
    max_perm = std::max(max_perm, perm_err);

    Matrix constant(m, d2);
    const double c = rng.normal();
    constant.fill(c);
    const double hc = std::abs(hsic_paired({p.left, constant}, ks, ls));
    max_const = std::max(max_const, hc);

    if (h < -1e-12 || asym > 1e-12 || perm_err > 1e-12 || hc > 1e-12) ++failures;
  }
  return verdict("hsic-properties", failures == 0,
                 fmt("1000 cases, %d failing; min %.3g (>= -1e-12), max asymmetry %.3g, "
                     "max permutation change %.3g, max constant-marginal %.3g (all <= 1e-12)",
                     failures, min_value, max_asym, max_perm, max_const));
}

// |a - b| / max(|a|, |b|, 1e-4): relative error, with an absolute floor of
// 1e-8 for entries whose true value is essentially zero.
double worst_relative(const nn::MlpGradients& a, const nn::MlpGradients& b) {
  double worst = 0.0;
  auto visit = [&](std::span<const double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double denom = std::max({std::abs(x[i]), std::abs(y[i]), 1e-4});
      worst = std::max(worst, std::abs(x[i] - y[i]) / denom);
    }
  };
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    visit(a.layers[l].weight.values(), b.layers[l].weight.values());
    visit(a.layers[l].bias, b.layers[l].bias);
  }
  return worst;
}

int gradients() {
  const auto t0 = Clock::now();
  double worst_enc = 0, worst_dec = 0, worst_cls = 0;
  std::size_t entries = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ExpertArchitecture arch;
    arch.input_dim = 12;
    arch.latent_dim = 3;
    arch.class_count = 5;
    arch.vae_hidden = {10};
    arch.classifier_hidden = {9, 7};
    Rng rng(seed);
    Expert e = make_expert(arch, 0, rng);
    const Matrix x = rng.normal_matrix(6, 12);
    const Matrix noise = rng.normal_matrix(6, 3);
    std::vector<int> y(6);
    for (int& v : y) v = static_cast<int>(rng.below(5));

    const auto elbo = elbo_loss(e, x, noise);
    const auto f = [&] { return elbo_loss(e, x, noise).loss; };
    const auto fd_enc = oracle::finite_difference(e.encoder, f, 1e-5);
    const auto fd_dec = oracle::finite_difference(e.decoder, f, 1e-5);
    worst_enc = std::max(worst_enc, worst_relative(elbo.encoder, fd_enc));
    worst_dec = std::max(worst_dec, worst_relative(elbo.decoder, fd_dec));

    const auto ce = classifier_loss(e, x, y);
    const auto fd_cls =
        oracle::finite_difference(e.classifier, [&] { return classifier_loss(e, x, y).loss; }, 1e-5);
    worst_cls = std::max(worst_cls, worst_relative(ce.grads, fd_cls));
    entries += e.encoder.parameter_count() + e.decoder.parameter_count() +
               e.classifier.parameter_count();
  }
  const double secs = since(t0);
  const bool ok = worst_enc <= 1e-4 && worst_dec <= 1e-4 && worst_cls <= 1e-4 && secs < 30.0;
  return verdict("gradients", ok,
                 fmt("10 seeds, %zu parameters; worst relative error encoder %.2g, decoder %.2g, "
                     "classifier %.2g (tol 1e-4); %.2f s (limit 30 s)",
                     entries, worst_enc, worst_dec, worst_cls, secs));
}

int expansion() {
  const auto t0 = Clock::now();
  const RunConfig two = config_named("synthetic_2mode.cfg");
  const RunConfig one = config_named("synthetic_1mode.cfg");
  const RunMetrics m2 = run_experiment(two);
  const RunMetrics m1 = run_experiment(one);
  const double secs = since(t0);
  bool ok = m2.seeds.size() == 5 && m1.seeds.size() == 5 && secs < 120.0;
  std::ostringstream counts2, counts1, accs;
  for (const auto& s : m2.seeds) {
    ok = ok && s.expert_count == 2 && s.accuracy >= 0.95;
    counts2 << s.expert_count << ' ';
    accs << fmt("%.4f ", s.accuracy);
  }
  for (const auto& s : m1.seeds) {
    ok = ok && s.expert_count == 1;
    counts1 << s.expert_count << ' ';
  }
  return verdict("expansion", ok,
                 "2-mode experts [ " + counts2.str() + "] (want 2), accuracy [ " + accs.str() +
                     "] (want >= 0.95); 1-mode experts [ " + counts1.str() + "] (want 1); " +
                     fmt("%.1f s (limit 120 s)", secs));
}

// Raw parameter bytes of one expert.
std::string expert_bytes(const Expert& e) {
  std::string out;
  for (const nn::Mlp* net : {&e.encoder, &e.decoder, &e.classifier})
    for (const auto& l : net->layers) {
      out.append(reinterpret_cast<const char*>(l.weight.data()), l.weight.size() * sizeof(double));
      out.append(reinterpret_cast<const char*>(l.bias.data()), l.bias.size() * sizeof(double));
    }
  return out;
}

int memory() {
  RunConfig cfg = config_named("synthetic_2mode.cfg");
  std::size_t steps = 0, over_mid = 0, over_end = 0, expansions = 0, nonempty_after = 0;
  std::size_t peak_mid = 0, peak_end = 0, snapshots = 0, frozen_changes = 0;
  // seed -> expert index -> bytes captured when the expert was frozen
  std::map<std::uint64_t, std::vector<std::string>> frozen_at;
  std::map<std::uint64_t, std::vector<std::string>> checkpoints;

  RunOptions opts;
  opts.observer = [&](std::uint64_t seed, const StepOutcome& out, const MixtureModel& model,
                      const MemoryBuffer& buffer) {
    ++steps;
    peak_mid = std::max(peak_mid, out.buffer_after_update);
    peak_end = std::max(peak_end, out.buffer_after_step);
    if (out.buffer_after_update > cfg.capacity + cfg.batch_size) ++over_mid;
    if (buffer.size() > cfg.capacity || out.buffer_after_step != buffer.size()) ++over_end;
    auto& frozen = frozen_at[seed];
    if (out.report && out.report->expanded) {
      ++expansions;
      if (!buffer.empty()) ++nonempty_after;
      frozen.push_back(expert_bytes(model.experts()[model.size() - 2]));
    }
    // Periodic checkpoints: decode them and compare every frozen expert.
    if (model.step() % 150 == 0 || (out.report && out.report->expanded)) {
      const Checkpoint ck = decode_checkpoint(encode_checkpoint(model, buffer, Rng(0)));
      ++snapshots;
      for (std::size_t i = 0; i < frozen.size(); ++i)
        if (!ck.model.experts()[i].frozen || expert_bytes(ck.model.experts()[i]) != frozen[i])
          ++frozen_changes;
    }
  };
  // Both dropout policies; the seed keys are offset so the frozen-expert
  // records of the two runs stay apart.
  std::size_t seeds_run = 0;
  for (DropPolicy policy : {DropPolicy::sliding_window, DropPolicy::random}) {
    cfg.policy = policy;
    const std::uint64_t offset = policy == DropPolicy::random ? 1000 : 0;
    RunOptions keyed = opts;
    keyed.observer = [&, offset](std::uint64_t seed, const StepOutcome& out,
                                 const MixtureModel& model, const MemoryBuffer& buffer) {
      opts.observer(seed + offset, out, model, buffer);
    };
    seeds_run += run_experiment(cfg, keyed).seeds.size();
  }
  const bool ok = steps > 0 && over_mid == 0 && over_end == 0 && nonempty_after == 0 &&
                  frozen_changes == 0 && expansions > 0;
  return verdict(
      "memory", ok,
      fmt("%zu steps over %zu seeds (sliding window and random dropout); peak mid-step %zu (limit %zu), peak step-end %zu (limit %zu); "
          "%zu expansions, %zu with a non-empty buffer after; %zu checkpoints, %zu frozen-expert "
          "byte changes",
          steps, seeds_run, peak_mid, cfg.capacity + cfg.batch_size, peak_end, cfg.capacity,
          expansions, nonempty_after, snapshots, frozen_changes));
}

int lambda_sweep_trend() {
  const auto t0 = Clock::now();
  const RunConfig cfg = config_named("synthetic_4mode.cfg");
  const std::vector<double> grid{0.0, 0.005, 0.02, 0.05, 0.2};
  const auto rows = lambda_sweep(cfg, grid);
  const double secs = since(t0);
  bool monotone = cfg.model.direction == Direction::below;
  std::ostringstream table;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].mean_experts < rows[i - 1].mean_experts) monotone = false;
    table << fmt("%g->%.2g(acc %.3f) ", rows[i].lambda, rows[i].mean_experts, rows[i].mean_accuracy);
  }
  return verdict("lambda-sweep", monotone && secs < 600.0,
                 "direction below, experts by lambda: " + table.str() +
                     fmt("; non-decreasing %s; %.1f s (limit 600 s)", monotone ? "yes" : "no", secs));
}

int determinism() {
  RunConfig cfg = config_named("synthetic_2mode.cfg");
  cfg.seeds = {3};
  const fs::path dir = fs::temp_directory_path() / "emm-acceptance-determinism";
  auto once = [&](const std::string& tag) {
    RunOptions opts;
    opts.write_checkpoints = true;
    opts.checkpoint_dir = dir / tag;
    const RunMetrics m = run_experiment(cfg, opts);
    const Checkpoint ck = load_checkpoint(opts.checkpoint_dir / "seed-3.ckpt");
    const Dataset test = DataSource(cfg).for_seed(3).test;
    Rng rng(17);
    const Routing r = predict_batch(ck.model, test.features, rng);
    return std::tuple{m, r};
  };
  const auto [a, ra] = once("a");
  const auto [b, rb] = once("b");
  const bool experts = a.seeds[0].expert_count == b.seeds[0].expert_count;
  const bool logs = a.seeds[0].reports == b.seeds[0].reports;
  const bool preds = ra.label == rb.label && ra.expert == rb.expert;
  const bool acc = a.seeds[0].accuracy == b.seeds[0].accuracy;
  return verdict("determinism", experts && logs && preds && acc,
                 fmt("expert counts %zu/%zu, %zu HSIC checks identical: %s, %zu predictions "
                     "identical: %s, accuracy identical: %s",
                     a.seeds[0].expert_count, b.seeds[0].expert_count, a.seeds[0].reports.size(),
                     logs ? "yes" : "no", ra.label.size(), preds ? "yes" : "no",
                     acc ? "yes" : "no"));
}

bool mnist_available(const RunConfig& cfg) {
  for (const auto& [p, name] :
       {std::pair{cfg.idx.train_images, "train-images-idx3-ubyte"},
        std::pair{cfg.idx.train_labels, "train-labels-idx1-ubyte"},
        std::pair{cfg.idx.test_images, "t10k-images-idx3-ubyte"},
        std::pair{cfg.idx.test_labels, "t10k-labels-idx1-ubyte"}})
    if (!fs::exists(cfg.idx.resolved(p, name))) return false;
  return true;
}

std::string seed_table(const RunMetrics& m) {
  std::string out;
  for (const auto& s : m.seeds)
    out += fmt("%llu:%.4f/%zu ", static_cast<unsigned long long>(s.seed), s.accuracy, s.expert_count);
  return out;
}

int mnist(const std::string& name, const std::string& file, double min_mean, double max_std,
          double budget_s) {
  const RunConfig cfg = config_named(file);
  if (!mnist_available(cfg)) {
    std::printf("SKIP %s: MNIST IDX files not found under %s (set EMM_MNIST_DIR)\n", name.c_str(),
                cfg.idx.dir.string().c_str());
    return kSkip;
  }
  const auto t0 = Clock::now();
  RunOptions opts;
  opts.progress = &std::cerr;
  const RunMetrics m = run_experiment(cfg, opts);
  const double secs = since(t0);
  bool ok = m.seeds.size() == 5 && m.mean_accuracy >= min_mean && secs <= budget_s;
  if (max_std > 0) ok = ok && m.std_accuracy <= max_std;
  std::string detail = fmt("mean %.4f (gate >= %.2f), std %.4f", m.mean_accuracy, min_mean,
                           m.std_accuracy);
  if (max_std > 0) detail += fmt(" (gate <= %.2f)", max_std);
  detail += fmt(", %.0f s (budget %.0f s), seed:acc/experts ", secs, budget_s) + seed_table(m);
  if (name == "mnist-full")
    detail += fmt("; stretch >= 0.9323 %s, paper 0.9679", m.mean_accuracy >= 0.9323 ? "met" : "not met");
  return verdict(name, ok, detail);
}

const std::vector<std::pair<std::string, std::function<int()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<int()>>> all{
      {"hsic-correctness", hsic_correctness},
      {"hsic-properties", hsic_properties},
      {"gradients", gradients},
      {"expansion", expansion},
      {"memory", memory},
      {"lambda-sweep", lambda_sweep_trend},
      {"determinism", determinism},
      {"mnist-14", [] { return mnist("mnist-14", "mnist_split_14.cfg", 0.85, 0.0, 1200.0); }},
      {"mnist-full", [] { return mnist("mnist-full", "mnist_split.cfg", 0.90, 0.02, 7200.0); }},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <criterion>|all\ncriteria:", argv[0]);
    for (const auto& [name, fn] : criteria()) std::fprintf(stderr, " %s", name.c_str());
    std::fprintf(stderr, "\n");
    return 2;
  }
  const std::string want = argv[1];
  int status = 0;
  bool found = false;
  for (const auto& [name, fn] : criteria()) {
    if (want != "all" && want != name) continue;
    found = true;
    try {
      const int rc = fn();
      if (rc != 0 && rc != kSkip) status = 1;
      if (rc == kSkip && want != "all") status = kSkip;
    } catch (const std::exception& e) {
      verdict(name, false, std::string("exception: ") + e.what());
      status = 1;
    }
  }
  if (!found) {
    std::fprintf(stderr, "unknown criterion '%s'\n", want.c_str());
    return 2;
  }
  return status;
}
