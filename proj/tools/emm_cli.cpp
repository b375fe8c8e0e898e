// emm: run, sweep and evaluate Evolved Mixture Model experiments.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "emm/checkpoint.hpp"
#include "emm/errors.hpp"
#include "emm/harness.hpp"
#include "emm/simd.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  bool quiet = false;
};

emm::RunConfig load(const Common& c) {
  emm::RunConfig cfg = emm::load_run_config(c.config);
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.out.empty()) cfg.out = c.out;
  return cfg;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (used == 0 || used != item.size() || !std::isfinite(v))
      throw emm::ConfigError("bad lambda value '" + item + "'");
    grid.push_back(v);
  }
  return grid;
}

void print_summary(const emm::RunMetrics& m) {
  for (const auto& s : m.seeds)
    std::cout << "seed " << s.seed << "  accuracy " << s.accuracy << "  experts " << s.expert_count
              << "\n";
  std::cout << "mean accuracy " << m.mean_accuracy << " +/- " << m.std_accuracy << " over "
            << m.seeds.size() << " seed(s)\n";
}

int cmd_run(const Common& c) {
  const emm::RunConfig cfg = load(c);
  fs::create_directories(cfg.out);
  std::ofstream events(cfg.out / "events.jsonl");
  if (!events) throw emm::IoError("cannot write " + (cfg.out / "events.jsonl").string());
  emm::RunOptions opts;
  opts.events = &events;
  opts.progress = c.quiet ? nullptr : &std::cerr;
  opts.write_checkpoints = cfg.write_checkpoints;
  opts.checkpoint_dir = cfg.out;
  const emm::RunMetrics m = emm::run_experiment(cfg, opts);
  emm::emit_report(emm::report_json(cfg, m), cfg.out / "summary.json");
  print_summary(m);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& csv) {
  const emm::RunConfig cfg = load(c);
  const auto grid = parse_grid(csv);
  fs::create_directories(cfg.out);
  std::ofstream events(cfg.out / "sweep-events.jsonl");
  emm::RunOptions opts;
  opts.events = &events;
  opts.progress = c.quiet ? nullptr : &std::cerr;
  const auto rows = emm::lambda_sweep(cfg, grid, opts);
  emm::emit_report(emm::sweep_json(cfg, rows), cfg.out / "sweep.json");
  std::cout << "lambda\texperts(mean)\taccuracy\n";
  for (const auto& r : rows)
    std::cout << r.lambda << "\t" << r.mean_experts << "\t" << r.mean_accuracy << "\n";
  return 0;
}

// --data is either a directory with IDX test files or a run config whose
// test split is rebuilt for --seed.
int cmd_eval(const std::string& checkpoint, const std::string& data_path, std::uint64_t seed,
             const std::string& out) {
  const emm::Checkpoint ck = emm::load_checkpoint(checkpoint);
  emm::Dataset test;
  if (fs::is_directory(data_path)) {
    test = emm::load_idx(fs::path(data_path) / "t10k-images-idx3-ubyte",
                         fs::path(data_path) / "t10k-labels-idx1-ubyte");
    const std::size_t want = ck.model.config().arch.input_dim;
    if (test.dim() != want) {
      const auto factor = static_cast<std::size_t>(
          std::lround(std::sqrt(static_cast<double>(test.dim()) / static_cast<double>(want))));
      if (factor == 0 || test.dim() != want * factor * factor)
        throw emm::ShapeError("test images do not match the checkpoint input width");
      test = emm::downsample(test, factor);
    }
  } else {
    emm::RunConfig cfg = emm::load_run_config(data_path);
    test = emm::DataSource(cfg).for_seed(seed).test;
  }
  emm::Rng rng = emm::Rng(seed).fork(3);
  const double acc = emm::evaluate_accuracy(ck.model, test, rng);
  std::cout << "accuracy " << acc << " on " << test.size() << " samples with "
            << ck.model.size() << " experts\n";
  if (!out.empty())
    emm::emit_report({{"schema", "emm-eval/1"},
                      {"checkpoint", checkpoint},
                      {"data", data_path},
                      {"seed", seed},
                      {"samples", test.size()},
                      {"experts", ck.model.size()},
                      {"accuracy", acc}},
                     out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolved Mixture Model experiments"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "kernel set: scalar or avx2 (default: best available)");

  Common run_opts;
  auto* run = app.add_subcommand("run", "train on a stream and evaluate every seed");
  run->add_option("--config", run_opts.config, "key-value config file")->required();
  run->add_option("--seed", run_opts.seeds, "seed(s); overrides run.seeds");
  run->add_option("--out", run_opts.out, "output directory; overrides run.out");
  run->add_flag("--quiet", run_opts.quiet, "suppress progress output");

  Common sweep_opts;
  std::string grid;
  auto* sweep = app.add_subcommand("sweep", "repeat run over an ascending lambda grid");
  sweep->add_option("--config", sweep_opts.config, "key-value config file")->required();
  sweep->add_option("--lambda", grid, "comma-separated ascending lambda values")->required();
  sweep->add_option("--seed", sweep_opts.seeds, "seed(s); overrides run.seeds");
  sweep->add_option("--out", sweep_opts.out, "output directory; overrides run.out");
  sweep->add_flag("--quiet", sweep_opts.quiet, "suppress progress output");

  std::string checkpoint;
  std::string data;
  std::uint64_t eval_seed = 0;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on held-out data");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file written by run")->required();
  eval->add_option("--data", data, "IDX directory or run config")->required();
  eval->add_option("--seed", eval_seed, "seed for scoring draws");
  eval->add_option("--out", eval_out, "write the result as JSON to this file");

  auto* schema = app.add_subcommand("schema", "list config keys");

  CLI11_PARSE(app, argc, argv);
  try {
    if (!simd.empty()) {
      const auto isa = simd == "scalar" ? emm::simd::Isa::scalar : emm::simd::Isa::avx2;
      if ((simd != "scalar" && simd != "avx2") || !emm::simd::set_active(isa))
        throw emm::ConfigError("kernel set '" + simd + "' is not available");
    }
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts, grid);
    if (*eval) return cmd_eval(checkpoint, data, eval_seed, eval_out);
    if (*schema) {
      for (const auto& [key, doc] : emm::config_schema()) std::cout << key << "\t" << doc << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "emm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
