#include <doctest.h>

#include <sstream>

#include "emm/errors.hpp"
#include "emm/harness.hpp"

using namespace emm;

namespace {

RunConfig tiny_run(const std::string& extra = "") {
  std::string text =
      "source = synthetic\n"
      "synthetic.modes = 2\nsynthetic.dim = 4\nsynthetic.separation = 12\n"
      "synthetic.per_mode = 200\nsynthetic.test_per_mode = 50\n"
      "stream.batch_size = 10\nmemory.capacity = 40\n"
      "model.latent_dim = 2\nmodel.vae_hidden = 8\nmodel.classifier_hidden = 8\n"
      "model.lambda = 0.1\nmodel.n_draws = 2\nhsic.m = 20\n"
      "train.max_updates_per_step = 1\nrun.checkpoints = false\n";
  if (extra.find("run.seeds") == std::string::npos) text += "run.seeds = 0\n";
  text += extra;
  return run_config_from(parse_key_values(text, "test"), ".");
}

nlohmann::json without_timing(nlohmann::json doc) {
  doc.erase("timing");
  return doc;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("single seed has zero spread") {
    const RunMetrics m = run_experiment(tiny_run());
    REQUIRE(m.seeds.size() == 1);
    CHECK(m.std_accuracy == 0.0);
    CHECK(m.mean_accuracy == m.seeds[0].accuracy);
    CHECK(m.seeds[0].expert_count >= 1);
  }

  TEST_CASE("five seeds give five entries and a sample spread") {
    RunMetrics m;
    for (double a : {0.5, 0.6, 0.7, 0.8, 0.9}) {
      SeedResult s;
      s.accuracy = a;
      m.seeds.push_back(s);
    }
    aggregate(m);
    CHECK(m.mean_accuracy == doctest::Approx(0.7));
    CHECK(m.std_accuracy == doctest::Approx(0.158113883008419));

    const RunMetrics run = run_experiment(tiny_run("run.seeds = 0,1,2,3,4\n"));
    CHECK(run.seeds.size() == 5);
    const auto doc = report_json(tiny_run("run.seeds = 0,1,2,3,4\n"), run);
    CHECK(doc["seeds"].size() == 5);
  }

  TEST_CASE("report fields") {
    const RunConfig cfg = tiny_run("model.warmup_updates = 0\n");
    const RunMetrics m = run_experiment(cfg);
    const auto doc = report_json(cfg, m);
    CHECK(doc["schema"] == "emm-run/1");
    for (const char* key : {"config", "seeds", "aggregate", "timing"}) CHECK(doc.contains(key));
    const auto& seed = doc["seeds"][0];
    for (const char* key : {"seed", "accuracy", "experts", "hsic_log", "expansion_steps"})
      CHECK(seed.contains(key));
    CHECK(!seed["hsic_log"].empty());
    const auto& entry = seed["hsic_log"][0];
    for (const char* key : {"step", "per_expert", "min", "expanded"}) CHECK(entry.contains(key));
    CHECK(doc["config"]["model.lambda"].is_string());
  }

  TEST_CASE("identical config and seed give identical payloads") {
    const RunConfig cfg = tiny_run();
    const auto a = without_timing(report_json(cfg, run_experiment(cfg)));
    const auto b = without_timing(report_json(cfg, run_experiment(cfg)));
    CHECK(a.dump() == b.dump());
  }

  TEST_CASE("sweep") {
    const RunConfig cfg = tiny_run();
    CHECK_THROWS_AS(lambda_sweep(cfg, {}), ConfigError);
    CHECK_THROWS_AS(lambda_sweep(cfg, {0.2, 0.1}), ConfigError);
    CHECK_THROWS_AS(lambda_sweep(cfg, {0.1, 0.1}), ConfigError);

    const auto rows = lambda_sweep(cfg, {0.1});
    REQUIRE(rows.size() == 1);
    const RunMetrics single = run_experiment(cfg);
    CHECK(rows[0].expert_counts == std::vector<std::size_t>{single.seeds[0].expert_count});
    CHECK(rows[0].mean_accuracy == single.mean_accuracy);
    CHECK(sweep_json(cfg, rows)["rows"].size() == 1);
  }

  TEST_CASE("evaluation") {
    const RunConfig cfg = tiny_run();
    Rng rng(1);
    MixtureConfig mc = cfg.model;
    mc.arch.input_dim = 4;
    mc.arch.class_count = 10;
    const MixtureModel model(mc, rng);
    Dataset empty;
    empty.features = Matrix(0, 4);
    empty.class_count = 10;
    CHECK_THROWS_AS(evaluate_accuracy(model, empty, rng), InputError);

    SUBCASE("an untrained model sits near chance on balanced classes") {
      Dataset d;
      d.class_count = 10;
      d.features = rng.normal_matrix(2000, 4);
      for (std::size_t i = 0; i < 2000; ++i) d.labels.push_back(static_cast<int>(i % 10));
      // Constant logits: every prediction is class 0, exactly one tenth correct.
      std::vector<Expert> experts = model.experts();
      for (auto& l : experts[0].classifier.layers) l.weight.fill(0.0);
      experts[0].classifier.layers.back().bias.assign(10, 0.0);
      experts[0].classifier.layers.back().bias[0] = 1.0;
      const MixtureModel fixed(mc, experts, 0);
      CHECK(evaluate_accuracy(fixed, d, rng, 300) == doctest::Approx(0.1));
      // A random classifier: binomial spread around 0.1.
      const double acc = evaluate_accuracy(model, d, rng);
      CHECK(acc > 0.1 - 5 * 0.0067);
      CHECK(acc < 0.1 + 0.2);
    }
    SUBCASE("a model whose logits echo the label is always right") {
      Dataset d;
      d.class_count = 4;
      d.features = Matrix(8, 4);
      for (std::size_t i = 0; i < 8; ++i) {
        d.features(i, i % 4) = 1.0;
        d.labels.push_back(static_cast<int>(i % 4));
      }
      MixtureConfig c4 = mc;
      c4.arch.class_count = 4;
      c4.arch.classifier_hidden = {};
      Rng r(2);
      MixtureModel m4(c4, r);
      std::vector<Expert> experts = m4.experts();
      experts[0].classifier.layers[0].weight = Matrix::identity(4);
      experts[0].classifier.layers[0].bias.assign(4, 0.0);
      const MixtureModel echo(c4, experts, 0);
      std::vector<std::size_t> routed;
      CHECK(evaluate_accuracy(echo, d, r, 3, &routed) == 1.0);
      CHECK(routed.size() == 8);
    }
  }

  TEST_CASE("events stream carries one line per check") {
    const RunConfig cfg = tiny_run();
    std::ostringstream events;
    RunOptions opts;
    opts.events = &events;
    const RunMetrics m = run_experiment(cfg, opts);
    std::size_t lines = 0;
    std::istringstream in(events.str());
    for (std::string line; std::getline(in, line);) {
      CHECK(nlohmann::json::accept(line));
      ++lines;
    }
    CHECK(lines >= m.seeds[0].reports.size());
  }
}
