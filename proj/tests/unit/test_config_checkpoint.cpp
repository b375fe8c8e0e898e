#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "emm/checkpoint.hpp"
#include "emm/config.hpp"
#include "emm/errors.hpp"
#include "oracles.hpp"

using namespace emm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "emm-config-tests";
  fs::create_directories(dir);
  return dir / name;
}

struct Trained {
  MixtureModel model;
  MemoryBuffer buffer;
  Rng rng;
};

Trained trained_model() {
  MixtureConfig cfg;
  cfg.arch.input_dim = 5;
  cfg.arch.latent_dim = 2;
  cfg.arch.class_count = 3;
  cfg.arch.vae_hidden = {6};
  cfg.arch.classifier_hidden = {4};
  cfg.hsic.m = 10;
  cfg.lambda = 0.0;
  cfg.train.max_updates_per_step = 2;
  Rng rng(31);
  MixtureModel model(cfg, rng);
  MemoryBuffer buffer(20, DropPolicy::random, 3);
  for (std::uint64_t t = 0; t < 9; ++t) {
    Batch b;
    for (int i = 0; i < 5; ++i) {
      std::vector<double> x(5);
      for (double& v : x) v = rng.normal();
      b.push_back({x, i % 2 ? std::optional<int>(i % 3) : std::nullopt, t});
    }
    train_step(model, b, buffer, rng);
  }
  return {std::move(model), std::move(buffer), rng};
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("key-value parsing") {
    const auto kv = parse_key_values("# comment\n\nmodel.lambda = 0.5  # trailing\nsource=synthetic\n", "t");
    CHECK(kv.at("model.lambda").value == "0.5");
    CHECK(kv.at("model.lambda").line == 3);
    CHECK(kv.at("source").value == "synthetic");
    CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n", "t"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("just words\n", "t"), ConfigError);
  }

  TEST_CASE("values land in the config") {
    const auto cfg = run_config_from(
        parse_key_values("source = synthetic\nmodel.lambda = 0.25\nmodel.direction = below\n"
                         "model.vae_hidden = 64,32\nmemory.policy = random\nrun.seeds = 3,9\n"
                         "hsic.coupling = independent\nhsic.bandwidth = 2.5\ndata.dir = mnist\n",
                         "t"),
        "/base");
    CHECK(cfg.source == SourceKind::synthetic);
    CHECK(cfg.model.lambda == 0.25);
    CHECK(cfg.model.direction == Direction::below);
    CHECK(cfg.model.arch.vae_hidden == std::vector<std::size_t>{64, 32});
    CHECK(cfg.policy == DropPolicy::random);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 9});
    CHECK(cfg.model.hsic.coupling == Coupling::independent);
    CHECK(cfg.model.hsic.left_kernel.bandwidth == 2.5);
    CHECK(cfg.idx.dir == fs::path("/base/mnist"));
  }

  TEST_CASE("bad keys and values name the line") {
    try {
      run_config_from(parse_key_values("model.lambda = 1\nmodel.lamda = 2\n", "t"), ".");
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(run_config_from(parse_key_values("model.lambda = abc\n", "t"), "."),
                    ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("memory.capacity = -3\n", "t"), "."),
                    ConfigError);
    CHECK_THROWS_AS(run_config_from(parse_key_values("model.direction = sideways\n", "t"), "."),
                    ConfigError);
  }

  TEST_CASE("rendering parses back to the same config") {
    RunConfig cfg = run_config_from(parse_key_values("source = synthetic\nmodel.lambda = 0.1\n"
                                                     "hsic.memory_kernel = linear\n"
                                                     "train.learning_rate = 0.0005\n",
                                                     "t"),
                                    "/x");
    cfg.idx.dir = "/data/mnist";
    const RunConfig back = run_config_from(parse_key_values(to_key_values(cfg), "r"), "/");
    CHECK(to_key_values(back) == to_key_values(cfg));
    CHECK(back.model == cfg.model);
  }

  TEST_CASE("environment override of the data directory") {
    const fs::path path = scratch("env.cfg");
    std::ofstream(path) << "source = idx\ndata.dir = somewhere\n";
    setenv("EMM_MNIST_DIR", "/elsewhere", 1);
    CHECK(load_run_config(path).idx.dir == fs::path("/elsewhere"));
    unsetenv("EMM_MNIST_DIR");
    CHECK(load_run_config(path).idx.dir == path.parent_path() / "somewhere");
    CHECK_THROWS_AS(load_run_config(scratch("absent.cfg")), IoError);
  }

  TEST_CASE("every schema key is accepted") {
    for (const auto& [key, doc] : config_schema()) {
      CAPTURE(key);
      CHECK(!doc.empty());
    }
    CHECK(config_schema().size() > 30);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-exact and predicts identically") {
    const Trained t = trained_model();
    const std::string bytes = encode_checkpoint(t.model, t.buffer, t.rng);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back.model.experts() == t.model.experts());
    CHECK(back.model.config() == t.model.config());
    CHECK(back.model.step() == t.model.step());
    CHECK(back.buffer == t.buffer);
    CHECK(back.rng == t.rng);
    CHECK(encode_checkpoint(back.model, back.buffer, back.rng) == bytes);

    Rng data(5);
    const Matrix x = data.normal_matrix(40, 5);
    Rng a(8), b(8);
    const Routing r1 = predict_batch(t.model, x, a);
    const Routing r2 = predict_batch(back.model, x, b);
    CHECK(r1.expert == r2.expert);
    CHECK(r1.label == r2.label);
  }

  TEST_CASE("files") {
    const Trained t = trained_model();
    const fs::path p = scratch("model.ckpt");
    save_checkpoint(p, t.model, t.buffer, t.rng);
    CHECK(load_checkpoint(p).model.experts() == t.model.experts());
    CHECK_THROWS_AS(load_checkpoint(scratch("nope.ckpt")), IoError);
    CHECK_THROWS_AS(save_checkpoint(scratch("no-dir") / "x" / "y.ckpt", t.model, t.buffer, t.rng),
                    IoError);
  }

  TEST_CASE("corruption is detected") {
    const Trained t = trained_model();
    const std::string bytes = encode_checkpoint(t.model, t.buffer, t.rng);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(""), FormatError);
    // Every truncation point fails cleanly rather than crashing.
    for (std::size_t cut = 0; cut < bytes.size(); cut += 97)
      CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, cut)), FormatError);
  }
}
