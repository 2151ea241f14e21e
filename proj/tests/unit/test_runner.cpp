#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "georeg/binio.hpp"
#include "georeg/config.hpp"
#include "georeg/field_io.hpp"
#include "georeg/idx.hpp"
#include "georeg/runner.hpp"
#include "georeg/warp.hpp"
#include "oracles.hpp"
#include "json.hpp"

using namespace georeg;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_synthetic() {
  RunConfig c = parse_config(R"(
model.channels = 4, 8
model.blocks_per_level = 1
model.tau_iterations = 1, 2
model.fourier_bands = 3
optim.lr = 1e-3
train.epochs = 2
train.batch_size = 3
train.pairs = 6
train.val_pairs = 2
train.test_pairs = 3
train.seed = 5
data.dataset = synthetic
synth.size = 16
synth.rotation_deg = 10
synth.octaves = 2
synth.amplitude = 1
)");
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("georeg_runner_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config parsing, defaults and errors") {
  const auto c = parse_config("# comment\nmodel.channels = 8, 16, 32, 32\nloss.lambda = 0.1  # trailing\n");
  CHECK(c.channels == std::vector<std::size_t>{8, 16, 32, 32});
  CHECK(c.lambda == 0.1);
  CHECK(c.tau_iterations == std::vector<std::size_t>{0, 1, 4, 4});
  CHECK(c.tau_k_target == std::vector<std::size_t>{3, 3, 3, 5});
  CHECK(default_tau_iterations(2) == std::vector<std::size_t>{4, 4});
  CHECK(default_tau_iterations(1) == std::vector<std::size_t>{4});
  CHECK(default_tau_iterations(3, 2) == std::vector<std::size_t>{0, 2, 2});

  try {
    parse_config("model.channels = 4\nmodel.bogus = 1\n", "x.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()) == "x.cfg:2: unknown key 'model.bogus'");
  }
  CHECK_THROWS_AS(parse_config("train.epochs = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("model.tau_iterations = 1, 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("data.dataset = cifar\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("config text round trip") {
  auto c = tiny_synthetic();
  const auto back = parse_config(to_text(c));
  CHECK(to_text(back) == to_text(c));
}

TEST_CASE("relative data paths resolve against the config directory") {
  const auto c = parse_config("data.train_images = ../data/a\n", "x", "/opt/cfg");
  CHECK(fs::path(c.train_images).lexically_normal() == fs::path("/opt/data/a"));
}

TEST_CASE("same-label pairs are reproducible and never pair an image with itself") {
  const std::string dir = std::string(GEOREG_SOURCE_DIR) + "/data/";
  const auto data = load_idx(dir + "mnist5k-test-images-idx3-ubyte", dir + "mnist5k-test-labels-idx1-ubyte");
  const auto a = same_label_pairs(data, 50, 3), b = same_label_pairs(data, 50, 3);
  REQUIRE(a.size() == 50);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].source.pixels == b[k].source.pixels);
    CHECK(a[k].label >= 0);
    CHECK(a[k].source.pixels != a[k].target.pixels);
  }
  CHECK(same_label_pairs(data, 50, 4)[0].source.pixels != a[0].source.pixels);
}

TEST_CASE("synthetic pairs carry the field that produced the target") {
  const auto cfg = tiny_synthetic();
  const auto p = synthetic_pair(cfg, 99);
  REQUIRE(p.gt.has_value());
  CHECK(p.source.height == 16);
  CHECK(p.target.pixels == warp_image(p.source, *p.gt).pixels);
  CHECK(synthetic_pair(cfg, 99).gt->data == p.gt->data);
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}

TEST_CASE("training writes a log line per epoch plus the untrained baseline") {
  const auto out = scratch("train");
  TrainOptions opts;
  opts.out_dir = out.string();
  std::size_t seen = 0;
  opts.on_epoch = [&](const EpochStats&) { ++seen; };
  const auto res = train(tiny_synthetic(), opts);
  CHECK(seen == 3);
  CHECK(res.epochs.size() == 3);
  CHECK_FALSE(res.epochs[0].loss.has_value());
  CHECK(res.bundle.epoch == 2);
  CHECK(res.bundle.adam.step == 4);
  std::ifstream in(out / "train.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == n);
    CHECK(j.contains("val_dice"));
    CHECK(j.contains("levels"));
    ++n;
  }
  CHECK(n == 3);
  CHECK(fs::exists(out / "checkpoint.grck"));
  CHECK(fs::exists(out / "config.cfg"));
  const auto reloaded = load_bundle((out / "checkpoint.grck").string());
  CHECK(reloaded.epoch == 2);
}

TEST_CASE("single-threaded training is byte-reproducible") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  auto cfg = tiny_synthetic();
  TrainOptions oa, ob;
  oa.out_dir = a.string();
  ob.out_dir = b.string();
  train(cfg, oa);
  train(cfg, ob);
  CHECK(slurp(a / "train.jsonl") == slurp(b / "train.jsonl"));
  CHECK(slurp(a / "checkpoint.grck") == slurp(b / "checkpoint.grck"));
}

TEST_CASE("threaded gradient reduction matches the sequential sum") {
  auto cfg = tiny_synthetic();
  cfg.epochs = 1;
  const auto one = train(cfg, {});
  cfg.threads = 3;
  const auto three = train(cfg, {});
  auto a = to_checkpoint(const_cast<ModelBundle&>(one.bundle));
  auto b = to_checkpoint(const_cast<ModelBundle&>(three.bundle));
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].data.size(); ++i)
      worst = std::max(worst, double(std::abs(a[k].data[i] - b[k].data[i])));
  CHECK(worst < 1e-4);
}

TEST_CASE("registration writes every artifact") {
  auto cfg = tiny_synthetic();
  cfg.epochs = 1;
  const auto res = train(cfg, {});
  const auto pair = synthetic_pair(cfg, 3);
  const auto out = register_pair(res.bundle, pair.source, pair.target);
  CHECK(out.level_fields.size() == 2);
  CHECK(out.level_fields[0].size() == 2);  // initial + one step
  CHECK(out.level_fields[1].size() == 3);
  CHECK(out.level_fields[1][0].height == 8);
  CHECK(out.contribution.size() == 2);
  const auto dir = scratch("register");
  write_register_outputs(out, pair.source, dir.string());
  for (const char* f : {"field.grdf", "warped.pgm", "overlay.ppm", "levels/level0_init.grdf", "levels/level0_step1.grdf",
                        "levels/level1_step2.grdf"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK(read_field((dir / "field.grdf").string()).data == out.field.data);
}

TEST_CASE("evaluation reports identity baselines and the synthetic table") {
  auto cfg = tiny_synthetic();
  cfg.epochs = 1;
  const auto res = train(cfg, {});
  const auto pairs = synthetic_pairs(cfg, 4, 8);
  const auto rep = evaluate(res.bundle, pairs);
  CHECK(rep.pairs == 4);
  CHECK(rep.aee.has_value());
  CHECK(rep.per_pair_dice.size() == 4);
  CHECK(rep.contribution.size() == 2);
  CHECK(nlohmann::json::parse(to_json(rep))["pairs"] == 4);
  const auto table = synth_experiment(res.bundle, pairs);
  std::size_t total = 0;
  for (const auto& b : table.buckets) total += b.count;
  CHECK(total == 4);
  CHECK(table.overall.count == 4);
  CHECK(format_table(table).find("AEE") != std::string::npos);
}

TEST_CASE("an exploding learning rate stops training with a diagnostic") {
  auto cfg = tiny_synthetic();
  cfg.lr = 1e30;
  cfg.epochs = 3;
  try {
    train(cfg, {});
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  } catch (const std::exception& e) {
    FAIL("unexpected exception type: " << e.what());
  }
}

TEST_CASE("the untrained validation loss is the identity-transform loss") {
  const auto cfg = tiny_synthetic();
  const auto res = train(cfg, {});
  const auto val = PairSource::open(cfg).validation();
  auto pool = [](const ImageGrid& g, std::size_t f) {
    std::vector<float> out;
    for (std::size_t i = 0; i < g.height / f; ++i)
      for (std::size_t j = 0; j < g.width / f; ++j) {
        double s = 0;
        for (std::size_t a = 0; a < f; ++a)
          for (std::size_t b = 0; b < f; ++b) s += g.at(i * f + a, j * f + b);
        out.push_back(float(s / double(f * f)));
      }
    return out;
  };
  // with zero fields every cost term is 1 - ncc of the pooled images and the
  // regularizer vanishes; level 0 has an interpolation term and one step,
  // the coarsest level two steps
  double expected = 0;
  for (const auto& p : val) {
    const double d0 = 1.0 - testing::ncc_oracle(pool(p.target, 1), pool(p.source, 1), kNccEps);
    const double d1 = 1.0 - testing::ncc_oracle(pool(p.target, 2), pool(p.source, 2), kNccEps);
    expected += 2.0 * d0 + 2.0 * d1;
  }
  expected /= double(val.size());
  CHECK(res.epochs[0].val_loss == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("registration emits one initial field per level plus one per refinement step") {
  auto cfg = tiny_synthetic();
  cfg.tau_iterations = {2, 3};
  const auto bundle = build_model(model_config(cfg, 16, 16), 1);
  const auto pair = synthetic_pair(cfg, 4);
  const auto out = register_pair(bundle, pair.source, pair.target);
  std::size_t total = 0;
  for (const auto& l : out.level_fields) total += l.size();
  CHECK(total == 2 + 2 + 3);
}
