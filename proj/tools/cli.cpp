#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "georeg/config.hpp"
#include "georeg/errors.hpp"
#include "georeg/field_io.hpp"
#include "georeg/pnm.hpp"
#include "georeg/runner.hpp"
#include "georeg/synth.hpp"

namespace georeg {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string out;
  std::size_t threads = 0;
  std::string checkpoint;
  std::string source, target;
  std::string field, image;
  std::size_t stride = 4;
  std::size_t count = 1;
  std::size_t pairs = 0;
};

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig c;
    finalize(c);
    return c;
  }
  return load_config(path);
}

int cmd_synth(const Options& o, CLI::App& app) {
  RunConfig cfg = config_or_default(o.config);
  if (o.config.empty()) {
    cfg.synth.rotation_deg = 15.0;
    cfg.synth.octaves = 3;
    cfg.synth.amplitude = 2.0;
  }
  const std::string out = o.out.empty() ? "synth" : o.out;
  const std::uint64_t seed = app.count("--seed") ? o.seed : cfg.seed;
  for (std::size_t k = 0; k < o.count; ++k) {
    const auto dir = o.count == 1 ? fs::path(out) : fs::path(out) / ("sample_" + std::to_string(k));
    fs::create_directories(dir);
    const auto p = synthetic_pair(cfg, mix_seed(seed, k));
    write_image_pgm((dir / "source.pgm").string(), p.source);
    write_image_pgm((dir / "target.pgm").string(), p.target);
    write_field((dir / "gt.grdf").string(), *p.gt);
    write_overlay_ppm((dir / "overlay.ppm").string(), p.source, *p.gt, o.stride);
    std::cout << dir.string() << ": max |u| " << max_abs_displacement(*p.gt) << " px\n";
  }
  return 0;
}

int cmd_train(const Options& o, CLI::App& app) {
  RunConfig cfg = load_config(o.config);
  if (app.count("--seed")) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.threads) cfg.threads = o.threads;
  if (o.deterministic) cfg.threads = 1;
  TrainOptions opts;
  opts.out_dir = cfg.out_dir;
  opts.verbose = true;
  const auto res = train(cfg, opts);
  std::cout << "trained " << res.bundle.epoch << " epochs; checkpoint in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_register(const Options& o) {
  const auto bundle = load_bundle(o.checkpoint);
  const auto s = read_image_pgm(o.source), t = read_image_pgm(o.target);
  const auto r = register_pair(bundle, s, t);
  write_register_outputs(r, s, o.out);
  std::cout << "folding " << folding_fraction(r.field) << ", mean |u| " << mean_magnitude(r.field) << " px\n";
  return 0;
}

int cmd_eval(const Options& o, CLI::App& app) {
  RunConfig cfg = load_config(o.config);
  if (app.count("--seed")) cfg.seed = o.seed;
  if (o.pairs) cfg.test_pairs = o.pairs;
  const auto bundle = load_bundle(o.checkpoint);
  const auto data = PairSource::open(cfg);
  const auto pairs = data.test();
  const auto rep = evaluate(bundle, pairs);
  const std::string json = to_json(rep);
  std::cout << json << "\n";
  std::string table;
  if (cfg.dataset == "synthetic") {
    table = format_table(synth_experiment(bundle, pairs));
    std::cout << table;
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "report.json") << json << "\n";
    if (!table.empty()) std::ofstream(fs::path(o.out) / "synth_table.txt") << table;
  }
  return 0;
}

int cmd_plot(const Options& o) {
  const auto f = read_field(o.field);
  const auto img = o.image.empty() ? ImageGrid::filled(f.height, f.width, 0.0f) : read_image_pgm(o.image);
  write_overlay_ppm(o.out, img, f, o.stride);
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine deformable registration of 2-D images"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate synthetic image pairs with ground-truth fields");
  synth->add_option("--config", o.config, "Run configuration (synth.* keys are used)");
  synth->add_option("--seed", o.seed, "Random seed");
  synth->add_option("--out", o.out, "Output directory");
  synth->add_option("--count", o.count, "Number of pairs")->check(CLI::PositiveNumber);
  synth->add_option("--stride", o.stride, "Grid line spacing in the overlay")->check(CLI::PositiveNumber);

  auto* trn = app.add_subcommand("train", "Train a model and write checkpoint.grck and train.jsonl");
  trn->add_option("--config", o.config, "Run configuration")->required();
  trn->add_option("--seed", o.seed, "Override train.seed");
  trn->add_flag("--deterministic", o.deterministic, "Single-threaded, bit-reproducible run");
  trn->add_option("--out", o.out, "Override out.dir");
  trn->add_option("--threads", o.threads, "Batch-parallel worker count")->check(CLI::PositiveNumber);

  auto* reg = app.add_subcommand("register", "Register one source/target pair");
  reg->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  reg->add_option("--source", o.source, "Source image (PGM)")->required();
  reg->add_option("--target", o.target, "Target image (PGM)")->required();
  reg->add_option("--out", o.out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  ev->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  ev->add_option("--config", o.config, "Run configuration naming the dataset")->required();
  ev->add_option("--seed", o.seed, "Override train.seed (selects test pairs)");
  ev->add_option("--pairs", o.pairs, "Override train.test_pairs");
  ev->add_option("--out", o.out, "Directory for report.json");

  auto* plot = app.add_subcommand("plot", "Draw a field as a deformed grid over an image");
  plot->add_option("--field", o.field, "Field file (GRDF)")->required();
  plot->add_option("--image", o.image, "Background image (PGM)");
  plot->add_option("--out", o.out, "Output PPM path")->required();
  plot->add_option("--stride", o.stride, "Grid line spacing")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(o, *synth);
    if (*trn) return cmd_train(o, *trn);
    if (*reg) return cmd_register(o);
    if (*ev) return cmd_eval(o, *ev);
    if (*plot) return cmd_plot(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"georeg"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run_cli(int(argv.size()), argv.data());
}

}  // namespace georeg
