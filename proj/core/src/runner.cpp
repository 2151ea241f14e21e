#include "georeg/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <limits>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "json.hpp"

#include "georeg/field_io.hpp"
#include "georeg/ops.hpp"
#include "georeg/pnm.hpp"
#include "georeg/synth.hpp"
#include "georeg/warp.hpp"

namespace georeg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<PairSample> same_label_pairs(const LabeledImages& data, std::size_t count, std::uint64_t seed) {
  if (data.images.empty()) throw DataError("no images to pair");
  if (data.labels.size() != data.images.size()) {
    throw DataError("label count " + std::to_string(data.labels.size()) + " does not match image count " +
                    std::to_string(data.images.size()));
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.labels.size(); ++i) groups[data.labels[i]].push_back(i);
  ad::Rng rng(seed);
  std::vector<PairSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, data.images.size() - 1)(rng);
    const auto& g = groups[data.labels[i]];
    std::size_t j = i;
    if (g.size() > 1) {
      // draw among the other members
      std::size_t pick = std::uniform_int_distribution<std::size_t>(0, g.size() - 2)(rng);
      const auto self = std::size_t(std::find(g.begin(), g.end(), i) - g.begin());
      if (pick >= self) ++pick;
      j = g[pick];
    }
    out.push_back({data.images[i], data.images[j], std::nullopt, data.labels[i]});
  }
  return out;
}

PairSample synthetic_pair(const RunConfig& cfg, std::uint64_t seed) {
  ad::Rng rng(seed);
  PairSample p;
  p.source = synth_shapes(cfg.synth_size, cfg.synth_size, rng);
  SyntheticSpec spec = cfg.synth;
  spec.seed = mix_seed(seed, 1);
  p.gt = synth_field(spec, cfg.synth_size, cfg.synth_size);
  p.target = warp_image(p.source, *p.gt);
  return p;
}

std::vector<PairSample> synthetic_pairs(const RunConfig& cfg, std::size_t count, std::uint64_t seed) {
  std::vector<PairSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(synthetic_pair(cfg, mix_seed(seed, k)));
  return out;
}

PairSource PairSource::open(const RunConfig& cfg) {
  PairSource s;
  s.cfg = cfg;
  if (cfg.dataset == "mnist") {
    if (cfg.train_images.empty() || cfg.test_images.empty()) {
      throw DataError("mnist dataset needs data.train_images and data.test_images");
    }
    s.train_images = load_idx(cfg.train_images, cfg.train_labels);
    s.test_images = load_idx(cfg.test_images, cfg.test_labels);
  } else {
    s.fixed_train = synthetic_pairs(cfg, cfg.train_pairs, mix_seed(cfg.seed, 10));
  }
  return s;
}

std::vector<PairSample> PairSource::train_epoch(std::size_t epoch) const {
  const std::uint64_t seed = mix_seed(cfg.seed, 1000 + epoch);
  if (cfg.dataset == "mnist") return same_label_pairs(train_images, cfg.train_pairs, seed);
  std::vector<PairSample> pairs = fixed_train;
  ad::Rng rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

std::vector<PairSample> PairSource::validation() const {
  if (cfg.dataset == "mnist") return same_label_pairs(train_images, cfg.val_pairs, mix_seed(cfg.seed, 1));
  return synthetic_pairs(cfg, cfg.val_pairs, mix_seed(cfg.seed, 11));
}

std::vector<PairSample> PairSource::test() const {
  if (cfg.dataset == "mnist") return same_label_pairs(test_images, cfg.test_pairs, mix_seed(cfg.seed, 2));
  return synthetic_pairs(cfg, cfg.test_pairs, mix_seed(cfg.seed, 12));
}

std::size_t PairSource::height() const {
  if (cfg.dataset == "mnist") return train_images.images.empty() ? 0 : train_images.images.front().height;
  return cfg.synth_size;
}

std::size_t PairSource::width() const {
  if (cfg.dataset == "mnist") return train_images.images.empty() ? 0 : train_images.images.front().width;
  return cfg.synth_size;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void add_terms(const LossTrace<float>& l, std::vector<LevelLossStats>& acc) {
  acc.resize(l.levels.size());
  for (std::size_t r = 0; r < l.levels.size(); ++r) {
    if (l.levels[r].interp.defined()) acc[r].interp = acc[r].interp.value_or(0.0) + l.levels[r].interp.item();
    if (l.levels[r].refine.defined()) acc[r].refine = acc[r].refine.value_or(0.0) + l.levels[r].refine.item();
  }
}

ModelParams<float> clone_params(const ModelParams<float>& p) {
  ModelParams<float> c = p;
  for_each_param(c, [](const std::string&, ad::Tensor<float>& t) { t = t.clone(true); });
  return c;
}

void copy_values(ModelParams<float>& from, ModelParams<float>& to) {
  std::vector<ad::Tensor<float>> src;
  for_each_param(from, [&](const std::string&, ad::Tensor<float>& t) { src.push_back(t); });
  std::size_t i = 0;
  for_each_param(to, [&](const std::string&, ad::Tensor<float>& t) {
    std::copy(src[i].values().begin(), src[i].values().end(), t.mutable_values().begin());
    ++i;
  });
}

struct ValScore {
  double loss = 0, dice = 0, folding = 0;
};

ValScore score(const ModelBundle& b, const LossWeights& w, const std::vector<PairSample>& pairs) {
  ValScore s;
  if (pairs.empty()) return s;
  for (const auto& p : pairs) {
    s.loss += pair_loss(b.params, b.config, w, p);
    const auto r = register_pair(b, p.source, p.target);
    s.dice += dice(threshold_mask(r.warped), threshold_mask(p.target), {1})[0];
    s.folding += folding_fraction(r.field);
  }
  const double n = double(pairs.size());
  return {s.loss / n, s.dice / n, s.folding / n};
}

}  // namespace

std::string to_jsonl(const EpochStats& s) {
  json j;
  j["epoch"] = s.epoch;
  j["loss"] = opt(s.loss);
  json levels = json::array();
  for (std::size_t r = 0; r < s.levels.size(); ++r) {
    levels.push_back({{"level", r}, {"interp", opt(s.levels[r].interp)}, {"refine", opt(s.levels[r].refine)}});
  }
  j["levels"] = levels;
  j["val_loss"] = s.val_loss;
  j["val_dice"] = s.val_dice;
  j["val_folding"] = s.val_folding;
  return j.dump();
}

double accumulate_pair(ModelParams<float>& params, const ModelConfig& cfg, const LossWeights& weights,
                       const PairSample& pair, float scale, std::vector<LevelLossStats>* level_terms) {
  ad::TapeScope<float> scope;
  const auto s = image_tensor<float>(pair.source);
  const auto t = image_tensor<float>(pair.target);
  const auto trace = forward(params, cfg, s, t);
  const auto loss = multires_loss(trace, cfg, s, t, weights);
  const double value = loss.total.item();
  if (!std::isfinite(value)) return value;
  ad::backward(ad::scale(loss.total, scale));
  if (level_terms) add_terms(loss, *level_terms);
  return value;
}

double pair_loss(const ModelParams<float>& params, const ModelConfig& cfg, const LossWeights& weights,
                 const PairSample& pair) {
  ad::NoGradGuard<float> guard;
  const auto s = image_tensor<float>(pair.source);
  const auto t = image_tensor<float>(pair.target);
  return multires_loss(forward(params, cfg, s, t), cfg, s, t, weights).total.item();
}

namespace {

// Every training step allocates and frees the same tape-sized buffers. With
// glibc's defaults the large ones go back to the kernel and return as fresh
// zeroed pages, a steady page-fault cost on long runs. Keep them in the heap.
void keep_heap_resident() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace

TrainResult train(const RunConfig& cfg, const TrainOptions& opts) {
  keep_heap_resident();
  const PairSource data = PairSource::open(cfg);
  const ModelConfig mc = model_config(cfg, data.height(), data.width());
  TrainResult res{build_model(mc, cfg.seed), {}};
  ModelBundle& b = res.bundle;
  const LossWeights weights{cfg.lambda, cfg.alpha};
  const ad::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  auto store = param_store(b.params);
  const auto val = data.validation();

  std::ofstream log;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    log.open(fs::path(opts.out_dir) / "train.jsonl", std::ios::binary | std::ios::trunc);
    std::ofstream(fs::path(opts.out_dir) / "config.cfg", std::ios::binary) << to_text(cfg);
  }
  auto emit = [&](const EpochStats& st) {
    res.epochs.push_back(st);
    if (log) log << to_jsonl(st) << "\n" << std::flush;
    if (opts.on_epoch) opts.on_epoch(st);
  };

  {
    EpochStats st;
    const auto v = score(b, weights, val);
    st.val_loss = v.loss;
    st.val_dice = v.dice;
    st.val_folding = v.folding;
    emit(st);
  }

  const std::size_t K = cfg.threads;
  std::vector<ModelParams<float>> replicas;
  for (std::size_t k = 0; k < K && K > 1; ++k) replicas.push_back(clone_params(b.params));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto pairs = data.train_epoch(epoch);
    double loss_sum = 0.0;
    std::vector<LevelLossStats> level_sum;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min(cfg.batch_size, pairs.size() - start);
      const float scale = 1.0f / float(n);
      store.zero_grad();
      std::vector<double> losses(n, 0.0);
      if (K <= 1) {
        for (std::size_t i = 0; i < n; ++i)
          losses[i] = accumulate_pair(b.params, mc, weights, pairs[start + i], scale, &level_sum);
      } else {
        std::vector<std::vector<LevelLossStats>> terms(K);
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < K; ++k) {
          copy_values(b.params, replicas[k]);
          for_each_param(replicas[k], [](const std::string&, ad::Tensor<float>& t) { t.zero_grad(); });
          pool.emplace_back([&, k] {
            for (std::size_t i = k * n / K; i < (k + 1) * n / K; ++i)
              losses[i] = accumulate_pair(replicas[k], mc, weights, pairs[start + i], scale, &terms[k]);
          });
        }
        for (auto& t : pool) t.join();
        // fixed-order reduction: replica 0, 1, ..., K-1
        for (std::size_t k = 0; k < K; ++k) {
          std::vector<ad::Tensor<float>> grads;
          for_each_param(replicas[k], [&](const std::string&, ad::Tensor<float>& t) { grads.push_back(t); });
          std::size_t i = 0;
          for_each_param(b.params, [&](const std::string&, ad::Tensor<float>& t) {
            ad::accumulate_grad(*t.node(), grads[i++].grad());
          });
          for (std::size_t r = 0; r < terms[k].size(); ++r) {
            level_sum.resize(terms[k].size());
            if (terms[k][r].interp) level_sum[r].interp = level_sum[r].interp.value_or(0.0) + *terms[k][r].interp;
            if (terms[k][r].refine) level_sum[r].refine = level_sum[r].refine.value_or(0.0) + *terms[k][r].refine;
          }
        }
      }
      for (double l : losses) {
        if (!std::isfinite(l)) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(batch_index));
        }
        loss_sum += l;
      }
      try {
        ad::adam_step(store, b.adam, adam);
      } catch (const ad::NonFiniteGradient& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_index));
      }
    }
    b.epoch = epoch;
    EpochStats st;
    st.epoch = epoch;
    const double np = double(pairs.size());
    st.loss = loss_sum / np;
    for (auto& l : level_sum) {
      if (l.interp) *l.interp /= np;
      if (l.refine) *l.refine /= np;
    }
    st.levels = level_sum;
    const auto v = score(b, weights, val);
    st.val_loss = v.loss;
    st.val_dice = v.dice;
    st.val_folding = v.folding;
    if (!opts.out_dir.empty()) save_bundle((fs::path(opts.out_dir) / "checkpoint.grck").string(), b);
    if (opts.verbose) {
      std::cerr << "epoch " << epoch << " loss " << *st.loss << " val_dice " << st.val_dice << " val_folding "
                << st.val_folding << "\n";
    }
    emit(st);
  }
  if (!opts.out_dir.empty() && cfg.epochs == 0) save_bundle((fs::path(opts.out_dir) / "checkpoint.grck").string(), b);
  return res;
}

RegisterOutput register_pair(const ModelBundle& bundle, const ImageGrid& source, const ImageGrid& target) {
  validate(source);
  validate(target);
  const auto& cfg = bundle.config;
  if (source.height != cfg.height || source.width != cfg.width || target.height != cfg.height ||
      target.width != cfg.width) {
    throw DataError("model expects " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                    " images, got " + std::to_string(source.height) + "x" + std::to_string(source.width) + " and " +
                    std::to_string(target.height) + "x" + std::to_string(target.width));
  }
  ad::NoGradGuard<float> guard;
  const auto trace = forward(bundle.params, cfg, image_tensor<float>(source), image_tensor<float>(target));
  RegisterOutput out;
  out.field = level_field(trace.field(), cfg.grid(0));
  out.warped = warp_image(source, out.field);
  for (const auto& lt : trace.levels) {
    std::vector<DeformationField> fields{level_field(lt.initial, lt.grid)};
    ad::Tensor<float> u = lt.initial;
    for (const auto& s : lt.steps) {
      u = ad::add(u, s);
      fields.push_back(level_field(u, lt.grid));
    }
    out.level_fields.push_back(std::move(fields));
    const auto fin = lt.final.values();
    double c = 0.0;
    const std::size_t P = lt.grid.count();
    for (std::size_t p = 0; p < P; ++p) {
      double dy = fin[2 * p], dx = fin[2 * p + 1];
      if (lt.inherited.defined()) {
        dy -= lt.inherited.values()[2 * p];
        dx -= lt.inherited.values()[2 * p + 1];
      }
      c += std::hypot(dy, dx);
    }
    out.contribution.push_back(c / double(P));
  }
  return out;
}

void write_register_outputs(const RegisterOutput& out, const ImageGrid& source, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "levels");
  write_field((fs::path(dir) / "field.grdf").string(), out.field);
  write_image_pgm((fs::path(dir) / "warped.pgm").string(), out.warped);
  write_overlay_ppm((fs::path(dir) / "overlay.ppm").string(), source, out.field, 4);
  for (std::size_t r = 0; r < out.level_fields.size(); ++r)
    for (std::size_t k = 0; k < out.level_fields[r].size(); ++k) {
      const std::string name = "level" + std::to_string(r) + (k == 0 ? "_init" : "_step" + std::to_string(k)) + ".grdf";
      write_field((fs::path(dir) / "levels" / name).string(), out.level_fields[r][k]);
    }
}

EvalReport evaluate(const ModelBundle& bundle, const std::vector<PairSample>& pairs) {
  EvalReport rep;
  rep.pairs = pairs.size();
  std::vector<double> hd, hd_id;
  std::vector<std::vector<double>> contrib(bundle.config.levels());
  std::size_t dominated = 0;
  for (const auto& p : pairs) {
    const auto r = register_pair(bundle, p.source, p.target);
    const auto mt = threshold_mask(p.target), mw = threshold_mask(r.warped), ms = threshold_mask(p.source);
    rep.per_pair_dice.push_back(dice(mw, mt, {1})[0]);
    rep.per_pair_dice_identity.push_back(dice(ms, mt, {1})[0]);
    hd.push_back(hd95(mw, mt));
    hd_id.push_back(hd95(ms, mt));
    rep.per_pair_folding.push_back(folding_fraction(r.field));
    if (p.gt) {
      rep.per_pair_aee.push_back(aee(r.field, *p.gt));
      rep.per_pair_aee_identity.push_back(mean_magnitude(*p.gt));
    }
    for (std::size_t l = 0; l < r.contribution.size(); ++l) contrib[l].push_back(r.contribution[l]);
    if (r.contribution.back() > r.contribution.front()) ++dominated;
  }
  rep.dice = mean_std(rep.per_pair_dice);
  rep.dice_identity = mean_std(rep.per_pair_dice_identity);
  rep.hd95 = mean_std(hd);
  rep.hd95_identity = mean_std(hd_id);
  rep.folding = mean_std(rep.per_pair_folding);
  if (!rep.per_pair_aee.empty()) {
    rep.aee = mean_std(rep.per_pair_aee);
    rep.aee_identity = mean_std(rep.per_pair_aee_identity);
  }
  for (const auto& c : contrib) rep.contribution.push_back(mean_std(c));
  rep.coarse_dominates = pairs.empty() ? 0.0 : double(dominated) / double(pairs.size());
  return rep;
}

std::string to_json(const EvalReport& r) {
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  json j;
  j["pairs"] = r.pairs;
  j["dice"] = ms(r.dice);
  j["dice_identity"] = ms(r.dice_identity);
  j["hd95"] = ms(r.hd95);
  j["hd95_identity"] = ms(r.hd95_identity);
  j["folding"] = ms(r.folding);
  if (r.aee) {
    j["aee"] = ms(*r.aee);
    j["aee_identity"] = ms(*r.aee_identity);
  }
  json c = json::array();
  for (const auto& m : r.contribution) c.push_back(ms(m));
  j["level_contribution"] = c;
  j["coarse_dominates"] = r.coarse_dominates;
  return j.dump(2);
}

SynthTable synth_experiment(const ModelBundle& bundle, const std::vector<PairSample>& pairs,
                            const std::vector<double>& edges) {
  SynthTable t;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) t.buckets.push_back({edges[i], edges[i + 1]});
  t.buckets.push_back({edges.back(), std::numeric_limits<double>::infinity()});
  t.overall = {edges.front(), std::numeric_limits<double>::infinity()};
  for (const auto& p : pairs) {
    if (!p.gt) throw DataError("synthetic experiment needs ground-truth fields");
    const auto r = register_pair(bundle, p.source, p.target);
    const double init = mean_magnitude(*p.gt);
    const double reg = aee(r.field, *p.gt);
    const double h = hd95(threshold_mask(r.warped), threshold_mask(p.target));
    const double f = folding_fraction(r.field);
    for (auto* b : {&t.overall}) {
      ++b->count;
      b->aee_initial += init;
      b->aee_registered += reg;
      b->hd95 += h;
      b->folding += f;
    }
    for (auto& b : t.buckets) {
      if (init >= b.lo && init < b.hi) {
        ++b.count;
        b.aee_initial += init;
        b.aee_registered += reg;
        b.hd95 += h;
        b.folding += f;
      }
    }
  }
  auto finish = [](SynthBucket& b) {
    if (b.count == 0) return;
    const double n = double(b.count);
    b.aee_initial /= n;
    b.aee_registered /= n;
    b.hd95 /= n;
    b.folding /= n;
  };
  for (auto& b : t.buckets) finish(b);
  finish(t.overall);
  return t;
}

std::string format_table(const SynthTable& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "magnitude(px)   pairs  AEE_init  AEE_reg  ratio   HD95   folding(%)\n";
  auto row = [&](const std::string& label, const SynthBucket& b) {
    os << std::left << std::setw(16) << label << std::right << std::setw(5) << b.count;
    if (b.count == 0) {
      os << "        -        -      -      -        -\n";
      return;
    }
    os << std::setw(10) << b.aee_initial << std::setw(9) << b.aee_registered << std::setw(7)
       << (b.aee_initial > 0 ? b.aee_registered / b.aee_initial : 0.0) << std::setw(7) << b.hd95 << std::setw(9)
       << 100.0 * b.folding << "\n";
  };
  for (const auto& b : t.buckets) {
    std::ostringstream l;
    l << std::setprecision(3) << b.lo << "-";
    if (std::isfinite(b.hi)) l << b.hi;
    row(l.str(), b);
  }
  row("all", t.overall);
  return os.str();
}

}  // namespace georeg
