#include "georeg/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace georeg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Ctx {
  std::string origin;
  std::size_t line = 0;
  std::string key;
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + key + ": " + msg);
  }
};

std::uint64_t to_u64(const std::string& v, const Ctx& c) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) c.fail("expected a non-negative integer, got '" + v + "'");
  return x;
}

double to_f64(const std::string& v, const Ctx& c) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) c.fail("expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v, const Ctx& c) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  c.fail("expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const Ctx&)>;

template <class F>
Setter size_field(F RunConfig::*m) {
  return [m](RunConfig& r, const std::string& v, const Ctx& c) { r.*m = F(to_u64(v, c)); };
}

Setter double_field(double RunConfig::*m) {
  return [m](RunConfig& r, const std::string& v, const Ctx& c) { r.*m = to_f64(v, c); };
}

Setter bool_field(bool RunConfig::*m) {
  return [m](RunConfig& r, const std::string& v, const Ctx& c) { r.*m = to_bool(v, c); };
}

Setter string_field(std::string RunConfig::*m) {
  return [m](RunConfig& r, const std::string& v, const Ctx&) { r.*m = v; };
}

Setter size_list(std::vector<std::size_t> RunConfig::*m) {
  return [m](RunConfig& r, const std::string& v, const Ctx& c) {
    (r.*m).clear();
    for (const auto& s : split_list(v)) (r.*m).push_back(std::size_t(to_u64(s, c)));
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.channels", size_list(&RunConfig::channels)},
      {"model.blocks_per_level", size_field(&RunConfig::blocks_per_level)},
      {"model.share_encoder", bool_field(&RunConfig::share_encoder)},
      {"model.tau_iterations", size_list(&RunConfig::tau_iterations)},
      {"model.tau_k_target", size_list(&RunConfig::tau_k_target)},
      {"model.tau_k_source", size_field(&RunConfig::tau_k_source)},
      {"model.delta_k", size_field(&RunConfig::delta_k)},
      {"model.feature_warp", bool_field(&RunConfig::feature_warp)},
      {"model.fourier_bands", size_field(&RunConfig::fourier_bands)},
      {"model.fourier_sigma", double_field(&RunConfig::fourier_sigma)},
      {"loss.lambda", double_field(&RunConfig::lambda)},
      {"loss.alpha",
       [](RunConfig& r, const std::string& v, const Ctx& c) {
         r.alpha.clear();
         for (const auto& s : split_list(v)) r.alpha.push_back(to_f64(s, c));
       }},
      {"optim.lr", double_field(&RunConfig::lr)},
      {"optim.beta1", double_field(&RunConfig::beta1)},
      {"optim.beta2", double_field(&RunConfig::beta2)},
      {"optim.eps", double_field(&RunConfig::adam_eps)},
      {"train.epochs", size_field(&RunConfig::epochs)},
      {"train.batch_size", size_field(&RunConfig::batch_size)},
      {"train.pairs", size_field(&RunConfig::train_pairs)},
      {"train.val_pairs", size_field(&RunConfig::val_pairs)},
      {"train.test_pairs", size_field(&RunConfig::test_pairs)},
      {"train.seed", size_field(&RunConfig::seed)},
      {"train.threads", size_field(&RunConfig::threads)},
      {"data.dataset", string_field(&RunConfig::dataset)},
      {"data.train_images", string_field(&RunConfig::train_images)},
      {"data.train_labels", string_field(&RunConfig::train_labels)},
      {"data.test_images", string_field(&RunConfig::test_images)},
      {"data.test_labels", string_field(&RunConfig::test_labels)},
      {"synth.size", size_field(&RunConfig::synth_size)},
      {"synth.rotation_deg", [](RunConfig& r, const std::string& v, const Ctx& c) { r.synth.rotation_deg = to_f64(v, c); }},
      {"synth.scale", [](RunConfig& r, const std::string& v, const Ctx& c) { r.synth.scale = to_f64(v, c); }},
      {"synth.translation", [](RunConfig& r, const std::string& v, const Ctx& c) { r.synth.translation = to_f64(v, c); }},
      {"synth.octaves", [](RunConfig& r, const std::string& v, const Ctx& c) { r.synth.octaves = int(to_u64(v, c)); }},
      {"synth.amplitude", [](RunConfig& r, const std::string& v, const Ctx& c) { r.synth.amplitude = to_f64(v, c); }},
      {"out.dir", string_field(&RunConfig::out_dir)},
  };
  return table;
}

template <class V>
std::string join(const std::vector<V>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace

std::vector<std::size_t> default_tau_iterations(std::size_t levels, std::size_t iters) {
  std::vector<std::size_t> n(levels, 1);
  for (std::size_t r = levels >= 2 ? levels - 2 : 0; r < levels; ++r) n[r] = iters;
  if (levels > 2) n[0] = 0;
  return n;
}

std::vector<std::size_t> default_tau_k_target(std::size_t levels) {
  std::vector<std::size_t> k(levels, 3);
  if (levels) k.back() = 5;
  return k;
}

void finalize(RunConfig& cfg) {
  const std::size_t L = cfg.channels.size();
  if (L == 0) throw ConfigError("model.channels must list at least one level");
  for (auto c : cfg.channels)
    if (c == 0) throw ConfigError("model.channels entries must be positive");
  if (cfg.tau_iterations.empty()) cfg.tau_iterations = default_tau_iterations(L);
  if (cfg.tau_k_target.empty()) cfg.tau_k_target = default_tau_k_target(L);
  if (cfg.tau_iterations.size() != L) {
    throw ConfigError("model.tau_iterations has " + std::to_string(cfg.tau_iterations.size()) +
                      " entries for " + std::to_string(L) + " levels");
  }
  if (cfg.tau_k_target.size() != L) {
    throw ConfigError("model.tau_k_target has " + std::to_string(cfg.tau_k_target.size()) + " entries for " +
                      std::to_string(L) + " levels");
  }
  for (auto k : cfg.tau_k_target)
    if (k % 2 == 0) throw ConfigError("model.tau_k_target entries must be odd");
  if (cfg.tau_k_source % 2 == 0) throw ConfigError("model.tau_k_source must be odd");
  if (cfg.delta_k % 2 == 0) throw ConfigError("model.delta_k must be odd");
  if (cfg.blocks_per_level == 0) throw ConfigError("model.blocks_per_level must be positive");
  if (cfg.fourier_bands == 0) throw ConfigError("model.fourier_bands must be positive");
  if (!(cfg.lambda >= 0.0)) throw ConfigError("loss.lambda must be non-negative");
  for (double a : cfg.alpha)
    if (!(a >= 0.0)) throw ConfigError("loss.alpha entries must be non-negative");
  if (!(cfg.lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (cfg.threads == 0) throw ConfigError("train.threads must be positive");
  if (cfg.dataset != "mnist" && cfg.dataset != "synthetic") {
    throw ConfigError("data.dataset must be mnist or synthetic, got '" + cfg.dataset + "'");
  }
  try {
    validate(cfg.synth);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
}

RunConfig parse_config(const std::string& text, const std::string& origin, const std::string& base_dir) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  Ctx ctx{origin, 0, ""};
  while (std::getline(in, raw)) {
    ++ctx.line;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(ctx.line) + ": expected 'key = value'");
    }
    ctx.key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(ctx.key);
    if (it == setters().end()) {
      throw ConfigError(origin + ":" + std::to_string(ctx.line) + ": unknown key '" + ctx.key + "'");
    }
    it->second(cfg, value, ctx);
  }
  if (!base_dir.empty()) {
    for (auto* p : {&cfg.train_images, &cfg.train_labels, &cfg.test_images, &cfg.test_labels}) {
      if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (std::filesystem::path(base_dir) / *p).string();
    }
  }
  finalize(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path().string();
  return parse_config(ss.str(), path, dir);
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "model.channels = " << join(c.channels) << "\n"
     << "model.blocks_per_level = " << c.blocks_per_level << "\n"
     << "model.share_encoder = " << (c.share_encoder ? "true" : "false") << "\n"
     << "model.tau_iterations = " << join(c.tau_iterations) << "\n"
     << "model.tau_k_target = " << join(c.tau_k_target) << "\n"
     << "model.tau_k_source = " << c.tau_k_source << "\n"
     << "model.delta_k = " << c.delta_k << "\n"
     << "model.feature_warp = " << (c.feature_warp ? "true" : "false") << "\n"
     << "model.fourier_bands = " << c.fourier_bands << "\n"
     << "model.fourier_sigma = " << c.fourier_sigma << "\n"
     << "loss.lambda = " << c.lambda << "\n";
  if (!c.alpha.empty()) os << "loss.alpha = " << join(c.alpha) << "\n";
  os << "optim.lr = " << c.lr << "\n"
     << "optim.beta1 = " << c.beta1 << "\n"
     << "optim.beta2 = " << c.beta2 << "\n"
     << "optim.eps = " << c.adam_eps << "\n"
     << "train.epochs = " << c.epochs << "\n"
     << "train.batch_size = " << c.batch_size << "\n"
     << "train.pairs = " << c.train_pairs << "\n"
     << "train.val_pairs = " << c.val_pairs << "\n"
     << "train.test_pairs = " << c.test_pairs << "\n"
     << "train.seed = " << c.seed << "\n"
     << "train.threads = " << c.threads << "\n"
     << "data.dataset = " << c.dataset << "\n";
  if (!c.train_images.empty()) os << "data.train_images = " << c.train_images << "\n";
  if (!c.train_labels.empty()) os << "data.train_labels = " << c.train_labels << "\n";
  if (!c.test_images.empty()) os << "data.test_images = " << c.test_images << "\n";
  if (!c.test_labels.empty()) os << "data.test_labels = " << c.test_labels << "\n";
  os << "synth.size = " << c.synth_size << "\n"
     << "synth.rotation_deg = " << c.synth.rotation_deg << "\n"
     << "synth.scale = " << c.synth.scale << "\n"
     << "synth.translation = " << c.synth.translation << "\n"
     << "synth.octaves = " << c.synth.octaves << "\n"
     << "synth.amplitude = " << c.synth.amplitude << "\n"
     << "out.dir = " << c.out_dir << "\n";
  return os.str();
}

}  // namespace georeg
