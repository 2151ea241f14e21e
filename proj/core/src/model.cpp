#include "georeg/model.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>

#include "georeg/attention.hpp"
#include "georeg/errors.hpp"
#include "georeg/ops.hpp"

namespace georeg {

GridSpec ModelConfig::grid(std::size_t level) const {
  return {level, height >> level, width >> level};
}

void ModelConfig::validate() const {
  georeg::validate(encoder);
  const std::size_t L = levels();
  if (tau_iterations.size() != L || tau_k_target.size() != L) {
    throw std::invalid_argument("per-level refinement settings must list " + std::to_string(L) + " levels");
  }
  const std::size_t div = std::size_t(1) << (L - 1);
  if (height == 0 || width == 0 || height % div || width % div) {
    throw std::invalid_argument("image extents " + std::to_string(height) + "x" + std::to_string(width) +
                                " not divisible by " + std::to_string(div));
  }
}

ModelConfig model_config(const RunConfig& cfg, std::size_t height, std::size_t width) {
  ModelConfig m;
  m.encoder.channels = cfg.channels;
  m.encoder.blocks_per_level = cfg.blocks_per_level;
  m.share_encoder = cfg.share_encoder;
  m.tau_iterations = cfg.tau_iterations;
  m.tau_k_target = cfg.tau_k_target;
  m.tau_k_source = cfg.tau_k_source;
  m.delta.k = cfg.delta_k;
  m.feature_warp = cfg.feature_warp;
  m.fourier.bands = cfg.fourier_bands;
  m.fourier.sigma = cfg.fourier_sigma;
  m.fourier.extent_y = double(height);
  m.fourier.extent_x = double(width);
  m.height = height;
  m.width = width;
  m.validate();
  return m;
}

template <class T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ad::Rng rng(seed);
  ModelParams<T> p;
  p.source_encoder = init_encoder<T>(cfg.encoder, rng);
  if (!cfg.share_encoder) p.target_encoder = init_encoder<T>(cfg.encoder, rng);
  const auto& ch = cfg.encoder.channels;
  for (std::size_t r = 0; r < cfg.levels(); ++r) {
    if (cfg.tau_iterations[r] > 0) {
      p.tau.emplace_back(init_tau<T>(ch[r], cfg.fourier.bands, rng));
    } else {
      p.tau.emplace_back(std::nullopt);
    }
  }
  for (std::size_t r = 0; r + 1 < cfg.levels(); ++r) {
    if (cfg.feature_warp) {
      p.delta.emplace_back(std::nullopt);
    } else {
      p.delta.emplace_back(init_delta<T>(ch[r], ch[r + 1], cfg.fourier.bands, rng));
    }
  }
  return p;
}

template <class T>
void for_each_param(ModelParams<T>& p, const ad::ParamVisitor<T>& fn) {
  for_each_param(p.source_encoder, "enc", fn);
  if (p.target_encoder) for_each_param(*p.target_encoder, "enc_tgt", fn);
  for (std::size_t r = 0; r < p.tau.size(); ++r)
    if (p.tau[r]) for_each_param(*p.tau[r], "tau" + std::to_string(r), fn);
  for (std::size_t r = 0; r < p.delta.size(); ++r)
    if (p.delta[r]) for_each_param(*p.delta[r], "delta" + std::to_string(r), fn);
}

template <class T>
ad::ParamStore<T> param_store(ModelParams<T>& p) {
  ad::ParamStore<T> store;
  for_each_param(p, [&](const std::string& name, ad::Tensor<T>& t) { store.add(name, t); });
  return store;
}

template <class T>
ForwardTrace<T> forward(const ModelParams<T>& params, const ModelConfig& cfg, const ad::Tensor<T>& source,
                        const ad::Tensor<T>& target) {
  if (source.rank() != 3 || source.dim(1) != cfg.height || source.dim(2) != cfg.width ||
      source.shape() != target.shape()) {
    throw ad::ShapeError("forward: model expects (1," + std::to_string(cfg.height) + "," + std::to_string(cfg.width) +
                         ") images, got " + ad::shape_str(source.shape()) + " and " + ad::shape_str(target.shape()));
  }
  const auto [ps, pt] = encode_pair(source, target, params.source_encoder,
                                    params.target_encoder ? &*params.target_encoder : nullptr, cfg.share_encoder);
  const std::size_t L = cfg.levels();
  ForwardTrace<T> trace;
  trace.levels.resize(L);
  std::vector<ad::Tensor<T>> src_rows(L), tgt_rows(L);
  for (std::size_t r = 0; r < L; ++r) {
    src_rows[r] = feature_rows(ps.levels[r].features);
    tgt_rows[r] = feature_rows(pt.levels[r].features);
  }
  for (std::size_t step = 0; step < L; ++step) {
    const std::size_t r = L - 1 - step;
    LevelTrace<T>& lt = trace.levels[r];
    lt.grid = cfg.grid(r);
    const auto& coords = ps.levels[r].coords;
    if (r == L - 1) {
      lt.initial = ad::Tensor<T>::zeros({lt.grid.count(), 2});
    } else {
      const auto& up = trace.levels[r + 1];
      DeltaOutput<T> d;
      if (params.delta[r]) {
        d = delta_apply(lt.grid, src_rows[r], coords, up.grid, src_rows[r + 1], ps.levels[r + 1].coords, up.final,
                        *params.delta[r], cfg.delta, cfg.fourier, true);
      } else {
        d.inherited = naive_inherit(lt.grid, up.grid, up.final);
        d.initial = d.inherited;
      }
      lt.inherited = d.inherited;
      lt.initial = d.initial;
      lt.delta_weights = d.weights;
    }
    lt.final = lt.initial;
    const std::size_t n = cfg.tau_iterations[r];
    if (n > 0) {
      if (!params.tau[r]) throw std::logic_error("missing refinement parameters at level " + std::to_string(r));
      TauLevelInputs<T> in;
      in.grid = lt.grid;
      in.source_rows = src_rows[r];
      in.target_rows = tgt_rows[r];
      in.target_map = pt.levels[r].features;
      in.coords = coords;
      in.feature_warp = cfg.feature_warp;
      TauConfig tc{n, cfg.tau_k_target[r], cfg.tau_k_source};
      auto res = refine(initial_state(ad::add(coords, lt.initial)), in, *params.tau[r], tc, cfg.fourier, n);
      for (auto& s : res.steps) lt.steps.push_back(s.u);
      lt.tau_steps = std::move(res.steps);
      lt.final = ad::add(lt.initial, res.state.cumulative);
    }
  }
  return trace;
}

template <class T>
LossTrace<T> multires_loss(const ForwardTrace<T>& trace, const ModelConfig& cfg, const ad::Tensor<T>& source,
                           const ad::Tensor<T>& target, const LossWeights& weights) {
  const std::size_t L = cfg.levels();
  LossTrace<T> out;
  out.levels.resize(L);
  ad::Tensor<T> s = source, t = target;
  for (std::size_t r = 0; r < L; ++r) {
    if (r > 0) {
      s = ad::avgpool2d(s);
      t = ad::avgpool2d(t);
    }
    const auto& lt = trace.levels[r];
    const T inv = T(std::ldexp(1.0, -int(r)));
    if (r + 1 < L) out.levels[r].interp = j_interp(t, s, lt.initial, r, weights.lambda);
    if (!lt.steps.empty()) {
      std::vector<ad::Tensor<T>> steps;
      for (const auto& u : lt.steps) steps.push_back(ad::scale(u, inv));
      out.levels[r].refine = j_refine(t, s, ad::scale(lt.initial, inv), steps, weights.lambda);
    }
  }
  out.total = j_multires(out.levels, weights);
  return out;
}

std::size_t ModelBundle::parameter_count() {
  std::size_t n = 0;
  for_each_param(params, [&](const std::string&, ad::Tensor<float>& t) { n += t.numel(); });
  return n;
}

ModelBundle build_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelBundle b;
  b.config = cfg;
  b.params = init_model<float>(cfg, seed);
  return b;
}

namespace {

NamedArray meta(const std::string& name, const std::vector<double>& v) {
  NamedArray a{name, {v.size()}, {}};
  for (double x : v) a.data.push_back(float(x));
  if (a.data.empty()) {
    a.shape = {1};
    a.data.push_back(0.0f);
  }
  return a;
}

template <class V>
std::vector<double> as_doubles(const std::vector<V>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// u64 stored as two f32 bit patterns so large counters survive exactly
NamedArray u64_entry(const std::string& name, std::uint64_t v) {
  NamedArray a{name, {2}, {0.0f, 0.0f}};
  const std::uint32_t lo = std::uint32_t(v), hi = std::uint32_t(v >> 32);
  std::memcpy(&a.data[0], &lo, 4);
  std::memcpy(&a.data[1], &hi, 4);
  return a;
}

std::uint64_t u64_value(const NamedArray& a) {
  if (a.data.size() != 2) throw DataError("checkpoint entry '" + a.name + "' is malformed");
  std::uint32_t lo = 0, hi = 0;
  std::memcpy(&lo, &a.data[0], 4);
  std::memcpy(&hi, &a.data[1], 4);
  return (std::uint64_t(hi) << 32) | lo;
}

}  // namespace

std::vector<NamedArray> to_checkpoint(ModelBundle& b) {
  const auto& c = b.config;
  std::vector<NamedArray> out;
  out.push_back(meta("meta.channels", as_doubles(c.encoder.channels)));
  out.push_back(meta("meta.tau_iterations", as_doubles(c.tau_iterations)));
  out.push_back(meta("meta.tau_k_target", as_doubles(c.tau_k_target)));
  out.push_back(meta("meta.scalars",
                     {double(c.encoder.blocks_per_level), double(c.encoder.kernel), double(c.encoder.in_channels),
                      c.share_encoder ? 1.0 : 0.0, double(c.tau_k_source), double(c.delta.k),
                      c.feature_warp ? 1.0 : 0.0, double(c.fourier.bands), double(c.height), double(c.width)}));
  // doubles stored as bit patterns, two f32 slots each
  NamedArray fourier{"meta.fourier", {6}, std::vector<float>(6)};
  const double vals[3] = {c.fourier.sigma, c.fourier.extent_y, c.fourier.extent_x};
  std::memcpy(fourier.data.data(), vals, sizeof(vals));
  out.push_back(std::move(fourier));
  out.push_back(u64_entry("meta.epoch", b.epoch));
  out.push_back(u64_entry("adam.step", b.adam.step));
  std::size_t i = 0;
  const bool has_moments = !b.adam.m.empty();
  for_each_param(b.params, [&](const std::string& name, ad::Tensor<float>& t) {
    out.push_back({name, t.shape(), std::vector<float>(t.values().begin(), t.values().end())});
    if (has_moments) {
      out.push_back({"adam.m." + name, t.shape(), b.adam.m.at(i)});
      out.push_back({"adam.v." + name, t.shape(), b.adam.v.at(i)});
    }
    ++i;
  });
  return out;
}

ModelBundle from_checkpoint(const std::vector<NamedArray>& entries) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto need = [&](const std::string& n) -> const NamedArray& {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw DataError("checkpoint is missing entry '" + n + "'");
    return *it->second;
  };
  auto sizes = [](const NamedArray& a) {
    std::vector<std::size_t> v;
    for (float x : a.data) v.push_back(std::size_t(x));
    return v;
  };
  ModelConfig c;
  c.encoder.channels = sizes(need("meta.channels"));
  c.tau_iterations = sizes(need("meta.tau_iterations"));
  c.tau_k_target = sizes(need("meta.tau_k_target"));
  const auto s = sizes(need("meta.scalars"));
  if (s.size() != 10) throw DataError("checkpoint entry 'meta.scalars' is malformed");
  c.encoder.blocks_per_level = s[0];
  c.encoder.kernel = s[1];
  c.encoder.in_channels = s[2];
  c.share_encoder = s[3] != 0;
  c.tau_k_source = s[4];
  c.delta.k = s[5];
  c.feature_warp = s[6] != 0;
  c.fourier.bands = s[7];
  c.height = s[8];
  c.width = s[9];
  const auto& f = need("meta.fourier");
  if (f.data.size() != 6) throw DataError("checkpoint entry 'meta.fourier' is malformed");
  double vals[3];
  std::memcpy(vals, f.data.data(), sizeof(vals));
  c.fourier.sigma = vals[0];
  c.fourier.extent_y = vals[1];
  c.fourier.extent_x = vals[2];
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint describes an invalid model: ") + e.what());
  }

  ModelBundle b = build_model(c, 0);
  b.epoch = u64_value(need("meta.epoch"));
  b.adam.step = u64_value(need("adam.step"));
  const bool has_moments = by_name.count("adam.m.enc.l0.b0.conv1.w") > 0;
  for_each_param(b.params, [&](const std::string& name, ad::Tensor<float>& t) {
    const auto& e = need(name);
    if (e.shape != t.shape()) {
      throw DataError("checkpoint entry '" + name + "' has shape " + ad::shape_str(e.shape) + ", model expects " +
                      ad::shape_str(t.shape()));
    }
    std::copy(e.data.begin(), e.data.end(), t.mutable_values().begin());
    if (has_moments) {
      b.adam.m.push_back(need("adam.m." + name).data);
      b.adam.v.push_back(need("adam.v." + name).data);
    }
  });
  return b;
}

void save_bundle(const std::string& path, ModelBundle& bundle) { write_checkpoint(path, to_checkpoint(bundle)); }

ModelBundle load_bundle(const std::string& path) { return from_checkpoint(read_checkpoint(path)); }

DeformationField level_field(const ad::Tensor<float>& disp, const GridSpec& grid) {
  if (disp.numel() != grid.count() * 2) {
    throw ad::ShapeError("level_field: " + ad::shape_str(disp.shape()) + " for " + std::to_string(grid.height) +
                         "x" + std::to_string(grid.width));
  }
  DeformationField f = DeformationField::zeros(grid.height, grid.width);
  const float inv = float(1.0 / grid.spacing());
  const auto v = disp.values();
  for (std::size_t k = 0; k < v.size(); ++k) f.data[k] = v[k] * inv;
  return f;
}

#define GEOREG_MODEL(T)                                                                               \
  template ModelParams<T> init_model<T>(const ModelConfig&, std::uint64_t);                          \
  template void for_each_param<T>(ModelParams<T>&,                                                   \
                                  const ad::ParamVisitor<T>&);   \
  template ad::ParamStore<T> param_store<T>(ModelParams<T>&);                                        \
  template ForwardTrace<T> forward<T>(const ModelParams<T>&, const ModelConfig&, const ad::Tensor<T>&, \
                                      const ad::Tensor<T>&);                                         \
  template LossTrace<T> multires_loss<T>(const ForwardTrace<T>&, const ModelConfig&, const ad::Tensor<T>&, \
                                         const ad::Tensor<T>&, const LossWeights&);

GEOREG_MODEL(float)
GEOREG_MODEL(double)

#undef GEOREG_MODEL

}  // namespace georeg
