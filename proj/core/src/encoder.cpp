#include "georeg/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "georeg/ops.hpp"

namespace georeg {

void validate(const EncoderConfig& cfg) {
  if (cfg.channels.empty()) throw std::invalid_argument("encoder needs at least one level");
  for (auto c : cfg.channels) {
    if (c == 0) throw std::invalid_argument("encoder channel counts must be positive");
  }
  if (cfg.blocks_per_level == 0) throw std::invalid_argument("encoder needs at least one block per level");
  if (cfg.kernel % 2 == 0) throw std::invalid_argument("encoder kernel must be odd");
}

namespace {

template <class T>
ConvParams<T> make_conv(std::size_t in, std::size_t out, std::size_t k, bool bias, ad::Rng& rng) {
  ConvParams<T> c;
  c.weight = ad::kaiming_uniform<T>({out, in, k, k}, in * k * k, rng);
  if (bias) c.bias = ad::Tensor<T>::zeros({out}, true);
  return c;
}

}  // namespace

template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& cfg, ad::Rng& rng) {
  validate(cfg);
  EncoderParams<T> p;
  std::size_t in = cfg.in_channels;
  for (std::size_t r = 0; r < cfg.levels(); ++r) {
    std::vector<ResBlockParams<T>> blocks;
    for (std::size_t b = 0; b < cfg.blocks_per_level; ++b) {
      const std::size_t out = cfg.channels[r];
      ResBlockParams<T> blk;
      blk.conv1 = make_conv<T>(in, out, cfg.kernel, true, rng);
      blk.conv2 = make_conv<T>(out, out, cfg.kernel, true, rng);
      if (in != out) blk.proj = make_conv<T>(in, out, 1, false, rng);
      blocks.push_back(std::move(blk));
      in = out;
    }
    p.levels.push_back(std::move(blocks));
  }
  return p;
}

template <class T>
void for_each_param(EncoderParams<T>& p, const std::string& prefix,
                    const ad::ParamVisitor<T>& fn) {
  for (std::size_t r = 0; r < p.levels.size(); ++r)
    for (std::size_t b = 0; b < p.levels[r].size(); ++b) {
      auto& blk = p.levels[r][b];
      const std::string base = prefix + ".l" + std::to_string(r) + ".b" + std::to_string(b);
      fn(base + ".conv1.w", blk.conv1.weight);
      fn(base + ".conv1.b", blk.conv1.bias);
      fn(base + ".conv2.w", blk.conv2.weight);
      fn(base + ".conv2.b", blk.conv2.bias);
      if (blk.proj) fn(base + ".proj.w", blk.proj->weight);
    }
}

double level_coord(std::size_t index, std::size_t level) {
  return (double(index) + 0.5) * std::ldexp(1.0, int(level)) - 0.5;
}

double coord_to_index(double coord, std::size_t level) {
  return (coord + 0.5) / std::ldexp(1.0, int(level)) - 0.5;
}

template <class T>
ad::Tensor<T> level_coords(std::size_t level, std::size_t height, std::size_t width) {
  std::vector<T> v(height * width * 2);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      v[2 * (i * width + j)] = T(level_coord(i, level));
      v[2 * (i * width + j) + 1] = T(level_coord(j, level));
    }
  return ad::Tensor<T>::from({height * width, 2}, std::move(v));
}

template <class T>
ad::Tensor<T> residual_block(const ad::Tensor<T>& x, const ResBlockParams<T>& p) {
  const std::size_t pad1 = p.conv1.weight.dim(2) / 2, pad2 = p.conv2.weight.dim(2) / 2;
  auto h = ad::leaky_relu(ad::conv2d(x, p.conv1.weight, p.conv1.bias, pad1), T(0.01));
  h = ad::conv2d(h, p.conv2.weight, p.conv2.bias, pad2);
  auto skip = p.proj ? ad::conv2d(x, p.proj->weight, p.proj->bias, 0) : x;
  return ad::add(h, skip);
}

template <class T>
FeaturePyramid<T> encode(const ad::Tensor<T>& image, const EncoderParams<T>& params) {
  const std::size_t levels = params.levels.size();
  if (image.rank() != 3) throw ad::ShapeError("encode: expected (C,H,W), got " + ad::shape_str(image.shape()));
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t div = std::size_t(1) << (levels - 1);
  if (H % div || W % div) {
    throw std::invalid_argument("encode: extents " + std::to_string(H) + "x" + std::to_string(W) +
                                " not divisible by " + std::to_string(div));
  }
  FeaturePyramid<T> pyr;
  ad::Tensor<T> x = image;
  for (std::size_t r = 0; r < levels; ++r) {
    if (r > 0) x = ad::avgpool2d(x);
    for (const auto& blk : params.levels[r]) x = residual_block(x, blk);
    PyramidLevel<T> lvl;
    lvl.level = r;
    lvl.height = x.dim(1);
    lvl.width = x.dim(2);
    lvl.features = x;
    lvl.coords = level_coords<T>(r, lvl.height, lvl.width);
    pyr.levels.push_back(std::move(lvl));
  }
  return pyr;
}

template <class T>
std::pair<FeaturePyramid<T>, FeaturePyramid<T>> encode_pair(const ad::Tensor<T>& source,
                                                            const ad::Tensor<T>& target,
                                                            const EncoderParams<T>& source_params,
                                                            const EncoderParams<T>* target_params,
                                                            bool share) {
  if (!share && target_params == nullptr) {
    throw std::invalid_argument("encode_pair: separate streams need target parameters");
  }
  const EncoderParams<T>& tp = share ? source_params : *target_params;
  return {encode(source, source_params), encode(target, tp)};
}

#define GEOREG_ENC(T)                                                                          \
  template EncoderParams<T> init_encoder<T>(const EncoderConfig&, ad::Rng&);                   \
  template void for_each_param<T>(EncoderParams<T>&, const std::string&,                       \
                                  const ad::ParamVisitor<T>&); \
  template ad::Tensor<T> level_coords<T>(std::size_t, std::size_t, std::size_t);               \
  template ad::Tensor<T> residual_block<T>(const ad::Tensor<T>&, const ResBlockParams<T>&);    \
  template FeaturePyramid<T> encode<T>(const ad::Tensor<T>&, const EncoderParams<T>&);         \
  template std::pair<FeaturePyramid<T>, FeaturePyramid<T>> encode_pair<T>(                     \
      const ad::Tensor<T>&, const ad::Tensor<T>&, const EncoderParams<T>&,                     \
      const EncoderParams<T>*, bool);

GEOREG_ENC(float)
GEOREG_ENC(double)

#undef GEOREG_ENC

}  // namespace georeg
