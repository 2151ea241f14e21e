#pragma once

// Dual-stream convolutional feature pyramid. Level r holds features at
// 1/2^r of the input resolution together with the block-center coordinates
// of its nodes in finest-pixel units: x = (i + 0.5) * 2^r - 0.5.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "georeg/params.hpp"
#include "georeg/tensor.hpp"

namespace georeg {

struct EncoderConfig {
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t blocks_per_level = 2;
  std::size_t kernel = 3;
  std::size_t in_channels = 1;

  std::size_t levels() const { return channels.size(); }
};

void validate(const EncoderConfig& cfg);

template <class T>
struct ConvParams {
  ad::Tensor<T> weight;  // (O, C, k, k)
  ad::Tensor<T> bias;    // (O) or undefined
};

// conv -> leaky relu -> conv, plus identity (or 1x1 projection) skip.
template <class T>
struct ResBlockParams {
  ConvParams<T> conv1;
  ConvParams<T> conv2;
  std::optional<ConvParams<T>> proj;
};

template <class T>
struct EncoderParams {
  std::vector<std::vector<ResBlockParams<T>>> levels;
};

template <class T>
EncoderParams<T> init_encoder(const EncoderConfig& cfg, ad::Rng& rng);


template <class T>
void for_each_param(EncoderParams<T>& p, const std::string& prefix,
                    const ad::ParamVisitor<T>& fn);

template <class T>
struct PyramidLevel {
  std::size_t level = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  ad::Tensor<T> features;  // (C, H_r, W_r)
  ad::Tensor<T> coords;    // (H_r * W_r, 2), finest-pixel units, constant
};

template <class T>
struct FeaturePyramid {
  std::vector<PyramidLevel<T>> levels;  // finest (r = 0) first
};

double level_coord(std::size_t index, std::size_t level);
double coord_to_index(double coord, std::size_t level);
template <class T>
ad::Tensor<T> level_coords(std::size_t level, std::size_t height, std::size_t width);

template <class T>
ad::Tensor<T> residual_block(const ad::Tensor<T>& x, const ResBlockParams<T>& p);

// image: (C_in, H, W) with H, W divisible by 2^(levels-1).
template <class T>
FeaturePyramid<T> encode(const ad::Tensor<T>& image, const EncoderParams<T>& params);

// With share, source_params serves both streams and target_params is ignored.
template <class T>
std::pair<FeaturePyramid<T>, FeaturePyramid<T>> encode_pair(const ad::Tensor<T>& source,
                                                            const ad::Tensor<T>& target,
                                                            const EncoderParams<T>& source_params,
                                                            const EncoderParams<T>* target_params,
                                                            bool share);

}  // namespace georeg
