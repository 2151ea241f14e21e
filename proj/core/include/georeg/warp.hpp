#pragma once

// Image warping I∘phi with phi(x) = x + u(x), bilinear and clamp-to-edge.

#include "georeg/image.hpp"
#include "georeg/tensor.hpp"

namespace georeg {

// (1,H,W) intensity tensor.
template <class T>
ad::Tensor<T> image_tensor(const ImageGrid& image, bool requires_grad = false);
// (H*W,2) displacement tensor, rows in raster order, columns (u_y,u_x).
template <class T>
ad::Tensor<T> field_tensor(const DeformationField& field, bool requires_grad = false);
// (H*W,2) integer pixel positions (row, col).
template <class T>
ad::Tensor<T> pixel_grid(std::size_t height, std::size_t width);

ImageGrid to_image(const ad::Tensor<float>& t, std::size_t height, std::size_t width);
DeformationField to_field(const ad::Tensor<float>& t, std::size_t height, std::size_t width);

// Samples img (C,H,W) at x + disp(x) for every pixel x; disp is (H*W,2) in
// pixel units of img. Returns (C,H,W); differentiable in img and disp.
template <class T>
ad::Tensor<T> warp_tensor(const ad::Tensor<T>& img, const ad::Tensor<T>& disp);

ImageGrid warp_image(const ImageGrid& image, const DeformationField& field);

}  // namespace georeg
