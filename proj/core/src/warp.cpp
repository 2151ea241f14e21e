#include "georeg/warp.hpp"

#include <stdexcept>
#include <string>

#include "georeg/ops.hpp"

namespace georeg {

template <class T>
ad::Tensor<T> image_tensor(const ImageGrid& image, bool requires_grad) {
  validate(image);
  std::vector<T> v(image.pixels.begin(), image.pixels.end());
  return ad::Tensor<T>::from({1, image.height, image.width}, std::move(v), requires_grad);
}

template <class T>
ad::Tensor<T> field_tensor(const DeformationField& field, bool requires_grad) {
  validate(field);
  std::vector<T> v(field.data.begin(), field.data.end());
  return ad::Tensor<T>::from({field.height * field.width, 2}, std::move(v), requires_grad);
}

template <class T>
ad::Tensor<T> pixel_grid(std::size_t height, std::size_t width) {
  std::vector<T> v(height * width * 2);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      v[2 * (i * width + j)] = T(i);
      v[2 * (i * width + j) + 1] = T(j);
    }
  return ad::Tensor<T>::from({height * width, 2}, std::move(v));
}

ImageGrid to_image(const ad::Tensor<float>& t, std::size_t height, std::size_t width) {
  if (t.numel() != height * width) throw std::invalid_argument("to_image: size mismatch");
  ImageGrid g = ImageGrid::zeros(height, width);
  std::copy(t.values().begin(), t.values().end(), g.pixels.begin());
  return g;
}

DeformationField to_field(const ad::Tensor<float>& t, std::size_t height, std::size_t width) {
  if (t.numel() != height * width * 2) throw std::invalid_argument("to_field: size mismatch");
  DeformationField f = DeformationField::zeros(height, width);
  std::copy(t.values().begin(), t.values().end(), f.data.begin());
  return f;
}

template <class T>
ad::Tensor<T> warp_tensor(const ad::Tensor<T>& img, const ad::Tensor<T>& disp) {
  if (img.rank() != 3 || disp.rank() != 2 || disp.dim(0) != img.dim(1) * img.dim(2) || disp.dim(1) != 2) {
    throw ad::ShapeError("warp: field " + ad::shape_str(disp.shape()) + " does not match image " +
                         ad::shape_str(img.shape()));
  }
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  auto pos = ad::add(pixel_grid<T>(H, W), disp);
  auto sampled = ad::bilinear_sample(img, pos);  // (H*W, C)
  if (C == 1) return ad::reshape(sampled, {1, H, W});
  return ad::reshape(ad::transpose(sampled), {C, H, W});
}

ImageGrid warp_image(const ImageGrid& image, const DeformationField& field) {
  validate(image);
  validate(field);
  if (image.height != field.height || image.width != field.width) {
    throw std::invalid_argument("warp_image: field extents " + std::to_string(field.height) + "x" +
                                std::to_string(field.width) + " do not match image " +
                                std::to_string(image.height) + "x" + std::to_string(image.width));
  }
  ad::NoGradGuard<float> guard;
  auto out = warp_tensor(image_tensor<float>(image), field_tensor<float>(field));
  ImageGrid g = to_image(out, image.height, image.width);
  g.spacing = image.spacing;
  return g;
}

template ad::Tensor<float> image_tensor<float>(const ImageGrid&, bool);
template ad::Tensor<double> image_tensor<double>(const ImageGrid&, bool);
template ad::Tensor<float> field_tensor<float>(const DeformationField&, bool);
template ad::Tensor<double> field_tensor<double>(const DeformationField&, bool);
template ad::Tensor<float> pixel_grid<float>(std::size_t, std::size_t);
template ad::Tensor<double> pixel_grid<double>(std::size_t, std::size_t);
template ad::Tensor<float> warp_tensor<float>(const ad::Tensor<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> warp_tensor<double>(const ad::Tensor<double>&, const ad::Tensor<double>&);

}  // namespace georeg
