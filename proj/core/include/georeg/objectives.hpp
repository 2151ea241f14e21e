#pragma once

// Training objectives. Images are (1,H,W) tensors; displacement fields are
// (H*W,2) tensors in the pixel units of the image they are applied to.

#include <optional>
#include <vector>

#include "georeg/image.hpp"
#include "georeg/tensor.hpp"

namespace georeg {

inline constexpr double kNccEps = 1e-5;

struct LossWeights {
  double lambda = 0.05;        // regularizer weight
  std::vector<double> alpha;   // per level, missing entries default to 1
  double alpha_at(std::size_t level) const { return level < alpha.size() ? alpha[level] : 1.0; }
  void validate() const;
};

// Global zero-mean normalized cross-correlation with the variance floor
// inside the square root: cov / sqrt((var_a + eps)(var_b + eps)).
template <class T>
ad::Tensor<T> ncc(const ad::Tensor<T>& a, const ad::Tensor<T>& b);
double ncc(const ImageGrid& a, const ImageGrid& b);

// Mean over interior pixels of sum_c (u_yy^2 + u_xx^2 + 2 u_xy^2), unit spacing.
template <class T>
ad::Tensor<T> bending_energy(const ad::Tensor<T>& disp, std::size_t height, std::size_t width);
double bending_energy(const DeformationField& field);

// (1 - ncc(target, source o phi)) + lambda * bending(disp).
template <class T>
ad::Tensor<T> j_cost(const ad::Tensor<T>& target, const ad::Tensor<T>& source, const ad::Tensor<T>& disp,
                     double lambda);

// Sum of j_cost over phi_n = phi_0 + sum_{k<=n} u_k. start is the displacement
// already present before the first step (phi_0 - x).
template <class T>
ad::Tensor<T> j_refine(const ad::Tensor<T>& target, const ad::Tensor<T>& source, const ad::Tensor<T>& start,
                       const std::vector<ad::Tensor<T>>& steps, double lambda);

// j_cost of the level-r initial estimate on level-r intensities. Fields are in
// finest-pixel units and are rescaled by 2^-r here; images are already pooled.
template <class T>
ad::Tensor<T> j_interp(const ad::Tensor<T>& target_r, const ad::Tensor<T>& source_r,
                       const ad::Tensor<T>& initial, std::size_t level, double lambda);

template <class T>
struct LevelTerms {
  ad::Tensor<T> interp;  // undefined at the coarsest level
  ad::Tensor<T> refine;  // undefined when no refinement ran
};

// J_refine at the coarsest level plus sum_{r < R} alpha_r (J_interp + J_refine).
template <class T>
ad::Tensor<T> j_multires(const std::vector<LevelTerms<T>>& levels, const LossWeights& weights);

template <class T>
ad::Tensor<T> downsample_intensity(const ad::Tensor<T>& image, std::size_t factor);
ImageGrid downsample_intensity(const ImageGrid& image, std::size_t factor);

}  // namespace georeg
