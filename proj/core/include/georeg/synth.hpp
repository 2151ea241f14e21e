#pragma once

// Synthetic ground-truth deformations: an affine part composed with
// multi-octave Brownian noise, plus a procedural shape-image generator.

#include <cstdint>

#include "georeg/image.hpp"
#include "georeg/params.hpp"

namespace georeg {

struct SyntheticSpec {
  double rotation_deg = 0.0;   // angle ~ U(-r, r)
  double scale = 0.0;          // per-axis factor ~ 1 + U(-s, s)
  double translation = 0.0;    // per-axis shift ~ U(-t, t) * extent
  int octaves = 0;
  double amplitude = 0.0;      // Brownian std of the coarsest octave, pixels
  std::uint64_t seed = 0;
};

void validate(const SyntheticSpec& spec);

struct AffineParams {
  double angle_rad = 0.0;
  double scale_y = 1.0;
  double scale_x = 1.0;
  double shift_y = 0.0;
  double shift_x = 0.0;
};

// phi(x) = c + t + R * S * (x - c) with c the image center; returns phi(x) - x.
DeformationField affine_field(const AffineParams& params, std::size_t height, std::size_t width);

// Sum over octaves o = 0..octaves-1 of Gaussian node grids of extents
// ceil(H / 2^(octaves-o+1)) x ceil(W / 2^(octaves-o+1)) (at least 2x2),
// std amplitude * 2^-o, bilinearly upsampled to H x W.
DeformationField brownian_field(int octaves, double amplitude, std::size_t height, std::size_t width,
                                ad::Rng& rng);

AffineParams sample_affine(const SyntheticSpec& spec, std::size_t height, std::size_t width, ad::Rng& rng);

// Affine displacement (parameters drawn first) plus the Brownian displacement,
// a pure function of (spec, extents).
DeformationField synth_field(const SyntheticSpec& spec, std::size_t height, std::size_t width);

// Max over pixels and axes of |u|.
double max_abs_displacement(const DeformationField& field);

// Blurred random ellipses over a faint smooth texture, intensities in [0,1].
ImageGrid synth_shapes(std::size_t height, std::size_t width, ad::Rng& rng);

}  // namespace georeg
