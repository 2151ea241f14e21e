#pragma once

// Evaluation metrics on plain images, masks and fields.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "georeg/image.hpp"

namespace georeg {

// Label map in raster order; 0 is background.
struct LabelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::int32_t> labels;
};

// Foreground (label 1) where intensity > threshold.
LabelMask threshold_mask(const ImageGrid& image, float threshold = 0.5f);

// 2|A n B| / (|A| + |B|) per requested label; 1 when the label is absent from both.
std::vector<double> dice(const LabelMask& a, const LabelMask& b, const std::vector<std::int32_t>& labels);

// Boundary: pixels of the label with at least one 4-neighbor outside it
// (image borders count as outside).
std::vector<std::size_t> boundary_pixels(const LabelMask& m, std::int32_t label);

// 95th percentile (linear interpolation) of the pooled nearest boundary
// distances from A to B and from B to A. 0 when both are empty, the image
// diagonal when exactly one is.
double hd95(const LabelMask& a, const LabelMask& b, std::int32_t label = 1);

// Jacobian determinant of x + u(x): central differences inside, one-sided at borders.
std::vector<double> jacobian_determinant(const DeformationField& field);
double folding_fraction(const DeformationField& field);

double aee(const DeformationField& pred, const DeformationField& gt);

// Mean magnitude of the displacement vectors.
double mean_magnitude(const DeformationField& field);

struct MetricReport {
  std::vector<double> dice;
  std::vector<double> hd95;
  double folding = 0.0;
  std::optional<double> aee;
  std::map<std::string, double> losses;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Population standard deviation.
MeanStd mean_std(const std::vector<double>& v);

}  // namespace georeg
