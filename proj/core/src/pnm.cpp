#include "georeg/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <cmath>
#include <stdexcept>

#include "georeg/binio.hpp"

namespace georeg {
namespace {

std::uint8_t to_byte(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

std::vector<std::uint8_t> header(const char* magic, std::size_t w, std::size_t h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const ImageGrid& image) {
  validate(image);
  auto out = header("P5", image.width, image.height);
  for (float v : image.pixels) out.push_back(to_byte(v));
  return out;
}

ImageGrid decode_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw ParseError("truncated PGM header", start);
    return std::string(bytes.begin() + std::ptrdiff_t(start), bytes.begin() + std::ptrdiff_t(pos));
  };
  if (token() != "P5") throw ParseError("bad PGM magic", 0);
  const std::size_t w = std::stoul(token()), h = std::stoul(token()), maxval = std::stoul(token());
  if (maxval == 0 || maxval > 255) throw ParseError("unsupported PGM maxval", pos);
  ++pos;  // single whitespace after maxval
  if (w == 0 || h == 0) throw ParseError("PGM has zero extent", pos);
  if (bytes.size() < pos + w * h) throw ParseError("truncated payload", bytes.size());
  ImageGrid g = ImageGrid::zeros(h, w);
  for (std::size_t i = 0; i < w * h; ++i) g.pixels[i] = float(bytes[pos + i]) / float(maxval);
  return g;
}

std::vector<std::uint8_t> encode_overlay_ppm(const ImageGrid& image, const DeformationField& field,
                                             std::size_t stride) {
  validate(image);
  validate(field);
  if (stride == 0) throw std::invalid_argument("overlay stride must be >= 1");
  if (field.height != image.height || field.width != image.width) {
    throw std::invalid_argument("overlay field extents do not match image");
  }
  const std::size_t H = image.height, W = image.width;
  std::vector<std::uint8_t> rgb(H * W * 3);
  for (std::size_t i = 0; i < H * W; ++i) {
    const auto b = to_byte(image.pixels[i]);
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = b;
  }
  auto plot = [&](double y, double x) {
    const long iy = std::lround(y), ix = std::lround(x);
    if (iy < 0 || ix < 0 || iy >= long(H) || ix >= long(W)) return;
    auto* p = &rgb[3 * (std::size_t(iy) * W + std::size_t(ix))];
    p[0] = 255;
    p[1] = 0;
    p[2] = 0;
  };
  auto segment = [&](double y0, double x0, double y1, double x1) {
    const int steps = std::max(1, int(std::ceil(std::max(std::abs(y1 - y0), std::abs(x1 - x0)) * 2)));
    for (int s = 0; s <= steps; ++s) {
      const double t = double(s) / steps;
      plot(y0 + t * (y1 - y0), x0 + t * (x1 - x0));
    }
  };
  auto pos = [&](std::size_t i, std::size_t j) {
    return std::pair<double, double>{double(i) + field.uy(i, j), double(j) + field.ux(i, j)};
  };
  for (std::size_t i = 0; i < H; i += stride) {
    for (std::size_t j = 0; j + 1 < W; ++j) {
      auto [ya, xa] = pos(i, j);
      auto [yb, xb] = pos(i, j + 1);
      segment(ya, xa, yb, xb);
    }
  }
  for (std::size_t j = 0; j < W; j += stride) {
    for (std::size_t i = 0; i + 1 < H; ++i) {
      auto [ya, xa] = pos(i, j);
      auto [yb, xb] = pos(i + 1, j);
      segment(ya, xa, yb, xb);
    }
  }
  auto out = header("P6", W, H);
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

void write_image_pgm(const std::string& path, const ImageGrid& image) {
  binio::write_file(path, encode_pgm(image));
}

ImageGrid read_image_pgm(const std::string& path) { return decode_pgm(binio::read_file(path)); }

void write_overlay_ppm(const std::string& path, const ImageGrid& image, const DeformationField& field,
                       std::size_t stride) {
  binio::write_file(path, encode_overlay_ppm(image, field, stride));
}

}  // namespace georeg
