#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "georeg/encoder.hpp"
#include "georeg/ops.hpp"
#include "grad_suite.hpp"

using namespace georeg;
using ad::Tensor;

namespace {

Tensor<float> random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(0, 1);
  std::vector<float> v(h * w);
  for (auto& x : v) x = d(rng);
  return Tensor<float>::from({1, h, w}, v);
}

}  // namespace

TEST_CASE("level coordinates are block centers in finest pixels") {
  CHECK(level_coord(0, 0) == 0.0);
  CHECK(level_coord(3, 0) == 3.0);
  CHECK(level_coord(0, 1) == 0.5);
  CHECK(level_coord(0, 2) == 1.5);
  CHECK(level_coord(2, 2) == 9.5);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t i = 0; i < 6; ++i) CHECK(coord_to_index(level_coord(i, r), r) == doctest::Approx(double(i)));
  auto c = level_coords<float>(1, 2, 3);
  REQUIRE(c.shape() == ad::Shape{6, 2});
  CHECK(c.at(2 * 5) == 2.5f);
  CHECK(c.at(2 * 5 + 1) == 4.5f);
}

TEST_CASE("pyramid extents and channel widths") {
  EncoderConfig cfg;
  ad::Rng rng(1);
  auto p = init_encoder<float>(cfg, rng);
  ad::NoGradGuard<float> g;
  auto pyr = encode(random_image(28, 28, 1), p);
  REQUIRE(pyr.levels.size() == 3);
  const std::size_t ext[] = {28, 14, 7};
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(pyr.levels[r].level == r);
    CHECK(pyr.levels[r].features.shape() == ad::Shape{cfg.channels[r], ext[r], ext[r]});
    CHECK(pyr.levels[r].coords.shape() == ad::Shape{ext[r] * ext[r], 2});
  }
}

TEST_CASE("indivisible image extents are rejected") {
  EncoderConfig cfg;
  ad::Rng rng(1);
  auto p = init_encoder<float>(cfg, rng);
  CHECK_THROWS_AS(encode(random_image(30, 28, 1), p), std::invalid_argument);
  CHECK_THROWS_AS(encode(Tensor<float>::zeros({28, 28}), p), ad::ShapeError);
  cfg.kernel = 4;
  CHECK_THROWS_AS(validate(cfg), std::invalid_argument);
}

TEST_CASE("encoder parameter names and counts") {
  EncoderConfig cfg;
  ad::Rng rng(1);
  auto p = init_encoder<float>(cfg, rng);
  std::vector<std::string> names;
  std::size_t n = 0;
  for_each_param(p, "enc", [&](const std::string& name, Tensor<float>& t) {
    names.push_back(name);
    n += t.numel();
  });
  CHECK(names.front() == "enc.l0.b0.conv1.w");
  // level widths 1->16, 16->32, 32->64, two blocks each, projection on the first block
  auto block = [](std::size_t ci, std::size_t co, bool proj) {
    return co * ci * 9 + co + co * co * 9 + co + (proj ? co * ci : 0);
  };
  const std::size_t expect = block(1, 16, true) + block(16, 16, false) + block(16, 32, true) + block(32, 32, false) +
                             block(32, 64, true) + block(64, 64, false);
  CHECK(n == expect);
}

TEST_CASE("residual block with zero convolutions is the identity skip") {
  ResBlockParams<double> p;
  p.conv1 = {Tensor<double>::zeros({4, 4, 3, 3}), Tensor<double>::zeros({4})};
  p.conv2 = {Tensor<double>::zeros({4, 4, 3, 3}), Tensor<double>::zeros({4})};
  std::vector<double> v(4 * 5 * 5);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(double(i));
  auto x = Tensor<double>::from({4, 5, 5}, v);
  auto y = residual_block(x, p);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(y.at(i) == v[i]);
}

TEST_CASE("shared streams use one parameter set, twin streams do not") {
  EncoderConfig cfg;
  cfg.channels = {4, 8};
  cfg.blocks_per_level = 1;
  ad::Rng rng(7);
  auto a = init_encoder<float>(cfg, rng);
  auto b = init_encoder<float>(cfg, rng);
  ad::NoGradGuard<float> g;
  const auto img = random_image(8, 8, 3);
  auto [s1, t1] = encode_pair(img, img, a, &b, true);
  auto [s2, t2] = encode_pair(img, img, a, &b, false);
  for (std::size_t k = 0; k < s1.levels[1].features.numel(); ++k) {
    CHECK(s1.levels[1].features.at(k) == t1.levels[1].features.at(k));
    CHECK(s1.levels[1].features.at(k) == s2.levels[1].features.at(k));
  }
  bool differs = false;
  for (std::size_t k = 0; k < t2.levels[1].features.numel(); ++k)
    differs |= t2.levels[1].features.at(k) != s2.levels[1].features.at(k);
  CHECK(differs);
  CHECK_THROWS_AS(encode_pair(img, img, a, static_cast<const EncoderParams<float>*>(nullptr), false), std::invalid_argument);
}

TEST_CASE("encoder blocks and pyramid pass the gradient check") {
  for (const auto& c : testing::gradient_suite()) {
    if (c.name != "residual_block_projected" && c.name != "residual_block_identity" && c.name != "encode") continue;
    SUBCASE(c.name.c_str()) {
      const auto r = c.run(50, 21);
      INFO(c.name << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
      CHECK(r.max_rel <= 1e-3);
    }
  }
}

TEST_CASE("coarse features see a wider neighborhood than fine features") {
  EncoderConfig cfg;
  cfg.channels = {2, 2, 2};
  cfg.blocks_per_level = 1;
  ad::Rng rng(5);
  auto p = init_encoder<double>(cfg, rng);
  // gradient of one node's features at each level with respect to the image
  auto reach = [&](std::size_t level) {
    ad::TapeScope<double> scope;
    auto img = Tensor<double>::full({1, 16, 16}, 0.3, true);
    auto pyr = encode(img, p);
    const auto& f = pyr.levels[level].features;
    const std::size_t h = pyr.levels[level].height, w = pyr.levels[level].width;
    const std::size_t center = (h / 2) * w + w / 2;
    std::vector<double> sel(f.numel(), 0.0);
    for (std::size_t c = 0; c < f.dim(0); ++c) sel[c * h * w + center] = 1.0;
    ad::backward(ad::sum(ad::mul(f, Tensor<double>::from(f.shape(), sel))));
    std::size_t n = 0;
    for (double gv : img.grad()) n += gv != 0.0;
    return n;
  };
  const auto r0 = reach(0), r1 = reach(1), r2 = reach(2);
  CHECK(r0 > 0);
  CHECK(r1 > r0);
  CHECK(r2 > r1);
}

TEST_CASE("perturbing the source leaves the target pyramid bit-identical") {
  EncoderConfig cfg;
  cfg.channels = {3, 5};
  cfg.blocks_per_level = 1;
  ad::Rng rng(12);
  auto a = init_encoder<float>(cfg, rng);
  auto b = init_encoder<float>(cfg, rng);
  ad::NoGradGuard<float> g;
  const auto src = random_image(8, 8, 1), tgt = random_image(8, 8, 2), other = random_image(8, 8, 4);
  for (bool share : {true, false}) {
    const auto [s1, t1] = encode_pair(src, tgt, a, &b, share);
    const auto [s2, t2] = encode_pair(other, tgt, a, &b, share);
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(std::ranges::equal(t1.levels[r].features.values(), t2.levels[r].features.values()));
      CHECK_FALSE(std::ranges::equal(s1.levels[r].features.values(), s2.levels[r].features.values()));
    }
  }
}

TEST_CASE("pointwise encoder keeps a constant image constant at every level") {
  EncoderConfig cfg;
  cfg.channels = {3, 4, 2};
  cfg.blocks_per_level = 1;
  cfg.kernel = 1;
  ad::Rng rng(3);
  auto p = init_encoder<double>(cfg, rng);
  ad::NoGradGuard<double> g;
  const auto pyr = encode(Tensor<double>::full({1, 4, 4}, 0.3), p);
  for (const auto& lvl : pyr.levels) {
    const std::size_t n = lvl.height * lvl.width;
    for (std::size_t c = 0; c < cfg.channels[lvl.level]; ++c)
      for (std::size_t k = 1; k < n; ++k)
        CHECK(lvl.features.at(c * n + k) == doctest::Approx(lvl.features.at(c * n)).epsilon(1e-14));
  }
}
