#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "georeg/adam.hpp"
#include "georeg/encoder.hpp"
#include "georeg/objectives.hpp"
#include "georeg/ops.hpp"
#include "georeg/tau.hpp"
#include "grad_suite.hpp"

using namespace georeg;
using ad::Tensor;

namespace {

constexpr std::size_t kD = 4;

struct Fixture {
  GridSpec grid{0, 8, 8};
  FourierConfig fourier;
  TauParams<double> params;
  TauLevelInputs<double> level;

  explicit Fixture(double head_scale, std::uint64_t seed = 1, bool warp = false) {
    fourier.extent_y = fourier.extent_x = 8;
    ad::Rng rng(seed);
    params = init_tau<double>(kD, fourier.bands, rng);
    std::normal_distribution<double> n(0, 1);
    auto fill = [&](std::size_t rows, std::size_t cols, double s) {
      std::vector<double> v(rows * cols);
      for (auto& x : v) x = s * n(rng);
      return Tensor<double>::from({rows, cols}, v);
    };
    if (head_scale != 0) params.head = fill(kD, 2, head_scale);
    level.grid = grid;
    level.source_rows = fill(grid.count(), kD, 1.0);
    level.target_rows = fill(grid.count(), kD, 1.0);
    level.target_map = ad::reshape(ad::transpose(level.target_rows), {kD, 8, 8});
    level.coords = level_coords<double>(0, 8, 8);
    level.feature_warp = warp;
  }
};

std::vector<std::int32_t> window_of(const Tensor<double>& pos, const GridSpec& grid, std::size_t k) {
  return gather_grid_indices<double>(pos.values(), grid, k);
}

}  // namespace

TEST_CASE("zero-initialized head emits exactly zero displacement") {
  Fixture f(0.0);
  const auto res = refine(initial_state(f.level.coords), f.level, f.params, TauConfig{4, 3, 3}, f.fourier, 4);
  for (const auto& s : res.steps)
    for (double v : s.u.values()) CHECK(v == 0.0);
  for (double v : res.state.cumulative.values()) CHECK(v == 0.0);
  CHECK(res.positions.size() == 4);
  CHECK(res.state.step == 4);
}

TEST_CASE("source neighborhoods stay fixed while target neighborhoods follow the point") {
  Fixture f(0.8);
  const TauConfig cfg{4, 5, 3};
  const auto start = initial_state(f.level.coords);
  const auto res = refine(start, f.level, f.params, cfg, f.fourier, 4);
  const auto fixed = window_of(f.level.coords, f.grid, 3);
  Tensor<double> before = f.level.coords;
  bool moved = false;
  for (std::size_t n = 0; n < 4; ++n) {
    const auto& s = res.steps[n];
    CHECK(s.source_indices == fixed);
    CHECK(s.target_indices == window_of(before, f.grid, 5));
    CHECK(s.target_weights.shape() == ad::Shape{64, 25});
    CHECK(s.source_weights.shape() == ad::Shape{64, 9});
    moved |= s.target_indices != window_of(f.level.coords, f.grid, 5);
    before = res.positions[n];
  }
  CHECK(moved);
}

TEST_CASE("position is start plus the running sum of steps") {
  Fixture f(0.5);
  const auto res = refine(initial_state(f.level.coords), f.level, f.params, TauConfig{3, 3, 3}, f.fourier, 3);
  std::vector<double> acc(f.level.coords.values().begin(), f.level.coords.values().end());
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += res.steps[n].u.at(k);
    for (std::size_t k = 0; k < acc.size(); ++k) CHECK(res.positions[n].at(k) == doctest::Approx(acc[k]));
  }
}

TEST_CASE("attention weights are distributions over each neighborhood") {
  Fixture f(0.5);
  const auto s = tau_step(initial_state(f.level.coords), f.level, f.params, TauConfig{1, 3, 3}, f.fourier);
  for (const auto* w : {&s.target_weights, &s.source_weights}) {
    const std::size_t m = w->dim(1);
    for (std::size_t p = 0; p < w->dim(0); ++p) {
      double t = 0;
      for (std::size_t j = 0; j < m; ++j) {
        CHECK(w->at(p * m + j) >= 0.0);
        t += w->at(p * m + j);
      }
      CHECK(t == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("displacements are measured in nodes of the level") {
  Fixture f(0.5);
  auto coarse = f.level;
  coarse.grid.level = 2;
  coarse.coords = level_coords<double>(2, 8, 8);
  const auto fine = tau_step(initial_state(f.level.coords), f.level, f.params, TauConfig{1, 3, 3}, f.fourier);
  // identical features and identical offsets in node units need a stretched embedding
  FourierConfig stretched = f.fourier;
  stretched.extent_y *= 4;
  stretched.extent_x *= 4;
  const auto wide = tau_step(initial_state(coarse.coords), coarse, f.params, TauConfig{1, 3, 3}, stretched);
  for (std::size_t k = 0; k < fine.u.numel(); ++k) CHECK(wide.u.at(k) == doctest::Approx(4 * fine.u.at(k)));
}

TEST_CASE("one step only sees the target nodes around the current position") {
  Fixture f(0.8);
  const std::size_t node = 27;
  ad::TapeScope<double> scope;
  auto tgt = f.level.target_rows.clone(true);
  auto level = f.level;
  level.target_rows = tgt;
  const auto s = tau_step(initial_state(level.coords), level, f.params, TauConfig{1, 3, 3}, f.fourier);
  std::vector<double> sel(s.u.numel(), 0.0);
  sel[2 * node] = 1.0;
  sel[2 * node + 1] = 1.0;
  ad::backward(ad::sum(ad::mul(s.u, Tensor<double>::from(s.u.shape(), sel))));
  const std::set<std::int32_t> window(s.target_indices.begin() + node * 9, s.target_indices.begin() + node * 9 + 9);
  for (std::size_t g = 0; g < 64; ++g) {
    bool touched = false;
    for (std::size_t c = 0; c < kD; ++c) touched |= tgt.grad()[g * kD + c] != 0.0;
    CHECK(touched == (window.count(std::int32_t(g)) > 0));
  }
}

TEST_CASE("iterating widens the target receptive field") {
  Fixture f(2.0, 3);
  auto reach = [&](std::size_t steps, std::size_t node) {
    ad::TapeScope<double> scope;
    auto tgt = f.level.target_rows.clone(true);
    auto level = f.level;
    level.target_rows = tgt;
    const auto res = refine(initial_state(level.coords), level, f.params, TauConfig{steps, 3, 3}, f.fourier, steps);
    std::vector<double> sel(res.state.cumulative.numel(), 0.0);
    sel[2 * node] = sel[2 * node + 1] = 1.0;
    ad::backward(ad::sum(ad::mul(res.state.cumulative, Tensor<double>::from({64, 2}, sel))));
    std::size_t n = 0;
    for (std::size_t g = 0; g < 64; ++g) {
      bool touched = false;
      for (std::size_t c = 0; c < kD; ++c) touched |= tgt.grad()[g * kD + c] != 0.0;
      n += touched;
    }
    return n;
  };
  std::size_t widest = 0;
  for (std::size_t node = 0; node < 64; ++node) {
    CHECK(reach(1, node) <= 9);
    widest = std::max(widest, reach(4, node));
  }
  CHECK(widest > 9);
}

TEST_CASE("feature warp keeps a static target block and resamples features") {
  Fixture f(0.8, 1, true);
  const auto res = refine(initial_state(f.level.coords), f.level, f.params, TauConfig{3, 3, 3}, f.fourier, 3);
  const auto fixed = window_of(f.level.coords, f.grid, 3);
  for (const auto& s : res.steps) {
    CHECK(s.target_indices == fixed);
    CHECK(s.source_indices == fixed);
  }
}

TEST_CASE("invalid refinement requests") {
  Fixture f(0.5);
  CHECK_THROWS_AS(refine(initial_state(f.level.coords), f.level, f.params, TauConfig{}, f.fourier, 0),
                  std::invalid_argument);
  auto bad = f.level;
  auto rows = bad.source_rows.clone();
  rows.mutable_values()[5] = NAN;
  bad.source_rows = rows;
  try {
    tau_step(initial_state(bad.coords), bad, f.params, TauConfig{1, 3, 3}, f.fourier);
    FAIL("expected NonFiniteLogits");
  } catch (const NonFiniteLogits& e) {
    CHECK(std::string(e.what()).find("resolution 0 step 1") != std::string::npos);
  }
  auto state = initial_state(f.level.coords);
  auto c = state.cumulative.clone();
  c.mutable_values()[0] = INFINITY;
  state.cumulative = c;
  CHECK_THROWS_AS(tau_step(state, f.level, f.params, TauConfig{1, 3, 3}, f.fourier), std::invalid_argument);
}

TEST_CASE("parameter naming") {
  ad::Rng rng(1);
  auto p = init_tau<float>(8, 6, rng);
  std::vector<std::string> names;
  for_each_param(p, "tau2", [&](const std::string& n, Tensor<float>&) { names.push_back(n); });
  CHECK(names == std::vector<std::string>{"tau2.tgt.wq", "tau2.tgt.wk", "tau2.tgt.wv", "tau2.src.wq", "tau2.src.wk",
                                          "tau2.src.wv", "tau2.proj", "tau2.head"});
  CHECK(p.projection.shape() == ad::Shape{24, 8});
}

TEST_CASE("refinement passes the gradient check") {
  for (const auto& c : testing::gradient_suite()) {
    if (c.name.rfind("tau_", 0) != 0) continue;
    SUBCASE(c.name.c_str()) {
      const auto r = c.run(50, 9);
      INFO(c.name << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric);
      CHECK(r.max_rel <= 1e-3);
    }
  }
}

TEST_CASE("target centers follow the rounded position") {
  Fixture f(2.0, 5);
  const auto res = refine(initial_state(f.level.coords), f.level, f.params, TauConfig{4, 3, 3}, f.fourier, 4);
  std::size_t jumps = 0;
  for (std::size_t n = 1; n < 4; ++n) {
    const auto& prev = res.positions[n - 1];
    const auto& before = n >= 2 ? res.positions[n - 2] : f.level.coords;
    for (std::size_t p = 0; p < 64; ++p) {
      for (std::size_t a = 0; a < 2; ++a) {
        const double x = prev.at(2 * p + a), y = before.at(2 * p + a);
        const long now = std::clamp(std::lround(x), 0L, 7L), then = std::clamp(std::lround(y), 0L, 7L);
        const long got = a == 0 ? res.steps[n].target_centers[p] / 8 : res.steps[n].target_centers[p] % 8;
        const long had = a == 0 ? res.steps[n - 1].target_centers[p] / 8 : res.steps[n - 1].target_centers[p] % 8;
        CHECK(got == now);
        CHECK(had == then);
        // a move of a full node or more that stays on the grid always changes the window
        if (std::abs(x - y) >= 1.0 && x > 0 && x < 7 && y > 0 && y < 7) {
          CHECK(got != had);
          ++jumps;
        }
      }
    }
  }
  CHECK(jumps > 0);
}

TEST_CASE("the image objective reaches the first step displacement") {
  Fixture f(0.5);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0, 1);
  std::vector<double> a(64), b(64);
  for (auto& v : a) v = d(rng);
  for (auto& v : b) v = d(rng);
  const auto target = Tensor<double>::from({1, 8, 8}, a), source = Tensor<double>::from({1, 8, 8}, b);
  ad::TapeScope<double> scope;
  const auto res = refine(initial_state(f.level.coords), f.level, f.params, TauConfig{3, 3, 3}, f.fourier, 3);
  ad::backward(j_cost(target, source, res.state.cumulative, 0.05));
  bool nonzero = false;
  for (double g : res.steps[0].u.grad()) nonzero |= g != 0.0;
  CHECK(nonzero);
}

TEST_CASE("a trained toy model carries points past one neighborhood radius") {
  // 1-D structure on a 3x32 grid: a bump in the source and the same bump
  // shifted along x in the target. Only the attention and head are trained.
  const std::size_t H = 3, W = 32, P = H * W, d = 4;
  const GridSpec grid{0, H, W};
  FourierConfig fourier;
  fourier.bands = 3;
  fourier.extent_y = double(H);
  fourier.extent_x = double(W);
  ad::Rng prng(17);
  auto params = init_tau<double>(d, fourier.bands, prng);
  ad::ParamStore<double> store;
  for_each_param(params, "tau", [&](const std::string& name, Tensor<double>& t) { store.add(name, t); });
  ad::AdamState<double> adam;
  const ad::AdamConfig adam_cfg{1e-2, 0.9, 0.999, 1e-8};
  const TauConfig cfg{4, 3, 3};
  const auto coords = level_coords<double>(0, H, W);

  auto rows_for = [&](double c) {
    std::vector<double> v(P * d);
    for (std::size_t p = 0; p < P; ++p) {
      const double x = coords.at(2 * p + 1) - c;
      v[p * d + 0] = std::exp(-x * x / 8.0);
      v[p * d + 1] = x / 2.0 * std::exp(-x * x / 8.0);
      v[p * d + 2] = std::exp(-x * x / 32.0);
      v[p * d + 3] = 1.0;
    }
    return Tensor<double>::from({P, d}, v);
  };
  auto run = [&](double c, double shift) {
    TauLevelInputs<double> level;
    level.grid = grid;
    level.coords = coords;
    level.source_rows = rows_for(c);
    level.target_rows = rows_for(c + shift);
    return refine(initial_state(coords), level, params, cfg, fourier, 4);
  };
  auto near = [&](double c) {
    std::vector<double> m(P * 2, 0.0);
    for (std::size_t p = 0; p < P; ++p)
      if (std::abs(coords.at(2 * p + 1) - c) <= 1.5) m[2 * p] = m[2 * p + 1] = 1.0;
    return m;
  };

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> centre(10.0, 22.0), shift(-4.0, 4.0);
  for (int it = 0; it < 300; ++it) {
    store.zero_grad();
    for (int b = 0; b < 4; ++b) {
      const double c = std::round(centre(rng)), s = shift(rng);
      ad::TapeScope<double> scope;
      const auto res = run(c, s);
      std::vector<double> want(P * 2, 0.0);
      for (std::size_t p = 0; p < P; ++p) want[2 * p + 1] = s;
      const auto err = ad::sub(res.state.cumulative, Tensor<double>::from({P, 2}, want));
      ad::backward(ad::scale(ad::sum(ad::mul(ad::square(err), Tensor<double>::from({P, 2}, near(c)))), 0.25 / 18.0));
    }
    ad::adam_step(store, adam, adam_cfg);
  }

  ad::NoGradGuard<double> guard;
  double total = 0;
  int count = 0;
  std::uniform_real_distribution<double> far(2.5, 4.0);
  for (int k = 0; k < 20; ++k) {
    const double c = std::round(centre(rng)), s = (k % 2 ? 1.0 : -1.0) * far(rng);
    const auto res = run(c, s);
    const std::size_t p = W + std::size_t(c);  // middle row, bump centre
    total += std::abs(res.state.cumulative.at(2 * p + 1) - s);
    ++count;
  }
  CHECK(total / count < 1.0);
}
