#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "catwalk/features.hpp"
#include "support.hpp"

using namespace catwalk;
using testing_support::TempDir;
using testing_support::textured_grid;

namespace {

Grid from_fn(std::size_t rows, std::size_t cols, auto fn) {
  Grid g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g(r, c) = fn(static_cast<double>(c), static_cast<double>(r));
  return g;
}

Video clip(std::vector<Grid> frames) {
  Video v{"clip", 2000, {}};
  for (auto& g : frames) v.frames.emplace_back(std::move(g));
  return v;
}

Grid square_frame(int left) {
  Grid g(20, 20, 0.0);
  for (int r = 8; r < 11; ++r)
    for (int c = left; c < left + 3; ++c) g(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 255.0;
  return g;
}

}  // namespace

TEST(Gradients, RampAlongX) {
  const auto g = spatial_gradients(from_fn(10, 12, [](double x, double) { return x; }));
  for (std::size_t r = 1; r < 9; ++r)
    for (std::size_t c = 1; c < 11; ++c) {
      EXPECT_DOUBLE_EQ(std::abs(g.jx(r, c)), 1.0);
      EXPECT_DOUBLE_EQ(g.jy(r, c), 0.0);
      EXPECT_DOUBLE_EQ(g.jxx(r, c), 0.0);
      EXPECT_DOUBLE_EQ(g.jyy(r, c), 0.0);
      EXPECT_DOUBLE_EQ(g.magnitude(r, c), 1.0);
      EXPECT_DOUBLE_EQ(g.orientation(r, c), 0.0);
    }
}

TEST(Gradients, RampAlongY) {
  const auto g = spatial_gradients(from_fn(10, 12, [](double, double y) { return y; }));
  for (std::size_t r = 1; r < 9; ++r)
    for (std::size_t c = 1; c < 11; ++c) {
      EXPECT_DOUBLE_EQ(g.magnitude(r, c), 1.0);
      EXPECT_DOUBLE_EQ(g.orientation(r, c), std::numbers::pi / 2);
    }
}

TEST(Gradients, ConstantFrameIsAllZero) {
  const auto g = spatial_gradients(Grid(7, 5, 42.0));
  for (const Grid* q : {&g.jx, &g.jy, &g.jxx, &g.jyy, &g.magnitude, &g.orientation})
    for (double v : q->data) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, QuadraticPolynomialInterior) {
  // I = 0.5 x^2 + 0.3 x y + 0.2 y^2 - x + 2 y: central differences are exact.
  const auto g = spatial_gradients(
      from_fn(30, 25, [](double x, double y) { return 0.5 * x * x + 0.3 * x * y + 0.2 * y * y - x + 2 * y; }));
  for (std::size_t r = 2; r + 2 < 30; ++r)
    for (std::size_t c = 2; c + 2 < 25; ++c) {
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      const double jx = x + 0.3 * y - 1.0, jy = 0.3 * x + 0.4 * y + 2.0;
      EXPECT_NEAR(g.jx(r, c), jx, 1e-9);
      EXPECT_NEAR(g.jy(r, c), jy, 1e-9);
      EXPECT_NEAR(g.jxx(r, c), 1.0, 1e-9);
      EXPECT_NEAR(g.jyy(r, c), 0.4, 1e-9);
      EXPECT_NEAR(g.magnitude(r, c), std::hypot(jx, jy), 1e-9);
      EXPECT_NEAR(g.orientation(r, c), std::atan(std::abs(jy) / std::abs(jx)), 1e-9);
    }
}

TEST(Gradients, OneSidedAtBorders) {
  const auto g = spatial_gradients(from_fn(3, 4, [](double x, double) { return x * x; }));
  EXPECT_DOUBLE_EQ(g.jx(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(g.jx(0, 3), 5.0);
  for (double v : g.jx.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Flow, IdenticalFramesGiveZeroFlow) {
  const auto g = textured_grid(30, 20);
  const auto f = optical_flow(g, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(f.u.data[i], 0.0);
    EXPECT_EQ(f.v.data[i], 0.0);
  }
}

TEST(Flow, UniformOffsetOnFlatFrameGivesZeroFlow) {
  const Grid a(30, 20, 80.0), b(30, 20, 95.0);
  const auto f = optical_flow(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(f.u.data[i], 0.0, 1e-3);
    EXPECT_NEAR(f.v.data[i], 0.0, 1e-3);
  }
}

TEST(Flow, RecoversOnePixelTranslation) {
  const auto prev = textured_grid(100, 50, 0.0);
  const auto next = textured_grid(100, 50, 1.0);
  const auto f = optical_flow(prev, next);
  double eu = 0.0, ev = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 5; r < 95; ++r)
    for (std::size_t c = 5; c < 45; ++c, ++n) {
      eu += std::abs(f.u(r, c) - 1.0);
      ev += std::abs(f.v(r, c));
    }
  EXPECT_LE(eu / n, 0.25);
  EXPECT_LE(ev / n, 0.25);
}

TEST(Flow, EnergyNeverIncreases) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 255);
  for (int trial = 0; trial < 5; ++trial) {
    Grid a(17, 13), b(17, 13);
    for (auto& v : a.data) v = u(rng);
    for (auto& v : b.data) v = u(rng);
    const HornSchunckConfig cfg{trial == 0 ? 1.0 : 100.0, 60};
    double last = std::numeric_limits<double>::infinity();
    optical_flow(a, b, cfg, [&](int, const FlowField& f, const FlowDerivatives& d) {
      const double e = horn_schunck_energy(d, f, cfg.alpha_sq);
      EXPECT_LE(e, last * (1 + 1e-12) + 1e-9);
      last = e;
    });
  }
}

TEST(Flow, ShapeMismatch) {
  EXPECT_THROW(optical_flow(Grid(3, 3), Grid(3, 4)), ShapeError);
}

TEST(FlowFeatures, AnalyticFields) {
  const std::size_t R = 9, C = 11;
  FlowField uniform{Grid(R, C, 2.0), Grid(R, C, -1.5)};
  const auto a = flow_features(uniform);
  FlowField expanding{from_fn(R, C, [](double x, double) { return x; }), Grid(R, C)};
  const auto b = flow_features(expanding);
  FlowField rotating{Grid(R, C), from_fn(R, C, [](double x, double) { return x; })};
  const auto c = flow_features(rotating, &uniform);
  for (std::size_t r = 1; r + 1 < R; ++r)
    for (std::size_t q = 1; q + 1 < C; ++q) {
      EXPECT_DOUBLE_EQ(a.divergence(r, q), 0.0);
      EXPECT_DOUBLE_EQ(a.vorticity(r, q), 0.0);
      EXPECT_DOUBLE_EQ(b.divergence(r, q), 1.0);
      EXPECT_DOUBLE_EQ(b.vorticity(r, q), 0.0);
      EXPECT_DOUBLE_EQ(c.divergence(r, q), 0.0);
      EXPECT_DOUBLE_EQ(c.vorticity(r, q), 1.0);
      EXPECT_DOUBLE_EQ(c.du_dt(r, q), -2.0);
      EXPECT_DOUBLE_EQ(c.dv_dt(r, q), static_cast<double>(q) + 1.5);
    }
  for (double v : a.du_dt.data) EXPECT_EQ(v, 0.0);
}

TEST(FlowFeatures, ShapeMismatch) {
  FlowField a{Grid(3, 3), Grid(3, 3)}, b{Grid(3, 4), Grid(3, 4)};
  EXPECT_THROW(flow_features(a, &b), ShapeError);
}

TEST(Descriptors, ConstantVideoIsEmpty) {
  const auto set = extract_descriptors(clip({Grid(100, 50, 30.0), Grid(100, 50, 30.0), Grid(100, 50, 30.0)}));
  EXPECT_EQ(set.size(), 0u);
  EXPECT_EQ(set.frame_count(), 2u);
}

TEST(Descriptors, BetaZeroKeepsEveryNonzeroMagnitude) {
  const auto a = textured_grid(40, 30), b = textured_grid(40, 30, 0.5);
  const auto set = extract_descriptors(clip({a, b}), {0.0, {}});
  const auto g = spatial_gradients(a);
  const auto expected = static_cast<std::size_t>(
      std::count_if(g.magnitude.data.begin(), g.magnitude.data.end(), [](double m) { return m > 0.0; }));
  EXPECT_EQ(set.frame_size(0), expected);
}

TEST(Descriptors, MovingSquare) {
  std::vector<Grid> frames;
  for (int t = 0; t < 6; ++t) frames.push_back(square_frame(4 + t));
  const auto video = clip(frames);
  const auto set = extract_descriptors(video);
  ASSERT_EQ(set.frame_count(), 5u);
  EXPECT_GT(set.size(), 0u);
  for (std::size_t t = 0; t < set.frame_count(); ++t) {
    // Brute-force oracle: the kept pixels are exactly those with magnitude > 40.
    const auto g = spatial_gradients(video.frames[t]);
    std::size_t expect = 0;
    for (std::size_t r = 0; r < 20; ++r)
      for (std::size_t c = 0; c < 20; ++c) {
        if (g.magnitude(r, c) <= 40.0) continue;
        ++expect;
        // Near the square: within two pixels of its outline.
        const int left = 4 + static_cast<int>(t);
        EXPECT_GE(static_cast<int>(c), left - 2);
        EXPECT_LE(static_cast<int>(c), left + 4);
        EXPECT_GE(static_cast<int>(r), 6);
        EXPECT_LE(static_cast<int>(r), 12);
      }
    EXPECT_EQ(set.frame_size(t), expect);
  }
}

TEST(Descriptors, InvariantsOnTexturedClip) {
  std::vector<Grid> frames;
  for (int t = 0; t < 4; ++t) frames.push_back(textured_grid(100, 50, 0.7 * t));
  const auto video = clip(frames);
  const FeatureConfig cfg{20.0, {}};
  const auto set = extract_descriptors(video, cfg);
  ASSERT_GT(set.size(), 0u);
  EXPECT_EQ(set.descriptors.cols(), 14);
  EXPECT_EQ(set.frame_offsets.back(), set.size());
  for (Eigen::Index n = 0; n < set.descriptors.rows(); ++n) {
    const auto row = set.descriptors.row(n);
    EXPECT_GT(row(kMagnitude), cfg.beta);
    for (auto j : {kAbsJx, kAbsJy, kAbsJxx, kAbsJyy, kMagnitude}) EXPECT_GE(row(j), 0.0);
    EXPECT_GE(row(kOrientation), 0.0);
    EXPECT_LE(row(kOrientation), std::numbers::pi / 2);
    EXPECT_TRUE(row.allFinite());
  }
  // First usable frame has no previous flow.
  for (std::size_t n = 0; n < set.frame_size(0); ++n) {
    EXPECT_EQ(set.descriptors(static_cast<Eigen::Index>(n), kFlowDuDt), 0.0);
    EXPECT_EQ(set.descriptors(static_cast<Eigen::Index>(n), kFlowDvDt), 0.0);
  }
  EXPECT_TRUE(extract_descriptors(video, cfg) == set);

  TempDir tmp("desc");
  {
    std::ofstream out(tmp.path() / "v.desc");
    write_descriptors(out, set);
  }
  EXPECT_TRUE(read_descriptors(tmp.path() / "v.desc") == set);
}

TEST(Descriptors, NeedsTwoFrames) {
  EXPECT_THROW(extract_descriptors(clip({Grid(10, 10)})), InsufficientFrames);
  EXPECT_THROW(extract_descriptors(clip({Grid(10, 10), Grid(10, 10)}), {-1.0, {}}), InvalidArgument);
}
