#pragma once

// Per-pixel spatio-temporal descriptors: coordinates, six intensity-gradient
// features and six optical-flow features, kept where the gradient magnitude
// exceeds a threshold.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catwalk/error.hpp"
#include "catwalk/image.hpp"
#include "catwalk/ingest.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

inline constexpr std::size_t kDescriptorDim = 14;

// Column layout of a descriptor row.
enum DescriptorField : std::size_t {
  kX = 0, kY, kAbsJx, kAbsJy, kAbsJyy, kAbsJxx, kMagnitude, kOrientation,
  kFlowU, kFlowV, kFlowDuDt, kFlowDvDt, kDivergence, kVorticity
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Derivative along columns (x): central differences inside, one-sided at the
// first and last column, zero for single-column grids.
inline Grid diff_x(const Grid& g) {
  Grid out(g.rows, g.cols);
  if (g.cols < 2) return out;
  const auto n = g.cols;
  for (std::size_t r = 0; r < g.rows; ++r) {
    out(r, 0) = g(r, 1) - g(r, 0);
    for (std::size_t c = 1; c + 1 < n; ++c) out(r, c) = 0.5 * (g(r, c + 1) - g(r, c - 1));
    out(r, n - 1) = g(r, n - 1) - g(r, n - 2);
  }
  return out;
}

// Derivative along rows (y), same stencil as diff_x.
inline Grid diff_y(const Grid& g) {
  Grid out(g.rows, g.cols);
  if (g.rows < 2) return out;
  const auto n = g.rows;
  for (std::size_t c = 0; c < g.cols; ++c) {
    out(0, c) = g(1, c) - g(0, c);
    for (std::size_t r = 1; r + 1 < n; ++r) out(r, c) = 0.5 * (g(r + 1, c) - g(r - 1, c));
    out(n - 1, c) = g(n - 1, c) - g(n - 2, c);
  }
  return out;
}

struct GradientFeatures {
  Grid jx, jy, jxx, jyy;  // signed derivatives
  Grid magnitude;         // sqrt(jx^2 + jy^2)
  Grid orientation;       // atan(|jy| / |jx|) in [0, pi/2]; 0 where both vanish
};

inline GradientFeatures spatial_gradients(const Grid& frame) {
  GradientFeatures g;
  g.jx = diff_x(frame);
  g.jy = diff_y(frame);
  g.jxx = diff_x(g.jx);
  g.jyy = diff_y(g.jy);
  g.magnitude = Grid(frame.rows, frame.cols);
  g.orientation = Grid(frame.rows, frame.cols);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double ax = std::abs(g.jx.data[i]);
    const double ay = std::abs(g.jy.data[i]);
    g.magnitude.data[i] = std::hypot(ax, ay);
    // atan2 of non-negative arguments: pi/2 when ax == 0 < ay, 0 when both are 0.
    g.orientation.data[i] = std::atan2(ay, ax);
  }
  return g;
}

inline GradientFeatures spatial_gradients(const Frame& frame) { return spatial_gradients(frame.grid()); }

struct FlowField {
  Grid u, v;
};

struct HornSchunckConfig {
  double alpha_sq = 100.0;
  int iterations = 100;
};

namespace detail {

// Number of 4-neighbours and their mean, with neighbours outside the grid
// simply absent.
inline void neighbour_mean(const Grid& g, Grid& mean, std::vector<double>& count_out) {
  const auto R = g.rows, C = g.cols;
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      int n = 0;
      if (r > 0) { s += g(r - 1, c); ++n; }
      if (r + 1 < R) { s += g(r + 1, c); ++n; }
      if (c > 0) { s += g(r, c - 1); ++n; }
      if (c + 1 < C) { s += g(r, c + 1); ++n; }
      mean(r, c) = n ? s / n : g(r, c);
      count_out[r * C + c] = n;
    }
  }
}

}  // namespace detail

// Brightness-constancy derivatives of a frame pair: Ix, Iy from the mean of
// both frames, It = next - prev.
struct FlowDerivatives {
  Grid ix, iy, it;
};

inline FlowDerivatives flow_derivatives(const Grid& prev, const Grid& next) {
  if (!prev.same_shape(next)) throw ShapeError("optical flow frames differ in shape");
  Grid avg(prev.rows, prev.cols), dt(prev.rows, prev.cols);
  for (std::size_t i = 0; i < prev.size(); ++i) {
    avg.data[i] = 0.5 * (prev.data[i] + next.data[i]);
    dt.data[i] = next.data[i] - prev.data[i];
  }
  return {diff_x(avg), diff_y(avg), std::move(dt)};
}

// Horn-Schunck energy:
//   sum_p (Ix u + Iy v + It)^2 + alpha^2 / 4 * sum_{edges pq} (|u_p - u_q|^2 + |v_p - v_q|^2)
// The iteration below is block-Jacobi on exactly this quadratic, so the energy
// never increases.
inline double horn_schunck_energy(const FlowDerivatives& d, const FlowField& f, double alpha_sq) {
  const auto R = d.ix.rows, C = d.ix.cols;
  double data = 0.0, smooth = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      const double e = d.ix(r, c) * f.u(r, c) + d.iy(r, c) * f.v(r, c) + d.it(r, c);
      data += e * e;
      if (c + 1 < C) {
        const double du = f.u(r, c + 1) - f.u(r, c), dv = f.v(r, c + 1) - f.v(r, c);
        smooth += du * du + dv * dv;
      }
      if (r + 1 < R) {
        const double du = f.u(r + 1, c) - f.u(r, c), dv = f.v(r + 1, c) - f.v(r, c);
        smooth += du * du + dv * dv;
      }
    }
  }
  return data + 0.25 * alpha_sq * smooth;
}

// Dense Horn-Schunck flow from zero initialisation. The optional callback sees
// the field after every iteration.
template <typename OnIteration>
FlowField optical_flow(const Grid& prev, const Grid& next, const HornSchunckConfig& cfg,
                       OnIteration&& on_iteration) {
  const auto d = flow_derivatives(prev, next);
  const auto R = prev.rows, C = prev.cols;
  FlowField f{Grid(R, C), Grid(R, C)};
  Grid ubar(R, C), vbar(R, C);
  std::vector<double> count(R * C);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    detail::neighbour_mean(f.u, ubar, count);
    detail::neighbour_mean(f.v, vbar, count);
    for (std::size_t i = 0; i < R * C; ++i) {
      // Border pixels have fewer smoothness edges; their weight scales with the
      // neighbour count so the update minimises the energy above.
      const double a = cfg.alpha_sq * count[i] / 4.0;
      const double ix = d.ix.data[i], iy = d.iy.data[i];
      const double denom = a + ix * ix + iy * iy;
      if (denom <= 0.0) {
        f.u.data[i] = ubar.data[i];
        f.v.data[i] = vbar.data[i];
        continue;
      }
      const double t = (ix * ubar.data[i] + iy * vbar.data[i] + d.it.data[i]) / denom;
      f.u.data[i] = ubar.data[i] - ix * t;
      f.v.data[i] = vbar.data[i] - iy * t;
    }
    on_iteration(iter, f, d);
  }
  return f;
}

inline FlowField optical_flow(const Grid& prev, const Grid& next, const HornSchunckConfig& cfg = {}) {
  return optical_flow(prev, next, cfg, [](int, const FlowField&, const FlowDerivatives&) {});
}

inline FlowField optical_flow(const Frame& prev, const Frame& next, const HornSchunckConfig& cfg = {}) {
  return optical_flow(prev.grid(), next.grid(), cfg);
}

struct FlowFeatures {
  Grid u, v, du_dt, dv_dt, divergence, vorticity;
};

// Temporal derivatives are the backward difference against the previous
// flow field, zero when there is none.
inline FlowFeatures flow_features(const FlowField& flow, const FlowField* previous = nullptr) {
  if (!flow.u.same_shape(flow.v)) throw ShapeError("flow components differ in shape");
  if (previous && (!previous->u.same_shape(flow.u) || !previous->v.same_shape(flow.v)))
    throw ShapeError("consecutive flow fields differ in shape");
  FlowFeatures o;
  o.u = flow.u;
  o.v = flow.v;
  o.du_dt = Grid(flow.u.rows, flow.u.cols);
  o.dv_dt = Grid(flow.u.rows, flow.u.cols);
  if (previous) {
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
      o.du_dt.data[i] = flow.u.data[i] - previous->u.data[i];
      o.dv_dt.data[i] = flow.v.data[i] - previous->v.data[i];
    }
  }
  const Grid ux = diff_x(flow.u), uy = diff_y(flow.u);
  const Grid vx = diff_x(flow.v), vy = diff_y(flow.v);
  o.divergence = Grid(flow.u.rows, flow.u.cols);
  o.vorticity = Grid(flow.u.rows, flow.u.cols);
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    o.divergence.data[i] = ux.data[i] + vy.data[i];
    o.vorticity.data[i] = vx.data[i] - uy.data[i];
  }
  return o;
}

struct FeatureConfig {
  double beta = 40.0;
  HornSchunckConfig flow;
};

// Pooled descriptors of one video. Row n of `descriptors` came from usable
// frame t where frame_offsets[t] <= n < frame_offsets[t + 1].
struct DescriptorSet {
  RowMatrix descriptors{0, static_cast<Eigen::Index>(kDescriptorDim)};
  std::vector<std::size_t> frame_offsets{0};

  std::size_t size() const { return static_cast<std::size_t>(descriptors.rows()); }
  std::size_t frame_count() const { return frame_offsets.size() - 1; }
  std::size_t frame_size(std::size_t t) const { return frame_offsets[t + 1] - frame_offsets[t]; }

  auto frame_rows(std::size_t t) const {
    return descriptors.middleRows(static_cast<Eigen::Index>(frame_offsets[t]),
                                  static_cast<Eigen::Index>(frame_size(t)));
  }
  bool operator==(const DescriptorSet& o) const {
    return frame_offsets == o.frame_offsets && descriptors.rows() == o.descriptors.rows() &&
           descriptors == o.descriptors;
  }
};

// Descriptors for frames t = 0 .. T-2; the last frame has no forward flow.
inline DescriptorSet extract_descriptors(const Video& video, const FeatureConfig& cfg = {}) {
  if (cfg.beta < 0.0) throw InvalidArgument("beta must be non-negative");
  video.validate();
  const auto R = video.rows(), C = video.cols();
  const auto usable = video.frames.size() - 1;

  std::vector<std::array<double, kDescriptorDim>> rows;
  std::vector<std::size_t> offsets{0};
  offsets.reserve(usable + 1);
  std::optional<FlowField> previous;
  for (std::size_t t = 0; t < usable; ++t) {
    const auto g = spatial_gradients(video.frames[t]);
    auto flow = optical_flow(video.frames[t], video.frames[t + 1], cfg.flow);
    const auto o = flow_features(flow, previous ? &*previous : nullptr);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        const auto i = r * C + c;
        if (!(g.magnitude.data[i] > cfg.beta)) continue;
        rows.push_back({static_cast<double>(c), static_cast<double>(r), std::abs(g.jx.data[i]),
                        std::abs(g.jy.data[i]), std::abs(g.jyy.data[i]), std::abs(g.jxx.data[i]),
                        g.magnitude.data[i], g.orientation.data[i], o.u.data[i], o.v.data[i],
                        o.du_dt.data[i], o.dv_dt.data[i], o.divergence.data[i], o.vorticity.data[i]});
      }
    }
    offsets.push_back(rows.size());
    previous = std::move(flow);
  }
  DescriptorSet set;
  set.descriptors.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kDescriptorDim));
  for (std::size_t n = 0; n < rows.size(); ++n)
    for (std::size_t j = 0; j < kDescriptorDim; ++j)
      set.descriptors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) = rows[n][j];
  set.frame_offsets = std::move(offsets);
  return set;
}

// Text dump: header `DESC v1 <frames> <count>`, then one row per descriptor,
// the usable-frame index followed by the 14 values.
inline void write_descriptors(std::ostream& out, const DescriptorSet& set) {
  out << "DESC v1 " << set.frame_count() << ' ' << set.size() << '\n';
  for (std::size_t t = 0; t < set.frame_count(); ++t) {
    for (std::size_t n = set.frame_offsets[t]; n < set.frame_offsets[t + 1]; ++n) {
      out << t;
      for (std::size_t j = 0; j < kDescriptorDim; ++j)
        out << ' ' << text::format_double(set.descriptors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)));
      out << '\n';
    }
  }
}

inline DescriptorSet read_descriptors(const std::filesystem::path& path) {
  const auto lines = text::read_lines(path);
  if (lines.empty()) throw ParseError(path.string() + ": empty descriptor file");
  const auto head = text::split_ws(lines[0]);
  if (head.size() != 4 || head[0] != "DESC" || head[1] != "v1")
    throw ParseError(path.string() + ": bad descriptor header");
  const auto frames = text::parse_int<std::size_t>(head[2]);
  const auto count = text::parse_int<std::size_t>(head[3]);
  if (lines.size() != count + 1) throw ParseError(path.string() + ": descriptor count mismatch");
  DescriptorSet set;
  set.descriptors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(kDescriptorDim));
  set.frame_offsets.assign(frames + 1, 0);
  std::vector<std::size_t> per_frame(frames, 0);
  std::size_t last_t = 0;
  for (std::size_t n = 0; n < count; ++n) {
    const auto cells = text::split_ws(lines[n + 1]);
    if (cells.size() != kDescriptorDim + 1) throw ParseError(path.string() + ": malformed descriptor row");
    const auto t = text::parse_int<std::size_t>(cells[0]);
    if (t >= frames || t < last_t) throw ParseError(path.string() + ": frame index out of order");
    last_t = t;
    ++per_frame[t];
    for (std::size_t j = 0; j < kDescriptorDim; ++j)
      set.descriptors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)) = text::parse_double(cells[j + 1]);
  }
  for (std::size_t t = 0; t < frames; ++t) set.frame_offsets[t + 1] = set.frame_offsets[t] + per_frame[t];
  return set;
}

}  // namespace catwalk
