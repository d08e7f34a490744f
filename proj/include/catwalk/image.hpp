#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "catwalk/error.hpp"

namespace catwalk {

// Row-major real-valued grid. Used for intensities, derivatives and flow.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Grid&) const = default;
};

// A grayscale frame: intensities in [0, 255], row-major.
class Frame {
 public:
  Frame() = default;

  Frame(std::size_t rows, std::size_t cols, std::vector<double> pixels) {
    if (rows == 0 || cols == 0) throw InvalidInput("frame dimensions must be positive");
    if (pixels.size() != rows * cols)
      throw InvalidInput("frame pixel count " + std::to_string(pixels.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    for (double p : pixels)
      if (!std::isfinite(p) || p < 0.0 || p > 255.0)
        throw InvalidInput("frame intensity outside [0,255]");
    grid_.rows = rows;
    grid_.cols = cols;
    grid_.data = std::move(pixels);
  }

  explicit Frame(Grid g) : Frame(g.rows, g.cols, std::move(g.data)) {}

  std::size_t rows() const { return grid_.rows; }
  std::size_t cols() const { return grid_.cols; }
  std::span<const double> pixels() const { return grid_.data; }
  double operator()(std::size_t r, std::size_t c) const { return grid_(r, c); }
  const Grid& grid() const { return grid_; }

  bool operator==(const Frame&) const = default;

 private:
  Grid grid_;
};

// Axis-aligned box in pixel units; x/w run along columns, y/h along rows.
struct BoundingBox {
  long x = 0;
  long y = 0;
  long w = 0;
  long h = 0;

  bool inside(std::size_t rows, std::size_t cols) const {
    return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= static_cast<long>(cols) &&
           y + h <= static_cast<long>(rows);
  }
  bool operator==(const BoundingBox&) const = default;
};

inline Grid crop(const Grid& src, const BoundingBox& box) {
  if (!box.inside(src.rows, src.cols)) throw ManifestError("bounding box outside frame");
  Grid out(static_cast<std::size_t>(box.h), static_cast<std::size_t>(box.w));
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out(r, c) = src(r + static_cast<std::size_t>(box.y), c + static_cast<std::size_t>(box.x));
  return out;
}

// Bilinear resize with half-pixel centre alignment: destination pixel centre
// (i + 0.5) maps to source coordinate (i + 0.5) * scale - 0.5, clamped to the
// source extent. Aspect ratio is not preserved.
inline Grid resize_bilinear(const Grid& src, std::size_t rows, std::size_t cols) {
  if (src.rows == 0 || src.cols == 0 || rows == 0 || cols == 0)
    throw ShapeError("resize of empty grid");
  Grid out(rows, cols);
  const double sy = static_cast<double>(src.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(src.cols) / static_cast<double>(cols);
  auto source_coord = [](std::size_t i, double scale, std::size_t n) {
    const double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(n - 1));
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const double fy = source_coord(r, sy, src.rows);
    const auto y0 = static_cast<std::size_t>(fy);
    const auto y1 = std::min(y0 + 1, src.rows - 1);
    const double ay = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double fx = source_coord(c, sx, src.cols);
      const auto x0 = static_cast<std::size_t>(fx);
      const auto x1 = std::min(x0 + 1, src.cols - 1);
      const double ax = fx - static_cast<double>(x0);
      const double top = src(y0, x0) + ax * (src(y0, x1) - src(y0, x0));
      const double bottom = src(y1, x0) + ax * (src(y1, x1) - src(y1, x0));
      out(r, c) = top + ay * (bottom - top);
    }
  }
  return out;
}

}  // namespace catwalk
