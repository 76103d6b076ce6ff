#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"
#include "infocluster/linear_assignment.hpp"

namespace infocluster {

enum class PreprocessMode { Mask, Interp, RasterFairy };

inline PreprocessMode parse_mode(const std::string& s) {
  if (s == "mask") return PreprocessMode::Mask;
  if (s == "interp") return PreprocessMode::Interp;
  if (s == "rf") return PreprocessMode::RasterFairy;
  throw Error(ErrorCode::ConfigError, "mode: expected mask|interp|rf, got '" + s + "'");
}

inline std::string mode_name(PreprocessMode m) {
  switch (m) {
    case PreprocessMode::Mask: return "mask";
    case PreprocessMode::Interp: return "interp";
    case PreprocessMode::RasterFairy: return "rf";
  }
  return "mask";
}

// ---------------------------------------------------------------------------
// Resizing

/// Bilinear resize with half-pixel centers and edge clamping.
inline Image resize_bilinear(const Image& src, Size2 size) {
  if (src.size() == size) return src;
  Image out(size.height, size.width);
  const double sy = static_cast<double>(src.height()) / size.height;
  const double sx = static_cast<double>(src.width()) / size.width;
  for (int y = 0; y < size.height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < size.width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c);
        const double bot = (1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c);
        out.at(y, x, c) = static_cast<float>(std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0));
      }
    }
  }
  return out;
}

inline SegmentationMap resize_nearest(const SegmentationMap& src, Size2 size) {
  if (src.height == size.height && src.width == size.width) return src;
  SegmentationMap out(size.height, size.width, 0, src.building_classes);
  for (int y = 0; y < size.height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / size.height));
    for (int x = 0; x < size.width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / size.width));
      out.at(y, x) = src.at(sy, sx);
    }
  }
  return out;
}

/// Bilinear pixels, nearest-neighbour labels.
inline ImageRecord resize_uniform(const ImageRecord& rec, Size2 size) {
  ImageRecord out = rec;
  out.pixels = resize_bilinear(rec.pixels, size);
  if (rec.seg) out.seg = resize_nearest(*rec.seg, size);
  return out;
}

// ---------------------------------------------------------------------------
// Mask and interpolation

inline std::array<double, 3> building_mean(const ImageRecord& rec) {
  const auto& seg = require_building(rec);
  std::array<double, 3> sum{0, 0, 0};
  size_t n = 0;
  for (size_t i = 0; i < seg.labels.size(); ++i) {
    if (!seg.is_building(i)) continue;
    for (int c = 0; c < 3; ++c) sum[c] += rec.pixels.data()[i * 3 + c];
    ++n;
  }
  for (auto& s : sum) s /= static_cast<double>(n);
  return sum;
}

/// Zeroes every non-building pixel.
inline ImageRecord mask(const ImageRecord& rec) {
  const auto& seg = require_building(rec);
  ImageRecord out = rec;
  out.stage = Stage::M;
  auto& px = out.pixels.data();
  for (size_t i = 0; i < seg.labels.size(); ++i) {
    if (seg.is_building(i)) continue;
    px[i * 3] = px[i * 3 + 1] = px[i * 3 + 2] = 0.0f;
  }
  return out;
}

/// Replaces every non-building pixel with the per-channel building mean.
inline ImageRecord interpolate(const ImageRecord& rec) {
  const auto mean = building_mean(rec);
  const auto& seg = *rec.seg;
  ImageRecord out = rec;
  out.stage = Stage::I;
  auto& px = out.pixels.data();
  for (size_t i = 0; i < seg.labels.size(); ++i) {
    if (seg.is_building(i)) continue;
    for (int c = 0; c < 3; ++c) px[i * 3 + c] = static_cast<float>(mean[c]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raster Fairy

struct GridSpec {
  int width = 1;   // columns
  int height = 1;  // rows
  int n_points = 1;
  int pad_cells = 0;

  int cells() const noexcept { return width * height; }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Grid for N points: W = max(1, round(sqrt(N/2))), H = ceil(N/W).
inline GridSpec factorize_even(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidSpec, "factorize_even needs N >= 1");
  const int w = std::max(1, static_cast<int>(std::lround(std::sqrt(n / 2.0))));
  const int h = (n + w - 1) / w;
  return {w, h, n, w * h - n};
}

struct GridPoint {
  double y = 0;
  double x = 0;
};

struct Assignment {
  std::vector<int> mapping;  // point index -> row-major cell index
  double cost = 0;
};

inline GridPoint cell_center(const GridSpec& grid, int cell) {
  return {(cell / grid.width + 0.5) / grid.height, (cell % grid.width + 0.5) / grid.width};
}

inline double squared_distance(const GridPoint& p, const GridPoint& q) {
  const double dy = p.y - q.y, dx = p.x - q.x;
  return dy * dy + dx * dx;
}

inline double assignment_cost(std::span<const GridPoint> points, const GridSpec& grid,
                              const std::vector<int>& mapping) {
  double cost = 0;
  for (size_t i = 0; i < points.size(); ++i)
    cost += squared_distance(points[i], cell_center(grid, mapping[i]));
  return cost;
}

namespace detail {

inline std::vector<int> points_by_row_major_rank(std::span<const GridPoint> points) {
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (points[a].y != points[b].y) return points[a].y < points[b].y;
    return points[a].x < points[b].x;
  });
  return order;
}

struct CellRect {
  int r0, r1, c0, c1;  // half-open
  int rows() const { return r1 - r0; }
  int cols() const { return c1 - c0; }
  int count() const { return rows() * cols(); }
};

// Splits the cell rectangle in half along its longer side and hands each half
// the matching share of points, ordered along the same axis.
inline void recursive_split(std::span<const GridPoint> points, std::span<int> idx, CellRect rect,
                            const GridSpec& grid, std::vector<int>& mapping) {
  const int n = static_cast<int>(idx.size());
  if (n == 0) return;
  if (rect.count() == 1) {
    mapping[idx[0]] = rect.r0 * grid.width + rect.c0;
    return;
  }
  const bool split_rows = rect.rows() * grid.width >= rect.cols() * grid.height && rect.rows() > 1;
  CellRect first = rect, second = rect;
  if (split_rows || rect.cols() == 1) {
    first.r1 = second.r0 = rect.r0 + rect.rows() / 2;
  } else {
    first.c1 = second.c0 = rect.c0 + rect.cols() / 2;
  }
  const bool by_y = first.r1 != rect.r1;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    const auto& p = points[a];
    const auto& q = points[b];
    const double pk = by_y ? p.y : p.x, qk = by_y ? q.y : q.x;
    if (pk != qk) return pk < qk;
    return by_y ? p.x < q.x : p.y < q.y;
  });
  int n_first = static_cast<int>(std::lround(static_cast<double>(n) * first.count() / rect.count()));
  n_first = std::clamp(n_first, std::max(0, n - second.count()), std::min(n, first.count()));
  recursive_split(points, idx.subspan(0, n_first), first, grid, mapping);
  recursive_split(points, idx.subspan(n_first), second, grid, mapping);
}

}  // namespace detail

/// The trivial baseline: points in (y, x) rank order onto cells in row-major order.
inline Assignment row_major_rank_assignment(std::span<const GridPoint> points,
                                            const GridSpec& grid) {
  const auto order = detail::points_by_row_major_rank(points);
  Assignment a;
  a.mapping.assign(points.size(), -1);
  for (size_t r = 0; r < order.size(); ++r) a.mapping[order[r]] = static_cast<int>(r);
  a.cost = assignment_cost(points, grid, a.mapping);
  return a;
}

inline constexpr int kDefaultSizeCap = 2048;

/// Injective point→cell assignment minimising total squared displacement to
/// cell centres. Exact for N ≤ size_cap; above it a balanced recursive median
/// split, never worse than the row-major rank baseline.
inline Assignment assign_to_grid(std::span<const GridPoint> points, const GridSpec& grid,
                                 int size_cap = kDefaultSizeCap) {
  const int n = static_cast<int>(points.size());
  if (n != grid.n_points || grid.cells() < n || n < 1)
    throw Error(ErrorCode::SizeMismatch, "assign_to_grid: " + std::to_string(n) +
                                             " points for grid with n_points=" +
                                             std::to_string(grid.n_points));
  const int m = grid.cells();
  Assignment a;
  if (n <= size_cap) {
    std::vector<double> cost(static_cast<size_t>(n) * m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        cost[static_cast<size_t>(i) * m + j] = squared_distance(points[i], cell_center(grid, j));
    a.mapping = solve_assignment(cost, n, m);
    a.cost = assignment_cost(points, grid, a.mapping);
    return a;
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  a.mapping.assign(n, -1);
  detail::recursive_split(points, idx, {0, grid.height, 0, grid.width}, grid, a.mapping);
  a.cost = assignment_cost(points, grid, a.mapping);
  auto baseline = row_major_rank_assignment(points, grid);
  return baseline.cost < a.cost ? baseline : a;
}

/// Raster Fairy layout before the final resize: the W×H grid image, the
/// assignment that produced it, and which cells are padding.
struct RasterGrid {
  GridSpec grid;
  Assignment assignment;
  Image image;
  std::vector<size_t> building_pixels;  // pixel indices in the source image
};

/// Building pixels with coordinates normalised to their bounding box.
inline RasterGrid raster_fairy_grid(const ImageRecord& rec, int size_cap = kDefaultSizeCap) {
  const auto mean = building_mean(rec);
  const auto& seg = *rec.seg;
  const int w = seg.width;

  RasterGrid out;
  int y_min = seg.height, y_max = -1, x_min = w, x_max = -1;
  for (size_t i = 0; i < seg.labels.size(); ++i) {
    if (!seg.is_building(i)) continue;
    out.building_pixels.push_back(i);
    const int y = static_cast<int>(i / w), x = static_cast<int>(i % w);
    y_min = std::min(y_min, y);
    y_max = std::max(y_max, y);
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
  }
  const double span_y = y_max - y_min + 1, span_x = x_max - x_min + 1;
  std::vector<GridPoint> points;
  points.reserve(out.building_pixels.size());
  for (size_t i : out.building_pixels) {
    const int y = static_cast<int>(i / w), x = static_cast<int>(i % w);
    points.push_back({(y - y_min + 0.5) / span_y, (x - x_min + 0.5) / span_x});
  }

  out.grid = factorize_even(static_cast<int>(points.size()));
  out.assignment = assign_to_grid(points, out.grid, size_cap);
  out.image = Image(out.grid.height, out.grid.width);
  std::vector<char> filled(out.grid.cells(), 0);
  for (size_t p = 0; p < points.size(); ++p) {
    const int cell = out.assignment.mapping[p];
    filled[cell] = 1;
    for (int c = 0; c < 3; ++c)
      out.image.data()[static_cast<size_t>(cell) * 3 + c] =
          rec.pixels.data()[out.building_pixels[p] * 3 + c];
  }
  for (int cell = 0; cell < out.grid.cells(); ++cell) {
    if (filled[cell]) continue;
    for (int c = 0; c < 3; ++c)
      out.image.data()[static_cast<size_t>(cell) * 3 + c] = static_cast<float>(mean[c]);
  }
  return out;
}

/// Rearranges building pixels onto a regular grid, then resizes the grid to
/// `size` (default: the record's own size). The output is all building.
inline ImageRecord raster_fairy(const ImageRecord& rec, Size2 size = {},
                                int size_cap = kDefaultSizeCap) {
  if (size.height == 0) size = rec.pixels.size();
  auto grid = raster_fairy_grid(rec, size_cap);
  ImageRecord out;
  out.id = rec.id;
  out.stage = Stage::R;
  out.truth = rec.truth;
  out.pixels = resize_bilinear(grid.image, size);
  out.seg = SegmentationMap(size.height, size.width, *rec.seg->building_classes.begin(),
                            rec.seg->building_classes);
  return out;
}

inline ImageRecord apply_mode(const ImageRecord& rec, PreprocessMode mode, Size2 size,
                              int size_cap = kDefaultSizeCap) {
  switch (mode) {
    case PreprocessMode::Mask: return resize_uniform(mask(rec), size);
    case PreprocessMode::Interp: return resize_uniform(interpolate(rec), size);
    case PreprocessMode::RasterFairy: return raster_fairy(rec, size, size_cap);
  }
  return rec;
}

}  // namespace infocluster
