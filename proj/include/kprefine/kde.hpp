#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "kprefine/types.hpp"

namespace kprefine {

struct KdeConfig {
  double bandwidth = 0.5;  // h, px
  int window_radius = 3;   // r, Chebyshev radius of the maxima window
  /// zeta. Unset selects 2 (N h^2)^-1 (2 pi h)^-1 e^{-1/2}: the density two
  /// points at distance h would produce, so lone detections seed nothing.
  std::optional<double> density_threshold;
  /// Unset selects 2 * n_kpts (resolved by the caller).
  std::optional<int> max_candidates;

  void validate() const;
};

/// KDE sampled at pixel centers (x, y) = (0..W-1, 0..H-1).
struct DensityGrid {
  ImageSize size;
  std::vector<double> values;
  std::size_t point_count = 0;
  double bandwidth = 0.5;

  double operator()(int x, int y) const { return values[static_cast<std::size_t>(y) * size.width + x]; }
};

/// Kernel contributions are truncated beyond this many bandwidths.
inline constexpr double kKdeCutoffBandwidths = 5.0;

/// f(x) = (N h^2)^-1 sum_i phi((x_i - x)/h), phi(u) = (2 pi h)^-1 exp(-|u|^2/2).
/// Parallel over rows; points are visited in a canonical spatial order so the
/// result is bit-identical for any input permutation and thread count.
/// Throws EmptyPointSet.
DensityGrid evaluate_grid(std::span<const Point2> points, const KdeConfig& cfg, ImageSize dims);
DensityGrid evaluate_grid(std::span<const Keypoint> points, const KdeConfig& cfg, ImageSize dims);

double resolve_density_threshold(const DensityGrid& grid, const KdeConfig& cfg);

/// Pixels x with f(x) > zeta and f(y) < f(x) for every other y in the
/// (2r+1)^2 window (clipped at the borders). Row-major order.
std::vector<Point2> find_local_maxima(const DensityGrid& grid, const KdeConfig& cfg);

/// The `cap` highest-density maxima, ties broken by (y, x).
std::vector<Point2> select_top_maxima(std::span<const Point2> maxima, const DensityGrid& grid, std::size_t cap);

/// Min-max normalized 8-bit PGM dump.
void write_density_pgm(const std::filesystem::path& path, const DensityGrid& grid);

}  // namespace kprefine
