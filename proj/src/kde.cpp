#include "kprefine/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kprefine/errors.hpp"
#include "kprefine/image.hpp"

namespace kprefine {

void KdeConfig::validate() const {
  if (!(bandwidth > 0.0)) throw InvalidConfig("kde.bandwidth must be > 0");
  if (window_radius < 1) throw InvalidConfig("kde.window_radius must be >= 1");
  if (density_threshold && !(*density_threshold >= 0.0)) throw InvalidConfig("kde.density_threshold must be >= 0");
  if (max_candidates && *max_candidates < 1) throw InvalidConfig("kde.max_candidates must be >= 1");
}

DensityGrid evaluate_grid(std::span<const Point2> points, const KdeConfig& cfg, ImageSize dims) {
  cfg.validate();
  if (points.empty()) throw EmptyPointSet("kde needs at least one point");
  if (dims.width < 1 || dims.height < 1) throw InvalidConfig("kde grid dimensions must be positive");

  const double h = cfg.bandwidth;
  const double cutoff2 = (kKdeCutoffBandwidths * h) * (kKdeCutoffBandwidths * h);
  const int reach = static_cast<int>(std::ceil(kKdeCutoffBandwidths * h)) + 1;

  std::vector<Point2> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(), [](Point2 a, Point2 b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });

  // Bin points to their nearest pixel on a grid padded by `reach`.
  const int bw = dims.width + 2 * reach;
  const int bh = dims.height + 2 * reach;
  std::vector<std::size_t> bin_start(static_cast<std::size_t>(bw) * bh + 1, 0);
  std::vector<std::size_t> bin_of(sorted.size(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double bx = std::floor(sorted[i].x + 0.5) + reach;
    const double by = std::floor(sorted[i].y + 0.5) + reach;
    if (!(bx >= 0 && by >= 0 && bx < bw && by < bh)) continue;
    bin_of[i] = static_cast<std::size_t>(by) * bw + static_cast<std::size_t>(bx);
    ++bin_start[bin_of[i] + 1];
  }
  for (std::size_t b = 1; b < bin_start.size(); ++b) bin_start[b] += bin_start[b - 1];
  std::vector<Point2> binned(bin_start.back());
  {
    std::vector<std::size_t> cursor(bin_start.begin(), bin_start.end() - 1);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (bin_of[i] != static_cast<std::size_t>(-1)) binned[cursor[bin_of[i]]++] = sorted[i];
    }
  }

  const double kernel_peak = 1.0 / (2.0 * std::numbers::pi * h);
  const double scale = kernel_peak / (static_cast<double>(points.size()) * h * h);
  const double inv_two_h2 = 1.0 / (2.0 * h * h);

  DensityGrid grid{dims, std::vector<double>(static_cast<std::size_t>(dims.width) * dims.height, 0.0),
                   points.size(), h};
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      double acc = 0.0;
      for (int by = y; by <= y + 2 * reach; ++by) {
        for (int bx = x; bx <= x + 2 * reach; ++bx) {
          const std::size_t b = static_cast<std::size_t>(by) * bw + bx;
          for (std::size_t j = bin_start[b]; j < bin_start[b + 1]; ++j) {
            const double dx = binned[j].x - x;
            const double dy = binned[j].y - y;
            const double d2 = dx * dx + dy * dy;
            if (d2 <= cutoff2) acc += std::exp(-d2 * inv_two_h2);
          }
        }
      }
      grid.values[static_cast<std::size_t>(y) * dims.width + x] = scale * acc;
    }
  }
  return grid;
}

DensityGrid evaluate_grid(std::span<const Keypoint> points, const KdeConfig& cfg, ImageSize dims) {
  std::vector<Point2> p;
  p.reserve(points.size());
  for (const Keypoint& kp : points) p.push_back(kp.position());
  return evaluate_grid(std::span<const Point2>(p), cfg, dims);
}

double resolve_density_threshold(const DensityGrid& grid, const KdeConfig& cfg) {
  if (cfg.density_threshold) return *cfg.density_threshold;
  const double h = grid.bandwidth;
  const double n = static_cast<double>(std::max<std::size_t>(grid.point_count, 1));
  return 2.0 / (n * h * h) / (2.0 * std::numbers::pi * h) * std::exp(-0.5);
}

std::vector<Point2> find_local_maxima(const DensityGrid& grid, const KdeConfig& cfg) {
  cfg.validate();
  const double zeta = resolve_density_threshold(grid, cfg);
  const int w = grid.size.width;
  const int h = grid.size.height;
  const int r = cfg.window_radius;

  std::vector<std::uint8_t> flag(grid.values.size(), 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = grid(x, y);
      if (!(v > zeta)) continue;
      bool dominant = true;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r) && dominant; ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          if ((xx != x || yy != y) && !(grid(xx, yy) < v)) {
            dominant = false;
            break;
          }
        }
      }
      flag[static_cast<std::size_t>(y) * w + x] = dominant ? 1 : 0;
    }
  }

  std::vector<Point2> maxima;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (flag[static_cast<std::size_t>(y) * w + x]) maxima.push_back({static_cast<double>(x), static_cast<double>(y)});
    }
  }
  return maxima;
}

std::vector<Point2> select_top_maxima(std::span<const Point2> maxima, const DensityGrid& grid, std::size_t cap) {
  auto density = [&grid](Point2 p) { return grid(static_cast<int>(p.x), static_cast<int>(p.y)); };
  std::vector<Point2> out(maxima.begin(), maxima.end());
  std::stable_sort(out.begin(), out.end(), [&](Point2 a, Point2 b) {
    const double fa = density(a), fb = density(b);
    if (fa != fb) return fa > fb;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  if (out.size() > cap) out.resize(cap);
  return out;
}

void write_density_pgm(const std::filesystem::path& path, const DensityGrid& grid) {
  const auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
  const double range = *hi - *lo;
  ImageBuffer img(grid.size.width, grid.size.height);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    img.pixels()[i] = range > 0.0 ? (grid.values[i] - *lo) / range : 0.0;
  }
  write_pgm(path, img);
}

}  // namespace kprefine
