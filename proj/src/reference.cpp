#include "kprefine/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kprefine/errors.hpp"

namespace kprefine::reference {

namespace {

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

ImageBuffer warp_image_serial(const ImageBuffer& img, const AffineTransform& t) {
  const CanvasPlan plan = plan_canvas(t, img.size());
  const AffineTransform back = invert(plan.to_canvas);
  ImageBuffer out(plan.size.width, plan.size.height);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const Point2 s = apply_point(back, {static_cast<double>(x), static_cast<double>(y)});
      out(x, y) = sample_bilinear(img, s.x, s.y);
    }
  }
  return out;
}

ResponseMap compute_response_serial(const ImageBuffer& img, const DetectorConfig& cfg) {
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> tensor[3] = {std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto at = [&](int dx, int dy) { return img(clampi(x + dx, 0, w - 1), clampi(y + dy, 0, h - 1)); };
      const double gx = ((at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1))) / 8.0;
      const double gy = ((at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1))) / 8.0;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      tensor[0][i] = gx * gx;
      tensor[1][i] = gx * gy;
      tensor[2][i] = gy * gy;
    }
  }
  const std::vector<double> taps = gaussian_taps(cfg.smoothing_sigma);
  const int r = static_cast<int>(taps.size() / 2);
  for (auto& field : tensor) {
    std::vector<double> tmp(n);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += taps[k + r] * field[static_cast<std::size_t>(y) * w + clampi(x + k, 0, w - 1)];
        tmp[static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp[static_cast<std::size_t>(clampi(y + k, 0, h - 1)) * w + x];
        field[static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
  }
  ResponseMap map{img.size(), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = tensor[0][i], b = tensor[1][i], c = tensor[2][i];
    const double tr = a + c;
    if (cfg.kind == DetectorKind::ShiTomasi) {
      const double half_diff = 0.5 * (a - c);
      map.values[i] = 0.5 * tr - std::sqrt(half_diff * half_diff + b * b);
    } else {
      map.values[i] = a * c - b * b - cfg.harris_k * tr * tr;
    }
  }
  return map;
}

DensityGrid evaluate_grid_dense(std::span<const Point2> points, const KdeConfig& cfg, ImageSize dims) {
  cfg.validate();
  if (points.empty()) throw EmptyPointSet("kde needs at least one point");
  const double h = cfg.bandwidth;
  const double cutoff = kKdeCutoffBandwidths * h;
  const double scale = 1.0 / (2.0 * std::numbers::pi * h) / (static_cast<double>(points.size()) * h * h);
  DensityGrid grid{dims, std::vector<double>(static_cast<std::size_t>(dims.width) * dims.height, 0.0),
                   points.size(), h};
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      double acc = 0.0;
      for (const Point2& p : points) {
        const double d2 = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
        if (d2 <= cutoff * cutoff) acc += std::exp(-d2 / (2.0 * h * h));
      }
      grid.values[static_cast<std::size_t>(y) * dims.width + x] = scale * acc;
    }
  }
  return grid;
}

std::vector<double> e_step_dense(std::span<const Point2> points, std::span<const MixtureComponent> components,
                                 Weighting weighting) {
  const std::size_t n = points.size();
  const std::size_t k_count = components.size();
  std::vector<double> gamma(k_count * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const MixtureComponent& c = components[k];
      const double v = c.alpha * outlier_weight(weighting, points[i], c.mu, c.sigma) *
                       gaussian_density(points[i], c.mu, c.sigma);
      gamma[k * n + i] = v;
      denom += v;
    }
    for (std::size_t k = 0; k < k_count; ++k) gamma[k * n + i] = denom > 0.0 ? gamma[k * n + i] / denom : 0.0;
  }
  return gamma;
}

std::vector<MixtureComponent> m_step_dense(std::span<const Point2> points, std::span<const double> gamma,
                                           std::size_t components, const GmmConfig& cfg) {
  const std::size_t n = points.size();
  std::size_t active = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t k = 0; k < components; ++k) any = any || gamma[k * n + i] > 0.0;
    active += any ? 1 : 0;
  }
  std::vector<MixtureComponent> out;
  for (std::size_t k = 0; k < components; ++k) {
    double mass = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = gamma[k * n + i];
      if (g == 0.0) continue;
      mass += g;
      sx += g * points[i].x;
      sy += g * points[i].y;
    }
    if (!(mass > 0.0)) continue;
    const Point2 mu{sx / mass, sy / mass};
    double spread = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = gamma[k * n + i];
      if (g != 0.0) spread += g * squared_norm(points[i] - mu);
    }
    const double raw = std::sqrt(spread / mass);
    const double sigma = cfg.mode == FitMode::Robust ? std::min(raw + cfg.epsilon, cfg.sigma_max)
                                                     : std::clamp(raw, cfg.epsilon, cfg.sigma_max);
    out.push_back({mu, sigma, mass / static_cast<double>(active)});
  }
  return out;
}

}  // namespace kprefine::reference
