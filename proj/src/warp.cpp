#include "kprefine/warp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kprefine/errors.hpp"

namespace kprefine {

namespace {

void render_rows(const ImageBuffer& src, const AffineTransform& back, ImageBuffer& dst) {
  const int w = dst.width();
  const int h = dst.height();
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point2 s = apply_point(back, {static_cast<double>(x), static_cast<double>(y)});
      dst(x, y) = sample_bilinear(src, s.x, s.y);
    }
  }
}

}  // namespace

WarpedView render_warp(const ImageBuffer& img, const AffineTransform& t) {
  const CanvasPlan plan = plan_canvas(t, img.size());
  const AffineTransform back = invert(plan.to_canvas);

  WarpedView view{ImageBuffer(plan.size.width, plan.size.height), plan.to_canvas, {}};
  render_rows(img, back, view.image);

  view.support.size = plan.size;
  view.support.valid.assign(static_cast<std::size_t>(plan.size.width) * plan.size.height, 0);
  const double max_x = img.width() - 0.5;
  const double max_y = img.height() - 0.5;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < plan.size.height; ++y) {
    for (int x = 0; x < plan.size.width; ++x) {
      const Point2 s = apply_point(back, {static_cast<double>(x), static_cast<double>(y)});
      const bool inside = s.x >= -0.5 && s.y >= -0.5 && s.x <= max_x && s.y <= max_y;
      view.support.valid[static_cast<std::size_t>(y) * plan.size.width + x] = inside ? 1 : 0;
    }
  }
  return view;
}

ImageBuffer warp_image(const ImageBuffer& img, const AffineTransform& t) {
  const CanvasPlan plan = plan_canvas(t, img.size());
  ImageBuffer out(plan.size.width, plan.size.height);
  render_rows(img, invert(plan.to_canvas), out);
  return out;
}

std::uint64_t warp_noise_seed(std::uint64_t base_seed, WarpId warp_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(warp_id)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidConfig("noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  ImageBuffer out = img;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.pixels()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return out;
}

std::vector<Keypoint> backproject_keypoints(std::span<const Keypoint> kps, const AffineTransform& t,
                                            ImageSize bounds) {
  const AffineTransform back = invert(t);
  std::vector<Keypoint> out;
  out.reserve(kps.size());
  for (const Keypoint& kp : kps) {
    const Point2 p = apply_point(back, kp.position());
    if (!bounds.contains(p)) continue;
    out.push_back({p.x, p.y, kp.score, kp.warp_id});
  }
  return out;
}

}  // namespace kprefine
