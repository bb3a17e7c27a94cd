#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kprefine/geometry.hpp"
#include "kprefine/image.hpp"

namespace kprefine {

/// Per-pixel flag: 1 where the canvas pixel maps back inside the source extent.
struct SupportMask {
  ImageSize size;
  std::vector<std::uint8_t> valid;

  bool operator()(int x, int y) const { return valid[static_cast<std::size_t>(y) * size.width + x] != 0; }
};

struct WarpedView {
  ImageBuffer image;
  AffineTransform to_canvas;  // original frame -> this view's pixel frame
  SupportMask support;
};

/// Bilinear sample with the library's border rule: 0 outside the pixel extent
/// [-0.5, W-0.5] x [-0.5, H-0.5], edge-clamped between the outermost pixel
/// centers and the extent boundary.
inline double sample_bilinear(const ImageBuffer& img, double sx, double sy) {
  const int w = img.width();
  const int h = img.height();
  if (!(sx >= -0.5 && sy >= -0.5 && sx <= w - 0.5 && sy <= h - 0.5)) return 0.0;
  const double cx = sx < 0.0 ? 0.0 : (sx > w - 1 ? w - 1 : sx);
  const double cy = sy < 0.0 ? 0.0 : (sy > h - 1 ? h - 1 : sy);
  const int x0 = static_cast<int>(cx);
  const int y0 = static_cast<int>(cy);
  const int x1 = x0 + 1 < w ? x0 + 1 : x0;
  const int y1 = y0 + 1 < h ? y0 + 1 : y0;
  const double fx = cx - x0;
  const double fy = cy - y0;
  const double top = (1.0 - fx) * img(x0, y0) + fx * img(x1, y0);
  const double bottom = (1.0 - fx) * img(x0, y1) + fx * img(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

/// Renders `img` through `t` on the canvas chosen by plan_canvas (inverse
/// mapping, bilinear). Identity reproduces the input bit-exactly.
ImageBuffer warp_image(const ImageBuffer& img, const AffineTransform& t);

/// Same as warp_image but also returns the canvas transform and support mask.
WarpedView render_warp(const ImageBuffer& img, const AffineTransform& t);

/// i.i.d. N(0, sigma^2) perturbation clamped to [0,1]; deterministic in seed.
ImageBuffer add_gaussian_noise(const ImageBuffer& img, double sigma, std::uint64_t seed);

/// Seed used for the noise of one warp of one image.
std::uint64_t warp_noise_seed(std::uint64_t base_seed, WarpId warp_id);

/// Maps keypoints expressed in the frame of `t` back through invert(t) and
/// drops those outside [0,W) x [0,H) of `bounds`.
std::vector<Keypoint> backproject_keypoints(std::span<const Keypoint> kps, const AffineTransform& t,
                                            ImageSize bounds);

}  // namespace kprefine
