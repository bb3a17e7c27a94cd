#pragma once

#include <array>
#include <string>
#include <vector>

#include "kprefine/types.hpp"

namespace kprefine {

/// 2-D affine map  p' = A p + t  with A = [[a11, a12], [a21, a22]].
struct AffineTransform {
  double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0;
  double tx = 0.0, ty = 0.0;

  static AffineTransform identity() { return {}; }
  static AffineTransform scaling(double sx, double sy) { return {sx, 0.0, 0.0, sy, 0.0, 0.0}; }
  static AffineTransform shear_x(double s) { return {1.0, s, 0.0, 1.0, 0.0, 0.0}; }
  static AffineTransform shear_y(double s) { return {1.0, 0.0, s, 1.0, 0.0, 0.0}; }
  static AffineTransform translation(double x, double y) { return {1.0, 0.0, 0.0, 1.0, x, y}; }

  double determinant() const { return a11 * a22 - a12 * a21; }

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

Point2 apply_point(const AffineTransform& t, Point2 p);

/// Throws SingularTransform when |det| < 1e-12.
AffineTransform invert(const AffineTransform& t);

/// Returns `outer ∘ inner`, i.e. the map p -> outer(inner(p)).
AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner);

enum class WarpFamily { Identity, Isotropic, ScaleX, ScaleY, ShearX, ShearY };

std::string to_string(WarpFamily family);

/// Factor lists for the fixed augmentation set. Defaults reproduce the
/// 21-view set (identity + 4 isotropic + 4 x-scale + 4 y-scale + 4 x-shear +
/// 4 y-shear).
struct WarpConfig {
  std::vector<double> isotropic_scales{1.5, 1.25, 0.75, 0.5};
  std::vector<double> x_scales{1.5, 1.25, 0.75, 0.5};
  std::vector<double> y_scales{1.5, 1.25, 0.75, 0.5};
  std::vector<double> x_shears{0.2, -0.2, 0.6, -0.6};
  std::vector<double> y_shears{0.2, -0.2, 0.6, -0.6};
};

struct AugmentationEntry {
  WarpId id = 0;
  WarpFamily family = WarpFamily::Identity;
  double factor = 1.0;
  AffineTransform transform;
};

/// Ordered warp list; entry 0 is always the identity. The transforms are
/// linear (origin-anchored); `plan_canvas` places them on an output canvas.
struct AugmentationSet {
  std::vector<AugmentationEntry> entries;

  std::size_t size() const { return entries.size(); }
  const AugmentationEntry& operator[](std::size_t i) const { return entries[i]; }
};

/// Throws InvalidConfig on a zero (or non-finite) factor.
AugmentationSet build_augmentation_set(const WarpConfig& config);

/// Output canvas for rendering an image of `source` size through `t`.
struct CanvasPlan {
  AffineTransform to_canvas;  // source pixel coords -> canvas pixel coords
  ImageSize size;
};

/// Adds the translation that moves the bounding box of the warped image
/// extent [-0.5, W-0.5] x [-0.5, H-0.5] to the canvas origin, and sizes the
/// canvas to that box. Pure translation-free identity stays identity.
CanvasPlan plan_canvas(const AffineTransform& t, ImageSize source);

}  // namespace kprefine
