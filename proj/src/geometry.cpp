#include "kprefine/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kprefine/errors.hpp"

namespace kprefine {

Point2 apply_point(const AffineTransform& t, Point2 p) {
  return {t.a11 * p.x + t.a12 * p.y + t.tx, t.a21 * p.x + t.a22 * p.y + t.ty};
}

AffineTransform invert(const AffineTransform& t) {
  const double det = t.determinant();
  if (!(std::abs(det) >= 1e-12)) {
    throw SingularTransform("affine transform is singular (det = " + std::to_string(det) + ")");
  }
  AffineTransform inv;
  inv.a11 = t.a22 / det;
  inv.a12 = -t.a12 / det;
  inv.a21 = -t.a21 / det;
  inv.a22 = t.a11 / det;
  inv.tx = -(inv.a11 * t.tx + inv.a12 * t.ty);
  inv.ty = -(inv.a21 * t.tx + inv.a22 * t.ty);
  // Keep exact zeros for pure linear maps (avoids -0.0 translations).
  if (t.tx == 0.0 && t.ty == 0.0) {
    inv.tx = 0.0;
    inv.ty = 0.0;
  }
  return inv;
}

AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner) {
  AffineTransform r;
  r.a11 = outer.a11 * inner.a11 + outer.a12 * inner.a21;
  r.a12 = outer.a11 * inner.a12 + outer.a12 * inner.a22;
  r.a21 = outer.a21 * inner.a11 + outer.a22 * inner.a21;
  r.a22 = outer.a21 * inner.a12 + outer.a22 * inner.a22;
  r.tx = outer.a11 * inner.tx + outer.a12 * inner.ty + outer.tx;
  r.ty = outer.a21 * inner.tx + outer.a22 * inner.ty + outer.ty;
  return r;
}

std::string to_string(WarpFamily family) {
  switch (family) {
    case WarpFamily::Identity: return "identity";
    case WarpFamily::Isotropic: return "isotropic";
    case WarpFamily::ScaleX: return "scale_x";
    case WarpFamily::ScaleY: return "scale_y";
    case WarpFamily::ShearX: return "shear_x";
    case WarpFamily::ShearY: return "shear_y";
  }
  return "unknown";
}

namespace {

void check_factors(const std::vector<double>& factors, const char* name) {
  for (double f : factors) {
    if (!std::isfinite(f) || f == 0.0) {
      throw InvalidConfig(std::string("warp factor list '") + name + "' contains a zero or non-finite value");
    }
  }
}

}  // namespace

AugmentationSet build_augmentation_set(const WarpConfig& config) {
  check_factors(config.isotropic_scales, "isotropic_scales");
  check_factors(config.x_scales, "x_scales");
  check_factors(config.y_scales, "y_scales");
  check_factors(config.x_shears, "x_shears");
  check_factors(config.y_shears, "y_shears");

  AugmentationSet set;
  auto push = [&set](WarpFamily family, double factor, const AffineTransform& t) {
    set.entries.push_back({static_cast<WarpId>(set.entries.size()), family, factor, t});
  };

  push(WarpFamily::Identity, 1.0, AffineTransform::identity());
  for (double s : config.isotropic_scales) push(WarpFamily::Isotropic, s, AffineTransform::scaling(s, s));
  for (double s : config.x_scales) push(WarpFamily::ScaleX, s, AffineTransform::scaling(s, 1.0));
  for (double s : config.y_scales) push(WarpFamily::ScaleY, s, AffineTransform::scaling(1.0, s));
  for (double s : config.x_shears) push(WarpFamily::ShearX, s, AffineTransform::shear_x(s));
  for (double s : config.y_shears) push(WarpFamily::ShearY, s, AffineTransform::shear_y(s));
  return set;
}

CanvasPlan plan_canvas(const AffineTransform& t, ImageSize source) {
  const double x0 = -0.5, y0 = -0.5;
  const double x1 = source.width - 0.5, y1 = source.height - 0.5;
  const Point2 corners[4] = {
      apply_point(t, {x0, y0}), apply_point(t, {x1, y0}),
      apply_point(t, {x0, y1}), apply_point(t, {x1, y1})};

  double min_x = std::numeric_limits<double>::infinity();
  double min_y = min_x;
  double max_x = -min_x;
  double max_y = -min_x;
  for (const Point2& c : corners) {
    min_x = std::min(min_x, c.x);
    min_y = std::min(min_y, c.y);
    max_x = std::max(max_x, c.x);
    max_y = std::max(max_y, c.y);
  }

  CanvasPlan plan;
  // Shift so the box starts at the canvas extent origin (-0.5, -0.5).
  const double shift_x = -0.5 - min_x;
  const double shift_y = -0.5 - min_y;
  plan.to_canvas = t;
  plan.to_canvas.tx += shift_x;
  plan.to_canvas.ty += shift_y;
  // Snap sub-ulp shifts so exact identity stays exact.
  if (std::abs(plan.to_canvas.tx) < 1e-12) plan.to_canvas.tx = 0.0;
  if (std::abs(plan.to_canvas.ty) < 1e-12) plan.to_canvas.ty = 0.0;

  const double eps = 1e-9;
  plan.size.width = std::max(1, static_cast<int>(std::ceil(max_x - min_x - eps)));
  plan.size.height = std::max(1, static_cast<int>(std::ceil(max_y - min_y - eps)));
  return plan;
}

}  // namespace kprefine
