#pragma once

#include <cmath>
#include <cstdint>

namespace kprefine {

/// Sub-pixel image position. Pixel centers sit at integer coordinates.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

inline double squared_norm(Point2 p) { return p.x * p.x + p.y * p.y; }
inline double distance(Point2 a, Point2 b) { return std::sqrt(squared_norm(a - b)); }

using WarpId = std::int32_t;

/// A detected keypoint expressed in the frame of the image it refers to.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  WarpId warp_id = 0;

  Point2 position() const { return {x, y}; }
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;

  bool contains(Point2 p) const {
    return p.x >= 0.0 && p.y >= 0.0 && p.x < width && p.y < height;
  }
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

}  // namespace kprefine
