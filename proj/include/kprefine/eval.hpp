#pragma once

#include <array>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kprefine/gmm.hpp"
#include "kprefine/types.hpp"

namespace kprefine {

/// Planar homography mapping image-A pixels to image-B pixels, stored
/// row-major and normalized so that the bottom-right entry is 1.
class Homography {
 public:
  Homography() = default;
  /// Throws SingularTransform if |det| <= 1e-12 or m[8] == 0.
  explicit Homography(const std::array<double, 9>& m);

  static Homography identity() { return Homography(); }

  Point2 apply(Point2 p) const;
  Homography inverse() const;
  double determinant() const;
  const std::array<double, 9>& matrix() const { return m_; }

 private:
  std::array<double, 9> m_{1, 0, 0, 0, 1, 0, 0, 0, 1};
};

/// 9 whitespace-separated numbers, row-major (HPatches H_1_k files).
Homography load_homography(const std::filesystem::path& path);

/// Threshold (px) -> ratio; nullopt when the ratio is undefined (empty
/// overlap or no proposed matches).
using MetricCurve = std::map<double, std::optional<double>>;

struct PairView {
  std::span<const Point2> points;
  ImageSize size;
};

using Match = std::pair<std::size_t, std::size_t>;

struct OverlapCounts {
  std::size_t a = 0;  // A keypoints whose projection lands inside B
  std::size_t b = 0;  // B keypoints whose back-projection lands inside A
};

OverlapCounts overlap_counts(const PairView& a, const PairView& b, const Homography& h);

/// (#A repeatable + #B repeatable) / (#A in overlap + #B in overlap), where a
/// keypoint is repeatable if its projection lies within t (<= t) of an
/// overlapping keypoint of the other image.
MetricCurve repeatability(const PairView& a, const PairView& b, const Homography& h,
                          std::span<const double> thresholds);

/// As repeatability, but a keypoint also has to form a mutual-nearest-neighbour
/// pair with its partner (A-side measured in B's frame, B-side in A's frame).
MetricCurve repeatability_mnn(const PairView& a, const PairView& b, const Homography& h,
                              std::span<const double> thresholds);

/// correct / proposed, with correct meaning |H a_i - b_j| < t.
/// Throws IndexOutOfRange.
MetricCurve mma(std::span<const Match> matches, std::span<const Point2> a, std::span<const Point2> b,
                const Homography& h, std::span<const double> thresholds);

/// correct / mean(#A in overlap, #B in overlap).
MetricCurve matching_score(std::span<const Match> matches, const PairView& a, const PairView& b,
                           const Homography& h, std::span<const double> thresholds);

/// Plain Euclidean mutual nearest neighbours between descriptor sets.
std::vector<Match> mutual_nn_matches(std::span<const std::vector<float>> desc_a,
                                     std::span<const std::vector<float>> desc_b);

struct MetricReport {
  MetricCurve repeatability;
  MetricCurve repeatability_mnn;
  MetricCurve mma;
  MetricCurve matching_score;
  OverlapCounts overlap;
  std::size_t proposed_matches = 0;
};

/// All four metrics for one pair; MMA/MS are only filled when `matches` is set.
MetricReport evaluate_pair(const PairView& a, const PairView& b, const Homography& h,
                           std::span<const double> thresholds,
                           const std::optional<std::vector<Match>>& matches = std::nullopt);

// --- score statistics ---------------------------------------------------------

struct Histogram {
  std::string filter;                 // e.g. "deviation<=1" or "robustness>=5"
  double filter_value = 0.0;
  std::vector<double> lower_edges;    // lower edge of each bin
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

struct HistogramSpec {
  std::vector<double> deviation_caps{1.0, 2.0, 3.0, std::numeric_limits<double>::infinity()};
  std::vector<double> robustness_floors{5.0, 10.0, 15.0, 20.0};
  int max_robustness = 21;             // integer bins 0..max (last bin collects above)
  double deviation_bin_width = 0.5;    // px
  double deviation_max = 10.0;         // px, last bin collects above
};

/// Robustness histogram of keypoints with deviation <= cap.
Histogram robustness_histogram(std::span<const RefinedKeypoint> kps, double max_deviation,
                               const HistogramSpec& spec = {});

/// Deviation histogram of keypoints with robustness >= floor.
Histogram deviation_histogram(std::span<const RefinedKeypoint> kps, double min_robustness,
                              const HistogramSpec& spec = {});

struct ScoreHistograms {
  std::vector<Histogram> robustness;  // one per deviation cap
  std::vector<Histogram> deviation;   // one per robustness floor
};

ScoreHistograms score_histograms(std::span<const RefinedKeypoint> kps, const HistogramSpec& spec = {});

}  // namespace kprefine
