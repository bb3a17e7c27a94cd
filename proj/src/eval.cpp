#include "kprefine/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kprefine/errors.hpp"

namespace kprefine {

Homography::Homography(const std::array<double, 9>& m) : m_(m) {
  if (m_[8] == 0.0 || !std::isfinite(m_[8])) throw SingularTransform("homography has zero bottom-right entry");
  const double s = m_[8];
  for (double& v : m_) v /= s;
  const double det = determinant();
  if (!(std::abs(det) > 1e-12)) throw SingularTransform("homography is singular");
}

double Homography::determinant() const {
  const auto& a = m_;
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6]);
}

Point2 Homography::apply(Point2 p) const {
  const auto& a = m_;
  const double w = a[6] * p.x + a[7] * p.y + a[8];
  return {(a[0] * p.x + a[1] * p.y + a[2]) / w, (a[3] * p.x + a[4] * p.y + a[5]) / w};
}

Homography Homography::inverse() const {
  const auto& a = m_;
  const double det = determinant();
  std::array<double, 9> inv{
      (a[4] * a[8] - a[5] * a[7]) / det, (a[2] * a[7] - a[1] * a[8]) / det, (a[1] * a[5] - a[2] * a[4]) / det,
      (a[5] * a[6] - a[3] * a[8]) / det, (a[0] * a[8] - a[2] * a[6]) / det, (a[2] * a[3] - a[0] * a[5]) / det,
      (a[3] * a[7] - a[4] * a[6]) / det, (a[1] * a[6] - a[0] * a[7]) / det, (a[0] * a[4] - a[1] * a[3]) / det};
  return Homography(inv);
}

Homography load_homography(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open homography file " + path.string());
  std::array<double, 9> m{};
  for (std::size_t i = 0; i < 9; ++i) {
    if (!(in >> m[i])) throw ParseError(path.string() + ": expected 9 numbers", 1 + i / 3);
  }
  std::string rest;
  if (in >> rest) throw ParseError(path.string() + ": trailing content after 9 numbers", 4);
  return Homography(m);
}

namespace {

struct Projected {
  std::vector<Point2> a_in_b;   // H a_i
  std::vector<Point2> b_in_a;   // H^-1 b_j
  std::vector<std::size_t> a_overlap;
  std::vector<std::size_t> b_overlap;
};

Projected project(const PairView& a, const PairView& b, const Homography& h) {
  const Homography inv = h.inverse();
  Projected p;
  p.a_in_b.reserve(a.points.size());
  p.b_in_a.reserve(b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    p.a_in_b.push_back(h.apply(a.points[i]));
    if (b.size.contains(p.a_in_b.back())) p.a_overlap.push_back(i);
  }
  for (std::size_t j = 0; j < b.points.size(); ++j) {
    p.b_in_a.push_back(inv.apply(b.points[j]));
    if (a.size.contains(p.b_in_a.back())) p.b_overlap.push_back(j);
  }
  return p;
}

// Nearest neighbour of each query among targets (lowest index wins ties).
struct Nearest {
  std::size_t index = static_cast<std::size_t>(-1);
  double distance = std::numeric_limits<double>::infinity();
};

std::vector<Nearest> nearest_of(std::span<const std::size_t> queries, std::span<const Point2> query_pos,
                                std::span<const std::size_t> targets, std::span<const Point2> target_pos) {
  std::vector<Nearest> out(queries.size());
#pragma omp parallel for schedule(static)
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const Point2 x = query_pos[queries[q]];
    Nearest best;
    for (std::size_t t : targets) {
      const double d = distance(x, target_pos[t]);
      if (d < best.distance) best = {t, d};
    }
    out[q] = best;
  }
  return out;
}

std::optional<double> ratio(double num, double den) {
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

// Mutual-NN count among `queries` vs `targets`, with both sides measured in
// the frame where `query_pos` and `target_pos` live.
std::vector<double> mnn_distances(std::span<const std::size_t> queries, std::span<const Point2> query_pos,
                                  std::span<const std::size_t> targets, std::span<const Point2> target_pos) {
  const auto forward = nearest_of(queries, query_pos, targets, target_pos);
  const auto backward = nearest_of(targets, target_pos, queries, query_pos);
  std::vector<std::size_t> slot_of_target(target_pos.size(), static_cast<std::size_t>(-1));
  for (std::size_t s = 0; s < targets.size(); ++s) slot_of_target[targets[s]] = s;

  std::vector<double> out;  // distances of mutual pairs
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (forward[q].index == static_cast<std::size_t>(-1)) continue;
    const Nearest& back = backward[slot_of_target[forward[q].index]];
    if (back.index == queries[q]) out.push_back(forward[q].distance);
  }
  return out;
}

}  // namespace

OverlapCounts overlap_counts(const PairView& a, const PairView& b, const Homography& h) {
  const Projected p = project(a, b, h);
  return {p.a_overlap.size(), p.b_overlap.size()};
}

MetricCurve repeatability(const PairView& a, const PairView& b, const Homography& h,
                          std::span<const double> thresholds) {
  const Projected p = project(a, b, h);
  const auto a_near = nearest_of(p.a_overlap, p.a_in_b, p.b_overlap, b.points);
  const auto b_near = nearest_of(p.b_overlap, p.b_in_a, p.a_overlap, a.points);
  const double den = static_cast<double>(p.a_overlap.size() + p.b_overlap.size());

  MetricCurve curve;
  for (double t : thresholds) {
    std::size_t hits = 0;
    for (const auto& n : a_near) hits += n.distance <= t ? 1 : 0;
    for (const auto& n : b_near) hits += n.distance <= t ? 1 : 0;
    curve[t] = ratio(static_cast<double>(hits), den);
  }
  return curve;
}

MetricCurve repeatability_mnn(const PairView& a, const PairView& b, const Homography& h,
                              std::span<const double> thresholds) {
  const Projected p = project(a, b, h);
  const auto a_side = mnn_distances(p.a_overlap, p.a_in_b, p.b_overlap, b.points);
  const auto b_side = mnn_distances(p.b_overlap, p.b_in_a, p.a_overlap, a.points);
  const double den = static_cast<double>(p.a_overlap.size() + p.b_overlap.size());

  MetricCurve curve;
  for (double t : thresholds) {
    std::size_t hits = 0;
    for (double d : a_side) hits += d <= t ? 1 : 0;
    for (double d : b_side) hits += d <= t ? 1 : 0;
    curve[t] = ratio(static_cast<double>(hits), den);
  }
  return curve;
}

namespace {

std::vector<double> match_errors(std::span<const Match> matches, std::span<const Point2> a,
                                 std::span<const Point2> b, const Homography& h) {
  std::vector<double> errors;
  errors.reserve(matches.size());
  for (const auto& [i, j] : matches) {
    if (i >= a.size() || j >= b.size()) {
      throw IndexOutOfRange("match (" + std::to_string(i) + ", " + std::to_string(j) + ") is out of range");
    }
    errors.push_back(distance(h.apply(a[i]), b[j]));
  }
  return errors;
}

}  // namespace

MetricCurve mma(std::span<const Match> matches, std::span<const Point2> a, std::span<const Point2> b,
                const Homography& h, std::span<const double> thresholds) {
  const auto errors = match_errors(matches, a, b, h);
  MetricCurve curve;
  for (double t : thresholds) {
    const auto correct = std::count_if(errors.begin(), errors.end(), [t](double e) { return e < t; });
    curve[t] = ratio(static_cast<double>(correct), static_cast<double>(errors.size()));
  }
  return curve;
}

MetricCurve matching_score(std::span<const Match> matches, const PairView& a, const PairView& b,
                           const Homography& h, std::span<const double> thresholds) {
  const auto errors = match_errors(matches, a.points, b.points, h);
  const OverlapCounts overlap = overlap_counts(a, b, h);
  const double den = 0.5 * static_cast<double>(overlap.a + overlap.b);
  MetricCurve curve;
  for (double t : thresholds) {
    const auto correct = std::count_if(errors.begin(), errors.end(), [t](double e) { return e < t; });
    curve[t] = ratio(static_cast<double>(correct), den);
  }
  return curve;
}

std::vector<Match> mutual_nn_matches(std::span<const std::vector<float>> desc_a,
                                     std::span<const std::vector<float>> desc_b) {
  const std::size_t dim = !desc_a.empty() ? desc_a.front().size() : (!desc_b.empty() ? desc_b.front().size() : 0);
  for (auto set : {desc_a, desc_b}) {
    for (const auto& d : set) {
      if (d.size() != dim) throw InvalidConfig("descriptor dimensions differ");
    }
  }
  auto sq = [](const std::vector<float>& u, const std::vector<float>& v) {
    double s = 0.0;
    for (std::size_t d = 0; d < u.size(); ++d) {
      const double diff = static_cast<double>(u[d]) - v[d];
      s += diff * diff;
    }
    return s;
  };
  auto best_of = [&sq](std::span<const std::vector<float>> from, std::span<const std::vector<float>> to) {
    std::vector<std::size_t> best(from.size(), static_cast<std::size_t>(-1));
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < from.size(); ++i) {
      double d_best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < to.size(); ++j) {
        const double d = sq(from[i], to[j]);
        if (d < d_best) {
          d_best = d;
          best[i] = j;
        }
      }
    }
    return best;
  };
  const auto ab = best_of(desc_a, desc_b);
  const auto ba = best_of(desc_b, desc_a);
  std::vector<Match> matches;
  for (std::size_t i = 0; i < ab.size(); ++i) {
    if (ab[i] != static_cast<std::size_t>(-1) && ba[ab[i]] == i) matches.emplace_back(i, ab[i]);
  }
  return matches;
}

MetricReport evaluate_pair(const PairView& a, const PairView& b, const Homography& h,
                           std::span<const double> thresholds, const std::optional<std::vector<Match>>& matches) {
  MetricReport report;
  report.overlap = overlap_counts(a, b, h);
  report.repeatability = repeatability(a, b, h, thresholds);
  report.repeatability_mnn = repeatability_mnn(a, b, h, thresholds);
  if (matches) {
    report.proposed_matches = matches->size();
    report.mma = mma(*matches, a.points, b.points, h, thresholds);
    report.matching_score = matching_score(*matches, a, b, h, thresholds);
  }
  return report;
}

// --- histograms -----------------------------------------------------------------

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (std::size_t c : counts) s += c;
  return s;
}

namespace {

std::string format_value(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Histogram robustness_histogram(std::span<const RefinedKeypoint> kps, double max_deviation, const HistogramSpec& spec) {
  Histogram hist;
  hist.filter = "deviation<=" + format_value(max_deviation);
  hist.filter_value = max_deviation;
  const int bins = spec.max_robustness + 1;
  for (int b = 0; b < bins; ++b) hist.lower_edges.push_back(b);
  hist.counts.assign(bins, 0);
  for (const auto& kp : kps) {
    if (!(kp.deviation <= max_deviation)) continue;
    const int bin = std::clamp(static_cast<int>(std::floor(kp.robustness)), 0, bins - 1);
    ++hist.counts[bin];
  }
  return hist;
}

Histogram deviation_histogram(std::span<const RefinedKeypoint> kps, double min_robustness, const HistogramSpec& spec) {
  Histogram hist;
  hist.filter = "robustness>=" + format_value(min_robustness);
  hist.filter_value = min_robustness;
  const int bins = static_cast<int>(std::ceil(spec.deviation_max / spec.deviation_bin_width)) + 1;
  for (int b = 0; b < bins; ++b) hist.lower_edges.push_back(b * spec.deviation_bin_width);
  hist.counts.assign(bins, 0);
  for (const auto& kp : kps) {
    if (!(kp.robustness >= min_robustness)) continue;
    const int bin = std::clamp(static_cast<int>(std::floor(kp.deviation / spec.deviation_bin_width)), 0, bins - 1);
    ++hist.counts[bin];
  }
  return hist;
}

ScoreHistograms score_histograms(std::span<const RefinedKeypoint> kps, const HistogramSpec& spec) {
  ScoreHistograms out;
  for (double cap : spec.deviation_caps) out.robustness.push_back(robustness_histogram(kps, cap, spec));
  for (double floor : spec.robustness_floors) out.deviation.push_back(deviation_histogram(kps, floor, spec));
  return out;
}

}  // namespace kprefine
