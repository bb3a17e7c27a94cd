#include "kprefine/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "kprefine/errors.hpp"

namespace kprefine {

void GmmConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidConfig("gmm.epsilon must be > 0");
  if (!(init_sigma > 0.0)) throw InvalidConfig("gmm.init_sigma must be > 0");
  if (!(init_sigma <= sigma_max)) throw InvalidConfig("gmm.init_sigma must not exceed gmm.sigma_max");
  if (!(epsilon <= sigma_max)) throw InvalidConfig("gmm.epsilon must not exceed gmm.sigma_max");
  if (!(nu > 0.0)) throw InvalidConfig("gmm.nu must be > 0");
  if (phase1_iters < 0 || phase2_iters < 0) throw InvalidConfig("gmm iteration counts must be >= 0");
  if (!(convergence_tol >= 0.0)) throw InvalidConfig("gmm.convergence_tol must be >= 0");
}

double gaussian_density(Point2 x, Point2 mu, double sigma) {
  const double s2 = sigma * sigma;
  return std::exp(-squared_norm(x - mu) / s2) / (2.0 * std::numbers::pi * s2);
}

double weight_w1(Point2 x, Point2 mu, double sigma) {
  const double d = distance(x, mu);
  if (d < 3.0 * sigma) return 1.0;
  const double excess = d - 3.0 * sigma;
  return std::exp(-excess * excess / (2.0 * sigma * sigma));
}

double weight_w2(Point2 x, Point2 mu, double sigma) { return distance(x, mu) < 3.0 * sigma ? 1.0 : 0.0; }

double outlier_weight(Weighting w, Point2 x, Point2 mu, double sigma) {
  switch (w) {
    case Weighting::Uniform: return 1.0;
    case Weighting::W1: return weight_w1(x, mu, sigma);
    case Weighting::W2: return weight_w2(x, mu, sigma);
  }
  return 1.0;
}

// --- Responsibilities -------------------------------------------------------

Responsibilities::Responsibilities(std::size_t components, std::size_t points)
    : components_(components), points_(points) {
  offsets_.reserve(points + 1);
}

double Responsibilities::operator()(std::size_t k, std::size_t i) const {
  for (const Entry& e : column(i)) {
    if (e.component == k) return e.gamma;
  }
  return 0.0;
}

double Responsibilities::column_sum(std::size_t i) const {
  double s = 0.0;
  for (const Entry& e : column(i)) s += e.gamma;
  return s;
}

std::size_t Responsibilities::active_points() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < points_; ++i) n += inert(i) ? 0 : 1;
  return n;
}

std::vector<double> Responsibilities::to_dense() const {
  std::vector<double> dense(components_ * points_, 0.0);
  for (std::size_t i = 0; i < points_; ++i) {
    for (const Entry& e : column(i)) dense[e.component * points_ + i] = e.gamma;
  }
  return dense;
}

void Responsibilities::append_column(std::span<const Entry> entries) {
  entries_.insert(entries_.end(), entries.begin(), entries.end());
  offsets_.push_back(entries_.size());
}

namespace {

// exp(-r) is exactly 0.0 in double precision for r > ~745.2.
constexpr double kUnderflowRatio = 750.0;

/// Uniform bucket grid over component means for radius queries.
class ComponentGrid {
 public:
  ComponentGrid(std::span<const MixtureComponent> comps, double cell) : cell_(std::max(cell, 1e-3)) {
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    for (const auto& c : comps) {
      min_x = std::min(min_x, c.mu.x);
      min_y = std::min(min_y, c.mu.y);
      max_x = std::max(max_x, c.mu.x);
      max_y = std::max(max_y, c.mu.y);
    }
    // Bound the cell count; a coarser grid still satisfies the radius query.
    cell_ = std::max(cell_, std::max(max_x - min_x, max_y - min_y) / 512.0);
    x0_ = min_x;
    y0_ = min_y;
    nx_ = static_cast<long long>(std::floor((max_x - min_x) / cell_)) + 1;
    ny_ = static_cast<long long>(std::floor((max_y - min_y) / cell_)) + 1;
    start_.assign(static_cast<std::size_t>(nx_ * ny_) + 1, 0);
    std::vector<std::size_t> cell_of(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
      cell_of[k] = cell_index(cell_x(comps[k].mu.x), cell_y(comps[k].mu.y));
      ++start_[cell_of[k] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    ids_.resize(comps.size());
    std::vector<std::size_t> cursor(start_.begin(), start_.end() - 1);
    for (std::size_t k = 0; k < comps.size(); ++k) ids_[cursor[cell_of[k]]++] = static_cast<std::uint32_t>(k);
  }

  /// Appends ids of components in cells within one cell of p (unsorted).
  void gather(Point2 p, std::vector<std::uint32_t>& out) const {
    const long long cx = static_cast<long long>(std::floor((p.x - x0_) / cell_));
    const long long cy = static_cast<long long>(std::floor((p.y - y0_) / cell_));
    for (long long y = std::max(0LL, cy - 1); y <= std::min(ny_ - 1, cy + 1); ++y) {
      for (long long x = std::max(0LL, cx - 1); x <= std::min(nx_ - 1, cx + 1); ++x) {
        const std::size_t c = cell_index(x, y);
        out.insert(out.end(), ids_.begin() + static_cast<std::ptrdiff_t>(start_[c]),
                   ids_.begin() + static_cast<std::ptrdiff_t>(start_[c + 1]));
      }
    }
  }

 private:
  long long cell_x(double x) const { return std::clamp(static_cast<long long>(std::floor((x - x0_) / cell_)), 0LL, nx_ - 1); }
  long long cell_y(double y) const { return std::clamp(static_cast<long long>(std::floor((y - y0_) / cell_)), 0LL, ny_ - 1); }
  std::size_t cell_index(long long x, long long y) const { return static_cast<std::size_t>(y * nx_ + x); }

  double cell_;
  double x0_ = 0.0, y0_ = 0.0;
  long long nx_ = 1, ny_ = 1;
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> ids_;
};

double cutoff_ratio(Weighting w) { return w == Weighting::W2 ? 9.0 : kUnderflowRatio; }

}  // namespace

Responsibilities e_step(std::span<const Point2> points, std::span<const MixtureComponent> components,
                        Weighting weighting) {
  const std::size_t n = points.size();
  Responsibilities resp(components.size(), n);
  if (components.empty()) {
    for (std::size_t i = 0; i < n; ++i) resp.append_column({});
    return resp;
  }

  double max_sigma = 0.0;
  for (const auto& c : components) max_sigma = std::max(max_sigma, c.sigma);
  // Candidate radius with a small margin; exact gating happens per pair.
  const double ratio = cutoff_ratio(weighting) * (1.0 + 1e-6);
  const double radius = std::sqrt(ratio) * max_sigma;
  const ComponentGrid grid(components, radius);

  std::vector<std::vector<Responsibilities::Entry>> columns(n);
#pragma omp parallel
  {
    std::vector<std::uint32_t> candidates;
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 x = points[i];
      candidates.clear();
      grid.gather(x, candidates);
      std::sort(candidates.begin(), candidates.end());
      auto& col = columns[i];
      double denom = 0.0;
      for (std::uint32_t k : candidates) {
        const MixtureComponent& c = components[k];
        if (!(squared_norm(x - c.mu) < ratio * c.sigma * c.sigma)) continue;
        const double v = c.alpha * outlier_weight(weighting, x, c.mu, c.sigma) * gaussian_density(x, c.mu, c.sigma);
        if (v > 0.0) {
          col.push_back({k, v});
          denom += v;
        }
      }
      if (denom > 0.0) {
        for (auto& e : col) e.gamma /= denom;
      } else {
        col.clear();
      }
    }
  }
  for (const auto& col : columns) resp.append_column(col);
  return resp;
}

MStepResult m_step(std::span<const Point2> points, const Responsibilities& resp, const GmmConfig& cfg) {
  const std::size_t n = points.size();
  const std::size_t k_count = resp.components();

  // Transpose to per-component lists in ascending point order.
  std::vector<std::size_t> start(k_count + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : resp.column(i)) ++start[e.component + 1];
  }
  for (std::size_t k = 1; k <= k_count; ++k) start[k] += start[k - 1];
  std::vector<std::pair<std::uint32_t, double>> by_component(start.back());
  {
    std::vector<std::size_t> cursor(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& e : resp.column(i)) by_component[cursor[e.component]++] = {static_cast<std::uint32_t>(i), e.gamma};
    }
  }

  const double active = static_cast<double>(resp.active_points());
  std::vector<MixtureComponent> updated(k_count);
  std::vector<std::uint8_t> alive(k_count, 0);

#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < k_count; ++k) {
    double mass = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t j = start[k]; j < start[k + 1]; ++j) {
      const auto [i, g] = by_component[j];
      mass += g;
      sx += g * points[i].x;
      sy += g * points[i].y;
    }
    if (!(mass > 0.0)) continue;
    const Point2 mu{sx / mass, sy / mass};
    double spread = 0.0;
    for (std::size_t j = start[k]; j < start[k + 1]; ++j) {
      const auto [i, g] = by_component[j];
      spread += g * squared_norm(points[i] - mu);
    }
    const double raw_sigma = std::sqrt(spread / mass);
    double sigma = 0.0;
    if (cfg.mode == FitMode::Robust) {
      sigma = std::min(raw_sigma + cfg.epsilon, cfg.sigma_max);
    } else {
      sigma = std::clamp(raw_sigma, cfg.epsilon, cfg.sigma_max);
    }
    updated[k] = {mu, sigma, mass / active};
    alive[k] = 1;
  }

  MStepResult result;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (!alive[k]) continue;
    result.components.push_back(updated[k]);
    result.kept.push_back(k);
  }
  return result;
}

std::vector<std::size_t> concentric_survivors(std::span<const MixtureComponent> components, double nu) {
  const std::size_t k_count = components.size();
  std::vector<std::size_t> survivors;
  if (k_count == 0) return survivors;

  const ComponentGrid grid(components, nu);
  std::vector<std::uint32_t> near;
  const double nu2 = nu * nu;
  for (std::size_t k = 0; k < k_count; ++k) {
    near.clear();
    grid.gather(components[k].mu, near);
    bool discard = false;
    for (std::uint32_t l : near) {
      if (l > k && squared_norm(components[k].mu - components[l].mu) < nu2) {
        discard = true;
        break;
      }
    }
    if (!discard) survivors.push_back(k);
  }
  return survivors;
}

namespace {

std::vector<MixtureComponent> select_and_renormalize(std::span<const MixtureComponent> components,
                                                     std::span<const std::size_t> keep) {
  std::vector<MixtureComponent> out;
  out.reserve(keep.size());
  double total = 0.0;
  for (std::size_t k : keep) {
    out.push_back(components[k]);
    total += components[k].alpha;
  }
  if (total > 0.0) {
    for (auto& c : out) c.alpha /= total;
  }
  return out;
}

}  // namespace

std::vector<MixtureComponent> drop_concentric(std::span<const MixtureComponent> components, double nu) {
  const auto keep = concentric_survivors(components, nu);
  return select_and_renormalize(components, keep);
}

std::vector<MixtureComponent> fit(std::span<const Point2> points, std::span<const Point2> seeds,
                                  const GmmConfig& cfg, const FitObserver& observer) {
  cfg.validate();
  if (seeds.empty()) throw EmptySeeds("gmm fit needs at least one seed");
  if (points.empty()) throw EmptyPointSet("gmm fit needs at least one point");

  std::vector<MixtureComponent> comps;
  comps.reserve(seeds.size());
  const double uniform = 1.0 / static_cast<double>(seeds.size());
  for (Point2 s : seeds) comps.push_back({s, cfg.init_sigma, uniform});

  const bool robust = cfg.mode == FitMode::Robust;

  // One EM iteration; returns the largest mean displacement among survivors.
  auto iterate = [&](Weighting weighting) {
    const Responsibilities resp = e_step(points, comps, weighting);
    MStepResult m = m_step(points, resp, cfg);
    std::vector<std::size_t> origin = m.kept;
    std::vector<MixtureComponent> next = std::move(m.components);
    if (robust) {
      const auto keep = concentric_survivors(next, cfg.nu);
      std::vector<std::size_t> kept_origin;
      kept_origin.reserve(keep.size());
      for (std::size_t j : keep) kept_origin.push_back(origin[j]);
      next = select_and_renormalize(next, keep);
      origin = std::move(kept_origin);
    }
    if (next.empty()) throw AllComponentsDropped("every mixture component was dropped during the fit");
    double shift = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) shift = std::max(shift, distance(next[j].mu, comps[origin[j]].mu));
    comps = std::move(next);
    return shift;
  };

  const Weighting phase1 = robust ? Weighting::W1 : Weighting::Uniform;
  const Weighting phase2 = robust ? Weighting::W2 : Weighting::Uniform;

  for (int it = 0; it < cfg.phase1_iters; ++it) {
    const double shift = iterate(phase1);
    if (observer) observer({1, it, shift, &comps});
    if (shift < cfg.convergence_tol) break;
  }
  for (int it = 0; it < cfg.phase2_iters; ++it) {
    const double shift = iterate(phase2);
    if (observer) observer({2, it, shift, &comps});
  }
  return comps;
}

std::vector<RefinedKeypoint> score_components(std::span<const Keypoint> points,
                                              std::span<const MixtureComponent> components,
                                              const GmmConfig& cfg) {
  std::vector<RefinedKeypoint> out(components.size());
  if (components.empty()) return out;

  double max_sigma = 0.0;
  for (const auto& c : components) max_sigma = std::max(max_sigma, c.sigma);
  std::vector<MixtureComponent> as_components;
  as_components.reserve(points.size());
  for (const Keypoint& kp : points) as_components.push_back({kp.position(), 0.0, 0.0});
  const double radius = 3.0 * max_sigma * (1.0 + 1e-9);
  const ComponentGrid point_grid(as_components, radius);

#pragma omp parallel
  {
    std::vector<std::uint32_t> near;
#pragma omp for schedule(static)
    for (std::size_t k = 0; k < components.size(); ++k) {
      const MixtureComponent& c = components[k];
      RefinedKeypoint& r = out[k];
      r.position = c.mu;
      r.sigma = c.sigma;
      r.alpha = c.alpha;
      r.deviation = 6.0 * c.sigma;

      near.clear();
      if (!points.empty()) point_grid.gather(c.mu, near);
      std::sort(near.begin(), near.end());
      std::vector<WarpId> warps;
      for (std::uint32_t i : near) {
        const Keypoint& kp = points[i];
        if (weight_w2(kp.position(), c.mu, c.sigma) == 0.0) continue;
        r.support.push_back({kp.warp_id, kp.position()});
        warps.push_back(kp.warp_id);
      }
      // Extra members from an already represented warp contribute nothing.
      std::sort(warps.begin(), warps.end());
      const auto distinct = std::unique(warps.begin(), warps.end()) - warps.begin();
      r.robustness = cfg.dedupe_warps ? static_cast<double>(distinct) : static_cast<double>(r.support.size());
    }
  }
  return out;
}

RankingPolicy parse_ranking_policy(const std::string& name) {
  if (name == "robustness_then_deviation" || name == "robustness") return RankingPolicy::RobustnessThenDeviation;
  if (name == "deviation_then_robustness" || name == "deviation") return RankingPolicy::DeviationThenRobustness;
  throw InvalidConfig("unknown ranking policy '" + name + "'");
}

std::string to_string(RankingPolicy policy) {
  return policy == RankingPolicy::RobustnessThenDeviation ? "robustness_then_deviation" : "deviation_then_robustness";
}

std::vector<RefinedKeypoint> rank_refined(std::span<const RefinedKeypoint> kps, RankingPolicy policy,
                                          std::size_t n) {
  std::vector<RefinedKeypoint> out(kps.begin(), kps.end());
  std::stable_sort(out.begin(), out.end(), [policy](const RefinedKeypoint& a, const RefinedKeypoint& b) {
    if (policy == RankingPolicy::RobustnessThenDeviation) {
      if (a.robustness != b.robustness) return a.robustness > b.robustness;
      return a.deviation < b.deviation;
    }
    if (a.deviation != b.deviation) return a.deviation < b.deviation;
    return a.robustness > b.robustness;
  });
  if (out.size() > n) out.resize(n);
  return out;
}

}  // namespace kprefine
