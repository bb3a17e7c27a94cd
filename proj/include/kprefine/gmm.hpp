#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kprefine/types.hpp"

namespace kprefine {

/// One isotropic Gaussian cluster. Covariance is sigma^2 * Id.
struct MixtureComponent {
  Point2 mu;
  double sigma = 1.0;
  double alpha = 0.0;

  friend bool operator==(const MixtureComponent&, const MixtureComponent&) = default;
};

/// Per-point, per-component gating of the E-step.
enum class Weighting {
  Uniform,  // w == 1 (textbook EM)
  W1,       // soft down-weighting beyond 3 sigma
  W2,       // hard 3 sigma gate
};

/// Robust: phase 1 with w1, phase 2 with w2, sigma = min(sigma~ + eps, sigma_max),
/// concentric components dropped after every M-step.
/// Standard: textbook EM (w == 1 in both phases), sigma = clamp(sigma~, eps,
/// sigma_max), no component dropping. The likelihood is then monotone.
enum class FitMode { Robust, Standard };

struct GmmConfig {
  double epsilon = 0.02;               // px
  double init_sigma = 1.0 / 3.0;       // 3 sigma diameter = 2 px
  double sigma_max = 10.0 / 6.0;       // 3 sigma diameter = 10 px
  double nu = 0.1;                     // px, minimum distance between means
  int phase1_iters = 50;
  int phase2_iters = 10;
  double convergence_tol = 1e-4;       // px, max mean shift per iteration
  FitMode mode = FitMode::Robust;
  bool dedupe_warps = true;            // at most one support point per warp id

  void validate() const;
};

/// G(x) = exp(-|x - mu|^2 / sigma^2) / (2 pi sigma^2). The exponent has no 1/2
/// so that the variance update below (weighted mean squared distance) is the
/// exact maximizer of the expected complete-data log-likelihood.
double gaussian_density(Point2 x, Point2 mu, double sigma);

/// 1 inside 3 sigma, exp(-(d - 3 sigma)^2 / (2 sigma^2)) outside.
double weight_w1(Point2 x, Point2 mu, double sigma);

/// 1 iff |x - mu| < 3 sigma.
double weight_w2(Point2 x, Point2 mu, double sigma);

double outlier_weight(Weighting w, Point2 x, Point2 mu, double sigma);

/// Sparse K x N responsibility matrix stored by point (CSR). Entries that are
/// exactly zero are not stored; a point with no entries is inert.
class Responsibilities {
 public:
  Responsibilities() = default;
  Responsibilities(std::size_t components, std::size_t points);

  std::size_t components() const { return components_; }
  std::size_t points() const { return points_; }

  double operator()(std::size_t k, std::size_t i) const;
  double column_sum(std::size_t i) const;
  bool inert(std::size_t i) const { return offsets_[i] == offsets_[i + 1]; }
  std::size_t active_points() const;

  /// Row-major K x N copy (k * N + i).
  std::vector<double> to_dense() const;

  struct Entry {
    std::uint32_t component;
    double gamma;
  };
  std::span<const Entry> column(std::size_t i) const {
    return {entries_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  // Assembly: columns must be appended in point order.
  void append_column(std::span<const Entry> entries);

 private:
  std::size_t components_ = 0;
  std::size_t points_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Entry> entries_;
};

/// gamma_{k,i} = alpha_k w G / sum_l alpha_l w G. Only pairs whose product can
/// be nonzero in double precision are visited; the result is bit-identical to
/// dense evaluation. Parallel over points.
Responsibilities e_step(std::span<const Point2> points, std::span<const MixtureComponent> components,
                        Weighting weighting);

struct MStepResult {
  std::vector<MixtureComponent> components;
  std::vector<std::size_t> kept;  // input index of each surviving component
};

/// alpha = sum gamma / N_active, mu = weighted mean, sigma~^2 = weighted mean
/// squared distance to the new mu; sigma per cfg.mode. Components with zero
/// total responsibility are dropped.
MStepResult m_step(std::span<const Point2> points, const Responsibilities& resp, const GmmConfig& cfg);

/// Indices of components surviving the concentric scan: for k < l with
/// |mu_k - mu_l| < nu, k is discarded.
std::vector<std::size_t> concentric_survivors(std::span<const MixtureComponent> components, double nu);

/// Applies concentric_survivors and renormalizes alpha to sum 1.
std::vector<MixtureComponent> drop_concentric(std::span<const MixtureComponent> components, double nu);

struct FitStep {
  int phase = 1;
  int iteration = 0;
  double max_shift = 0.0;
  const std::vector<MixtureComponent>* components = nullptr;
};
using FitObserver = std::function<void(const FitStep&)>;

/// Two-phase fit seeded at `seeds` with sigma = init_sigma and uniform alpha.
/// Throws EmptySeeds, EmptyPointSet, AllComponentsDropped.
std::vector<MixtureComponent> fit(std::span<const Point2> points, std::span<const Point2> seeds,
                                  const GmmConfig& cfg, const FitObserver& observer = {});

struct SupportMember {
  WarpId warp_id = 0;
  Point2 point;
};

struct RefinedKeypoint {
  Point2 position;
  double robustness = 0.0;  // support points within 3 sigma (one per warp)
  double deviation = 0.0;   // 6 sigma, px
  double sigma = 0.0;
  double alpha = 0.0;
  std::vector<SupportMember> support;  // all points within 3 sigma
};

/// robustness_k = #points with |x - mu_k| < 3 sigma_k, counting at most one per
/// warp id when cfg.dedupe_warps. deviation_k = 6 sigma_k. `support` lists
/// every member inside 3 sigma, duplicates included.
std::vector<RefinedKeypoint> score_components(std::span<const Keypoint> points,
                                              std::span<const MixtureComponent> components,
                                              const GmmConfig& cfg);

enum class RankingPolicy { RobustnessThenDeviation, DeviationThenRobustness };

RankingPolicy parse_ranking_policy(const std::string& name);
std::string to_string(RankingPolicy policy);

/// Stable sort (robustness descending, deviation ascending, in policy order),
/// truncated to n.
std::vector<RefinedKeypoint> rank_refined(std::span<const RefinedKeypoint> kps, RankingPolicy policy,
                                          std::size_t n);

}  // namespace kprefine
