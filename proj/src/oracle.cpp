#include "kprefine/oracle.hpp"

#include <cmath>
#include <random>

#include "kprefine/errors.hpp"

namespace kprefine::oracle {

double nll(std::span<const Point2> points, std::span<const MixtureComponent> components) {
  double total = 0.0;
  for (const Point2& x : points) {
    double mix = 0.0;
    for (const MixtureComponent& c : components) {
      if (c.alpha == 0.0) continue;
      mix += c.alpha * gaussian_density(x, c.mu, c.sigma);
    }
    total -= std::log(mix);
  }
  return total;
}

PlantedSet plant_clusters(const PlantSpec& spec) {
  if (spec.centers.size() != spec.sigmas.size()) throw InvalidSpec("one sigma per planted center is required");
  if (spec.members_per_cluster < 1 || spec.members_per_cluster > spec.num_warps) {
    throw InvalidSpec("members_per_cluster must lie in [1, num_warps]");
  }
  if (spec.outliers < 0) throw InvalidSpec("outlier count must be >= 0");
  for (double s : spec.sigmas) {
    if (!(s >= 0.0)) throw InvalidSpec("planted sigmas must be >= 0");
  }
  if (spec.outliers > 0 && !(spec.region_max.x > spec.region_min.x && spec.region_max.y > spec.region_min.y)) {
    throw InvalidSpec("outlier region is empty");
  }

  PlantedSet set{{}, {}, spec.centers, spec.sigmas};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 0; c < spec.centers.size(); ++c) {
    for (int j = 0; j < spec.members_per_cluster; ++j) {
      const double dx = spec.sigmas[c] * unit(rng);
      const double dy = spec.sigmas[c] * unit(rng);
      set.points.push_back({spec.centers[c].x + dx, spec.centers[c].y + dy, 1.0, j});
      set.cluster_of.push_back(static_cast<int>(c));
    }
  }

  std::uniform_real_distribution<double> ux(spec.region_min.x, spec.region_max.x);
  std::uniform_real_distribution<double> uy(spec.region_min.y, spec.region_max.y);
  std::uniform_int_distribution<int> warp(0, spec.num_warps - 1);
  constexpr int kMaxAttempts = 100000;
  for (int o = 0; o < spec.outliers; ++o) {
    Point2 p;
    int attempts = 0;
    bool ok = false;
    while (!ok) {
      if (++attempts > kMaxAttempts) throw InvalidSpec("cannot place outliers at the requested distance");
      p = {ux(rng), uy(rng)};
      ok = true;
      for (const Point2& c : spec.centers) {
        if (distance(p, c) < spec.min_outlier_distance) {
          ok = false;
          break;
        }
      }
    }
    set.points.push_back({p.x, p.y, 1.0, warp(rng)});
    set.cluster_of.push_back(-1);
  }
  return set;
}

}  // namespace kprefine::oracle
