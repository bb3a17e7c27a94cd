#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kprefine/gmm.hpp"
#include "kprefine/types.hpp"

namespace kprefine::oracle {

/// sum_i -log sum_k alpha_k G(x_i; mu_k, sigma_k), by direct summation.
double nll(std::span<const Point2> points, std::span<const MixtureComponent> components);

struct PlantSpec {
  std::vector<Point2> centers;
  std::vector<double> sigmas;       // per-axis standard deviation of each cluster
  int members_per_cluster = 21;     // member j carries warp id j
  int num_warps = 21;
  int outliers = 0;
  Point2 region_min{0.0, 0.0};      // outliers are uniform in this box
  Point2 region_max{100.0, 100.0};
  double min_outlier_distance = 0.0;  // from every planted center
  std::uint64_t seed = 0;
};

struct PlantedSet {
  std::vector<Keypoint> points;
  std::vector<int> cluster_of;  // -1 for outliers
  std::vector<Point2> centers;
  std::vector<double> sigmas;
};

/// Deterministic synthetic clusters plus uniform outliers. Throws InvalidSpec.
PlantedSet plant_clusters(const PlantSpec& spec);

}  // namespace kprefine::oracle
