#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "kprefine/detect.hpp"
#include "kprefine/geometry.hpp"
#include "kprefine/gmm.hpp"
#include "kprefine/kde.hpp"

namespace kprefine {

/// Every knob of one refinement run. Defaults are the reference settings
/// where those exist.
struct PipelineConfig {
  WarpConfig warp;
  double noise_sigma = 0.004;  // ~1/255
  std::uint64_t seed = 0;
  DetectorConfig detector;
  double nms_radius = 1.5;
  KdeConfig kde;
  GmmConfig gmm;
  RankingPolicy ranking = RankingPolicy::RobustnessThenDeviation;
  bool round_positions = false;  // integer output positions (ablation)

  /// 2 * n_kpts unless kde.max_candidates is set.
  std::size_t candidate_cap() const;
  void validate() const;
};

/// Parses a JSON document; unknown keys are rejected. Missing keys keep
/// their defaults. Throws InvalidConfig / ParseError.
PipelineConfig config_from_json_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Full configuration as pretty-printed JSON (round-trips through
/// config_from_json_text).
std::string config_to_json_text(const PipelineConfig& cfg);

}  // namespace kprefine
