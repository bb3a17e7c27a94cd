#pragma once

#include <span>
#include <vector>

#include "kprefine/types.hpp"

namespace kprefine {

/// Greedy non-maximum suppression of one warp's keypoints: visits keypoints by
/// descending score and keeps one iff no kept keypoint lies closer than
/// `radius`. Throws MixedWarpIds if the input spans several warps.
std::vector<Keypoint> nms(std::span<const Keypoint> kps, double radius);

/// Concatenates per-warp lists ordered by warp id, then descending score.
std::vector<Keypoint> pool(std::span<const std::vector<Keypoint>> per_warp);

}  // namespace kprefine
