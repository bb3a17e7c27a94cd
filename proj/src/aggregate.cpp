#include "kprefine/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "kprefine/errors.hpp"

namespace kprefine {

namespace {

bool by_score(const Keypoint& a, const Keypoint& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

struct CellHash {
  std::size_t operator()(const std::pair<long long, long long>& c) const {
    return std::hash<long long>()(c.first * 73856093LL ^ c.second * 19349663LL);
  }
};

}  // namespace

std::vector<Keypoint> nms(std::span<const Keypoint> kps, double radius) {
  if (!(radius > 0.0)) throw InvalidConfig("nms radius must be > 0");
  if (kps.empty()) return {};
  for (const Keypoint& kp : kps) {
    if (kp.warp_id != kps.front().warp_id) throw MixedWarpIds("nms input spans multiple warp ids");
  }

  std::vector<Keypoint> order(kps.begin(), kps.end());
  std::stable_sort(order.begin(), order.end(), by_score);

  const double r2 = radius * radius;
  std::unordered_map<std::pair<long long, long long>, std::vector<std::size_t>, CellHash> grid;
  std::vector<Keypoint> kept;
  for (const Keypoint& kp : order) {
    const long long cx = static_cast<long long>(std::floor(kp.x / radius));
    const long long cy = static_cast<long long>(std::floor(kp.y / radius));
    bool suppressed = false;
    for (long long dy = -1; dy <= 1 && !suppressed; ++dy) {
      for (long long dx = -1; dx <= 1 && !suppressed; ++dx) {
        auto it = grid.find({cx + dx, cy + dy});
        if (it == grid.end()) continue;
        for (std::size_t k : it->second) {
          if (squared_norm(kept[k].position() - kp.position()) < r2) {
            suppressed = true;
            break;
          }
        }
      }
    }
    if (suppressed) continue;
    grid[{cx, cy}].push_back(kept.size());
    kept.push_back(kp);
  }
  return kept;
}

std::vector<Keypoint> pool(std::span<const std::vector<Keypoint>> per_warp) {
  std::vector<Keypoint> out;
  std::size_t total = 0;
  for (const auto& list : per_warp) total += list.size();
  out.reserve(total);
  for (const auto& list : per_warp) out.insert(out.end(), list.begin(), list.end());
  std::stable_sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.warp_id != b.warp_id) return a.warp_id < b.warp_id;
    return by_score(a, b);
  });
  return out;
}

}  // namespace kprefine
