#include "kprefine/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kprefine/errors.hpp"

namespace kprefine {

DetectorKind parse_detector_kind(const std::string& name) {
  if (name == "harris") return DetectorKind::Harris;
  if (name == "shi_tomasi" || name == "shi-tomasi") return DetectorKind::ShiTomasi;
  if (name == "external") return DetectorKind::External;
  throw UnsupportedDetector("unknown detector '" + name + "'");
}

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Harris: return "harris";
    case DetectorKind::ShiTomasi: return "shi_tomasi";
    case DetectorKind::External: return "external";
  }
  return "unknown";
}

void DetectorConfig::validate() const {
  if (n_kpts < 1) throw InvalidConfig("detector.n_kpts must be >= 1");
  if (!(smoothing_sigma > 0.0)) throw InvalidConfig("detector.smoothing_sigma must be > 0");
  if (border_margin < 1) throw InvalidConfig("detector.border_margin must be >= 1");
  if (!std::isfinite(harris_k) || !std::isfinite(response_threshold)) {
    throw InvalidConfig("detector parameters must be finite");
  }
}

std::vector<double> gaussian_taps(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Separable convolution with replicate border, in place via a scratch buffer.
void smooth(std::vector<double>& field, int w, int h, const std::vector<double>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  std::vector<double> tmp(field.size());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const double* row = field.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * row[clampi(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp[static_cast<std::size_t>(clampi(y + k, 0, h - 1)) * w + x];
      field[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
}

// Chebyshev erosion of the support mask.
std::vector<std::uint8_t> erode(const SupportMask& mask, int radius) {
  const int w = mask.size.width;
  const int h = mask.size.height;
  std::vector<std::uint8_t> rows(mask.valid.size());
  std::vector<std::uint8_t> out(mask.valid.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t ok = 1;
      for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius) && ok; ++k) ok = mask(k, y);
      rows[static_cast<std::size_t>(y) * w + x] = ok;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t ok = 1;
      for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius) && ok; ++k) {
        ok = rows[static_cast<std::size_t>(k) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = ok;
    }
  }
  return out;
}

double parabola_offset(double left, double center, double right) {
  const double denom = left - 2.0 * center + right;
  if (denom >= 0.0) return 0.0;
  return 0.5 * (left - right) / denom;
}

bool score_order(const Keypoint& a, const Keypoint& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

}  // namespace

ResponseMap compute_response(const ImageBuffer& img, const DetectorConfig& cfg) {
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> ixx(n), ixy(n), iyy(n);

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const int ym = clampi(y - 1, 0, h - 1);
    const int yp = clampi(y + 1, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = clampi(x - 1, 0, w - 1);
      const int xp = clampi(x + 1, 0, w - 1);
      const double gx = ((img(xp, ym) + 2.0 * img(xp, y) + img(xp, yp)) -
                         (img(xm, ym) + 2.0 * img(xm, y) + img(xm, yp))) / 8.0;
      const double gy = ((img(xm, yp) + 2.0 * img(x, yp) + img(xp, yp)) -
                         (img(xm, ym) + 2.0 * img(x, ym) + img(xp, ym))) / 8.0;
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ixx[i] = gx * gx;
      ixy[i] = gx * gy;
      iyy[i] = gy * gy;
    }
  }

  const std::vector<double> taps = gaussian_taps(cfg.smoothing_sigma);
  smooth(ixx, w, h, taps);
  smooth(ixy, w, h, taps);
  smooth(iyy, w, h, taps);

  ResponseMap map{img.size(), std::vector<double>(n)};
  const bool harris = cfg.kind != DetectorKind::ShiTomasi;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double a = ixx[i], b = ixy[i], c = iyy[i];
    const double tr = a + c;
    if (harris) {
      map.values[i] = a * c - b * b - cfg.harris_k * tr * tr;
    } else {
      const double half_diff = 0.5 * (a - c);
      map.values[i] = 0.5 * tr - std::sqrt(half_diff * half_diff + b * b);
    }
  }
  return map;
}

std::vector<Keypoint> detect(const ImageBuffer& img, const DetectorConfig& cfg, const SupportMask* support) {
  cfg.validate();
  if (cfg.kind == DetectorKind::External) {
    throw UnsupportedDetector("external keypoints are loaded from files, not detected");
  }
  const ResponseMap r = compute_response(img, cfg);
  const int w = img.width();
  const int h = img.height();
  const int m = cfg.border_margin;

  std::vector<std::uint8_t> allowed;
  if (support != nullptr) {
    const int footprint = 1 + static_cast<int>(gaussian_taps(cfg.smoothing_sigma).size() / 2);
    allowed = erode(*support, footprint);
  }

  std::vector<std::vector<Keypoint>> per_row(static_cast<std::size_t>(std::max(h, 0)));
#pragma omp parallel for schedule(static)
  for (int y = m; y < h - m; ++y) {
    for (int x = m; x < w - m; ++x) {
      const double v = r(x, y);
      if (!(v > cfg.response_threshold)) continue;
      if (!allowed.empty() && !allowed[static_cast<std::size_t>(y) * w + x]) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx != 0 || dy != 0) && !(r(x + dx, y + dy) < v)) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      double ox = 0.0, oy = 0.0;
      if (cfg.subpixel) {
        ox = parabola_offset(r(x - 1, y), v, r(x + 1, y));
        oy = parabola_offset(r(x, y - 1), v, r(x, y + 1));
        const double norm = std::hypot(ox, oy);
        if (norm > 0.5) {
          ox *= 0.5 / norm;
          oy *= 0.5 / norm;
        }
      }
      per_row[y].push_back({x + ox, y + oy, v, 0});
    }
  }

  std::vector<Keypoint> out;
  for (auto& row : per_row) out.insert(out.end(), row.begin(), row.end());
  std::stable_sort(out.begin(), out.end(), score_order);
  return out;
}

std::vector<Keypoint> select_top_n(std::span<const Keypoint> kps, std::size_t n) {
  std::vector<Keypoint> out(kps.begin(), kps.end());
  std::stable_sort(out.begin(), out.end(), score_order);
  if (out.size() > n) out.resize(n);
  return out;
}

std::string external_keypoint_filename(const std::string& stem, WarpId warp_id) {
  return stem + ".warp" + std::to_string(warp_id) + ".kpts.jsonl";
}

std::vector<Keypoint> load_external_keypoints(const std::filesystem::path& path, WarpId warp_id) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open keypoint file " + path.string());
  std::vector<Keypoint> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
    if (!record.is_object()) throw ParseError(path.string() + ": expected a JSON object", line_no);
    Keypoint kp;
    kp.warp_id = warp_id;
    for (auto [field, target] : {std::pair{"x", &kp.x}, std::pair{"y", &kp.y}, std::pair{"score", &kp.score}}) {
      auto it = record.find(field);
      if (it == record.end()) throw MissingField(field, line_no);
      if (!it->is_number()) throw ParseError(path.string() + ": field '" + field + "' is not a number", line_no);
      *target = it->get<double>();
    }
    if (!std::isfinite(kp.x) || !std::isfinite(kp.y) || !std::isfinite(kp.score)) {
      throw ParseError(path.string() + ": non-finite keypoint", line_no);
    }
    out.push_back(kp);
  }
  return out;
}

}  // namespace kprefine
