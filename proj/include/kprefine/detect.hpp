#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kprefine/image.hpp"
#include "kprefine/types.hpp"
#include "kprefine/warp.hpp"

namespace kprefine {

enum class DetectorKind { Harris, ShiTomasi, External };

DetectorKind parse_detector_kind(const std::string& name);
std::string to_string(DetectorKind kind);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::Harris;
  int n_kpts = 2048;
  double harris_k = 0.06;
  double smoothing_sigma = 1.0;  // Gaussian window of the structure tensor, px
  double response_threshold = 1e-8;
  bool subpixel = true;
  int border_margin = 2;  // px kept clear of the image border

  void validate() const;
};

/// Per-pixel detector response.
struct ResponseMap {
  ImageSize size;
  std::vector<double> values;

  double operator()(int x, int y) const { return values[static_cast<std::size_t>(y) * size.width + x]; }
};

/// Normalized 1-D Gaussian taps of radius ceil(3 sigma).
std::vector<double> gaussian_taps(double sigma);

/// Structure-tensor response (Harris: det - k tr^2, Shi-Tomasi: min
/// eigenvalue) from Sobel/8 gradients and a separable Gaussian window.
/// Replicate border. Rows are processed in parallel.
ResponseMap compute_response(const ImageBuffer& img, const DetectorConfig& cfg);

/// Strict 3x3 local maxima of the response above threshold, optionally
/// refined by a per-axis parabola fit (offset norm <= 0.5 px). If `support`
/// is given, maxima whose response footprint touches unsupported canvas
/// pixels are rejected. Output is sorted by descending score.
std::vector<Keypoint> detect(const ImageBuffer& img, const DetectorConfig& cfg,
                             const SupportMask* support = nullptr);

/// The n highest-score keypoints, ties broken by (y, x).
std::vector<Keypoint> select_top_n(std::span<const Keypoint> kps, std::size_t n);

/// JSON-lines file, one {"x":..,"y":..,"score":..} object per line.
/// Throws ParseError (with line number) or MissingField.
std::vector<Keypoint> load_external_keypoints(const std::filesystem::path& path, WarpId warp_id);

/// `<stem>.warp<k>.kpts.jsonl`
std::string external_keypoint_filename(const std::string& stem, WarpId warp_id);

}  // namespace kprefine
