#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kprefine/config.hpp"
#include "kprefine/errors.hpp"
#include "kprefine/gmm.hpp"
#include "kprefine/image.hpp"

namespace kprefine {

/// Failure inside one pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Location of externally detected per-warp keypoints,
/// `<dir>/<stem>.warp<k>.kpts.jsonl`, in each warp's canvas frame.
struct ExternalKeypoints {
  std::filesystem::path dir;
  std::string stem;
};

/// Warp ids whose external keypoint file is absent.
std::vector<WarpId> missing_external_warps(const ExternalKeypoints& ext, const AugmentationSet& set);

/// Renders the noisy warp `entry` of `img` exactly as the refine pipeline does.
WarpedView render_noisy_warp(const ImageBuffer& img, const AugmentationEntry& entry, const PipelineConfig& cfg);

/// Per-warp keypoints in the original frame: detect (or load), keep the best
/// n_kpts, back-project, NMS. Index = warp id.
std::vector<std::vector<Keypoint>> collect_warp_keypoints(const ImageBuffer& img, const PipelineConfig& cfg,
                                                          const std::optional<ExternalKeypoints>& external);

struct RefineResult {
  std::vector<RefinedKeypoint> keypoints;  // ranked, at most n_kpts
  std::size_t pooled_points = 0;
  std::size_t seeds = 0;
  std::size_t components = 0;
};

/// KDE seeding, robust fit, scoring and ranking of an already pooled set.
RefineResult refine_pooled(std::span<const Keypoint> pooled, ImageSize size, const PipelineConfig& cfg);

/// Full pipeline for one image. Throws StageError.
RefineResult refine_image(const ImageBuffer& img, const PipelineConfig& cfg,
                          const std::optional<ExternalKeypoints>& external = std::nullopt);

// --- warp export ----------------------------------------------------------------

struct WarpManifestEntry {
  WarpId id = 0;
  WarpFamily family = WarpFamily::Identity;
  double factor = 1.0;
  AffineTransform transform;  // linear augmentation map
  AffineTransform to_canvas;  // original pixel frame -> warped image pixel frame
  ImageSize size;
  std::string file;

  friend bool operator==(const WarpManifestEntry&, const WarpManifestEntry&) = default;
};

struct WarpManifest {
  std::string source;
  ImageSize source_size;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  std::vector<WarpManifestEntry> warps;

  friend bool operator==(const WarpManifest&, const WarpManifest&) = default;
};

std::string warp_manifest_to_json(const WarpManifest& manifest);
/// Throws ParseError / MissingField.
WarpManifest parse_warp_manifest(const std::string& text);

/// Writes `<stem>.warp<k>.png` (16-bit, noise included) for every warp and
/// `<stem>.warps.json` into `out_dir`.
WarpManifest export_warps(const ImageBuffer& img, const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                          const std::string& stem);

}  // namespace kprefine
