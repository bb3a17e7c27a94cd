#include "kprefine/pipeline.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kprefine/aggregate.hpp"
#include "kprefine/detect.hpp"
#include "kprefine/kde.hpp"
#include "kprefine/keypoint_io.hpp"
#include "kprefine/warp.hpp"

namespace kprefine {

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::filesystem::path external_path(const ExternalKeypoints& ext, WarpId id) {
  return ext.dir / external_keypoint_filename(ext.stem, id);
}

}  // namespace

std::vector<WarpId> missing_external_warps(const ExternalKeypoints& ext, const AugmentationSet& set) {
  std::vector<WarpId> missing;
  for (const auto& entry : set.entries) {
    if (!std::filesystem::exists(external_path(ext, entry.id))) missing.push_back(entry.id);
  }
  return missing;
}

WarpedView render_noisy_warp(const ImageBuffer& img, const AugmentationEntry& entry, const PipelineConfig& cfg) {
  WarpedView view = render_warp(img, entry.transform);
  view.image = add_gaussian_noise(view.image, cfg.noise_sigma, warp_noise_seed(cfg.seed, entry.id));
  return view;
}

std::vector<std::vector<Keypoint>> collect_warp_keypoints(const ImageBuffer& img, const PipelineConfig& cfg,
                                                          const std::optional<ExternalKeypoints>& external) {
  const AugmentationSet set = stage("warp", [&] { return build_augmentation_set(cfg.warp); });
  const bool use_external = external.has_value() || cfg.detector.kind == DetectorKind::External;
  if (use_external) {
    if (!external) throw StageError("detect", "external detector selected but no keypoint directory given");
    const auto missing = missing_external_warps(*external, set);
    if (!missing.empty()) {
      std::string ids;
      for (WarpId id : missing) ids += (ids.empty() ? "" : ",") + std::to_string(id);
      throw StageError("detect", "missing external keypoint files for warp ids " + ids + " (expected " +
                                     external_path(*external, missing.front()).string() + ")");
    }
  }

  std::vector<std::vector<Keypoint>> per_warp(set.size());
  for (const auto& entry : set.entries) {
    std::vector<Keypoint> warped_kps;
    AffineTransform to_canvas;
    if (use_external) {
      to_canvas = plan_canvas(entry.transform, img.size()).to_canvas;
      warped_kps = stage("detect", [&] { return load_external_keypoints(external_path(*external, entry.id), entry.id); });
    } else {
      const WarpedView view = stage("warp", [&] { return render_noisy_warp(img, entry, cfg); });
      to_canvas = view.to_canvas;
      warped_kps = stage("detect", [&] { return detect(view.image, cfg.detector, &view.support); });
      for (Keypoint& kp : warped_kps) kp.warp_id = entry.id;
    }
    const auto best = select_top_n(warped_kps, static_cast<std::size_t>(cfg.detector.n_kpts));
    const auto original = stage("reproject", [&] { return backproject_keypoints(best, to_canvas, img.size()); });
    per_warp[entry.id] = stage("nms", [&] { return nms(original, cfg.nms_radius); });
  }
  return per_warp;
}

RefineResult refine_pooled(std::span<const Keypoint> pooled, ImageSize size, const PipelineConfig& cfg) {
  RefineResult result;
  result.pooled_points = pooled.size();
  if (pooled.empty()) return result;

  const auto seeds = stage("kde", [&] {
    const DensityGrid grid = evaluate_grid(pooled, cfg.kde, size);
    const auto maxima = find_local_maxima(grid, cfg.kde);
    return select_top_maxima(maxima, grid, cfg.candidate_cap());
  });
  result.seeds = seeds.size();
  if (seeds.empty()) return result;

  std::vector<Point2> points;
  points.reserve(pooled.size());
  for (const Keypoint& kp : pooled) points.push_back(kp.position());

  const auto components = stage("gmm", [&] { return fit(points, seeds, cfg.gmm); });
  result.components = components.size();

  const auto scored = stage("score", [&] { return score_components(pooled, components, cfg.gmm); });
  result.keypoints = rank_refined(scored, cfg.ranking, static_cast<std::size_t>(cfg.detector.n_kpts));
  if (cfg.round_positions) {
    for (auto& kp : result.keypoints) kp.position = {std::round(kp.position.x), std::round(kp.position.y)};
  }
  return result;
}

RefineResult refine_image(const ImageBuffer& img, const PipelineConfig& cfg,
                          const std::optional<ExternalKeypoints>& external) {
  stage("config", [&] { cfg.validate(); return 0; });
  const auto per_warp = collect_warp_keypoints(img, cfg, external);
  const auto pooled = pool(per_warp);
  return refine_pooled(pooled, img.size(), cfg);
}

namespace {

using nlohmann::json;

json affine_json(const AffineTransform& t) { return json::array({t.a11, t.a12, t.tx, t.a21, t.a22, t.ty}); }

const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw MissingField(key, 0);
  return *it;
}

AffineTransform affine_from_json(const json& j) {
  if (!j.is_array() || j.size() != 6) throw ParseError("affine transform must be an array of 6 numbers", 0);
  const auto v = j.get<std::vector<double>>();
  return {v[0], v[1], v[3], v[4], v[2], v[5]};
}

WarpFamily parse_family(const std::string& name) {
  for (WarpFamily f : {WarpFamily::Identity, WarpFamily::Isotropic, WarpFamily::ScaleX, WarpFamily::ScaleY,
                       WarpFamily::ShearX, WarpFamily::ShearY}) {
    if (to_string(f) == name) return f;
  }
  throw ParseError("unknown warp family '" + name + "'", 0);
}

}  // namespace

std::string warp_manifest_to_json(const WarpManifest& manifest) {
  json warps = json::array();
  for (const auto& w : manifest.warps) {
    warps.push_back({{"warp_id", w.id},
                     {"family", to_string(w.family)},
                     {"factor", w.factor},
                     {"transform", affine_json(w.transform)},
                     {"to_canvas", affine_json(w.to_canvas)},
                     {"width", w.size.width},
                     {"height", w.size.height},
                     {"file", w.file}});
  }
  json doc = {{"source", manifest.source},
              {"width", manifest.source_size.width},
              {"height", manifest.source_size.height},
              {"seed", manifest.seed},
              {"noise_sigma", manifest.noise_sigma},
              {"warps", warps}};
  return doc.dump(2) + "\n";
}

WarpManifest parse_warp_manifest(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("warp manifest: ") + e.what(), 0);
  }
  try {
    WarpManifest m;
    m.source = field(doc, "source").get<std::string>();
    m.source_size = {field(doc, "width").get<int>(), field(doc, "height").get<int>()};
    m.seed = field(doc, "seed").get<std::uint64_t>();
    m.noise_sigma = field(doc, "noise_sigma").get<double>();
    for (const json& w : field(doc, "warps")) {
      WarpManifestEntry e;
      e.id = field(w, "warp_id").get<WarpId>();
      e.family = parse_family(field(w, "family").get<std::string>());
      e.factor = field(w, "factor").get<double>();
      e.transform = affine_from_json(field(w, "transform"));
      e.to_canvas = affine_from_json(field(w, "to_canvas"));
      e.size = {field(w, "width").get<int>(), field(w, "height").get<int>()};
      e.file = field(w, "file").get<std::string>();
      m.warps.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("warp manifest: ") + e.what(), 0);
  }
}

WarpManifest export_warps(const ImageBuffer& img, const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                          const std::string& stem) {
  stage("config", [&] { cfg.validate(); return 0; });
  const AugmentationSet set = build_augmentation_set(cfg.warp);
  std::filesystem::create_directories(out_dir);

  WarpManifest manifest{stem, img.size(), cfg.seed, cfg.noise_sigma, {}};
  for (const auto& entry : set.entries) {
    const WarpedView view = stage("warp", [&] { return render_noisy_warp(img, entry, cfg); });
    const std::string file = stem + ".warp" + std::to_string(entry.id) + ".png";
    stage("write", [&] { write_png16(out_dir / file, view.image); return 0; });
    manifest.warps.push_back({entry.id, entry.family, entry.factor, entry.transform, view.to_canvas,
                              view.image.size(), file});
  }
  const auto manifest_path = out_dir / (stem + ".warps.json");
  std::ofstream out(manifest_path);
  if (!out) throw StageError("write", "cannot open " + manifest_path.string());
  out << warp_manifest_to_json(manifest);
  if (!out) throw StageError("write", "failed writing " + manifest_path.string());
  return manifest;
}

}  // namespace kprefine
