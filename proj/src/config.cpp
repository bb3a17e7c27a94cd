#include "kprefine/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kprefine/errors.hpp"

namespace kprefine {

using nlohmann::json;

std::size_t PipelineConfig::candidate_cap() const {
  if (kde.max_candidates) return static_cast<std::size_t>(*kde.max_candidates);
  return 2 * static_cast<std::size_t>(detector.n_kpts);
}

void PipelineConfig::validate() const {
  build_augmentation_set(warp);
  if (!(noise_sigma >= 0.0)) throw InvalidConfig("noise.sigma must be >= 0");
  detector.validate();
  if (!(nms_radius > 0.0)) throw InvalidConfig("nms_radius must be > 0");
  kde.validate();
  gmm.validate();
}

namespace {

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw InvalidConfig("config section '" + section + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw InvalidConfig("unknown config key '" + (section.empty() ? "" : section + ".") + item.key() + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& target, const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    throw InvalidConfig("config key '" + section + "." + key + "' has the wrong type");
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, std::optional<T>& target, const std::string& section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_null()) {
    target.reset();
    return;
  }
  T value{};
  read(obj, key, value, section);
  target = value;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string gmm_mode_name(FitMode m) { return m == FitMode::Robust ? "robust" : "standard"; }

FitMode parse_gmm_mode(const std::string& s) {
  if (s == "robust") return FitMode::Robust;
  if (s == "standard") return FitMode::Standard;
  throw InvalidConfig("unknown gmm.mode '" + s + "'");
}

}  // namespace

PipelineConfig config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  reject_unknown(root, "", {"warp", "noise", "detector", "nms_radius", "kde", "gmm", "ranking", "round_positions"});

  PipelineConfig cfg;
  if (auto it = root.find("warp"); it != root.end()) {
    reject_unknown(*it, "warp", {"isotropic_scales", "x_scales", "y_scales", "x_shears", "y_shears"});
    read(*it, "isotropic_scales", cfg.warp.isotropic_scales, "warp");
    read(*it, "x_scales", cfg.warp.x_scales, "warp");
    read(*it, "y_scales", cfg.warp.y_scales, "warp");
    read(*it, "x_shears", cfg.warp.x_shears, "warp");
    read(*it, "y_shears", cfg.warp.y_shears, "warp");
  }
  if (auto it = root.find("noise"); it != root.end()) {
    reject_unknown(*it, "noise", {"sigma", "seed"});
    read(*it, "sigma", cfg.noise_sigma, "noise");
    read(*it, "seed", cfg.seed, "noise");
  }
  if (auto it = root.find("detector"); it != root.end()) {
    reject_unknown(*it, "detector",
                   {"kind", "n_kpts", "harris_k", "smoothing_sigma", "response_threshold", "subpixel", "border_margin"});
    std::string kind = to_string(cfg.detector.kind);
    read(*it, "kind", kind, "detector");
    cfg.detector.kind = parse_detector_kind(kind);
    read(*it, "n_kpts", cfg.detector.n_kpts, "detector");
    read(*it, "harris_k", cfg.detector.harris_k, "detector");
    read(*it, "smoothing_sigma", cfg.detector.smoothing_sigma, "detector");
    read(*it, "response_threshold", cfg.detector.response_threshold, "detector");
    read(*it, "subpixel", cfg.detector.subpixel, "detector");
    read(*it, "border_margin", cfg.detector.border_margin, "detector");
  }
  read(root, "nms_radius", cfg.nms_radius, "");
  if (auto it = root.find("kde"); it != root.end()) {
    reject_unknown(*it, "kde", {"bandwidth", "window_radius", "density_threshold", "max_candidates"});
    read(*it, "bandwidth", cfg.kde.bandwidth, "kde");
    read(*it, "window_radius", cfg.kde.window_radius, "kde");
    read_optional(*it, "density_threshold", cfg.kde.density_threshold, "kde");
    read_optional(*it, "max_candidates", cfg.kde.max_candidates, "kde");
  }
  if (auto it = root.find("gmm"); it != root.end()) {
    reject_unknown(*it, "gmm", {"epsilon", "init_sigma", "sigma_max", "nu", "phase1_iters", "phase2_iters",
                                "convergence_tol", "mode", "dedupe_warps"});
    read(*it, "epsilon", cfg.gmm.epsilon, "gmm");
    read(*it, "init_sigma", cfg.gmm.init_sigma, "gmm");
    read(*it, "sigma_max", cfg.gmm.sigma_max, "gmm");
    read(*it, "nu", cfg.gmm.nu, "gmm");
    read(*it, "phase1_iters", cfg.gmm.phase1_iters, "gmm");
    read(*it, "phase2_iters", cfg.gmm.phase2_iters, "gmm");
    read(*it, "convergence_tol", cfg.gmm.convergence_tol, "gmm");
    std::string mode = gmm_mode_name(cfg.gmm.mode);
    read(*it, "mode", mode, "gmm");
    cfg.gmm.mode = parse_gmm_mode(mode);
    read(*it, "dedupe_warps", cfg.gmm.dedupe_warps, "gmm");
  }
  if (auto it = root.find("ranking"); it != root.end()) {
    std::string policy;
    read(root, "ranking", policy, "");
    cfg.ranking = parse_ranking_policy(policy);
  }
  read(root, "round_positions", cfg.round_positions, "");
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const PipelineConfig& cfg) {
  json root;
  root["warp"] = {{"isotropic_scales", cfg.warp.isotropic_scales},
                  {"x_scales", cfg.warp.x_scales},
                  {"y_scales", cfg.warp.y_scales},
                  {"x_shears", cfg.warp.x_shears},
                  {"y_shears", cfg.warp.y_shears}};
  root["noise"] = {{"sigma", cfg.noise_sigma}, {"seed", cfg.seed}};
  root["detector"] = {{"kind", to_string(cfg.detector.kind)},
                      {"n_kpts", cfg.detector.n_kpts},
                      {"harris_k", cfg.detector.harris_k},
                      {"smoothing_sigma", cfg.detector.smoothing_sigma},
                      {"response_threshold", cfg.detector.response_threshold},
                      {"subpixel", cfg.detector.subpixel},
                      {"border_margin", cfg.detector.border_margin}};
  root["nms_radius"] = cfg.nms_radius;
  root["kde"] = {{"bandwidth", cfg.kde.bandwidth},
                 {"window_radius", cfg.kde.window_radius},
                 {"density_threshold", optional_json(cfg.kde.density_threshold)},
                 {"max_candidates", optional_json(cfg.kde.max_candidates)}};
  root["gmm"] = {{"epsilon", cfg.gmm.epsilon},
                 {"init_sigma", cfg.gmm.init_sigma},
                 {"sigma_max", cfg.gmm.sigma_max},
                 {"nu", cfg.gmm.nu},
                 {"phase1_iters", cfg.gmm.phase1_iters},
                 {"phase2_iters", cfg.gmm.phase2_iters},
                 {"convergence_tol", cfg.gmm.convergence_tol},
                 {"mode", gmm_mode_name(cfg.gmm.mode)},
                 {"dedupe_warps", cfg.gmm.dedupe_warps}};
  root["ranking"] = to_string(cfg.ranking);
  root["round_positions"] = cfg.round_positions;
  return root.dump(2);
}

}  // namespace kprefine
