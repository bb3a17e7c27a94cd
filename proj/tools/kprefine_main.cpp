// kprefine: refine, export-warps, eval, stats.

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kprefine/config.hpp"
#include "kprefine/errors.hpp"
#include "kprefine/eval.hpp"
#include "kprefine/image.hpp"
#include "kprefine/keypoint_io.hpp"
#include "kprefine/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string detector;
  std::string external_dir;
  std::optional<int> n_kpts;
  std::string ranking;
};

kprefine::PipelineConfig resolve_config(const CommonOptions& opt) {
  kprefine::PipelineConfig cfg;
  if (!opt.config.empty()) cfg = kprefine::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (!opt.detector.empty()) cfg.detector.kind = kprefine::parse_detector_kind(opt.detector);
  if (!opt.external_dir.empty() && opt.detector.empty()) cfg.detector.kind = kprefine::DetectorKind::External;
  if (opt.n_kpts) cfg.detector.n_kpts = *opt.n_kpts;
  if (!opt.ranking.empty()) cfg.ranking = kprefine::parse_ranking_policy(opt.ranking);
  cfg.validate();
  return cfg;
}

// KPREFINE_THREADS caps the OpenMP team size; unset leaves the runtime default.
void apply_thread_cap() {
  const char* env = std::getenv("KPREFINE_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw kprefine::InvalidConfig(std::string("KPREFINE_THREADS must be a positive integer, got '") + env + "'");
  omp_set_num_threads(static_cast<int>(n));
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts{".png", ".pgm", ".ppm", ".pnm"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return fs::is_regular_file(p) && exts.count(ext) > 0;
}

std::string refine_one(const fs::path& image_path, const kprefine::PipelineConfig& cfg,
                       const std::optional<kprefine::ExternalKeypoints>& ext_base) {
  kprefine::ImageBuffer img;
  try {
    img = kprefine::read_image(image_path);
  } catch (const std::exception& e) {
    throw kprefine::StageError("read", e.what());
  }
  std::optional<kprefine::ExternalKeypoints> ext;
  if (ext_base) ext = kprefine::ExternalKeypoints{ext_base->dir, image_path.stem().string()};
  const auto result = kprefine::refine_image(img, cfg, ext);
  std::ostringstream os;
  kprefine::write_refined_jsonl(os, result.keypoints);
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw kprefine::IoError("cannot open " + path.string());
  out << text;
  if (!out) throw kprefine::IoError("failed writing " + path.string());
}

int cmd_refine(const std::string& input, const CommonOptions& opt) {
  const auto cfg = resolve_config(opt);
  std::optional<kprefine::ExternalKeypoints> ext;
  if (cfg.detector.kind == kprefine::DetectorKind::External) {
    if (opt.external_dir.empty()) throw kprefine::InvalidConfig("--detector external requires --external-kpts-dir");
    ext = kprefine::ExternalKeypoints{opt.external_dir, ""};
  }

  if (!fs::is_directory(input)) {
    std::string text;
    try {
      text = refine_one(input, cfg, ext);
    } catch (const std::exception& e) {
      std::cerr << "kprefine refine: " << input << ": " << e.what() << "\n";
      return 1;
    }
    if (opt.out.empty() || opt.out == "-") {
      std::cout << text;
    } else {
      fs::path out = opt.out;
      if (fs::is_directory(out)) out /= fs::path(input).stem().string() + ".refined.jsonl";
      write_text(out, text);
    }
    return 0;
  }

  if (opt.out.empty()) throw kprefine::InvalidConfig("refine on a directory needs --out <dir>");
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (is_image_file(entry.path())) images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  fs::create_directories(opt.out);

  // One image per task; kernels inside run on the calling thread when nested.
  std::vector<std::string> errors(images.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      const std::string text = refine_one(images[i], cfg, ext);
      write_text(fs::path(opt.out) / (images[i].stem().string() + ".refined.jsonl"), text);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  int failed = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (errors[i].empty()) continue;
    std::cerr << "kprefine refine: " << images[i].string() << ": " << errors[i] << "\n";
    ++failed;
  }
  return failed == 0 ? 0 : 1;
}

int cmd_export_warps(const std::string& input, const CommonOptions& opt) {
  const auto cfg = resolve_config(opt);
  if (opt.out.empty()) throw kprefine::InvalidConfig("export-warps needs --out <dir>");
  try {
    const auto img = kprefine::read_image(input);
    const auto manifest = kprefine::export_warps(img, cfg, opt.out, fs::path(input).stem().string());
    std::cerr << "wrote " << manifest.warps.size() << " warps to " << opt.out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "kprefine export-warps: " << input << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// --- eval -------------------------------------------------------------------------

const std::vector<double> kEvalThresholds{1.0, 2.0, 3.0};

kprefine::ImageSize pair_size(const json& pair, const char* size_key, const char* image_key, const fs::path& base) {
  if (auto it = pair.find(size_key); it != pair.end()) {
    const auto v = it->get<std::vector<int>>();
    if (v.size() != 2) throw kprefine::ParseError(std::string(size_key) + " must be [width, height]", 0);
    return {v[0], v[1]};
  }
  if (auto it = pair.find(image_key); it != pair.end()) return kprefine::read_image(base / it->get<std::string>()).size();
  throw kprefine::MissingField(std::string(size_key) + "|" + image_key, 0);
}

std::string csv_value(const std::optional<double>& v) { return v ? kprefine::format_double(*v) : ""; }

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

int cmd_eval(const std::string& manifest_path, const CommonOptions& opt) {
  if (opt.out.empty()) throw kprefine::InvalidConfig("eval needs --out <dir>");
  std::ifstream in(manifest_path);
  if (!in) throw kprefine::IoError("cannot open " + manifest_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw kprefine::ParseError(std::string("pairs manifest: ") + e.what(), 0);
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  const json pairs = doc.value("pairs", json::array());

  struct Row {
    std::string name;
    std::optional<kprefine::MetricReport> report;
    std::size_t n_a = 0, n_b = 0;
    std::string error;
  };
  std::vector<Row> rows;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const json& pair = pairs[p];
    Row row;
    row.name = pair.value("name", "pair" + std::to_string(p));
    try {
      const auto a = kprefine::load_eval_keypoints(base / pair.at("kpts_a").get<std::string>());
      const auto b = kprefine::load_eval_keypoints(base / pair.at("kpts_b").get<std::string>());
      const auto h = kprefine::load_homography(base / pair.at("homography").get<std::string>());
      const kprefine::PairView va{a.points, pair_size(pair, "size_a", "image_a", base)};
      const kprefine::PairView vb{b.points, pair_size(pair, "size_b", "image_b", base)};
      std::optional<std::vector<kprefine::Match>> matches;
      if (!a.descriptors.empty() && !b.descriptors.empty()) matches = kprefine::mutual_nn_matches(a.descriptors, b.descriptors);
      row.report = kprefine::evaluate_pair(va, vb, h, kEvalThresholds, matches);
      row.n_a = a.points.size();
      row.n_b = b.points.size();
    } catch (const std::exception& e) {
      row.error = e.what();
      std::cerr << "kprefine eval: pair " << row.name << ": " << e.what() << "\n";
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "pair,threshold,status,repeatability,repeatability_mnn,mma,matching_score,n_a,n_b,overlap_a,overlap_b,error\n";
  for (const Row& row : rows) {
    if (!row.report) {
      csv << csv_quote(row.name) << ",,error,,,,,,,,," << csv_quote(row.error) << "\n";
      continue;
    }
    const auto& r = *row.report;
    for (double t : kEvalThresholds) {
      auto at = [t](const kprefine::MetricCurve& c) {
        auto it = c.find(t);
        return it == c.end() ? std::optional<double>() : it->second;
      };
      csv << csv_quote(row.name) << "," << kprefine::format_double(t) << ",ok," << csv_value(at(r.repeatability))
          << "," << csv_value(at(r.repeatability_mnn)) << "," << csv_value(at(r.mma)) << ","
          << csv_value(at(r.matching_score)) << "," << row.n_a << "," << row.n_b << "," << r.overlap.a << ","
          << r.overlap.b << ",\n";
    }
  }

  // Means over the pairs where each metric is defined.
  json summary = {{"pairs", rows.size()}, {"evaluated", 0}, {"failed", json::array()}, {"mean", json::object()}};
  std::size_t evaluated = 0;
  for (const Row& row : rows) {
    if (row.report) {
      ++evaluated;
    } else {
      summary["failed"].push_back({{"pair", row.name}, {"error", row.error}});
    }
  }
  summary["evaluated"] = evaluated;
  const std::pair<const char*, kprefine::MetricCurve kprefine::MetricReport::*> metrics[] = {
      {"repeatability", &kprefine::MetricReport::repeatability},
      {"repeatability_mnn", &kprefine::MetricReport::repeatability_mnn},
      {"mma", &kprefine::MetricReport::mma},
      {"matching_score", &kprefine::MetricReport::matching_score}};
  for (double t : kEvalThresholds) {
    json at_t = json::object();
    for (const auto& [name, member] : metrics) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const Row& row : rows) {
        if (!row.report) continue;
        const auto& curve = (*row.report).*member;
        auto it = curve.find(t);
        if (it == curve.end() || !it->second) continue;
        sum += *it->second;
        ++count;
      }
      at_t[name] = count ? json(sum / static_cast<double>(count)) : json(nullptr);
      at_t[std::string(name) + "_pairs"] = count;
    }
    summary["mean"][kprefine::format_double(t)] = at_t;
  }

  write_text(fs::path(opt.out) / "eval.csv", csv.str());
  write_text(fs::path(opt.out) / "eval_summary.json", summary.dump(2) + "\n");
  return 0;
}

// --- stats ------------------------------------------------------------------------

std::string histogram_csv(const std::vector<kprefine::Histogram>& hists) {
  std::ostringstream os;
  os << "filter,filter_value,bin_lower,count\n";
  for (const auto& h : hists) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      os << h.filter << "," << kprefine::format_double(h.filter_value) << ","
         << kprefine::format_double(h.lower_edges[b]) << "," << h.counts[b] << "\n";
    }
  }
  return os.str();
}

int cmd_stats(const std::vector<std::string>& inputs, const CommonOptions& opt) {
  if (opt.out.empty()) throw kprefine::InvalidConfig("stats needs --out <dir>");
  std::vector<kprefine::RefinedKeypoint> all;
  for (const auto& path : inputs) {
    try {
      const auto kps = kprefine::read_refined_jsonl(path);
      all.insert(all.end(), kps.begin(), kps.end());
    } catch (const std::exception& e) {
      std::cerr << "kprefine stats: " << path << ": " << e.what() << "\n";
      return 1;
    }
  }
  const auto hists = kprefine::score_histograms(all);
  write_text(fs::path(opt.out) / "robustness_hist.csv", histogram_csv(hists.robustness));
  write_text(fs::path(opt.out) / "deviation_hist.csv", histogram_csv(hists.deviation));
  return 0;
}

void add_common(CLI::App* cmd, CommonOptions& opt, bool pipeline_flags) {
  cmd->add_option("--out", opt.out, "Output file or directory");
  if (!pipeline_flags) return;
  cmd->add_option("--config", opt.config, "JSON configuration file");
  cmd->add_option("--seed", opt.seed, "Noise seed");
  cmd->add_option("--detector", opt.detector, "harris | shi_tomasi | external");
  cmd->add_option("--external-kpts-dir", opt.external_dir, "Directory with <stem>.warp<k>.kpts.jsonl files");
  cmd->add_option("--n-kpts", opt.n_kpts, "Keypoints kept per warp and in the output");
  cmd->add_option("--ranking", opt.ranking, "robustness_then_deviation | deviation_then_robustness");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keypoint refinement by robust Gaussian mixture fitting over warped views"};
  app.require_subcommand(1);
  CommonOptions opt;

  std::string input;
  auto* refine = app.add_subcommand("refine", "Refine the keypoints of an image or a directory of images");
  refine->add_option("input", input, "Image file or directory")->required();
  add_common(refine, opt, true);

  auto* export_cmd = app.add_subcommand("export-warps", "Write the warped views and their transforms");
  export_cmd->add_option("image", input, "Image file")->required();
  add_common(export_cmd, opt, true);

  auto* eval = app.add_subcommand("eval", "Evaluate keypoint pairs listed in a JSON manifest");
  eval->add_option("manifest", input, "Pairs manifest")->required();
  add_common(eval, opt, false);

  std::vector<std::string> stat_inputs;
  auto* stats = app.add_subcommand("stats", "Histograms of robustness and deviation scores");
  stats->add_option("files", stat_inputs, "Refined keypoint files")->required();
  add_common(stats, opt, false);

  CLI11_PARSE(app, argc, argv);

  try {
    apply_thread_cap();
    if (*refine) return cmd_refine(input, opt);
    if (*export_cmd) return cmd_export_warps(input, opt);
    if (*eval) return cmd_eval(input, opt);
    if (*stats) return cmd_stats(stat_inputs, opt);
  } catch (const std::exception& e) {
    std::cerr << "kprefine: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
