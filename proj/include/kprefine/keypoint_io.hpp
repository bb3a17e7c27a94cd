#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kprefine/gmm.hpp"
#include "kprefine/types.hpp"

namespace kprefine {

/// One JSON object per line: x, y, robustness, deviation, sigma, alpha,
/// n_support. Numbers are printed with 17 significant digits.
void write_refined_jsonl(std::ostream& out, std::span<const RefinedKeypoint> kps);
void write_refined_jsonl(const std::filesystem::path& path, std::span<const RefinedKeypoint> kps);

/// Reads files written by write_refined_jsonl (support lists are not stored).
std::vector<RefinedKeypoint> read_refined_jsonl(const std::filesystem::path& path);

/// Keypoints for evaluation: any JSON-lines file with x and y; an optional
/// numeric `desc` array supplies descriptors (all records or none).
struct EvalKeypoints {
  std::vector<Point2> points;
  std::vector<std::vector<float>> descriptors;
};

EvalKeypoints load_eval_keypoints(const std::filesystem::path& path);

/// "%.17g"
std::string format_double(double v);

}  // namespace kprefine
