#include "kprefine/keypoint_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "kprefine/errors.hpp"

namespace kprefine {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_refined_jsonl(std::ostream& out, std::span<const RefinedKeypoint> kps) {
  for (const auto& kp : kps) {
    out << "{\"x\":" << format_double(kp.position.x) << ",\"y\":" << format_double(kp.position.y)
        << ",\"robustness\":" << format_double(kp.robustness) << ",\"deviation\":" << format_double(kp.deviation)
        << ",\"sigma\":" << format_double(kp.sigma) << ",\"alpha\":" << format_double(kp.alpha)
        << ",\"n_support\":" << kp.support.size() << "}\n";
  }
}

void write_refined_jsonl(const std::filesystem::path& path, std::span<const RefinedKeypoint> kps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_refined_jsonl(out, kps);
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
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
    fn(record, line_no);
  }
}

double number_field(const nlohmann::json& record, const char* field, std::size_t line_no) {
  auto it = record.find(field);
  if (it == record.end()) throw MissingField(field, line_no);
  if (!it->is_number()) throw ParseError(std::string("field '") + field + "' is not a number", line_no);
  return it->get<double>();
}

}  // namespace

std::vector<RefinedKeypoint> read_refined_jsonl(const std::filesystem::path& path) {
  std::vector<RefinedKeypoint> out;
  for_each_record(path, [&](const nlohmann::json& r, std::size_t line_no) {
    RefinedKeypoint kp;
    kp.position = {number_field(r, "x", line_no), number_field(r, "y", line_no)};
    kp.robustness = number_field(r, "robustness", line_no);
    kp.deviation = number_field(r, "deviation", line_no);
    if (r.contains("sigma")) kp.sigma = number_field(r, "sigma", line_no);
    if (r.contains("alpha")) kp.alpha = number_field(r, "alpha", line_no);
    out.push_back(std::move(kp));
  });
  return out;
}

EvalKeypoints load_eval_keypoints(const std::filesystem::path& path) {
  EvalKeypoints out;
  std::size_t with_desc = 0;
  for_each_record(path, [&](const nlohmann::json& r, std::size_t line_no) {
    out.points.push_back({number_field(r, "x", line_no), number_field(r, "y", line_no)});
    auto it = r.find("desc");
    if (it == r.end()) return;
    if (!it->is_array()) throw ParseError("field 'desc' is not an array", line_no);
    std::vector<float> d;
    d.reserve(it->size());
    for (const auto& v : *it) {
      if (!v.is_number()) throw ParseError("field 'desc' holds a non-number", line_no);
      d.push_back(v.get<float>());
    }
    out.descriptors.resize(out.points.size());
    out.descriptors.back() = std::move(d);
    ++with_desc;
  });
  if (with_desc != 0 && with_desc != out.points.size()) {
    throw ParseError(path.string() + ": either every record or none must carry 'desc'", out.points.size());
  }
  return out;
}

}  // namespace kprefine
