// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kprefine/detect.hpp"
#include "kprefine/eval.hpp"
#include "kprefine/geometry.hpp"
#include "kprefine/gmm.hpp"
#include "kprefine/image.hpp"
#include "kprefine/kde.hpp"
#include "kprefine/oracle.hpp"
#include "kprefine/pipeline.hpp"
#include "kprefine/warp.hpp"
#include "support/scenes.hpp"

namespace {

using namespace kprefine;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first failure; later checks still run so the detail shows the worst case.
class Checker {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && pass_) {
      pass_ = false;
      first_failure_ = what;
    }
  }
  bool pass() const { return pass_; }
  const std::string& failure() const { return first_failure_; }

 private:
  bool pass_ = true;
  std::string first_failure_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<Point2> positions(const std::vector<Keypoint>& kps) {
  std::vector<Point2> out;
  out.reserve(kps.size());
  for (const auto& k : kps) out.push_back(k.position());
  return out;
}

// --- 1: EM correctness --------------------------------------------------------------

Outcome em_correctness() {
  const auto t0 = Clock::now();
  Checker c;
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> n_dist(1, 50), k_dist(1, 3);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  GmmConfig cfg;
  cfg.mode = FitMode::Standard;
  cfg.convergence_tol = 0.0;
  cfg.phase1_iters = 40;
  cfg.phase2_iters = 10;
  const int instances = 200;
  double worst_rise = -1e300, worst_sum = 0.0;
  long steps = 0;
  for (int inst = 0; inst < instances; ++inst) {
    const int n = n_dist(rng), k = k_dist(rng);
    std::vector<Point2> pts, seeds;
    for (int i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
    for (int j = 0; j < k; ++j) seeds.push_back({u(rng), u(rng)});
    std::vector<MixtureComponent> init;
    for (Point2 s : seeds) init.push_back({s, cfg.init_sigma, 1.0 / k});
    double prev = oracle::nll(pts, init);
    std::vector<MixtureComponent> current = init;
    fit(pts, seeds, cfg, [&](const FitStep& step) {
      // Responsibilities of the E-step that fed this M-step.
      const auto resp = e_step(pts, current, Weighting::Uniform);
      for (std::size_t i = 0; i < resp.points(); ++i) {
        if (resp.inert(i)) continue;
        const double err = std::abs(resp.column_sum(i) - 1.0);
        worst_sum = std::max(worst_sum, err);
        c.require(err <= 1e-9, "column sum off by " + fmt("%.3g", err));
      }
      const double cur = oracle::nll(pts, *step.components);
      worst_rise = std::max(worst_rise, cur - prev);
      c.require(cur <= prev + 1e-9, "NLL rose by " + fmt("%.3g", cur - prev) + " on instance " + std::to_string(inst));
      prev = cur;
      current = *step.components;
      ++steps;
    });
  }
  const double secs = seconds_since(t0);
  c.require(secs < 10.0, "runtime " + fmt("%.2f", secs) + " s");
  std::ostringstream d;
  d << instances << " instances, " << steps << " EM steps, max NLL change " << fmt("%.3g", worst_rise)
    << ", max |column sum - 1| " << fmt("%.3g", worst_sum) << ", " << fmt("%.2f", secs) << " s";
  return {c.pass(), c.pass() ? d.str() : c.failure() + "; " + d.str()};
}

// --- 2: robust outlier rejection on planted clusters ----------------------------------

struct PlantedInstance {
  oracle::PlantedSet set;
  std::vector<Point2> seeds;
};

PlantedInstance make_planted_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> g_dist(1, 3);
  std::uniform_real_distribution<double> pos(15.0, 85.0), sig(0.2, 1.0), jitter(-1.0, 1.0);
  const int g = g_dist(rng);
  oracle::PlantSpec spec;
  while (static_cast<int>(spec.centers.size()) < g) {
    const Point2 c{pos(rng), pos(rng)};
    bool spaced = true;
    for (Point2 o : spec.centers) spaced = spaced && distance(c, o) >= 20.0;
    if (spaced) spec.centers.push_back(c);
  }
  for (int i = 0; i < g; ++i) spec.sigmas.push_back(sig(rng));
  // Up to 30% of all points: o / (21 g + o) <= 0.3  <=>  o <= 9 g.
  spec.outliers = std::uniform_int_distribution<int>(0, 9 * g)(rng);
  spec.min_outlier_distance = 20.0;
  spec.seed = seed;
  PlantedInstance inst{oracle::plant_clusters(spec), {}};
  for (Point2 c : spec.centers) inst.seeds.push_back({c.x + jitter(rng), c.y + jitter(rng)});
  return inst;
}

// Returns the number of planted means missed by `comps`.
int missed_means(const oracle::PlantedSet& set, const std::vector<MixtureComponent>& comps, double* worst_excess) {
  int missed = 0;
  for (std::size_t g = 0; g < set.centers.size(); ++g) {
    double best = 1e300;
    for (const auto& m : comps) best = std::min(best, distance(m.mu, set.centers[g]));
    const double bound = 3.0 * set.sigmas[g] / std::sqrt(21.0) + 0.05;
    *worst_excess = std::max(*worst_excess, best - bound);
    missed += best > bound ? 1 : 0;
  }
  return missed;
}

Outcome outlier_rejection() {
  const auto t0 = Clock::now();
  Checker c;
  int clusters = 0, robust_missed = 0, standard_failed_instances = 0;
  std::size_t points = 0, outliers = 0;
  double robust_excess = -1e300, standard_excess = -1e300;
  GmmConfig robust;
  GmmConfig standard;
  standard.mode = FitMode::Standard;
  for (std::uint64_t s = 1; s <= 40; ++s) {
    const auto inst = make_planted_instance(s);
    const auto pts = positions(inst.set.points);
    clusters += static_cast<int>(inst.set.centers.size());
    points += pts.size();
    outliers += std::count(inst.set.cluster_of.begin(), inst.set.cluster_of.end(), -1);
    const int r = missed_means(inst.set, fit(pts, inst.seeds, robust), &robust_excess);
    robust_missed += r;
    c.require(r == 0, "robust fit missed a planted mean on instance " + std::to_string(s));
    std::vector<MixtureComponent> std_comps;
    try {
      std_comps = fit(pts, inst.seeds, standard);
    } catch (const AllComponentsDropped&) {
    }
    standard_failed_instances += missed_means(inst.set, std_comps, &standard_excess) > 0 ? 1 : 0;
  }
  c.require(standard_failed_instances >= 1, "standard EM met the bound on every instance");
  const double secs = seconds_since(t0);
  c.require(secs < 30.0, "runtime " + fmt("%.2f", secs) + " s");
  std::ostringstream d;
  d << "40 instances, " << clusters << " clusters, " << outliers << "/" << points << " outliers; robust missed "
    << robust_missed << " (worst margin " << fmt("%.3f", -robust_excess) << " px); standard failed on "
    << standard_failed_instances << " instances; " << fmt("%.2f", secs) << " s";
  return {c.pass(), c.pass() ? d.str() : c.failure() + "; " + d.str()};
}

// --- 3: score semantics --------------------------------------------------------------

Outcome score_semantics() {
  Checker c;
  const GmmConfig cfg;
  const double sigma = 0.4;
  const std::vector<MixtureComponent> comps{{{50, 50}, sigma, 0.5}, {{80, 20}, 0.7, 0.3}, {{10, 90}, 1.3, 0.2}};
  std::vector<Keypoint> pts;
  for (int w = 0; w < 21; ++w) {
    const double a = w * 0.3;
    pts.push_back({50 + 0.9 * std::cos(a), 50 + 0.9 * std::sin(a), 1.0, w});  // 0.9 < 3 * 0.4
  }
  const auto scored = score_components(pts, comps, cfg);
  c.require(scored[0].robustness == 21.0, "one member per warp scored " + fmt("%g", scored[0].robustness));
  for (std::size_t k = 0; k < comps.size(); ++k) {
    c.require(scored[k].deviation == 6.0 * comps[k].sigma, "deviation != 6 sigma for component " + std::to_string(k));
  }
  // Two members from warp 7, none from warp 20.
  std::vector<Keypoint> dup = pts;
  dup[20].warp_id = 7;
  const auto dup_scored = score_components(dup, comps, cfg);
  c.require(dup_scored[0].robustness == 20.0, "duplicate warp scored " + fmt("%g", dup_scored[0].robustness));
  c.require(dup_scored[0].support.size() == 21u, "support list lost the duplicate");
  std::ostringstream d;
  d << "robustness " << scored[0].robustness << " (all warps), " << dup_scored[0].robustness
    << " (warp 7 twice); deviation = 6 sigma on " << comps.size() << " components";
  return {c.pass(), c.pass() ? d.str() : c.failure()};
}

// --- 4: repeatability gain ----------------------------------------------------------

Outcome repeatability_gain() {
  const auto t0 = Clock::now();
  Checker c;
  const ImageSize size{256, 256};
  const int n = 256;
  const std::vector<double> t3{3.0};
  PipelineConfig cfg;
  cfg.detector.n_kpts = n;
  int wins = 0;
  std::ostringstream per_image;
  for (std::uint64_t img_id = 1; img_id <= 5; ++img_id) {
    const testing::ShapeScene scene(1000 + img_id, 256.0);
    const auto base = scene.render(Homography::identity(), size);
    const auto raw_base = positions(select_top_n(detect(base, cfg.detector), n));
    std::vector<Point2> ref_base;
    for (const auto& k : refine_image(base, cfg).keypoints) ref_base.push_back(k.position);
    double raw_sum = 0.0, ref_sum = 0.0;
    for (std::uint64_t v = 0; v < 3; ++v) {
      const auto h = testing::random_view_homography(100 * img_id + v, size);
      const auto view = scene.render(h, size);
      const auto raw_view = positions(select_top_n(detect(view, cfg.detector), n));
      std::vector<Point2> ref_view;
      for (const auto& k : refine_image(view, cfg).keypoints) ref_view.push_back(k.position);
      const auto raw = repeatability_mnn({raw_base, size}, {raw_view, size}, h, t3).at(3.0);
      const auto ref = repeatability_mnn({ref_base, size}, {ref_view, size}, h, t3).at(3.0);
      raw_sum += raw.value_or(0.0);
      ref_sum += ref.value_or(0.0);
    }
    const double raw_mean = raw_sum / 3.0, ref_mean = ref_sum / 3.0;
    wins += ref_mean >= raw_mean ? 1 : 0;
    per_image << (img_id > 1 ? ", " : "") << fmt("%.3f", ref_mean) << " vs " << fmt("%.3f", raw_mean);
  }
  c.require(wins >= 4, "refined >= raw on only " + std::to_string(wins) + " of 5 images");
  const double secs = seconds_since(t0);
  c.require(secs < 120.0, "runtime " + fmt("%.1f", secs) + " s");
  std::ostringstream d;
  d << "rep-MNN@3px refined vs raw per image: " << per_image.str() << "; " << wins << "/5 images; "
    << fmt("%.1f", secs) << " s";
  return {c.pass(), c.pass() ? d.str() : c.failure() + "; " + d.str()};
}

// --- 5: geometry and warp invariants ---------------------------------------------------

Outcome geometry_invariants() {
  Checker c;
  const auto set = build_augmentation_set(WarpConfig{});
  c.require(set.size() == 21u, "augmentation set has " + std::to_string(set.size()) + " entries");
  const ImageSize source{640, 480};
  double worst = 0.0;
  for (const auto& e : set.entries) {
    const auto plan = plan_canvas(e.transform, source);
    for (const AffineTransform& t : {e.transform, plan.to_canvas}) {
      const auto inv = invert(t);
      for (int gy = 0; gy < 25; ++gy) {
        for (int gx = 0; gx < 40; ++gx) {
          const Point2 p{-0.5 + gx * 640.0 / 39.0, -0.5 + gy * 480.0 / 24.0};
          worst = std::max(worst, distance(apply_point(inv, apply_point(t, p)), p));
        }
      }
    }
  }
  c.require(worst <= 1e-6, "round trip error " + fmt("%.3g", worst));
  const testing::ShapeScene scene(5, 97);
  const auto img = scene.render(Homography::identity(), {97, 61}, 2);
  c.require(warp_image(img, AffineTransform::identity()) == img, "identity warp changed pixels");
  c.require(render_warp(img, set[0].transform).image == img, "entry 0 warp changed pixels");
  std::ostringstream d;
  d << set.size() << " transforms, 1000-point grid, max round-trip error " << fmt("%.3g", worst)
    << " px; identity warp bit-exact";
  return {c.pass(), c.pass() ? d.str() : c.failure()};
}

// --- 6: KDE invariants -------------------------------------------------------------

Outcome kde_invariants() {
  Checker c;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 95.0);
  std::normal_distribution<double> nrm(0.0, 0.4);
  std::vector<Point2> pts;
  for (int k = 0; k < 60; ++k) {
    const Point2 center{u(rng), u(rng)};
    for (int j = 0; j < 15; ++j) pts.push_back({center.x + nrm(rng), center.y + nrm(rng)});
  }
  for (int j = 0; j < 300; ++j) pts.push_back({u(rng), u(rng)});
  const KdeConfig cfg;
  const ImageSize dims{96, 96};
  const auto grid = evaluate_grid(pts, cfg, dims);

  auto shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  c.require(evaluate_grid(shuffled, cfg, dims).values == grid.values, "permuted input changed the grid");
  std::reverse(shuffled.begin(), shuffled.end());
  c.require(evaluate_grid(shuffled, cfg, dims).values == grid.values, "reversed input changed the grid");

  auto doubled = pts;
  doubled.insert(doubled.end(), pts.begin(), pts.end());
  const auto grid2 = evaluate_grid(doubled, cfg, dims);
  double dup_err = 0.0;
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    dup_err = std::max(dup_err, std::abs(grid2.values[i] - grid.values[i]) / (1e-300 + std::abs(grid.values[i])));
  }
  c.require(dup_err <= 1e-12, "duplicated input changed the density by " + fmt("%.3g", dup_err));
  // The automatic threshold scales with 1/N, so compare maxima under one fixed threshold.
  KdeConfig fixed = cfg;
  fixed.density_threshold = resolve_density_threshold(grid, cfg);
  const auto maxima = find_local_maxima(grid, fixed);
  c.require(find_local_maxima(grid2, fixed) == maxima, "duplicated input changed the maxima");

  c.require(!maxima.empty(), "no maxima");
  for (Point2 m : maxima) {
    const int mx = static_cast<int>(m.x), my = static_cast<int>(m.y);
    for (int dy = -3; dy <= 3; ++dy) {
      for (int dx = -3; dx <= 3; ++dx) {
        const int x = mx + dx, y = my + dy;
        if ((dx == 0 && dy == 0) || x < 0 || y < 0 || x >= dims.width || y >= dims.height) continue;
        c.require(grid(x, y) < grid(mx, my), "maximum does not dominate its 7x7 window");
      }
    }
  }
  std::ostringstream d;
  d << pts.size() << " points; permutation bit-exact; duplication max rel. change " << fmt("%.3g", dup_err) << "; "
    << maxima.size() << " maxima dominate their 7x7 windows";
  return {c.pass(), c.pass() ? d.str() : c.failure()};
}

// --- 7: CLI determinism --------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& env, const std::string& args) {
  const std::string cmd = env + " " + KPREFINE_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_determinism() {
  Checker c;
  const auto dir = testing::scratch_dir("acceptance_cli");
  const testing::ShapeScene scene(77, 160);
  write_png16(dir / "scene.png", scene.render(Homography::identity(), {160, 128}, 2));
  const std::string args = "refine " + (dir / "scene.png").string() + " --seed 11 --n-kpts 500 --out ";
  c.require(run_cli("KPREFINE_THREADS=1", args + (dir / "a.jsonl").string()) == 0, "run 1 failed");
  c.require(run_cli("KPREFINE_THREADS=1", args + (dir / "b.jsonl").string()) == 0, "run 2 failed");
  c.require(run_cli("KPREFINE_THREADS=4", args + (dir / "c.jsonl").string()) == 0, "run 3 failed");
  const auto a = slurp(dir / "a.jsonl");
  c.require(!a.empty(), "empty output");
  c.require(a == slurp(dir / "b.jsonl"), "repeat run differs");
  c.require(a == slurp(dir / "c.jsonl"), "KPREFINE_THREADS=4 run differs");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  std::ostringstream d;
  d << "3 runs (KPREFINE_THREADS=1,1,4), " << lines << " keypoints, " << a.size() << " bytes, byte-identical";
  return {c.pass(), c.pass() ? d.str() : c.failure()};
}

// --- 8: metric fixtures -----------------------------------------------------------

Outcome metric_fixtures() {
  Checker c;
  const std::vector<double> ts{1.0, 2.0, 3.0};
  const ImageSize sz{100, 100};
  const auto id = Homography::identity();
  auto at = [](const MetricCurve& m, double t) { return m.at(t); };
  int checked = 0;
  auto expect = [&](const std::optional<double>& got, std::optional<double> want, const std::string& name) {
    ++checked;
    c.require(got == want, name + ": got " + (got ? fmt("%.17g", *got) : "undefined"));
  };

  const std::vector<Point2> three{{10, 10}, {50, 20}, {70, 80}};
  expect(at(repeatability({three, sz}, {three, sz}, id, ts), 1.0), 1.0, "repeatability identical");
  const std::vector<Point2> da{{10, 10}, {50, 20}}, db{{30, 30}, {80, 80}};
  expect(at(repeatability({da, sz}, {db, sz}, id, ts), 1.0), 0.0, "repeatability disjoint");
  const std::vector<Point2> ta{{10, 10}, {60, 60}}, tb{{10.5, 10}};
  expect(at(repeatability({ta, sz}, {tb, sz}, id, ts), 1.0), 2.0 / 3.0, "repeatability 2/3");

  expect(at(repeatability_mnn({three, sz}, {three, sz}, id, ts), 1.0), 1.0, "mnn identical");
  const std::vector<Point2> dense_a{{10, 10}, {10.8, 10}}, dense_b{{10.2, 10}};
  const auto plain = at(repeatability({dense_a, sz}, {dense_b, sz}, id, ts), 1.0);
  const auto mnn = at(repeatability_mnn({dense_a, sz}, {dense_b, sz}, id, ts), 1.0);
  expect(plain, 1.0, "dense-A plain");
  expect(mnn, 2.0 / 3.0, "dense-A mnn");
  c.require(mnn && plain && *mnn < *plain, "dense-A mnn not below plain");
  const std::vector<Point2> none, two{{10, 10}, {20, 20}};
  expect(at(repeatability_mnn({none, sz}, {two, sz}, id, ts), 1.0), 0.0, "mnn empty A");

  const std::vector<Point2> ea{{1, 1}, {5, 5}};
  expect(at(mma(std::vector<Match>{{0, 0}, {1, 1}}, ea, ea, id, ts), 1.0), 1.0, "mma exact");
  expect(at(mma({}, ea, ea, id, ts), 1.0), std::nullopt, "mma none proposed");
  const std::vector<Point2> ma{{1, 1}, {5, 5}, {9, 9}}, mb{{1.5, 1}, {5, 5.2}, {20, 20}};
  expect(at(mma(std::vector<Match>{{0, 0}, {1, 1}, {2, 2}}, ma, mb, id, ts), 1.0), 2.0 / 3.0, "mma 2/3");

  const std::vector<Point2> four{{10, 10}, {20, 20}, {30, 30}, {40, 40}};
  expect(at(matching_score(std::vector<Match>{{0, 0}, {1, 1}}, {four, sz}, {four, sz}, id, ts), 1.0), 0.5,
         "ms 2/4");
  expect(at(matching_score(std::vector<Match>{{0, 1}}, {two, sz}, {two, sz}, id, ts), 3.0), 0.0, "ms zero");
  expect(at(matching_score(std::vector<Match>{{0, 0}, {1, 1}, {2, 2}}, {three, sz}, {three, sz}, id, ts), 1.0), 1.0,
         "ms full");

  RefinedKeypoint k;
  k.robustness = 21;
  k.deviation = 0.8;
  const std::vector<RefinedKeypoint> one{k};
  const auto h1 = robustness_histogram(one, 1.0);
  ++checked;
  c.require(h1.total() == 1u && h1.counts[21] == 1u, "histogram d<=1");
  ++checked;
  c.require(robustness_histogram(one, 0.5).total() == 0u, "histogram d<=0.5");

  std::mt19937_64 rng(88);
  std::uniform_int_distribution<int> r(0, 21);
  std::uniform_real_distribution<double> dv(0.1, 12.0);
  std::vector<RefinedKeypoint> kps(100);
  for (auto& kp : kps) {
    kp.robustness = r(rng);
    kp.deviation = dv(rng);
  }
  for (const auto& h : score_histograms(kps).robustness) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      std::size_t tally = 0;
      for (const auto& kp : kps) tally += kp.deviation <= h.filter_value && static_cast<int>(kp.robustness) == int(b);
      c.require(h.counts[b] == tally, "histogram tally " + h.filter);
    }
  }
  ++checked;
  std::ostringstream d;
  d << checked << " fixtures exact; dense-A rep-MNN " << fmt("%.4f", mnn.value_or(-1)) << " < plain "
    << fmt("%.4f", plain.value_or(-1));
  return {c.pass(), c.pass() ? d.str() : c.failure()};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"EM correctness", em_correctness},
      {"robust outlier rejection", outlier_rejection},
      {"score semantics", score_semantics},
      {"repeatability gain", repeatability_gain},
      {"geometry/warp invariants", geometry_invariants},
      {"KDE invariants", kde_invariants},
      {"determinism", cli_determinism},
      {"metric fixtures", metric_fixtures},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %d (%s): %s  %s\n", index, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
