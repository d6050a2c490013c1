// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oms/oms.hpp"

namespace fs = std::filesystem;
using namespace oms;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned hw_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// P(chi2_3 <= x), closed form.
double chi2_3_cdf(double x) {
  return std::erf(std::sqrt(x / 2)) - std::sqrt(2 * x / std::numbers::pi) * std::exp(-x / 2);
}

const std::vector<Vec3> kCenters{{0, 0, 0}, {1.5, 0, 0}, {0, 1.5, 0}};

GroundTruthDistribution distribution(std::vector<double> priors) {
  GroundTruthDistribution d;
  for (std::size_t i = 0; i < kCenters.size(); ++i) d.clusters.push_back({kCenters[i], priors[i]});
  d.noise_sigma = 0.1;
  return d;
}

GroundTruthDistribution distribution_one() { return distribution({0.7, 0.2, 0.1}); }
GroundTruthDistribution distribution_two() {
  return distribution({1.0 / 3, 1.0 / 3, 1.0 - 2.0 / 3});
}

ExperimentConfig single_size(GroundTruthDistribution d, std::size_t size, std::uint64_t seed) {
  ExperimentConfig c;
  c.distribution = std::move(d);
  c.training_sizes = {size};
  c.n_trials = 100000;
  c.hit_radius = 0.3;
  c.k_min = 1;
  c.k_max = 6;
  c.strategy = SearchStrategy::mode_ranked;
  c.seed = seed;
  return c;
}

// Labeled generator used by criteria 4 and 5.
struct Labeled {
  std::vector<Vec3> points;
  std::vector<std::size_t> labels;
};

Labeled three_blobs(std::uint64_t seed) {
  const std::vector<Vec3> centers{{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Labeled out;
  for (std::size_t c = 0; c < 3; ++c)
    for (int i = 0; i < 100; ++i) {
      out.points.push_back(centers[c] + 0.1 * Vec3(n01(rng), n01(rng), n01(rng)));
      out.labels.push_back(c);
    }
  return out;
}

std::vector<Vec3> tight_blob(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::vector<Vec3> out;
  for (int i = 0; i < 100; ++i) out.push_back(Vec3(0.5, -0.2, 1.0) + 0.05 * Vec3(n01(rng), n01(rng), n01(rng)));
  return out;
}

Verdict asymmetric_advantage() {
  const auto curve = run_experiment(single_size(distribution_one(), 50, 42), hw_threads());
  if (curve.points.size() != 1) return {false, "fit failed"};
  const auto& p = curve.points[0];
  const bool ok = p.gmm_accuracy >= 0.62 && p.gmm_accuracy <= 0.70 && p.baseline_accuracy >= 0.31 &&
                  p.baseline_accuracy <= 0.34;
  return {ok, fmt("gmm=%.4f in [0.62,0.70] (analytic %.4f), baseline=%.4f in [0.31,0.34] (analytic %.4f), K=%zu",
                  p.gmm_accuracy, 0.7 * chi2_3_cdf(9), p.baseline_accuracy, chi2_3_cdf(9) / 3, p.model_k)};
}

Verdict uniform_null() {
  const auto curve = run_experiment(single_size(distribution_two(), 50, 42), hw_threads());
  if (curve.points.size() != 1) return {false, "fit failed"};
  const auto& p = curve.points[0];
  const double diff = std::abs(p.gmm_accuracy - p.baseline_accuracy);
  return {diff <= 0.02, fmt("gmm=%.4f baseline=%.4f |diff|=%.4f <= 0.02", p.gmm_accuracy, p.baseline_accuracy, diff)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / v.size());
}

Verdict learning_curve() {
  const std::vector<std::size_t> sizes{3, 5, 10, 20, 50, 100};
  std::vector<std::vector<double>> acc(sizes.size());
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ExperimentConfig c = single_size(distribution_one(), 0, seed);
    c.training_sizes = sizes;
    const auto curve = run_experiment(c, hw_threads());
    // A skipped size counts as zero accuracy: the pipeline produced no plan.
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      double a = 0;
      for (const auto& p : curve.points)
        if (p.training_size == sizes[i]) a = p.gmm_accuracy;
      acc[i].push_back(a);
    }
  }
  const double med3 = median(acc[0]), med100 = median(acc[5]);
  // Within-size spread averaged over the small sizes, so differences in the
  // mean between sizes do not inflate it.
  const double small_spread = (stddev(acc[0]) + stddev(acc[1]) + stddev(acc[2])) / 3;
  const double large_spread = stddev(acc[5]);
  std::string per_size;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    per_size += fmt(" n=%zu:med=%.4f,sd=%.4f", sizes[i], median(acc[i]), stddev(acc[i]));
  return {med100 >= med3 && small_spread > large_spread,
          fmt("median@100=%.4f >= median@3=%.4f; spread(<=10)=%.4f > spread(100)=%.4f;", med100, med3, small_spread,
              large_spread) +
              per_size};
}

Verdict em_recovery() {
  const auto data = three_blobs(7);
  EmConfig config;
  config.restarts = 10;
  const auto model = fit_em(data.points, 3, config);

  // Oracle: per-cluster sample means and label frequencies of the generator.
  std::vector<Vec3> sample_means(3, Vec3::Zero());
  std::vector<double> counts(3, 0);
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    sample_means[data.labels[i]] += data.points[i];
    counts[data.labels[i]] += 1;
  }
  for (int c = 0; c < 3; ++c) sample_means[c] /= counts[c];

  const std::vector<Vec3> truth{{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
  std::vector<bool> used(3, false);
  double worst_mean = 0, worst_weight = 0, worst_oracle = 0;
  bool distinct = true;
  for (const auto& comp : model.components) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if ((comp.mean - truth[c]).norm() < (comp.mean - truth[best]).norm()) best = c;
    if (used[best]) distinct = false;
    used[best] = true;
    worst_mean = std::max(worst_mean, (comp.mean - truth[best]).norm());
    worst_oracle = std::max(worst_oracle, (comp.mean - sample_means[best]).norm());
    worst_weight = std::max(worst_weight, std::abs(comp.weight - 1.0 / 3));
  }

  double worst_drop = 0;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    const auto run = run_em(data.points, 3, config, r);
    for (std::size_t i = 1; i < run.trace.size(); ++i) worst_drop = std::max(worst_drop, run.trace[i - 1] - run.trace[i]);
  }

  const bool ok = distinct && worst_mean <= 0.05 && worst_weight <= 0.06 && worst_drop <= 1e-9;
  return {ok, fmt("max |mean-center|=%.4f <= 0.05 (vs sample means %.2e), max |w-1/3|=%.4f <= 0.06, distinct=%d, "
                  "largest LL drop=%.2e <= 1e-9",
                  worst_mean, worst_oracle, worst_weight, int(distinct), worst_drop)};
}

Verdict bic_selection() {
  int three = 0, one = 0;
  double audit = 0;
  EmConfig config;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    config.seed = seed;
    const auto blobs = three_blobs(1000 + seed);
    if (select_model(blobs.points, 1, 6, config).k() == 3) ++three;
    if (select_model(tight_blob(2000 + seed), 1, 6, config).k() == 1) ++one;
  }
  // Formula audit on the literal definition, independent of the default.
  EmConfig literal;
  literal.bic_definition = BicDefinition::paper_literal;
  const auto blobs = three_blobs(7);
  const auto table = select_model_table(blobs.points, 1, 6, literal);
  const double n = blobs.points.size();
  for (const auto& m : table.fits)
    audit = std::max(audit, std::abs(m.bic - (m.k() * std::log(n) - 2 * m.log_likelihood)));
  return {three >= 18 && one >= 18 && audit <= 1e-9,
          fmt("K=3 in %d/20 (>=18), K=1 in %d/20 (>=18), max |bic - (K ln n - 2 LL)|=%.2e <= 1e-9", three, one, audit)};
}

Verdict geometry_round_trip() {
  Rng rng(2024);
  std::uniform_real_distribution<double> uni(0, 1);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    CameraIntrinsics k;
    k.width = 64 + int(uni(rng) * 1920);
    k.height = 48 + int(uni(rng) * 1080);
    k.fx = 50 + uni(rng) * 1500;
    k.fy = k.fx * (0.8 + 0.4 * uni(rng));
    k.cx = uni(rng) * (k.width - 1);
    k.cy = uni(rng) * (k.height - 1);
    const Vec3 eye(uni(rng) * 10 - 5, uni(rng) * 10 - 5, uni(rng) * 3);
    const Vec3 target = eye + Vec3(uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5).normalized();
    const auto pose = CameraPose::look_at(eye, target, std::abs((target - eye).z()) > 0.99 ? Vec3::UnitX()
                                                                                           : Vec3::UnitZ());
    const double u = uni(rng) * (k.width - 1), v = uni(rng) * (k.height - 1), d = 0.05 + uni(rng) * 20;
    const auto back = project_point(k, pose, unproject_pixel(k, pose, u, v, d));
    worst = std::max({worst, std::abs(back.u - u), std::abs(back.v - v), std::abs(back.depth - d)});
  }

  // Synthetic ingest: a few scenes, target hidden among distractors.
  const fs::path dir = fs::temp_directory_path() / "oms_acceptance_geometry";
  double worst_ratio = 0;
  for (int s = 0; s < 5; ++s) {
    fs::remove_all(dir);
    SceneFile sf;
    sf.query_label = "mug";
    sf.intrinsics = {200, 200, 80, 60, 160, 120};
    const Vec3 c(uni(rng) * 2 - 1, uni(rng) * 2 - 1, 0.3 + uni(rng) * 0.5);
    const double radius = 0.08 + 0.07 * uni(rng);
    sf.scene.spheres = {{"mug", c, radius}, {"box", c + Vec3(0.4, 0.3, 0.1), 0.12}, {"can", c + Vec3(-0.3, 0.4, 0), 0.1}};
    sf.noise_level = 0.05;
    sf.seed = 100 + s;
    for (int v = 0; v < 3; ++v) {
      const double a = 2 * std::numbers::pi * v / 3 + uni(rng);
      sf.views.push_back({std::to_string(v), CameraPose::look_at(c + Vec3(2 * std::cos(a), 2 * std::sin(a), 0.8), c),
                          double(v)});
    }
    render_scene_views(sf, dir);
    const auto rec = ingest_observation(dir, "mug");
    worst_ratio = std::max(worst_ratio, (rec.location - c).norm() / radius);
  }
  fs::remove_all(dir);
  return {worst <= 1e-6 && worst_ratio <= 1.0,
          fmt("max reprojection error=%.2e <= 1e-6 over 10000 pixels; worst localization error=%.3f radii <= 1",
              worst, worst_ratio)};
}

Verdict relevancy_subtraction() {
  Rng rng(5);
  std::uniform_real_distribution<float> uni(0, 1);
  CameraView a, b;
  a.intrinsics = b.intrinsics = {100, 100, 16, 12, 32, 24};
  a.label = b.label = "mug";
  a.depth = b.depth = ImageGrid(32, 24, 1.0f);
  a.relevancy = b.relevancy = ImageGrid(32, 24);
  for (auto& x : a.relevancy.values) x = uni(rng);
  for (auto& x : b.relevancy.values) x = uni(rng);
  a.relevancy.values[0] = 0.75f;
  b.relevancy.values[0] = 0.25f;
  a.relevancy.values[1] = 0.1f;
  b.relevancy.values[1] = 0.9f;

  const auto self = subtract_relevancy(a, a);
  const bool zero = std::all_of(self.relevancy.values.begin(), self.relevancy.values.end(), [](float x) { return x == 0.0f; });
  const auto ab = subtract_relevancy(a, b), ba = subtract_relevancy(b, a);
  const bool symmetric = ab.relevancy.values == ba.relevancy.values;
  bool spot = std::abs(ab.relevancy.values[0] - 0.5f) <= 1e-7f && std::abs(ab.relevancy.values[1] - 0.8f) <= 1e-6f;
  for (std::size_t i = 0; i < a.relevancy.values.size(); ++i)
    spot = spot && ab.relevancy.values[i] == std::abs(a.relevancy.values[i] - b.relevancy.values[i]);
  return {zero && symmetric && spot, fmt("self-difference zero=%d, symmetric=%d, spot values=%d", int(zero),
                                         int(symmetric), int(spot))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict parallel_determinism() {
  const fs::path dir = fs::temp_directory_path() / "oms_acceptance_bench";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "bench.conf") << "cluster = 0 0 0 0.7\ncluster = 1.5 0 0 0.2\ncluster = 0 1.5 0 0.1\n"
                                       "noise_sigma = 0.1\ntraining_sizes = 3, 5, 10, 20, 50, 100\nn_trials = 100000\n";
  auto bench = [&](int threads) {
    const auto out = dir / ("t" + std::to_string(threads) + ".csv");
    const std::string cmd = std::string(OMS_CLI_PATH) + " bench --config " + (dir / "bench.conf").string() +
                            " --out " + out.string() + " --seed 42 --threads " + std::to_string(threads) +
                            " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return std::pair{WIFEXITED(status) && WEXITSTATUS(status) == 0, slurp(out)};
  };
  const auto [ok1, csv1] = bench(1);
  const auto [ok8, csv8] = bench(8);
  fs::remove_all(dir);
  const bool ok = ok1 && ok8 && !csv1.empty() && csv1 == csv8;
  return {ok, fmt("exit ok (1/8 threads)=%d/%d, csv bytes=%zu/%zu, identical=%d", int(ok1), int(ok8), csv1.size(),
                  csv8.size(), int(csv1 == csv8))};
}

Verdict hit_boundary() {
  const Vec3 truth(0.4, -1.2, 0.7);
  const Vec3 dir = Vec3(1, 2, -2).normalized();
  const HitCriterion radius{0.3};
  const bool a = is_hit(truth + 0.29 * dir, truth, radius);
  const bool b = is_hit(truth + Vec3(0.3, 0, 0), truth, radius) && is_hit(Vec3(0.3, 0, 0), Vec3::Zero(), radius);
  const bool c = is_hit(truth + 0.31 * dir, truth, radius);
  return {a && b && !c, fmt("0.29 -> %s, 0.30 -> %s, 0.31 -> %s", a ? "hit" : "miss", b ? "hit" : "miss",
                            c ? "hit" : "miss")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"asymmetric advantage", asymmetric_advantage},
      {"uniform-prior null result", uniform_null},
      {"learning curve shape", learning_curve},
      {"EM parameter recovery", em_recovery},
      {"BIC model selection", bic_selection},
      {"geometry round trip", geometry_round_trip},
      {"relevancy subtraction", relevancy_subtraction},
      {"determinism under parallelism", parallel_determinism},
      {"hit criterion boundary", hit_boundary},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("[%s] criterion %zu: %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
