#pragma once

// Monte Carlo benchmark: objects are spawned around a few cluster centers with
// Gaussian placement noise, a mixture model is learned from a sampled history,
// and its first-try search accuracy is compared with random search over the
// known centers on identical spawns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oms/error.hpp"
#include "oms/geometry.hpp"
#include "oms/gmm.hpp"
#include "oms/parallel.hpp"
#include "oms/random.hpp"
#include "oms/search.hpp"
#include "oms/text.hpp"

namespace oms {

struct Cluster {
  Vec3 center = Vec3::Zero();
  double prior = 0;
};

struct GroundTruthDistribution {
  std::vector<Cluster> clusters;
  double noise_sigma = 0.1;

  /// Priors may be zero (a location that is never used) but must sum to 1.
  void validate() const {
    if (clusters.empty()) throw InputError("distribution: no clusters");
    double total = 0;
    for (const auto& c : clusters) {
      if (!(c.prior >= 0)) throw InputError("distribution: priors must be >= 0");
      if (!c.center.allFinite()) throw InputError("distribution: non-finite cluster center");
      total += c.prior;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InputError("distribution: priors must sum to 1");
    if (!(noise_sigma >= 0)) throw InputError("distribution: noise_sigma must be >= 0");
  }

  /// Pairs of centers too close to be told apart at the given hit radius.
  std::vector<std::string> warnings(double hit_radius = 0.3) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j)
        if ((clusters[i].center - clusters[j].center).norm() <= 2 * hit_radius)
          out.push_back("clusters " + std::to_string(i) + " and " + std::to_string(j) + " are within " +
                        format_exact(2 * hit_radius) + " m of each other");
    return out;
  }

  std::vector<Vec3> centers() const {
    std::vector<Vec3> out;
    for (const auto& c : clusters) out.push_back(c.center);
    return out;
  }

  std::vector<double> priors() const {
    std::vector<double> out;
    for (const auto& c : clusters) out.push_back(c.prior);
    return out;
  }
};

struct Spawn {
  Vec3 location = Vec3::Zero();
  std::size_t cluster = 0;
};

inline Spawn spawn(const GroundTruthDistribution& dist, Rng& rng) {
  const auto priors = dist.priors();
  std::discrete_distribution<std::size_t> pick(priors.begin(), priors.end());
  std::normal_distribution<double> normal;
  Spawn s;
  s.cluster = pick(rng);
  Vec3 noise;
  for (int d = 0; d < 3; ++d) noise(d) = normal(rng);
  s.location = dist.clusters[s.cluster].center + dist.noise_sigma * noise;
  return s;
}

/// Unlabeled placement history.
inline std::vector<Vec3> generate_training(const GroundTruthDistribution& dist, std::size_t n, Rng& rng) {
  dist.validate();
  if (n < 1) throw InputError("generate_training: n must be >= 1");
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(spawn(dist, rng).location);
  return out;
}

struct TrialOutcome {
  std::size_t training_size = 0;
  std::size_t trial_index = 0;
  bool gmm_hit = false;
  bool baseline_hit = false;
};

/// One spawn, judged against both the model's first candidate and the random
/// baseline's first candidate.
inline TrialOutcome run_trial(const GmmModel& model, const GroundTruthDistribution& dist, SearchStrategy strategy,
                              double hit_radius, Rng& rng, const std::vector<Vec3>& centers) {
  const Spawn s = spawn(dist, rng);
  const std::uint64_t baseline_seed = rng();
  const std::uint64_t plan_seed = rng();
  const HitCriterion criterion{hit_radius};
  TrialOutcome t;
  t.baseline_hit = is_hit(random_baseline(centers, baseline_seed).first(), s.location, criterion);
  t.gmm_hit = is_hit(plan_search(model, strategy, plan_seed, 1).first(), s.location, criterion);
  return t;
}

inline TrialOutcome run_trial(const GmmModel& model, const GroundTruthDistribution& dist, SearchStrategy strategy,
                              double hit_radius, Rng& rng) {
  return run_trial(model, dist, strategy, hit_radius, rng, dist.centers());
}

struct ExperimentConfig {
  GroundTruthDistribution distribution;
  std::vector<std::size_t> training_sizes{3, 5, 10, 20, 50, 100};
  std::size_t n_trials = 100000;
  double hit_radius = 0.3;
  EmConfig em;
  std::size_t k_min = 1;
  std::size_t k_max = 6;
  std::optional<std::size_t> fixed_k;  // bypasses BIC selection
  SearchStrategy strategy = SearchStrategy::mode_ranked;
  std::uint64_t seed = 42;

  void validate() const {
    distribution.validate();
    em.validate();
    if (n_trials < 1) throw InputError("experiment: n_trials must be >= 1");
    if (training_sizes.empty()) throw InputError("experiment: training_sizes must be non-empty");
    for (auto n : training_sizes)
      if (n < 1) throw InputError("experiment: training sizes must be >= 1");
    if (!(hit_radius > 0)) throw InputError("experiment: hit_radius must be > 0");
    if (k_min < 1 || k_min > k_max) throw InputError("experiment: need 1 <= k_min <= k_max");
    if (fixed_k && *fixed_k < 1) throw InputError("experiment: fixed_k must be >= 1");
    if (strategy == SearchStrategy::random) throw InputError("experiment: strategy must be mode or sample");
  }
};

struct AccuracyPoint {
  std::size_t training_size = 0;
  std::size_t n_trials = 0;
  std::size_t gmm_hits = 0;
  std::size_t baseline_hits = 0;
  double gmm_accuracy = 0;
  double baseline_accuracy = 0;
  double gmm_ci = 0;  // Wilson 95% half-width
  double baseline_ci = 0;
  std::size_t model_k = 0;
};

struct AccuracyCurve {
  std::vector<AccuracyPoint> points;
  std::vector<std::string> skipped;  // training sizes whose fit failed, with the reason
};

inline constexpr double kWilsonZ95 = 1.959963984540054;

inline double wilson_halfwidth(std::size_t hits, std::size_t n, double z = kWilsonZ95) {
  if (n == 0) return 0;
  const double nn = double(n);
  const double p = double(hits) / nn;
  const double z2 = z * z;
  return z / (1 + z2 / nn) * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
}

/// Seeds of every stochastic stage, derived from the master seed.
namespace seeds {
inline std::uint64_t training(std::uint64_t master, std::size_t size) { return derive_seed(master, {1, size}); }
inline std::uint64_t em(std::uint64_t master, std::size_t size) { return derive_seed(master, {2, size}); }
inline std::uint64_t trial(std::uint64_t master, std::size_t size, std::size_t index) {
  return derive_seed(master, {3, size, index});
}
}  // namespace seeds

/// Learns the model used for one training size.
inline GmmModel fit_for_training_size(const ExperimentConfig& config, std::size_t training_size) {
  Rng rng(seeds::training(config.seed, training_size));
  const auto history = generate_training(config.distribution, training_size, rng);
  EmConfig em = config.em;
  em.seed = seeds::em(config.seed, training_size);
  if (config.fixed_k) return fit_em(history, *config.fixed_k, em);
  const std::size_t k_max = std::min(config.k_max, history.size());
  const std::size_t k_min = std::min(config.k_min, k_max);
  return select_model(history, k_min, k_max, em);
}

/// Runs every training size. Output is independent of `threads`: each trial
/// owns a seed derived from (master seed, training size, trial index) and hits
/// are aggregated as integer counts.
inline AccuracyCurve run_experiment(const ExperimentConfig& config, unsigned threads = 1) {
  config.validate();
  const auto centers = config.distribution.centers();
  constexpr std::size_t kBlock = 4096;

  AccuracyCurve curve;
  for (std::size_t size : config.training_sizes) {
    GmmModel model;
    try {
      model = fit_for_training_size(config, size);
    } catch (const Error& e) {
      curve.skipped.push_back("training_size " + std::to_string(size) + ": " + e.what());
      continue;
    }

    const std::size_t blocks = (config.n_trials + kBlock - 1) / kBlock;
    std::vector<std::size_t> gmm_hits(blocks, 0), baseline_hits(blocks, 0);
    parallel_for(blocks, threads, [&](std::size_t b) {
      const std::size_t end = std::min(config.n_trials, (b + 1) * kBlock);
      for (std::size_t i = b * kBlock; i < end; ++i) {
        Rng rng(seeds::trial(config.seed, size, i));
        const auto t = run_trial(model, config.distribution, config.strategy, config.hit_radius, rng, centers);
        gmm_hits[b] += t.gmm_hit;
        baseline_hits[b] += t.baseline_hit;
      }
    });

    AccuracyPoint p;
    p.training_size = size;
    p.n_trials = config.n_trials;
    for (std::size_t b = 0; b < blocks; ++b) {
      p.gmm_hits += gmm_hits[b];
      p.baseline_hits += baseline_hits[b];
    }
    p.gmm_accuracy = double(p.gmm_hits) / double(p.n_trials);
    p.baseline_accuracy = double(p.baseline_hits) / double(p.n_trials);
    p.gmm_ci = wilson_halfwidth(p.gmm_hits, p.n_trials);
    p.baseline_ci = wilson_halfwidth(p.baseline_hits, p.n_trials);
    p.model_k = model.k();
    curve.points.push_back(p);
  }
  return curve;
}

inline constexpr const char* kCurveCsvHeader = "training_size,gmm_accuracy,baseline_accuracy,gmm_ci,baseline_ci";

inline std::string curve_to_csv(const AccuracyCurve& curve) {
  std::ostringstream out;
  out << kCurveCsvHeader << '\n';
  for (const auto& p : curve.points)
    out << p.training_size << ',' << format_exact(p.gmm_accuracy) << ',' << format_exact(p.baseline_accuracy) << ','
        << format_exact(p.gmm_ci) << ',' << format_exact(p.baseline_ci) << '\n';
  return out.str();
}

}  // namespace oms
