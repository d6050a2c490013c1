#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "oms/error.hpp"
#include "oms/geometry.hpp"
#include "oms/gmm.hpp"
#include "oms/random.hpp"

namespace oms {

enum class SearchStrategy {
  mode_ranked,  // component means by descending weight
  gmm_sample,   // i.i.d. draws from the fitted mixture
  random,       // uniform permutation of known locations (baseline)
};

inline SearchStrategy parse_strategy(const std::string& s) {
  if (s == "mode" || s == "mode_ranked") return SearchStrategy::mode_ranked;
  if (s == "sample" || s == "gmm_sample") return SearchStrategy::gmm_sample;
  throw InputError("unknown search strategy '" + s + "' (expected mode or sample)");
}

inline std::string to_string(SearchStrategy s) {
  switch (s) {
    case SearchStrategy::mode_ranked: return "mode_ranked";
    case SearchStrategy::gmm_sample: return "gmm_sample";
    case SearchStrategy::random: return "random";
  }
  return "unknown";
}

struct SearchPlan {
  std::vector<Vec3> candidates;
  SearchStrategy strategy = SearchStrategy::mode_ranked;
  std::uint64_t seed = 0;

  const Vec3& first() const { return candidates.front(); }
};

struct HitCriterion {
  double radius = 0.3;
};

/// Boundary-inclusive: a candidate exactly `radius` away counts as found.
inline bool is_hit(const Vec3& candidate, const Vec3& truth, HitCriterion criterion = {}) {
  return (candidate - truth).norm() <= criterion.radius;
}

/// Component indices by descending weight, ties by index.
inline std::vector<std::size_t> components_by_weight(const GmmModel& model) {
  std::vector<std::size_t> order(model.k());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return model.components[a].weight > model.components[b].weight;
  });
  return order;
}

/// mode_ranked yields at most K candidates (one per component mean).
inline SearchPlan plan_search(const GmmModel& model, SearchStrategy strategy, std::uint64_t seed,
                              std::size_t n_candidates) {
  model.validate();
  if (n_candidates < 1) throw InputError("plan_search: n_candidates must be >= 1");

  if (strategy == SearchStrategy::random) throw InputError("plan_search: random is a baseline, not a model strategy");

  SearchPlan plan{{}, strategy, seed};
  if (strategy == SearchStrategy::mode_ranked) {
    for (std::size_t k : components_by_weight(model)) {
      if (plan.candidates.size() == n_candidates) break;
      plan.candidates.push_back(model.components[k].mean);
    }
    return plan;
  }

  std::vector<double> weights;
  std::vector<Mat3> factors;
  for (const auto& c : model.components) {
    weights.push_back(c.weight);
    Eigen::LLT<Mat3> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw NumericError("plan_search: covariance is not positive-definite");
    factors.push_back(llt.matrixL());
  }
  Rng rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal;
  plan.candidates.reserve(n_candidates);
  for (std::size_t i = 0; i < n_candidates; ++i) {
    const std::size_t k = pick(rng);
    Vec3 z;
    for (int d = 0; d < 3; ++d) z(d) = normal(rng);
    plan.candidates.push_back(model.components[k].mean + factors[k] * z);
  }
  return plan;
}

/// Uniformly random visiting order over known locations.
inline SearchPlan random_baseline(const std::vector<Vec3>& locations, std::uint64_t seed) {
  if (locations.empty()) throw InputError("random_baseline: no locations");
  SearchPlan plan{locations, SearchStrategy::random, seed};
  Rng rng(seed);
  std::shuffle(plan.candidates.begin(), plan.candidates.end(), rng);
  return plan;
}

}  // namespace oms
