#pragma once

// Gaussian mixture models over 3D locations, fitted by expectation-maximization
// with random restarts and scored by BIC.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oms/error.hpp"
#include "oms/geometry.hpp"
#include "oms/parallel.hpp"
#include "oms/random.hpp"

namespace oms {

/// How BIC counts model size. `paper_literal` uses the number of Gaussians K;
/// `free_parameter_count` uses the textbook count K*(3 + 6) + (K - 1).
/// With only K per model the penalty is too weak to stop EM from splitting
/// Gaussian clusters, so selection defaults to the free-parameter count.
enum class BicDefinition { paper_literal, free_parameter_count };

inline std::string to_string(BicDefinition d) {
  return d == BicDefinition::paper_literal ? "paper_literal" : "free_parameter_count";
}

inline BicDefinition parse_bic_definition(const std::string& s) {
  if (s == "paper_literal") return BicDefinition::paper_literal;
  if (s == "free_parameter_count") return BicDefinition::free_parameter_count;
  throw InputError("unknown bic definition '" + s + "'");
}

struct GaussianComponent {
  double weight = 1.0;
  Vec3 mean = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct EmConfig {
  int max_iterations = 200;
  double tolerance = 1e-6;
  int restarts = 10;
  double covariance_floor = 1e-6;
  std::uint64_t seed = 42;
  BicDefinition bic_definition = BicDefinition::free_parameter_count;

  void validate() const {
    if (max_iterations < 1) throw InputError("em: max_iterations must be >= 1");
    if (!(tolerance > 0)) throw InputError("em: tolerance must be > 0");
    if (restarts < 1) throw InputError("em: restarts must be >= 1");
    if (!(covariance_floor > 0)) throw InputError("em: covariance_floor must be > 0");
  }

  friend bool operator==(const EmConfig&, const EmConfig&) = default;
};

struct GmmModel {
  std::string label;
  std::vector<GaussianComponent> components;
  double log_likelihood = 0;
  double bic = 0;
  std::size_t n_train = 0;
  int iterations = 0;
  bool converged = false;
  EmConfig config;

  std::size_t k() const noexcept { return components.size(); }

  void validate() const {
    if (components.empty()) throw InputError("model has no components");
    double total = 0;
    for (const auto& c : components) {
      if (!(c.weight > 0 && c.weight <= 1)) throw InputError("model: component weight outside (0, 1]");
      if (!c.mean.allFinite() || !c.covariance.allFinite()) throw InputError("model: non-finite parameters");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InputError("model: weights do not sum to 1");
  }

  friend bool operator==(const GmmModel&, const GmmModel&) = default;
};

/// n x K posterior membership probabilities.
class ResponsibilityMatrix {
 public:
  ResponsibilityMatrix() = default;
  explicit ResponsibilityMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {}

  std::size_t rows() const noexcept { return std::size_t(values_.rows()); }
  std::size_t cols() const noexcept { return std::size_t(values_.cols()); }
  double operator()(std::size_t i, std::size_t k) const { return values_(Eigen::Index(i), Eigen::Index(k)); }
  const Eigen::MatrixXd& matrix() const noexcept { return values_; }

 private:
  Eigen::MatrixXd values_;
};

inline constexpr double kDegenerateMass = 1e-12;
inline constexpr double kMonotoneSlack = 1e-9;

namespace detail {

inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Cached Cholesky factor of one component.
struct ComponentDensity {
  Vec3 mean;
  Eigen::LLT<Mat3> llt;
  double log_norm = 0;  // -(3/2) ln 2pi - 1/2 ln|cov|

  explicit ComponentDensity(const GaussianComponent& c) : mean(c.mean), llt(c.covariance) {
    const Mat3 l = llt.matrixL();
    if (llt.info() != Eigen::Success || !(l.diagonal().array() > 0).all() || !l.allFinite())
      throw NumericError("covariance is not symmetric positive-definite");
    log_norm = -1.5 * kLog2Pi - l.diagonal().array().log().sum();
  }

  double logpdf(const Vec3& x) const {
    const Vec3 z = llt.matrixL().solve(x - mean);
    return log_norm - 0.5 * z.squaredNorm();
  }
};

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline void check_points(std::span<const Vec3> points) {
  if (points.empty()) throw InputError("empty point set");
  for (const auto& p : points)
    if (!p.allFinite()) throw InputError("point set contains non-finite coordinates");
}

/// Log joint densities ln(pi_k N(x_i | k)) as an n x K matrix.
inline Eigen::MatrixXd log_joint(std::span<const Vec3> points, const std::vector<GaussianComponent>& comps) {
  std::vector<ComponentDensity> dens;
  dens.reserve(comps.size());
  for (const auto& c : comps) dens.emplace_back(c);
  // Column-major n x K; fill row-major for cache-friendly log-sum-exp.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(points.size(), comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const double lw = std::log(comps[k].weight);
    for (std::size_t i = 0; i < points.size(); ++i)
      out(Eigen::Index(i), Eigen::Index(k)) = lw + dens[k].logpdf(points[i]);
  }
  return out;
}

struct EStepResult {
  ResponsibilityMatrix responsibilities;
  Eigen::VectorXd point_log_density;  // ln sum_k pi_k N(x_i | k)
  double log_likelihood = 0;
};

inline EStepResult e_step_full(std::span<const Vec3> points, const std::vector<GaussianComponent>& comps) {
  check_points(points);
  const std::size_t n = points.size();
  const std::size_t kk = comps.size();
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> lj = log_joint(points, comps);
  Eigen::MatrixXd resp(n, kk);
  Eigen::VectorXd lse(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = log_sum_exp(lj.row(Eigen::Index(i)).data(), kk);
    if (!std::isfinite(l)) throw NumericError("mixture density underflowed for point " + std::to_string(i));
    lse(Eigen::Index(i)) = l;
    total += l;
    double row = 0;
    for (std::size_t k = 0; k < kk; ++k) {
      const double r = std::exp(lj(Eigen::Index(i), Eigen::Index(k)) - l);
      resp(Eigen::Index(i), Eigen::Index(k)) = r;
      row += r;
    }
    resp.row(Eigen::Index(i)) /= row;
  }
  return {ResponsibilityMatrix(std::move(resp)), std::move(lse), total};
}

struct MStepResult {
  std::vector<GaussianComponent> components;
  std::vector<std::size_t> degenerate;
};

inline MStepResult m_step_partial(std::span<const Vec3> points, const ResponsibilityMatrix& resp, double floor) {
  const std::size_t n = points.size();
  const std::size_t kk = resp.cols();
  if (resp.rows() != n) throw InputError("m_step: responsibility rows do not match point count");
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(resp.matrix().row(Eigen::Index(i)).sum() - 1.0) > 1e-9)
      throw InputError("m_step: responsibility row " + std::to_string(i) + " does not sum to 1");

  MStepResult out;
  out.components.resize(kk);
  for (std::size_t k = 0; k < kk; ++k) {
    double mass = 0;
    Vec3 sum = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = resp(i, k);
      mass += g;
      sum += g * points[i];
    }
    auto& c = out.components[k];
    c.weight = mass / double(n);
    if (mass < kDegenerateMass) {
      out.degenerate.push_back(k);
      continue;
    }
    c.mean = sum / mass;
    Mat3 scatter = Mat3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 d = points[i] - c.mean;
      scatter += resp(i, k) * (d * d.transpose());
    }
    c.covariance = scatter / mass + floor * Mat3::Identity();
  }
  return out;
}

inline Mat3 global_covariance(std::span<const Vec3> points, double floor) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= double(points.size());
  Mat3 s = Mat3::Zero();
  for (const auto& p : points) s += (p - mean) * (p - mean).transpose();
  return s / double(points.size()) + floor * Mat3::Identity();
}

inline void normalize_weights(std::vector<GaussianComponent>& comps) {
  double total = 0;
  for (const auto& c : comps) total += c.weight;
  for (auto& c : comps) c.weight /= total;
}

}  // namespace detail

/// ln N(x; mean, covariance) for a 3D Gaussian.
inline double gaussian_logpdf(const Vec3& x, const GaussianComponent& component) {
  return detail::ComponentDensity(component).logpdf(x);
}

/// Posterior membership of every point, computed in log space.
inline ResponsibilityMatrix e_step(std::span<const Vec3> points, const GmmModel& model) {
  model.validate();
  return detail::e_step_full(points, model.components).responsibilities;
}

/// Closed-form re-estimation of weights, means and floored covariances.
/// Throws DegenerateComponentError when a component owns (almost) no mass.
inline std::vector<GaussianComponent> m_step(std::span<const Vec3> points, const ResponsibilityMatrix& resp,
                                             double covariance_floor) {
  detail::check_points(points);
  auto r = detail::m_step_partial(points, resp, covariance_floor);
  if (!r.degenerate.empty()) {
    const auto k = r.degenerate.front();
    throw DegenerateComponentError(k, r.components[k].weight * double(points.size()));
  }
  return std::move(r.components);
}

inline double log_likelihood(std::span<const Vec3> points, const GmmModel& model) {
  model.validate();
  return detail::e_step_full(points, model.components).log_likelihood;
}

inline double bic(double log_likelihood, std::size_t k, std::size_t n, BicDefinition definition) {
  const double size = definition == BicDefinition::paper_literal ? double(k) : double(k * 9 + (k - 1));
  return size * std::log(double(n)) - 2.0 * log_likelihood;
}

inline double bic(const GmmModel& model, std::size_t n) {
  return bic(model.log_likelihood, model.k(), n, model.config.bic_definition);
}

/// One EM run with its log-likelihood trace (one entry per accepted iterate).
/// `reinitialized_at` lists trace indices whose model was produced by an M-step
/// that had to reseed a collapsed component; the trace need not be monotone
/// across those steps.
struct EmRun {
  GmmModel model;
  std::vector<double> trace;
  std::vector<std::size_t> reinitialized_at;
  std::size_t rejected_steps = 0;  // updates dropped for lowering the likelihood
};

/// A single seeded EM run. The restart seed is derived from (config.seed, K,
/// restart_index), so fit_em and select_model agree for the same K.
inline EmRun run_em(std::span<const Vec3> points, std::size_t k, const EmConfig& config, std::size_t restart_index) {
  config.validate();
  detail::check_points(points);
  if (k < 1) throw InputError("fit_em: K must be >= 1");

  const std::size_t n = points.size();
  Rng rng(derive_seed(config.seed, {k, restart_index}));

  std::vector<std::size_t> picks;
  if (n >= k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, n - 1);
      std::swap(idx[j], idx[pick(rng)]);
      picks.push_back(idx[j]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t j = 0; j < k; ++j) picks.push_back(pick(rng));
  }

  const Mat3 global = detail::global_covariance(points, config.covariance_floor);
  std::vector<GaussianComponent> comps(k);
  for (std::size_t j = 0; j < k; ++j) comps[j] = {1.0 / double(k), points[picks[j]], global};

  EmRun run;
  bool converged = false;
  int iterations = 0;
  detail::EStepResult e = detail::e_step_full(points, comps);
  run.trace.push_back(e.log_likelihood);
  while (iterations < config.max_iterations) {
    auto m = detail::m_step_partial(points, e.responsibilities, config.covariance_floor);
    if (!m.degenerate.empty()) {
      // Reseed each collapsed component at the point the current mixture explains worst.
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return e.point_log_density(Eigen::Index(a)) < e.point_log_density(Eigen::Index(b));
      });
      for (std::size_t d = 0; d < m.degenerate.size(); ++d) {
        auto& c = m.components[m.degenerate[d]];
        c.mean = points[order[d % n]];
        c.covariance = global;
        c.weight = 1.0 / double(n);
      }
      detail::normalize_weights(m.components);
      run.reinitialized_at.push_back(run.trace.size());
    }
    const bool reseeded = !m.degenerate.empty();
    auto next = detail::e_step_full(points, m.components);

    // Adding the floor to a rank-deficient scatter (a component holding <= 3
    // points) is not an exact M-step and can lower the likelihood slightly.
    // Such a step is dropped and the previous iterate kept.
    if (!reseeded && next.log_likelihood < e.log_likelihood - kMonotoneSlack) {
      ++run.rejected_steps;
      converged = true;
      break;
    }

    ++iterations;
    const double previous = e.log_likelihood;
    comps = std::move(m.components);
    e = std::move(next);
    run.trace.push_back(e.log_likelihood);
    if (std::abs(e.log_likelihood - previous) < config.tolerance) {
      converged = true;
      break;
    }
  }

  auto& model = run.model;
  model.components = std::move(comps);
  model.log_likelihood = e.log_likelihood;
  model.n_train = n;
  model.iterations = iterations;
  model.converged = converged;
  model.config = config;
  model.bic = bic(model, n);
  return run;
}

/// Best of config.restarts independent EM runs by final log-likelihood; ties go
/// to the lower restart index so the result does not depend on scheduling.
inline GmmModel fit_em(std::span<const Vec3> points, std::size_t k, const EmConfig& config, unsigned threads = 1) {
  config.validate();
  detail::check_points(points);
  if (k < 1) throw InputError("fit_em: K must be >= 1");

  std::vector<GmmModel> runs(std::size_t(config.restarts));
  std::vector<char> ok(runs.size(), 0);
  parallel_for(runs.size(), threads, [&](std::size_t r) {
    try {
      runs[r] = run_em(points, k, config, r).model;
      ok[r] = std::isfinite(runs[r].log_likelihood);
    } catch (const NumericError&) {
      ok[r] = 0;
    }
  });

  std::size_t best = runs.size();
  for (std::size_t r = 0; r < runs.size(); ++r)
    if (ok[r] && (best == runs.size() || runs[r].log_likelihood > runs[best].log_likelihood)) best = r;
  if (best == runs.size()) throw NumericError("fit_em: every restart failed numerically");
  return std::move(runs[best]);
}

struct ModelSelection {
  std::vector<GmmModel> fits;  // one per K, ascending
  std::size_t best = 0;

  const GmmModel& model() const { return fits.at(best); }
};

/// Fits every K in [k_min, k_max] and keeps the minimum-BIC model, preferring
/// the smaller K on ties.
inline ModelSelection select_model_table(std::span<const Vec3> points, std::size_t k_min, std::size_t k_max,
                                         const EmConfig& config, unsigned threads = 1) {
  detail::check_points(points);
  if (k_min < 1 || k_min > k_max || k_max > points.size())
    throw InputError("select_model: need 1 <= k_min <= k_max <= number of points (got " + std::to_string(k_min) +
                     ".." + std::to_string(k_max) + " for " + std::to_string(points.size()) + " points)");

  ModelSelection sel;
  sel.fits.resize(k_max - k_min + 1);
  parallel_for(sel.fits.size(), threads,
               [&](std::size_t i) { sel.fits[i] = fit_em(points, k_min + i, config); });
  for (std::size_t i = 1; i < sel.fits.size(); ++i)
    if (sel.fits[i].bic < sel.fits[sel.best].bic) sel.best = i;
  return sel;
}

inline GmmModel select_model(std::span<const Vec3> points, std::size_t k_min, std::size_t k_max,
                             const EmConfig& config, unsigned threads = 1) {
  auto sel = select_model_table(points, k_min, k_max, config, threads);
  return std::move(sel.fits[sel.best]);
}

}  // namespace oms
