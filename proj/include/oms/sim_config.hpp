#pragma once

// Key/value experiment config. One `key = value` per line, `#` starts a
// comment. Clusters are repeated `cluster = x y z prior` lines.
//
//   cluster = 0 0 0 0.7
//   cluster = 1.5 0 0 0.2
//   cluster = 0 1.5 0 0.1
//   noise_sigma = 0.1
//   training_sizes = 3, 5, 10, 20, 50, 100
//   n_trials = 100000
//   hit_radius = 0.3
//   kmin = 1
//   kmax = 6
//   fixed_k = 3            # optional; disables BIC selection
//   restarts = 10
//   max_iterations = 200
//   tolerance = 1e-6
//   covariance_floor = 1e-6
//   bic = paper_literal    # or free_parameter_count
//   strategy = mode        # or sample
//   seed = 42

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oms/error.hpp"
#include "oms/sim.hpp"
#include "oms/text.hpp"

namespace oms {

class ConfigError : public InputError {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

template <typename T>
T parse_number(std::string_view text, std::size_t line, const std::string& key) {
  text = trim(text);
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(line, "'" + key + "' expects a number, got '" + std::string(text) + "'");
  return value;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto stop = s.find_first_of(", \t", start);
    if (stop == std::string_view::npos) stop = s.size();
    if (stop > start) out.push_back(s.substr(start, stop - start));
    start = stop + 1;
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  cfg.distribution.clusters.clear();
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view text = raw;
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string key(trim(text.substr(0, eq)));
    const std::string_view value = trim(text.substr(eq + 1));
    if (value.empty()) throw ConfigError(line, "'" + key + "' has no value");

    using detail::parse_number;
    if (key == "cluster") {
      const auto parts = detail::split_list(value);
      if (parts.size() != 4) throw ConfigError(line, "cluster expects 'x y z prior'");
      cfg.distribution.clusters.push_back(
          {Vec3(parse_number<double>(parts[0], line, key), parse_number<double>(parts[1], line, key),
                parse_number<double>(parts[2], line, key)),
           parse_number<double>(parts[3], line, key)});
    } else if (key == "noise_sigma") {
      cfg.distribution.noise_sigma = parse_number<double>(value, line, key);
    } else if (key == "training_sizes") {
      cfg.training_sizes.clear();
      for (auto part : detail::split_list(value)) cfg.training_sizes.push_back(parse_number<std::size_t>(part, line, key));
    } else if (key == "n_trials") {
      cfg.n_trials = parse_number<std::size_t>(value, line, key);
    } else if (key == "hit_radius") {
      cfg.hit_radius = parse_number<double>(value, line, key);
    } else if (key == "kmin") {
      cfg.k_min = parse_number<std::size_t>(value, line, key);
    } else if (key == "kmax") {
      cfg.k_max = parse_number<std::size_t>(value, line, key);
    } else if (key == "fixed_k") {
      cfg.fixed_k = parse_number<std::size_t>(value, line, key);
    } else if (key == "restarts") {
      cfg.em.restarts = parse_number<int>(value, line, key);
    } else if (key == "max_iterations") {
      cfg.em.max_iterations = parse_number<int>(value, line, key);
    } else if (key == "tolerance") {
      cfg.em.tolerance = parse_number<double>(value, line, key);
    } else if (key == "covariance_floor") {
      cfg.em.covariance_floor = parse_number<double>(value, line, key);
    } else if (key == "bic") {
      try {
        cfg.em.bic_definition = parse_bic_definition(std::string(value));
      } catch (const InputError& e) {
        throw ConfigError(line, e.what());
      }
    } else if (key == "strategy") {
      try {
        cfg.strategy = parse_strategy(std::string(value));
      } catch (const InputError& e) {
        throw ConfigError(line, e.what());
      }
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(value, line, key);
    } else {
      throw ConfigError(line, "unknown key '" + key + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError& e) {
    throw ConfigError(line, std::string("invalid config: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  std::istringstream in(text);
  return parse_experiment_config(in);
}

inline ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  try {
    return parse_experiment_config(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace oms
