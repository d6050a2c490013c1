#pragma once

// Text serialization of fitted models. Every double is written with 17
// significant digits so a write/read cycle reproduces the model bit for bit.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "oms/gmm.hpp"
#include "oms/text.hpp"

namespace oms {

inline std::string serialize_model(const GmmModel& model) {
  model.validate();
  const auto q = [](const std::string& s) { return nlohmann::json(s).dump(); };
  std::ostringstream out;
  out << "{\n";
  out << "  \"label\": " << q(model.label) << ",\n";
  out << "  \"n_train\": " << model.n_train << ",\n";
  out << "  \"components\": [\n";
  for (std::size_t k = 0; k < model.k(); ++k) {
    const auto& c = model.components[k];
    out << "    {\"weight\": " << format_exact(c.weight) << ", \"mean\": [";
    for (int i = 0; i < 3; ++i) out << (i ? ", " : "") << format_exact(c.mean(i));
    out << "], \"cov\": [";
    for (int i = 0; i < 9; ++i) out << (i ? ", " : "") << format_exact(c.covariance(i / 3, i % 3));
    out << "]}" << (k + 1 < model.k() ? "," : "") << "\n";
  }
  out << "  ],\n";
  out << "  \"log_likelihood\": " << format_exact(model.log_likelihood) << ",\n";
  out << "  \"bic\": " << format_exact(model.bic) << ",\n";
  out << "  \"iterations\": " << model.iterations << ",\n";
  out << "  \"converged\": " << (model.converged ? "true" : "false") << ",\n";
  const auto& c = model.config;
  out << "  \"config_echo\": {\"max_iterations\": " << c.max_iterations
      << ", \"tolerance\": " << format_exact(c.tolerance) << ", \"restarts\": " << c.restarts
      << ", \"covariance_floor\": " << format_exact(c.covariance_floor) << ", \"seed\": " << c.seed
      << ", \"bic_definition\": " << q(to_string(c.bic_definition)) << "}\n";
  out << "}\n";
  return out.str();
}

inline GmmModel deserialize_model(const std::string& text) {
  GmmModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.label = j.at("label").get<std::string>();
    m.n_train = j.at("n_train").get<std::size_t>();
    for (const auto& jc : j.at("components")) {
      GaussianComponent c;
      c.weight = jc.at("weight").get<double>();
      const auto& mean = jc.at("mean");
      const auto& cov = jc.at("cov");
      if (mean.size() != 3 || cov.size() != 9) throw InputError("component needs mean[3] and cov[9]");
      for (int i = 0; i < 3; ++i) c.mean(i) = mean.at(std::size_t(i)).get<double>();
      for (int i = 0; i < 9; ++i) c.covariance(i / 3, i % 3) = cov.at(std::size_t(i)).get<double>();
      m.components.push_back(c);
    }
    m.log_likelihood = j.at("log_likelihood").get<double>();
    m.bic = j.at("bic").get<double>();
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    if (j.contains("config_echo")) {
      const auto& c = j.at("config_echo");
      m.config.max_iterations = c.at("max_iterations").get<int>();
      m.config.tolerance = c.at("tolerance").get<double>();
      m.config.restarts = c.at("restarts").get<int>();
      m.config.covariance_floor = c.at("covariance_floor").get<double>();
      m.config.seed = c.at("seed").get<std::uint64_t>();
      m.config.bic_definition = parse_bic_definition(c.at("bic_definition").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  }
  m.validate();
  return m;
}

inline void write_model_file(const std::filesystem::path& path, const GmmModel& model) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw InputError("cannot write model file " + path.string());
}

inline GmmModel read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("model file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize_model(buf.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace oms
