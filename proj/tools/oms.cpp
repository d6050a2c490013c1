// oms: learn where objects usually are and where to look first.
//
//   oms ingest --views DIR --label STR [--relevancy-floor F] --store FILE
//   oms fit --store FILE --label STR --kmin 1 --kmax 6 --restarts 10 --seed 42 --out MODEL
//   oms plan --model MODEL --strategy mode|sample --n 5 --seed 42
//   oms simulate --config FILE --n 300 --label STR --store FILE --seed 42
//   oms bench --config FILE --out CSV [--threads N] --seed 42
//   oms render-synthetic --scene FILE --out DIR

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "oms/oms.hpp"

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct IngestArgs {
  std::string views;
  std::string label;
  double relevancy_floor = oms::kDefaultRelevancyFloorFraction;
  double top_quantile = oms::kDefaultTopQuantile;
  std::string store;
};

int run_ingest(const IngestArgs& a) {
  oms::ObjectMemory memory(a.store);
  const auto dirs = oms::find_observation_dirs(a.views);
  if (dirs.empty()) {
    std::cerr << "warning: no view files found under " << a.views << "; nothing ingested\n";
    std::cout << "appended 0 records\n";
    return 0;
  }

  // Collect first so records can be appended in timestamp order.
  std::vector<oms::ObservationRecord> records;
  std::size_t failures = 0;
  for (const auto& dir : dirs) {
    try {
      records.push_back(oms::ingest_observation(dir, a.label, {a.relevancy_floor, a.top_quantile}));
    } catch (const oms::Error& e) {
      ++failures;
      std::cerr << "error: " << e.what() << '\n';
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& x, const auto& y) { return x.timestamp < y.timestamp; });

  std::size_t appended = 0;
  for (const auto& r : records) {
    try {
      memory.append_observation(r);
      ++appended;
      std::printf("%s %.17g %.17g %.17g t=%.17g\n", r.label.c_str(), r.location.x(), r.location.y(), r.location.z(),
                  r.timestamp);
    } catch (const oms::Error& e) {
      ++failures;
      std::cerr << "error: " << e.what() << '\n';
    }
  }
  std::cout << "appended " << appended << " records\n";
  return appended == 0 && failures > 0 ? 1 : 0;
}

struct FitArgs {
  std::string store;
  std::string label;
  std::size_t k_min = 1;
  std::size_t k_max = 6;
  oms::EmConfig em;
  std::string bic = "free_parameter_count";
  std::string out;
  unsigned threads = 1;
};

int run_fit(FitArgs a) {
  oms::ObjectMemory memory(a.store);
  const auto records = memory.query_observations(a.label);
  if (records.empty()) {
    std::cerr << "error: no observations for '" << a.label << "' in " << a.store << '\n';
    return 1;
  }
  const auto points = oms::locations_of(records);
  if (a.k_min > points.size())
    throw oms::InputError("--kmin " + std::to_string(a.k_min) + " exceeds the " + std::to_string(points.size()) +
                          " observations available");
  if (a.k_max > points.size()) {
    std::cerr << "note: --kmax lowered to " << points.size() << " (number of observations)\n";
    a.k_max = points.size();
  }
  a.em.bic_definition = oms::parse_bic_definition(a.bic);

  const auto sel = oms::select_model_table(points, a.k_min, a.k_max, a.em, a.threads);
  for (const auto& f : sel.fits)
    std::printf("  K=%zu log_likelihood=%.10g bic=%.10g%s\n", f.k(), f.log_likelihood, f.bic,
                &f == &sel.model() ? "  <- selected" : "");
  oms::GmmModel model = sel.model();
  model.label = a.label;
  memory.save_model(a.label, model);
  if (!a.out.empty()) oms::write_model_file(a.out, model);
  std::printf("label=%s n=%zu K=%zu log_likelihood=%.17g bic=%.17g\n", a.label.c_str(), model.n_train, model.k(),
              model.log_likelihood, model.bic);
  return 0;
}

struct PlanArgs {
  std::string model;
  std::string strategy = "mode";
  std::size_t n = 5;
  std::uint64_t seed = kDefaultSeed;
};

int run_plan(const PlanArgs& a) {
  const auto model = oms::read_model_file(a.model);
  const auto plan = oms::plan_search(model, oms::parse_strategy(a.strategy), a.seed, a.n);
  for (const auto& c : plan.candidates) std::printf("%.17g %.17g %.17g\n", c.x(), c.y(), c.z());
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::size_t n = 300;
  std::string label = "object";
  std::string store;
  std::uint64_t seed = kDefaultSeed;
};

int run_simulate(const SimulateArgs& a) {
  const auto cfg = oms::read_experiment_config(a.config);
  oms::Rng rng(a.seed);
  const auto points = oms::generate_training(cfg.distribution, a.n, rng);
  oms::ObjectMemory memory(a.store);
  double t = 0;
  for (const auto& r : memory.query_observations(a.label)) t = std::max(t, r.timestamp + 1);
  for (const auto& p : points) memory.append_observation({a.label, p, t++, {}});
  std::cout << "appended " << points.size() << " simulated records for '" << a.label << "'\n";
  return 0;
}

struct BenchArgs {
  std::string config;
  std::string out;
  unsigned threads = 1;
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
};

int run_bench(const BenchArgs& a) {
  auto cfg = oms::read_experiment_config(a.config);
  if (a.seed_given) cfg.seed = a.seed;
  for (const auto& w : cfg.distribution.warnings(cfg.hit_radius)) std::cerr << "warning: " << w << '\n';

  const auto curve = oms::run_experiment(cfg, a.threads);
  for (const auto& s : curve.skipped) std::cerr << "skipped " << s << '\n';

  const std::string csv = oms::curve_to_csv(curve);
  {
    std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
    out << csv;
    out.flush();
    if (!out) throw oms::Error("cannot write " + a.out);
  }

  std::printf("%-14s %4s %12s %12s %10s %10s\n", "training_size", "K", "gmm_acc", "baseline_acc", "gmm_ci",
              "base_ci");
  for (const auto& p : curve.points)
    std::printf("%-14zu %4zu %12.5f %12.5f %10.5f %10.5f\n", p.training_size, p.model_k, p.gmm_accuracy,
                p.baseline_accuracy, p.gmm_ci, p.baseline_ci);
  return curve.points.empty() ? 1 : 0;
}

struct RenderArgs {
  std::string scene;
  std::string out;
};

int run_render(const RenderArgs& a) {
  const auto sf = oms::parse_scene_file(a.scene);
  const auto n = oms::render_scene_views(sf, a.out);
  std::cout << "rendered " << n << " views of '" << sf.query_label << "' into " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object memory search: learn where objects are usually placed and where to look first"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Localize observations from view directories into a store");
  ingest_cmd->add_option("--views", ingest.views, "Observation directory, or a directory of them")->required();
  ingest_cmd->add_option("--label", ingest.label, "Object label to localize")->required();
  ingest_cmd->add_option("--relevancy-floor", ingest.relevancy_floor,
                         "Drop pixels below this fraction of the view's max relevancy")
      ->capture_default_str();
  ingest_cmd->add_option("--top-quantile", ingest.top_quantile, "Fraction of heaviest points averaged")
      ->capture_default_str();
  ingest_cmd->add_option("--store", ingest.store, "observations.jsonl path")->required();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a mixture model to a label's observations");
  fit_cmd->add_option("--store", fit.store)->required();
  fit_cmd->add_option("--label", fit.label)->required();
  fit_cmd->add_option("--kmin", fit.k_min)->capture_default_str();
  fit_cmd->add_option("--kmax", fit.k_max)->capture_default_str();
  fit_cmd->add_option("--restarts", fit.em.restarts)->capture_default_str();
  fit_cmd->add_option("--max-iterations", fit.em.max_iterations)->capture_default_str();
  fit_cmd->add_option("--tolerance", fit.em.tolerance)->capture_default_str();
  fit_cmd->add_option("--covariance-floor", fit.em.covariance_floor)->capture_default_str();
  fit_cmd->add_option("--bic", fit.bic, "paper_literal | free_parameter_count")->capture_default_str();
  fit_cmd->add_option("--seed", fit.em.seed)->capture_default_str();
  fit_cmd->add_option("--threads", fit.threads)->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Also write the model here");

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Print first-try search locations");
  plan_cmd->add_option("--model", plan.model)->required();
  plan_cmd->add_option("--strategy", plan.strategy, "mode | sample")->capture_default_str();
  plan_cmd->add_option("--n", plan.n)->capture_default_str();
  plan_cmd->add_option("--seed", plan.seed)->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Append a simulated placement history to a store");
  sim_cmd->add_option("--config", sim.config, "Experiment config holding the ground-truth clusters")->required();
  sim_cmd->add_option("--n", sim.n)->capture_default_str();
  sim_cmd->add_option("--label", sim.label)->capture_default_str();
  sim_cmd->add_option("--store", sim.store)->required();
  sim_cmd->add_option("--seed", sim.seed)->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Monte Carlo first-try accuracy against random search");
  bench_cmd->add_option("--config", bench.config)->required();
  bench_cmd->add_option("--out", bench.out, "CSV output")->required();
  bench_cmd->add_option("--threads", bench.threads)->capture_default_str();
  auto* seed_opt = bench_cmd->add_option("--seed", bench.seed, "Overrides the config's seed")->capture_default_str();

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render-synthetic", "Render a synthetic scene into a view directory");
  render_cmd->add_option("--scene", render.scene)->required();
  render_cmd->add_option("--out", render.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*fit_cmd) return run_fit(fit);
    if (*plan_cmd) return run_plan(plan);
    if (*sim_cmd) return run_simulate(sim);
    if (*bench_cmd) {
      bench.seed_given = seed_opt->count() > 0;
      return run_bench(bench);
    }
    if (*render_cmd) return run_render(render);
  } catch (const oms::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
