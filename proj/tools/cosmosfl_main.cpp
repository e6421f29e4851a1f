// cosmosfl: collect runs, sample, optimise weights, evaluate and report.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cosmosfl/error.hpp"
#include "cosmosfl/harness.hpp"

using namespace cosmosfl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kEndpoint = 3 };

struct Globals {
  std::uint64_t seed = 0;
  std::string fixtures;
  std::string out;
  std::vector<std::string> models;
  std::string endpoint_file;
};

struct PlanFlags {
  std::vector<std::string> bugs;
  int pool = 30;
  std::vector<int> r_values{4, 8, 12, 16, 20, 24};
  std::vector<int> single_r_values;
  int samples = 20;
  std::string ensemble = "equal";
  int overlap_runs = 5;
};

struct DeFlags {
  int k_folds = 10;
  int pop = 40;
  int gens = 30;
  double diff_weight = 1.5;
  double cx_prob = 0.8;
};

void add_plan_flags(CLI::App* cmd, PlanFlags& p) {
  cmd->add_option("--bugs", p.bugs, "Bug ids (default: every fixture)")->delimiter(',');
  cmd->add_option("--pool", p.pool, "Runs per (model, bug) in the pool")->capture_default_str();
  cmd->add_option("--r-values", p.r_values, "Ensemble run budgets R")->delimiter(',')->capture_default_str();
  cmd->add_option("--single-r-values", p.single_r_values, "Single-model budgets (default: --r-values)")
      ->delimiter(',');
  cmd->add_option("--samples", p.samples, "Samples per R")->capture_default_str();
  cmd->add_option("--ensemble", p.ensemble, "none | equal | de-optimized")->capture_default_str();
  cmd->add_option("--overlap-runs", p.overlap_runs, "Runs per model for the overlap table")->capture_default_str();
}

void add_de_flags(CLI::App* cmd, DeFlags& d) {
  cmd->add_option("--k-folds", d.k_folds, "Cross-validation folds")->capture_default_str();
  cmd->add_option("--pop", d.pop, "DE population size")->capture_default_str();
  cmd->add_option("--gens", d.gens, "DE generations")->capture_default_str();
  cmd->add_option("--diff-weight", d.diff_weight, "DE differential weight")->capture_default_str();
  cmd->add_option("--cx-prob", d.cx_prob, "DE crossover probability")->capture_default_str();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

FixtureSet fixtures_of(const Globals& g) {
  require(!g.fixtures.empty(), "--fixtures is required");
  return load_fixture_set(g.fixtures);
}

ExperimentPlan make_plan(const Globals& g, const PlanFlags& p, const DeFlags& d, const FixtureSet& fixtures) {
  ExperimentPlan plan;
  plan.models = g.models;
  if (p.bugs.empty()) {
    for (const auto& [id, f] : fixtures) plan.bugs.push_back(id);
  } else {
    plan.bugs = p.bugs;
  }
  plan.runs_per_model_pool = p.pool;
  plan.r_values = p.r_values;
  plan.single_r_values = p.single_r_values;
  plan.samples_per_r = p.samples;
  plan.ensemble_mode = ensemble_mode_from_string(p.ensemble);
  plan.rng_seed = g.seed;
  plan.overlap_runs = p.overlap_runs;
  plan.k_folds = d.k_folds;
  plan.de.population_size = d.pop;
  plan.de.generations = d.gens;
  plan.de.differential_weight = d.diff_weight;
  plan.de.crossover_probability = d.cx_prob;
  return plan;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  try {
    return json::parse(s.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

/// First `runs` run indices of every model.
Dataset leading_runs(const RunPool& pool, const std::vector<ModelName>& models, const std::vector<BugId>& bugs,
                     int runs) {
  RunSample sample;
  for (const auto& m : models) {
    for (int i = 0; i < runs; ++i) sample[m].push_back(i);
  }
  return select_runs(pool, bugs, sample);
}

void print_means(const Report& report) {
  std::cout << "configuration,r,acc@1,acc@3,acc@5,wasted_effort,tokens_total\n";
  for (const auto& a : report.aggregates) {
    if (a.statistic != "mean") continue;
    std::cout << a.configuration << "," << a.r << "," << a.acc[0] << "," << a.acc[2] << "," << a.acc[4] << ","
              << a.wasted_effort << "," << a.tokens_total << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble fault-localisation experiment harness"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value config file (TOML/INI; [command] sections)");

  Globals g;
  app.add_option("--seed", g.seed, "Experiment seed")->capture_default_str();
  app.add_option("--fixtures", g.fixtures, "Fixture file or directory");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--models", g.models, "Model names, comma separated")->delimiter(',');
  app.add_option("--endpoint-file", g.endpoint_file, "Endpoint JSON file");

  // collect
  auto* collect_cmd = app.add_subcommand("collect", "Run every missing (model, bug, run) into the run store (--out)");
  PlanFlags collect_plan;
  CollectOptions copts;
  bool virtual_clock = false;
  std::string power_csv;
  collect_cmd->add_option("--bugs", collect_plan.bugs, "Bug ids (default: every fixture)")->delimiter(',');
  collect_cmd->add_option("--pool", collect_plan.pool, "Runs per (model, bug)")->capture_default_str();
  collect_cmd->add_option("--in-flight", copts.in_flight, "Concurrent runs")->capture_default_str();
  collect_cmd->add_option("--max-steps", copts.run.max_steps, "Tool calls before the forced answer")
      ->capture_default_str();
  collect_cmd->add_option("--max-output-tokens", copts.run.max_output_tokens, "Output token budget per run")
      ->capture_default_str();
  collect_cmd->add_option("--temperature", copts.run.temperature, "Sampling temperature")->capture_default_str();
  collect_cmd->add_flag("--virtual-clock", virtual_clock, "Time runs on a simulated clock (replayable)");
  collect_cmd->add_option("--power-csv", power_csv, "Power samples (timestamp_ms,power_w) to attach");
  collect_cmd->add_option("--max-endpoint-failures", copts.max_endpoint_failures,
                          "Abort with exit 3 after more failures than this (-1: unlimited)")
      ->capture_default_str();

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Print the run-index subsets drawn for a budget R");
  int sample_r = 4, sample_count = 20, sample_pool = 30;
  sample_cmd->add_option("--r", sample_r, "Run budget R")->capture_default_str();
  sample_cmd->add_option("--samples", sample_count, "Number of subsets")->capture_default_str();
  sample_cmd->add_option("--pool", sample_pool, "Runs per model in the pool")->capture_default_str();

  // optimize
  auto* optimize_cmd = app.add_subcommand("optimize", "Cross-validated DE weight search over a run store");
  std::string runs_dir;
  DeFlags de_flags;
  int optimize_runs = 5;
  std::vector<std::string> optimize_bugs;
  optimize_cmd->add_option("--runs", runs_dir, "Run store directory")->required();
  optimize_cmd->add_option("--runs-per-model", optimize_runs, "Leading runs per model to use")
      ->capture_default_str();
  optimize_cmd->add_option("--bugs", optimize_bugs, "Bug ids (default: every fixture)")->delimiter(',');
  add_de_flags(optimize_cmd, de_flags);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score every configuration and write the report to --out");
  PlanFlags eval_plan;
  std::string weights_file;
  evaluate_cmd->add_option("--runs", runs_dir, "Run store directory")->required();
  evaluate_cmd->add_option("--weights", weights_file, "Fixed DE weights (JSON object) instead of cross-validation");
  add_plan_flags(evaluate_cmd, eval_plan);
  add_de_flags(evaluate_cmd, de_flags);

  // report
  auto* report_cmd = app.add_subcommand("report", "Check a report.json and re-render its files into --out");
  std::string report_path;
  report_cmd->add_option("--report", report_path, "Existing report.json")->required();

  // overlap
  auto* overlap_cmd = app.add_subcommand("overlap", "Venn regions of the bugs each model ranks first");
  int overlap_runs = 5;
  std::vector<std::string> overlap_bugs;
  overlap_cmd->add_option("--runs", runs_dir, "Run store directory")->required();
  overlap_cmd->add_option("--runs-per-model", overlap_runs, "Leading runs per model")->capture_default_str();
  overlap_cmd->add_option("--bugs", overlap_bugs, "Bug ids (default: every fixture)")->delimiter(',');

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "acc@1 along w_a + w_b = 1 for two models");
  int grid_runs = 5;
  double grid_step = 0.05;
  grid_cmd->add_option("--runs", runs_dir, "Run store directory")->required();
  grid_cmd->add_option("--runs-per-model", grid_runs, "Runs per model, 1..5")->capture_default_str();
  grid_cmd->add_option("--step", grid_step, "Weight step (must divide 1)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (collect_cmd->parsed()) {
      require(!g.out.empty(), "--out (run store directory) is required");
      require(!g.endpoint_file.empty(), "--endpoint-file is required");
      const auto fixtures = fixtures_of(g);
      auto endpoints = EndpointSet::from_entries(load_endpoint_file(g.endpoint_file));
      if (g.models.empty()) g.models = endpoints.names();
      collect_plan.ensemble = "none";
      collect_plan.r_values = {1};
      const auto plan = make_plan(g, collect_plan, de_flags, fixtures);
      if (virtual_clock) copts.virtual_latency = LatencyModel{};
      if (!power_csv.empty()) copts.power_csv = power_csv;
      RunStore store(g.out);
      const auto summary = collect(plan, endpoints, fixtures, store, copts);
      json j{{"written", summary.written},
             {"skipped", summary.skipped},
             {"endpoint_failures", summary.endpoint_failures},
             {"budget_exceeded", summary.budget_exceeded},
             {"status_counts", summary.status_counts}};
      std::cout << j.dump(2) << "\n";
      return summary.budget_exceeded ? kEndpoint : kOk;
    }

    if (sample_cmd->parsed()) {
      require(!g.models.empty(), "--models is required");
      const auto samples = sample_runs(sample_pool, g.models, sample_r, sample_count, g.seed);
      json out = json::array();
      for (const auto& s : samples) out.push_back(s);
      std::cout << out.dump() << "\n";
      return kOk;
    }

    if (optimize_cmd->parsed()) {
      require(!g.models.empty(), "--models is required");
      const auto fixtures = fixtures_of(g);
      std::vector<BugId> bugs = optimize_bugs;
      if (bugs.empty()) {
        for (const auto& [id, f] : fixtures) bugs.push_back(id);
      }
      const auto data = leading_runs(load_pool(RunStore(runs_dir)), g.models, bugs, optimize_runs);
      de::DEConfig cfg;
      cfg.population_size = de_flags.pop;
      cfg.generations = de_flags.gens;
      cfg.differential_weight = de_flags.diff_weight;
      cfg.crossover_probability = de_flags.cx_prob;
      cfg.rng_seed = g.seed;
      const auto cv = cross_validate(data, ground_truth_of(fixtures), cfg, de_flags.k_folds, projects_of(fixtures));
      json folds = json::array();
      for (const auto& f : cv.folds) {
        folds.push_back({{"fold", f.fold},
                         {"validation_bugs", f.validation_bugs},
                         {"weights", f.weights},
                         {"training_acc1", f.training_fitness.acc1},
                         {"validation_acc1", f.validation_fitness.acc1},
                         {"validation_wasted_effort", f.validation_fitness.total_wasted_effort}});
      }
      const json result{{"mean_weights", cv.mean_weights}, {"folds", folds}};
      if (!g.out.empty()) {
        write_file(fs::path(g.out) / "weights.json", canonical_json(cv.mean_weights));
        write_file(fs::path(g.out) / "optimize.json", canonical_json(result));
        std::string traces;
        for (const auto& t : cv.trace) traces += trace_line(t) + "\n";
        write_file(fs::path(g.out) / "traces.jsonl", traces);
      }
      std::cout << canonical_json(result);
      return kOk;
    }

    if (evaluate_cmd->parsed()) {
      require(!g.out.empty(), "--out is required");
      require(!g.models.empty(), "--models is required");
      const auto fixtures = fixtures_of(g);
      const auto plan = make_plan(g, eval_plan, de_flags, fixtures);
      EvaluateOptions opts;
      if (!weights_file.empty()) {
        try {
          opts.de_weights = read_json_file(weights_file).get<WeightVector>();
        } catch (const json::exception& e) {
          throw ValidationError(weights_file + ": weights must map model names to numbers");
        }
      }
      const auto report = evaluate(plan, load_pool(RunStore(runs_dir)), fixtures, opts);
      report_emit(report, g.out);
      print_means(report);
      return kOk;
    }

    if (report_cmd->parsed()) {
      const auto report = load_report(report_path);
      if (!g.out.empty()) report_emit(report, g.out);
      print_means(report);
      return kOk;
    }

    if (overlap_cmd->parsed()) {
      require(!g.models.empty(), "--models is required");
      const auto fixtures = fixtures_of(g);
      std::vector<BugId> bugs = overlap_bugs;
      if (bugs.empty()) {
        for (const auto& [id, f] : fixtures) bugs.push_back(id);
      }
      const auto top =
          top_ranked_by_model(load_pool(RunStore(runs_dir)), g.models, bugs, ground_truth_of(fixtures), overlap_runs);
      std::string csv = "region,count\n";
      for (const auto& [region, n] : overlap_regions(top)) csv += region + "," + std::to_string(n) + "\n";
      if (!g.out.empty()) write_file(fs::path(g.out) / "overlap.csv", csv);
      std::cout << csv;
      return kOk;
    }

    if (grid_cmd->parsed()) {
      require(g.models.size() == 2, "--models must name exactly two models");
      const auto fixtures = fixtures_of(g);
      std::vector<BugId> bugs;
      for (const auto& [id, f] : fixtures) bugs.push_back(id);
      const auto data = leading_runs(load_pool(RunStore(runs_dir)), g.models, bugs, grid_runs);
      const auto grid =
          grid_search_pairwise(g.models[0], g.models[1], grid_runs, grid_step, data, ground_truth_of(fixtures));
      std::string csv = "weight_a,weight_b,acc_at_1,wasted_effort\n";
      char buf[128];
      for (const auto& p : grid) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%d,%lld\n", p.weight_a, p.weight_b, p.acc1,
                      static_cast<long long>(p.wasted_effort));
        csv += buf;
      }
      if (!g.out.empty()) write_file(fs::path(g.out) / "grid.csv", csv);
      std::cout << csv;
      return kOk;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const EndpointError& e) {
    std::cerr << "endpoint error: " << e.what() << "\n";
    return kEndpoint;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  }
  return kOk;
}
