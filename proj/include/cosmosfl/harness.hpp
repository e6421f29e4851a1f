#pragma once

// Experiment orchestration: collect a run pool, sample run subsets, aggregate
// them per configuration (single model, equal-weight ensemble, DE-weighted
// ensemble) and summarise accuracy against cost.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cosmosfl/agent.hpp"
#include "cosmosfl/de.hpp"
#include "cosmosfl/fixture.hpp"
#include "cosmosfl/weight_search.hpp"

namespace cosmosfl {

enum class EnsembleMode { none, equal, de_optimized };

std::string_view to_string(EnsembleMode m);
EnsembleMode ensemble_mode_from_string(std::string_view s);

inline constexpr std::string_view kEqualEnsemble = "ensemble-equal";
inline constexpr std::string_view kDeEnsemble = "ensemble-de";

struct ExperimentPlan {
  std::vector<ModelName> models;
  std::vector<BugId> bugs;
  int runs_per_model_pool = 30;
  std::vector<int> r_values{4, 8, 12, 16, 20, 24};
  std::vector<int> single_r_values;  // empty: same as r_values
  int samples_per_r = 20;
  EnsembleMode ensemble_mode = EnsembleMode::equal;
  std::uint64_t rng_seed = 0;
  int overlap_runs = 5;  // runs per model used for the overlap table
  int k_folds = 10;
  de::DEConfig de;  // bounds are set per experiment

  const std::vector<int>& single_rs() const { return single_r_values.empty() ? r_values : single_r_values; }

  /// Throws ValidationError; ensemble R values must satisfy R_M x M = R.
  void validate() const;
};

nlohmann::json to_json(const ExperimentPlan& plan);

// ---------------------------------------------------------------------------
// Endpoints

struct EndpointEntry {
  ModelEndpoint endpoint;
  std::string kind;  // "http" | "mock"
  std::filesystem::path mock_script;
};

/// {"endpoints": [{"name", "kind", "base_url" | "script", "model_id",
///   "request_timeout_s", "max_retries"}]}. Relative script paths resolve
/// against the endpoint file's directory.
std::vector<EndpointEntry> load_endpoint_file(const std::filesystem::path& path);

/// Endpoints with the clients that serve them. Mock entries sharing a script
/// share one ScriptedMock.
class EndpointSet {
 public:
  static EndpointSet from_entries(const std::vector<EndpointEntry>& entries);
  void add(ModelEndpoint endpoint, std::shared_ptr<ChatClient> client);

  const ModelEndpoint& endpoint(const ModelName& name) const;
  ChatClient& client(const ModelName& name) const;
  std::vector<ModelName> names() const;

 private:
  struct Member {
    ModelEndpoint endpoint;
    std::shared_ptr<ChatClient> client;
  };
  std::map<ModelName, Member> members_;
};

// ---------------------------------------------------------------------------
// Run pool storage: <root>/<model>/<bug>__<run_index>.json plus <root>/index.json.

struct RunKey {
  ModelName model;
  BugId bug;
  int run_index = 0;

  friend auto operator<=>(const RunKey&, const RunKey&) = default;
};

class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path path_for(const RunKey& key) const;

  /// Keys recorded in the index, or found by scanning when it is missing.
  std::set<RunKey> existing_keys() const;
  /// Serialised writer; safe to call from several threads.
  void write(const RunRecord& record);
  void write_index() const;
  RunRecord read(const RunKey& key) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

/// Loaded pool keyed by (model, bug, run index).
using RunPool = std::map<RunKey, RunRecord>;

RunPool load_pool(const RunStore& store);

struct CollectOptions {
  RunOptions run;
  int in_flight = 4;
  /// When set, runs are timed on a simulated clock: job i of the plan's job
  /// list starts at i * slot_ms and the latency model advances time.
  std::optional<LatencyModel> virtual_latency;
  double slot_ms = 600000.0;
  std::optional<std::filesystem::path> power_csv;  // attached after collection
  int max_endpoint_failures = -1;                   // < 0: unlimited
};

struct CollectSummary {
  int written = 0;
  int skipped = 0;
  std::map<ModelName, std::map<std::string, int>> status_counts;  // model -> status -> count
  int endpoint_failures = 0;
  bool budget_exceeded = false;
};

/// Runs every missing (model, bug, run index) of the plan and stores it.
/// Run seeds are plan.rng_seed + run_index.
CollectSummary collect(const ExperimentPlan& plan, const EndpointSet& endpoints,
                       const FixtureSet& fixtures, RunStore& store, const CollectOptions& options);

// ---------------------------------------------------------------------------
// Sampling

/// Run indices drawn for each member model (sorted).
using RunSample = std::map<ModelName, std::vector<int>>;

/// `samples` subsets of R runs split evenly over `models` (R/M per model),
/// drawn without replacement from [0, pool_size) per model. Deterministic in
/// (seed, models, R).
std::vector<RunSample> sample_runs(int pool_size, const std::vector<ModelName>& models, int r,
                                   int samples, std::uint64_t seed);

/// Dataset view of the selected runs; throws ValidationError naming the
/// first missing (bug, model, index).
Dataset select_runs(const RunPool& pool, const std::vector<BugId>& bugs, const RunSample& sample);

// ---------------------------------------------------------------------------
// Evaluation and reports

inline constexpr int kMaxK = 5;

struct MetricRow {
  std::string configuration;
  int r = 0;
  int sample = 0;
  std::array<int, kMaxK> acc{};  // acc@1..acc@5
  std::int64_t wasted_effort = 0;
  double confidence_mean = 0.0;
  std::int64_t tokens_total = 0;
  std::int64_t wall_time_ms = 0;
  std::optional<double> energy_j;
};

struct AggregateRow {
  std::string configuration;
  int r = 0;
  std::string statistic;  // "mean" | "stddev"
  std::array<double, kMaxK> acc{};
  double wasted_effort = 0.0;
  double confidence_mean = 0.0;
  double tokens_total = 0.0;
  double wall_time_ms = 0.0;
  std::optional<double> energy_j;
};

struct Report {
  nlohmann::json plan;
  std::vector<MetricRow> rows;
  std::vector<AggregateRow> aggregates;
  int overlap_runs = 0;
  std::map<ModelName, std::set<BugId>> top_ranked;
  std::map<std::string, int> overlap;
  std::map<int, WeightVector> de_mean_weights;  // R -> mean over samples and folds
  std::vector<std::string> de_trace;            // JSON lines
  int energy_overlapping_runs = 0;
  nlohmann::json external_baselines = nlohmann::json::object();
};

/// Mean and sample standard deviation (n - 1; zero for a single sample) per
/// (configuration, R), in row order of first appearance.
std::vector<AggregateRow> aggregate_rows(const std::vector<MetricRow>& rows);

/// Largest absolute difference between `report.aggregates` and aggregates
/// recomputed from its rows (infinity on structural mismatch).
double aggregate_discrepancy(const Report& report);

struct EvaluateOptions {
  std::optional<WeightVector> de_weights;  // skip cross-validation when set
};

Report evaluate(const ExperimentPlan& plan, const RunPool& pool, const FixtureSet& fixtures,
                const EvaluateOptions& options = {});

/// Bugs whose rank-1 method is faulty, per model, using run indices
/// [0, runs) of each model.
std::map<ModelName, std::set<BugId>> top_ranked_by_model(const RunPool& pool,
                                                         const std::vector<ModelName>& models,
                                                         const std::vector<BugId>& bugs,
                                                         const std::map<BugId, GroundTruth>& truth,
                                                         int runs);

/// Sorted keys and floats rounded to 9 significant digits, 2-space indent,
/// newline-terminated.
std::string canonical_json(nlohmann::json j);

nlohmann::json to_json(const Report& report);
Report report_from_json(const nlohmann::json& j);

/// Reads report.json and checks its aggregates against its rows.
Report load_report(const std::filesystem::path& path);

/// Writes report.json, rows.csv, overlap.csv, plot_cost_accuracy.csv,
/// plot_acc_at_k.csv, plot_de_weights.csv and traces.jsonl into `dir`.
void report_emit(const Report& report, const std::filesystem::path& dir);

}  // namespace cosmosfl
