#pragma once

// Voting-weight optimisation for the ensemble: the lexicographic FL fitness,
// stratified k-fold cross-validation around DE, and the pairwise grid search
// used to inspect fitness landscapes.

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "cosmosfl/de.hpp"
#include "cosmosfl/scoring.hpp"

namespace cosmosfl {

/// Runs of one bug, grouped by model.
using RunsByModel = std::map<ModelName, std::vector<PredictionSet>>;
/// Every bug of an experiment with its per-model runs.
using Dataset = std::map<BugId, RunsByModel>;

/// Lexicographic objective: more bugs localised at rank 1 wins, then less
/// total wasted effort. `a < b` means b is better.
struct Fitness {
  int acc1 = 0;
  std::int64_t total_wasted_effort = 0;

  static Fitness worst() { return {0, std::numeric_limits<std::int64_t>::max()}; }

  friend std::strong_ordering operator<=>(const Fitness& a, const Fitness& b) {
    if (auto c = a.acc1 <=> b.acc1; c != 0) return c;
    return b.total_wasted_effort <=> a.total_wasted_effort;
  }
  friend bool operator==(const Fitness&, const Fitness&) = default;
  friend std::ostream& operator<<(std::ostream& os, const Fitness& f) {
    return os << "Fitness(" << f.acc1 << ", " << f.total_wasted_effort << ")";
  }
};

/// Models present in the dataset, in WeightVector order.
std::vector<ModelName> dataset_models(const Dataset& dataset);

/// Reference evaluation through the scoring functions (aggregate_weighted,
/// rank, acc_at_k, wasted_effort).
Fitness fl_fitness(const WeightVector& weights, const Dataset& dataset,
                   const std::map<BugId, GroundTruth>& truth);

/// Precomputed per-model vote tables for repeated fitness evaluation.
///
/// Produces results identical to fl_fitness: per-model run averages come from
/// aggregate_runs and are combined in the same order with the same arithmetic.
class FitnessTable {
 public:
  FitnessTable(const Dataset& dataset, const std::map<BugId, GroundTruth>& truth,
               const std::set<BugId>& bugs);

  const std::vector<ModelName>& models() const noexcept { return models_; }
  std::size_t bug_count() const noexcept { return bugs_.size(); }

  /// `weights` follows models() order. A zero total weight yields
  /// Fitness::worst() rather than an error so DE can keep searching.
  Fitness evaluate(std::span<const double> weights) const;

 private:
  struct BugTable {
    std::size_t methods = 0;
    std::vector<double> votes;     // models x methods, row-major
    std::vector<bool> faulty;      // per method, methods sorted by id
  };
  std::vector<ModelName> models_;
  std::vector<BugTable> bugs_;
};

/// Converts a genome (models() order) to a WeightVector normalised to sum 1.
/// An all-zero genome maps to uniform weights.
WeightVector normalised_weights(const std::vector<ModelName>& models,
                                std::span<const double> genome);

/// bug-id -> fold index.
using FoldSplit = std::map<BugId, int>;

/// Stratified assignment: bugs are shuffled within each stratum (seeded) and
/// dealt round-robin, continuing the deal across strata so that both the
/// per-stratum and the overall fold sizes differ by at most one.
FoldSplit assign_folds(const std::map<BugId, std::string>& strata, int k_folds,
                       std::uint64_t seed);

struct TraceRecord {
  int fold = -1;
  int generation = 0;
  Fitness best;
  std::vector<double> genome;
};

/// One JSON object per line: {"best_acc1","best_genome","best_wasted_effort","fold","generation"}.
std::string trace_line(const TraceRecord& record);

struct FoldResult {
  int fold = 0;
  std::set<BugId> training_bugs;
  std::set<BugId> validation_bugs;
  WeightVector weights;  // normalised
  Fitness training_fitness;
  Fitness validation_fitness;
  std::vector<Fitness> history;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  WeightVector mean_weights;  // component-wise mean of fold weights, sums to 1
  std::vector<TraceRecord> trace;
};

/// For each fold, optimises weights with DE on the other folds' bugs and
/// scores the best weights on the held-out fold. `strata` maps bug -> project
/// tag; bugs missing from it form their own stratum. The DE seed of fold f is
/// derived from cfg.rng_seed and f. cfg.bounds is replaced by [0,1] per model.
CrossValidationResult cross_validate(const Dataset& dataset,
                                     const std::map<BugId, GroundTruth>& truth,
                                     const de::DEConfig& cfg, int k_folds,
                                     const std::map<BugId, std::string>& strata = {});

/// DE over the whole dataset (no hold-out), genome bounds [0,1] per model.
de::Result<Fitness> optimize_weights(const Dataset& dataset,
                                     const std::map<BugId, GroundTruth>& truth,
                                     const de::DEConfig& cfg);

struct GridPoint {
  double weight_a = 0.0;
  double weight_b = 0.0;
  int acc1 = 0;
  std::int64_t wasted_effort = 0;
};

/// acc@1 on the segment w_a + w_b = 1 sampled every `step`, using the first
/// `runs_per_model` runs of the two models. Points are ordered by increasing
/// w_a; `step` must divide 1 and runs_per_model must lie in [1, 5].
std::vector<GridPoint> grid_search_pairwise(const ModelName& model_a, const ModelName& model_b,
                                            int runs_per_model, double step,
                                            const Dataset& dataset,
                                            const std::map<BugId, GroundTruth>& truth);

}  // namespace cosmosfl
