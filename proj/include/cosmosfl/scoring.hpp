#pragma once

// Voting-based aggregation of fault-localisation runs and the metrics used to
// judge the resulting rankings.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cosmosfl {

/// Fully qualified method name plus signature, e.g. "org.jfree.Foo.bar(int)".
class MethodId {
 public:
  MethodId() = default;
  explicit MethodId(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const MethodId&, const MethodId&) = default;
  friend bool operator==(const MethodId&, const MethodId&) = default;

 private:
  std::string value_;
};

using PredictionSet = std::set<MethodId>;
using ScoreMap = std::map<MethodId, double>;
using ModelName = std::string;
using BugId = std::string;

/// Per-model voting weights. std::map fixes the model order (lexicographic by
/// name), which is also the summation order used during aggregation.
using WeightVector = std::map<ModelName, double>;

struct RankedEntry {
  MethodId method;
  double score = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Sorted by score descending, then MethodId ascending.
using RankedList = std::vector<RankedEntry>;

struct GroundTruth {
  BugId bug_id;
  std::set<MethodId> faulty_methods;  // never empty

  bool is_faulty(const MethodId& m) const { return faulty_methods.contains(m); }
};

/// Each predicted method receives 1/|run|; an empty run yields an empty map.
ScoreMap score_run(const PredictionSet& run);

/// Mean of the per-run score maps, with absent methods counted as zero.
/// Throws ValidationError("no runs to aggregate") for an empty list.
ScoreMap aggregate_runs(const std::vector<ScoreMap>& runs);

/// Convenience overload: score every run and aggregate.
ScoreMap aggregate_predictions(const std::vector<PredictionSet>& runs);

/// Weighted ensemble vote. Each model's runs are averaged first, then the
/// per-model maps are combined with weights normalised to sum to one.
///
/// Models are visited in WeightVector order; every model with runs must have a
/// weight, and the weights must not sum to zero.
ScoreMap aggregate_weighted(const std::map<ModelName, std::vector<ScoreMap>>& per_model_runs,
                            const WeightVector& weights);

/// Highest score in the map (0 for an empty map).
double confidence(const ScoreMap& scores);

RankedList rank(const ScoreMap& scores);

/// Number of bugs whose ranking holds a faulty method within the first k
/// positions. Throws ValidationError naming the bug when truth is missing.
int acc_at_k(const std::map<BugId, RankedList>& results, const std::map<BugId, GroundTruth>& truth,
             int k);

/// 0-based position of the first faulty method; |ranking| when none appears.
int wasted_effort(const RankedList& ranking, const GroundTruth& truth);

/// Venn region counts. Keys are the member model names joined with '&' in
/// lexicographic order ("A", "A&B", ...); every non-empty subset of models is
/// present, including zero-count regions.
std::map<std::string, int> overlap_regions(
    const std::map<ModelName, std::set<BugId>>& top_ranked);

}  // namespace cosmosfl

template <>
struct std::hash<cosmosfl::MethodId> {
  std::size_t operator()(const cosmosfl::MethodId& m) const noexcept {
    return std::hash<std::string>{}(m.str());
  }
};
