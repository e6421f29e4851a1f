#include "cosmosfl/scoring.hpp"

#include <algorithm>

#include "cosmosfl/error.hpp"

namespace cosmosfl {

ScoreMap score_run(const PredictionSet& run) {
  ScoreMap scores;
  if (run.empty()) return scores;
  const double share = 1.0 / static_cast<double>(run.size());
  for (const auto& m : run) scores.emplace(m, share);
  return scores;
}

ScoreMap aggregate_runs(const std::vector<ScoreMap>& runs) {
  if (runs.empty()) throw ValidationError("no runs to aggregate");
  ScoreMap total;
  for (const auto& run : runs) {
    for (const auto& [m, s] : run) total[m] += s;
  }
  const auto n = static_cast<double>(runs.size());
  for (auto& [m, s] : total) s /= n;
  return total;
}

ScoreMap aggregate_predictions(const std::vector<PredictionSet>& runs) {
  std::vector<ScoreMap> scored;
  scored.reserve(runs.size());
  for (const auto& r : runs) scored.push_back(score_run(r));
  return aggregate_runs(scored);
}

ScoreMap aggregate_weighted(const std::map<ModelName, std::vector<ScoreMap>>& per_model_runs,
                            const WeightVector& weights) {
  for (const auto& [model, runs] : per_model_runs) {
    if (!weights.contains(model)) {
      throw ValidationError("model '" + model + "' has runs but no weight");
    }
  }
  double total_weight = 0.0;
  for (const auto& [model, w] : weights) {
    if (w < 0.0) throw ValidationError("negative weight for model '" + model + "'");
    total_weight += w;
  }
  if (!(total_weight > 0.0)) throw ValidationError("voting weights sum to zero");

  ScoreMap combined;
  for (const auto& [model, w] : weights) {
    const auto it = per_model_runs.find(model);
    if (it == per_model_runs.end() || it->second.empty()) {
      throw ValidationError("model '" + model + "' has no runs");
    }
    const double share = w / total_weight;
    for (const auto& [m, s] : aggregate_runs(it->second)) combined[m] += share * s;
  }
  return combined;
}

double confidence(const ScoreMap& scores) {
  double best = 0.0;
  for (const auto& [m, s] : scores) best = std::max(best, s);
  return best;
}

RankedList rank(const ScoreMap& scores) {
  RankedList ranked;
  ranked.reserve(scores.size());
  for (const auto& [m, s] : scores) ranked.push_back({m, s});
  // The map is already in MethodId order, so a stable sort on score alone
  // yields the (score desc, MethodId asc) composite order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
  return ranked;
}

int acc_at_k(const std::map<BugId, RankedList>& results, const std::map<BugId, GroundTruth>& truth,
             int k) {
  if (k < 1) throw ValidationError("acc@k requires k >= 1");
  int hits = 0;
  for (const auto& [bug, ranking] : results) {
    const auto gt = truth.find(bug);
    if (gt == truth.end()) throw ValidationError("no ground truth for bug '" + bug + "'");
    const auto limit = std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < limit; ++i) {
      if (gt->second.is_faulty(ranking[i].method)) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

int wasted_effort(const RankedList& ranking, const GroundTruth& truth) {
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (truth.is_faulty(ranking[i].method)) return static_cast<int>(i);
  }
  return static_cast<int>(ranking.size());
}

std::map<std::string, int> overlap_regions(
    const std::map<ModelName, std::set<BugId>>& top_ranked) {
  std::vector<const ModelName*> models;
  for (const auto& [name, bugs] : top_ranked) models.push_back(&name);
  if (models.size() >= 31) throw ValidationError("too many models for region enumeration");

  const auto label_of = [&](std::uint32_t mask) {
    std::string label;
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (mask & (1u << i)) {
        if (!label.empty()) label += '&';
        label += *models[i];
      }
    }
    return label;
  };

  std::map<std::string, int> regions;
  const std::uint32_t full = (1u << models.size());
  for (std::uint32_t mask = 1; mask < full; ++mask) regions[label_of(mask)] = 0;

  std::map<BugId, std::uint32_t> membership;
  std::size_t i = 0;
  for (const auto& [name, bugs] : top_ranked) {
    for (const auto& bug : bugs) membership[bug] |= (1u << i);
    ++i;
  }
  for (const auto& [bug, mask] : membership) ++regions[label_of(mask)];
  return regions;
}

}  // namespace cosmosfl
