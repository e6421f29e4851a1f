#include "cosmosfl/weight_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "cosmosfl/error.hpp"

namespace cosmosfl {

std::vector<ModelName> dataset_models(const Dataset& dataset) {
  std::set<ModelName> names;
  for (const auto& [bug, runs] : dataset) {
    for (const auto& [model, r] : runs) names.insert(model);
  }
  return {names.begin(), names.end()};
}

namespace {

std::map<ModelName, std::vector<ScoreMap>> score_runs_by_model(const RunsByModel& runs) {
  std::map<ModelName, std::vector<ScoreMap>> scored;
  for (const auto& [model, predictions] : runs) {
    auto& out = scored[model];
    out.reserve(predictions.size());
    for (const auto& p : predictions) out.push_back(score_run(p));
  }
  return scored;
}

}  // namespace

Fitness fl_fitness(const WeightVector& weights, const Dataset& dataset,
                   const std::map<BugId, GroundTruth>& truth) {
  if (dataset.empty()) throw ValidationError("fitness needs at least one bug");
  std::map<BugId, RankedList> rankings;
  Fitness f;
  for (const auto& [bug, runs] : dataset) {
    const auto gt = truth.find(bug);
    if (gt == truth.end()) throw ValidationError("no ground truth for bug '" + bug + "'");
    auto ranking = rank(aggregate_weighted(score_runs_by_model(runs), weights));
    f.total_wasted_effort += wasted_effort(ranking, gt->second);
    rankings.emplace(bug, std::move(ranking));
  }
  f.acc1 = acc_at_k(rankings, truth, 1);
  return f;
}

FitnessTable::FitnessTable(const Dataset& dataset, const std::map<BugId, GroundTruth>& truth,
                           const std::set<BugId>& bugs)
    : models_(dataset_models(dataset)) {
  for (const auto& bug : bugs) {
    const auto it = dataset.find(bug);
    if (it == dataset.end()) throw ValidationError("bug '" + bug + "' is not in the dataset");
    const auto gt = truth.find(bug);
    if (gt == truth.end()) throw ValidationError("no ground truth for bug '" + bug + "'");

    std::vector<ScoreMap> per_model;
    std::set<MethodId> methods;
    for (const auto& model : models_) {
      const auto runs = it->second.find(model);
      if (runs == it->second.end() || runs->second.empty()) {
        throw ValidationError("bug '" + bug + "' has no runs for model '" + model + "'");
      }
      per_model.push_back(aggregate_predictions(runs->second));
      for (const auto& [m, s] : per_model.back()) methods.insert(m);
    }

    BugTable table;
    table.methods = methods.size();
    table.votes.assign(models_.size() * table.methods, 0.0);
    std::size_t j = 0;
    for (const auto& m : methods) {
      table.faulty.push_back(gt->second.is_faulty(m));
      for (std::size_t mi = 0; mi < models_.size(); ++mi) {
        const auto s = per_model[mi].find(m);
        if (s != per_model[mi].end()) table.votes[mi * table.methods + j] = s->second;
      }
      ++j;
    }
    bugs_.push_back(std::move(table));
  }
}

Fitness FitnessTable::evaluate(std::span<const double> weights) const {
  if (weights.size() != models_.size()) {
    throw ValidationError("weight count does not match the number of models");
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return Fitness::worst();

  Fitness f;
  std::vector<double> scores;
  for (const auto& bug : bugs_) {
    scores.assign(bug.methods, 0.0);
    for (std::size_t mi = 0; mi < models_.size(); ++mi) {
      const double share = weights[mi] / total;
      const double* row = bug.votes.data() + mi * bug.methods;
      for (std::size_t j = 0; j < bug.methods; ++j) scores[j] += share * row[j];
    }
    // Earliest faulty method under (score desc, id asc); ids are already sorted.
    std::size_t first_faulty = bug.methods;
    for (std::size_t j = 0; j < bug.methods; ++j) {
      if (bug.faulty[j] && (first_faulty == bug.methods || scores[j] > scores[first_faulty])) {
        first_faulty = j;
      }
    }
    if (first_faulty == bug.methods) {
      f.total_wasted_effort += static_cast<std::int64_t>(bug.methods);
      continue;
    }
    std::int64_t ahead = 0;
    for (std::size_t j = 0; j < bug.methods; ++j) {
      if (scores[j] > scores[first_faulty] || (scores[j] == scores[first_faulty] && j < first_faulty)) {
        ++ahead;
      }
    }
    if (ahead == 0) ++f.acc1;
    f.total_wasted_effort += ahead;
  }
  return f;
}

WeightVector normalised_weights(const std::vector<ModelName>& models,
                                std::span<const double> genome) {
  if (genome.size() != models.size()) {
    throw ValidationError("genome length does not match the number of models");
  }
  double total = 0.0;
  for (double g : genome) total += g;
  WeightVector w;
  for (std::size_t i = 0; i < models.size(); ++i) {
    w[models[i]] = total > 0.0 ? genome[i] / total : 1.0 / static_cast<double>(models.size());
  }
  return w;
}

FoldSplit assign_folds(const std::map<BugId, std::string>& strata, int k_folds,
                       std::uint64_t seed) {
  if (k_folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (static_cast<std::size_t>(k_folds) > strata.size()) {
    throw ValidationError(std::to_string(k_folds) + " folds need at least as many bugs, got " +
                          std::to_string(strata.size()));
  }
  std::map<std::string, std::vector<BugId>> groups;
  for (const auto& [bug, tag] : strata) groups[tag].push_back(bug);

  FoldSplit split;
  std::size_t dealt = 0;
  for (auto& [tag, bugs] : groups) {
    Rng rng(derive_seed(seed, stable_hash(tag)));
    for (std::size_t i = bugs.size(); i > 1; --i) {
      std::swap(bugs[i - 1], bugs[rng.index(i)]);
    }
    for (const auto& bug : bugs) {
      split[bug] = static_cast<int>(dealt % static_cast<std::size_t>(k_folds));
      ++dealt;
    }
  }
  return split;
}

std::string trace_line(const TraceRecord& record) {
  nlohmann::json j;
  j["fold"] = record.fold;
  j["generation"] = record.generation;
  j["best_acc1"] = record.best.acc1;
  j["best_wasted_effort"] = record.best.total_wasted_effort;
  j["best_genome"] = record.genome;
  return j.dump();
}

namespace {

de::DEConfig weight_config(const de::DEConfig& cfg, std::size_t models, std::uint64_t seed) {
  de::DEConfig out = cfg;
  out.bounds.assign(models, de::Bounds{0.0, 1.0});
  out.rng_seed = seed;
  return out;
}

std::set<BugId> all_bugs(const Dataset& dataset) {
  std::set<BugId> bugs;
  for (const auto& [bug, runs] : dataset) bugs.insert(bug);
  return bugs;
}

}  // namespace

de::Result<Fitness> optimize_weights(const Dataset& dataset,
                                     const std::map<BugId, GroundTruth>& truth,
                                     const de::DEConfig& cfg) {
  if (dataset.empty()) throw ValidationError("fitness needs at least one bug");
  const FitnessTable table(dataset, truth, all_bugs(dataset));
  const auto dcfg = weight_config(cfg, table.models().size(), cfg.rng_seed);
  return de::optimize<Fitness>(
      [&](const de::Agent& a) { return table.evaluate(a.genome); }, dcfg);
}

CrossValidationResult cross_validate(const Dataset& dataset,
                                     const std::map<BugId, GroundTruth>& truth,
                                     const de::DEConfig& cfg, int k_folds,
                                     const std::map<BugId, std::string>& strata) {
  if (k_folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (dataset.size() < static_cast<std::size_t>(k_folds)) {
    throw ValidationError("dataset has " + std::to_string(dataset.size()) +
                          " bugs, fewer than the " + std::to_string(k_folds) + " folds requested");
  }
  std::map<BugId, std::string> tags;
  for (const auto& [bug, runs] : dataset) {
    const auto it = strata.find(bug);
    tags[bug] = it == strata.end() ? std::string{} : it->second;
  }
  const FoldSplit split = assign_folds(tags, k_folds, cfg.rng_seed);
  const auto models = dataset_models(dataset);

  CrossValidationResult result;
  std::vector<double> weight_sum(models.size(), 0.0);
  for (int fold = 0; fold < k_folds; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    for (const auto& [bug, f] : split) (f == fold ? fr.validation_bugs : fr.training_bugs).insert(bug);
    for (const auto& bug : fr.validation_bugs) {
      if (fr.training_bugs.contains(bug)) {
        throw std::logic_error("validation bug '" + bug + "' leaked into its training fold");
      }
    }

    const FitnessTable training(dataset, truth, fr.training_bugs);
    const FitnessTable validation(dataset, truth, fr.validation_bugs);
    const auto dcfg = weight_config(cfg, models.size(),
                                    derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(fold) + 1));
    const auto best = de::optimize<Fitness>(
        [&](const de::Agent& a) { return training.evaluate(a.genome); }, dcfg,
        [&](int gen, const de::Agent& agent, const Fitness& fit) {
          result.trace.push_back({fold, gen, fit, agent.genome});
        });

    fr.weights = normalised_weights(models, best.best.genome);
    fr.training_fitness = best.best_fitness;
    fr.validation_fitness = validation.evaluate(best.best.genome);
    fr.history = best.history;
    std::size_t i = 0;
    for (const auto& [model, w] : fr.weights) weight_sum[i++] += w;
    result.folds.push_back(std::move(fr));
  }

  double total = 0.0;
  for (double s : weight_sum) total += s;
  for (std::size_t i = 0; i < models.size(); ++i) result.mean_weights[models[i]] = weight_sum[i] / total;
  return result;
}

std::vector<GridPoint> grid_search_pairwise(const ModelName& model_a, const ModelName& model_b,
                                            int runs_per_model, double step,
                                            const Dataset& dataset,
                                            const std::map<BugId, GroundTruth>& truth) {
  if (model_a == model_b) throw ValidationError("grid search needs two distinct models");
  if (runs_per_model < 1 || runs_per_model > 5) {
    throw ValidationError("runs per model must lie in [1, 5]");
  }
  if (!(step > 0.0) || step > 1.0) throw ValidationError("grid step must lie in (0, 1]");
  const double intervals = std::round(1.0 / step);
  if (std::abs(intervals * step - 1.0) > 1e-9) throw ValidationError("grid step must divide 1");

  Dataset pair;
  for (const auto& [bug, runs] : dataset) {
    for (const auto* model : {&model_a, &model_b}) {
      const auto it = runs.find(*model);
      if (it == runs.end() || it->second.size() < static_cast<std::size_t>(runs_per_model)) {
        throw ValidationError("bug '" + bug + "' has fewer than " + std::to_string(runs_per_model) +
                              " runs for model '" + *model + "'");
      }
      pair[bug][*model].assign(it->second.begin(), it->second.begin() + runs_per_model);
    }
  }
  const FitnessTable table(pair, truth, all_bugs(pair));
  const bool a_first = table.models().front() == model_a;

  const auto n = static_cast<int>(intervals);
  std::vector<GridPoint> landscape;
  for (int i = 0; i <= n; ++i) {
    GridPoint p;
    p.weight_a = static_cast<double>(i) / n;
    p.weight_b = static_cast<double>(n - i) / n;
    const std::array<double, 2> w = a_first ? std::array{p.weight_a, p.weight_b}
                                            : std::array{p.weight_b, p.weight_a};
    const Fitness f = table.evaluate(w);
    p.acc1 = f.acc1;
    p.wasted_effort = f.total_wasted_effort;
    landscape.push_back(p);
  }
  return landscape;
}

}  // namespace cosmosfl
