#include <doctest.h>

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cosmosfl/error.hpp"
#include "cosmosfl/weight_search.hpp"

using namespace cosmosfl;

namespace {

struct Corpus {
  Dataset data;
  std::map<BugId, GroundTruth> truth;
  std::map<BugId, std::string> strata;
};

Corpus random_corpus(std::uint64_t seed, int bugs, int models, int runs) {
  Rng rng(seed);
  Corpus c;
  for (int b = 0; b < bugs; ++b) {
    const BugId id = "P" + std::to_string(b % 3) + "-" + std::to_string(b);
    c.strata[id] = "P" + std::to_string(b % 3);
    c.truth[id] = GroundTruth{id, {MethodId("m" + std::to_string(rng.index(6)))}};
    for (int m = 0; m < models; ++m) {
      auto& v = c.data[id][std::string(1, static_cast<char>('A' + m))];
      for (int r = 0; r < runs; ++r) {
        PredictionSet s;
        for (int j = 0, n = static_cast<int>(rng.index(3)); j < n; ++j) s.emplace("m" + std::to_string(rng.index(6)));
        v.push_back(std::move(s));
      }
    }
  }
  return c;
}

std::set<BugId> all_bugs(const Dataset& d) {
  std::set<BugId> s;
  for (const auto& [b, _] : d) s.insert(b);
  return s;
}

}  // namespace

TEST_CASE("fitness orders by acc@1 then by lower wasted effort") {
  CHECK(Fitness{3, 10} > Fitness{2, 0});
  CHECK(Fitness{3, 4} > Fitness{3, 10});
  CHECK(Fitness{0, 0} > Fitness::worst());
  CHECK(Fitness{1, 1} == Fitness{1, 1});
}

TEST_CASE("FitnessTable matches the reference fitness exactly") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = random_corpus(seed, 12, 3, 4);
    const FitnessTable table(c.data, c.truth, all_bugs(c.data));
    Rng rng(seed * 31);
    for (int i = 0; i < 25; ++i) {
      std::vector<double> w{rng.uniform01(), rng.uniform01(), rng.uniform01()};
      if (i == 0) w = {1.0, 0.0, 0.0};
      const auto weights = normalised_weights(table.models(), w);
      CHECK(table.evaluate(w) == fl_fitness(weights, c.data, c.truth));
    }
  }
}

TEST_CASE("zero weights: worst fitness for search, error for the reference") {
  const auto c = random_corpus(4, 5, 2, 2);
  const FitnessTable table(c.data, c.truth, all_bugs(c.data));
  const std::vector<double> zero{0.0, 0.0};
  CHECK(table.evaluate(zero) == Fitness::worst());
  CHECK_THROWS_AS(fl_fitness({{"A", 0.0}, {"B", 0.0}}, c.data, c.truth), ValidationError);
  const auto uniform = normalised_weights(table.models(), zero);
  CHECK(uniform.at("A") == 0.5);
  CHECK(uniform.at("B") == 0.5);
}

TEST_CASE("stratified folds are balanced overall and per stratum") {
  const auto c = random_corpus(2, 23, 2, 1);
  const auto folds = assign_folds(c.strata, 5, 77);
  CHECK(folds.size() == 23);
  std::map<int, int> sizes;
  std::map<std::string, std::map<int, int>> per_stratum;
  for (const auto& [bug, f] : folds) {
    ++sizes[f];
    ++per_stratum[c.strata.at(bug)][f];
  }
  CHECK(sizes.size() == 5);
  int lo = 100, hi = 0;
  for (const auto& [f, n] : sizes) lo = std::min(lo, n), hi = std::max(hi, n);
  CHECK(hi - lo <= 1);
  for (const auto& [s, counts] : per_stratum) {
    int slo = 100, shi = 0;
    for (int f = 0; f < 5; ++f) {
      const int n = counts.contains(f) ? counts.at(f) : 0;
      slo = std::min(slo, n), shi = std::max(shi, n);
    }
    CHECK(shi - slo <= 1);
  }
  CHECK(assign_folds(c.strata, 5, 77) == folds);
  CHECK_THROWS_AS(assign_folds(c.strata, 1, 0), ValidationError);
  CHECK_THROWS_AS(assign_folds(c.strata, 24, 0), ValidationError);
}

TEST_CASE("cross-validation keeps validation bugs out of training") {
  const auto c = random_corpus(8, 20, 3, 3);
  auto cfg = de::DEConfig{};
  cfg.population_size = 10;
  cfg.generations = 5;
  cfg.rng_seed = 4;
  const auto cv = cross_validate(c.data, c.truth, cfg, 4, c.strata);
  REQUIRE(cv.folds.size() == 4);
  std::set<BugId> seen;
  for (const auto& f : cv.folds) {
    for (const auto& b : f.validation_bugs) {
      CHECK_FALSE(f.training_bugs.contains(b));
      CHECK(seen.insert(b).second);
    }
    CHECK(f.training_bugs.size() + f.validation_bugs.size() == 20);
    double s = 0;
    for (const auto& [m, w] : f.weights) s += w;
    CHECK(std::abs(s - 1.0) < 1e-12);
    CHECK(f.history.size() == 5);
  }
  CHECK(seen == all_bugs(c.data));
  double total = 0;
  for (const auto& [m, w] : cv.mean_weights) total += w;
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(cv.trace.size() == 4 * 5);
}

TEST_CASE("trace lines are JSON objects with the documented keys") {
  const auto line = trace_line({2, 7, {5, 11}, {0.25, 0.75}});
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("fold") == 2);
  CHECK(j.at("generation") == 7);
  CHECK(j.at("best_acc1") == 5);
  CHECK(j.at("best_wasted_effort") == 11);
  CHECK(j.at("best_genome").size() == 2);
  CHECK(line.find('\n') == std::string::npos);
}

TEST_CASE("pairwise grid walks the weight segment in order") {
  const auto c = random_corpus(3, 10, 2, 5);
  const auto grid = grid_search_pairwise("A", "B", 3, 0.1, c.data, c.truth);
  REQUIRE(grid.size() == 11);
  Dataset trimmed = c.data;
  for (auto& [bug, runs] : trimmed) {
    for (auto& [model, v] : runs) v.resize(3);
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(grid[i].weight_a == doctest::Approx(static_cast<double>(i) / 10));
    CHECK(grid[i].weight_a + grid[i].weight_b == doctest::Approx(1.0));
    if (grid[i].weight_a > 0 || grid[i].weight_b > 0) {
      const auto ref = fl_fitness({{"A", grid[i].weight_a}, {"B", grid[i].weight_b}}, trimmed, c.truth);
      CHECK(grid[i].acc1 == ref.acc1);
      CHECK(grid[i].wasted_effort == ref.total_wasted_effort);
    }
  }
  CHECK_THROWS_AS(grid_search_pairwise("A", "B", 6, 0.1, c.data, c.truth), ValidationError);
  CHECK_THROWS_AS(grid_search_pairwise("A", "B", 2, 0.3, c.data, c.truth), ValidationError);
}

TEST_CASE("optimize_weights reports the fitness of its best genome") {
  const auto c = random_corpus(11, 15, 3, 3);
  auto cfg = de::DEConfig{};
  cfg.rng_seed = 9;
  const auto r = optimize_weights(c.data, c.truth, cfg);
  const auto models = dataset_models(c.data);
  CHECK(r.best_fitness == fl_fitness(normalised_weights(models, r.best.genome), c.data, c.truth));
  CHECK(std::is_sorted(r.history.begin(), r.history.end()));
  for (double w : r.best.genome) CHECK((w >= 0.0 && w <= 1.0));
}
