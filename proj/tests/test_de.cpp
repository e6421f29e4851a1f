#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cosmosfl/de.hpp"
#include "cosmosfl/error.hpp"

using namespace cosmosfl;
using namespace cosmosfl::de;

namespace {

DEConfig config(std::size_t n, double lo = -10.0, double hi = 10.0) {
  return DEConfig::with_uniform_bounds(n, {lo, hi}, 1);
}

}  // namespace

TEST_CASE("defaults follow the published settings") {
  const DEConfig cfg;
  CHECK(cfg.population_size == 40);
  CHECK(cfg.generations == 30);
  CHECK(cfg.crossover_probability == 0.8);
  CHECK(cfg.differential_weight == 1.5);
}

TEST_CASE("make_trial mutates the forced index and components below the crossover rate") {
  const auto cfg = config(4);
  const Agent target{{1, 2, 3, 4}}, a{{0.5, 0.5, 0.5, 0.5}}, b{{1, 1, 1, 1}}, c{{0, 0, 0, 2}};
  const double draws[] = {0.9, 0.1, 0.95, 0.79};
  const auto trial = make_trial(target, a, b, c, cfg, 2, draws);
  CHECK(trial.genome[0] == 1.0);
  CHECK(trial.genome[1] == 0.5 + 1.5 * 1.0);
  CHECK(trial.genome[2] == 0.5 + 1.5 * 1.0);
  CHECK(trial.genome[3] == 0.5 + 1.5 * (1.0 - 2.0));
}

TEST_CASE("make_trial clamps to the bounds") {
  const auto cfg = config(2, 0.0, 1.0);
  const Agent target{{0.2, 0.2}}, a{{0.9, 0.1}}, b{{1.0, 0.0}}, c{{0.0, 1.0}};
  const double draws[] = {0.0, 0.0};
  const auto trial = make_trial(target, a, b, c, cfg, 0, draws);
  CHECK(trial.genome[0] == 1.0);
  CHECK(trial.genome[1] == 0.0);
}

TEST_CASE("make_trial rejects mismatched dimensions") {
  const auto cfg = config(2);
  const Agent two{{0, 0}}, three{{0, 0, 0}};
  const double draws[] = {0.5, 0.5};
  CHECK_THROWS_AS(make_trial(two, two, two, three, cfg, 0, draws), ValidationError);
  CHECK_THROWS_AS(make_trial(two, two, two, two, cfg, 2, draws), ValidationError);
}

TEST_CASE("donors are distinct and exclude the target") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t target = rng.index(6);
    const auto d = sample_donors(6, target, rng);
    const std::set<std::size_t> s(d.begin(), d.end());
    CHECK(s.size() == 3);
    CHECK_FALSE(s.contains(target));
    CHECK(*s.rbegin() < 6);
  }
  CHECK_THROWS_AS(sample_donors(3, 0, rng), ValidationError);
}

TEST_CASE("configuration validation") {
  auto cfg = config(2);
  cfg.population_size = 3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = config(2);
  cfg.crossover_probability = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = config(2);
  cfg.bounds[1] = {1.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = config(0);
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("initial population lies inside the bounds") {
  auto cfg = config(3, -2.0, 5.0);
  Rng rng(3);
  for (const auto& agent : initialize_population(cfg, rng)) {
    REQUIRE(agent.genome.size() == 3);
    for (double x : agent.genome) CHECK((x >= -2.0 && x < 5.0));
  }
}

TEST_CASE("optimize finds the maximum of a concave bowl") {
  auto cfg = config(3, -5.0, 5.0);
  cfg.generations = 80;
  const auto f = [](const Agent& a) {
    double s = 0;
    for (std::size_t i = 0; i < a.genome.size(); ++i) s -= std::pow(a.genome[i] - 0.5 * static_cast<double>(i), 2);
    return s;
  };
  const auto result = optimize<double>(f, cfg);
  CHECK(result.best_fitness > -1e-3);
  CHECK(result.history.size() == 80);
  CHECK(std::is_sorted(result.history.begin(), result.history.end()));
}

TEST_CASE("optimize is reproducible for a seed") {
  auto cfg = config(2);
  const auto f = [](const Agent& a) { return -std::abs(a.genome[0] * a.genome[1] - 3.0); };
  const auto r1 = optimize<double>(f, cfg);
  const auto r2 = optimize<double>(f, cfg);
  CHECK(r1.best == r2.best);
  CHECK(r1.population == r2.population);
  cfg.rng_seed = 2;
  CHECK_FALSE(optimize<double>(f, cfg).population == r1.population);
}

TEST_CASE("constant fitness leaves the population untouched") {
  auto cfg = config(3);
  Rng rng(cfg.rng_seed);
  const auto initial = initialize_population(cfg, rng);
  int calls = 0;
  const auto result = optimize<int>([&](const Agent&) { ++calls; return 7; }, cfg);
  CHECK(result.population == initial);
  CHECK(result.best == initial.front());
  CHECK(calls == cfg.population_size * (cfg.generations + 1));
}

TEST_CASE("observer sees every generation") {
  auto cfg = config(2);
  cfg.generations = 5;
  std::vector<int> seen;
  optimize<double>([](const Agent& a) { return a.genome[0]; }, cfg,
                   [&](int g, const Agent&, const double&) { seen.push_back(g); });
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});
}
