#pragma once

// Differential Evolution (DE/rand/1/bin) with greedy, strict-improvement
// selection. The generation loop updates the population in place, so later
// agents of a generation may draw donors that were already replaced.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "cosmosfl/rng.hpp"

namespace cosmosfl::de {

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct DEConfig {
  int population_size = 40;
  int generations = 30;
  double crossover_probability = 0.8;
  double differential_weight = 1.5;
  std::vector<Bounds> bounds;  // one entry per dimension
  std::uint64_t rng_seed = 0;

  std::size_t dimension() const noexcept { return bounds.size(); }

  /// Throws ValidationError on an unusable configuration.
  void validate() const;

  /// Same scalar settings with `n` copies of `b`.
  static DEConfig with_uniform_bounds(std::size_t n, Bounds b, std::uint64_t seed);
};

struct Agent {
  std::vector<double> genome;

  friend bool operator==(const Agent&, const Agent&) = default;
};

/// Draws every component uniformly from its bounds.
std::vector<Agent> initialize_population(const DEConfig& cfg, Rng& rng);

/// Deterministic core of trial construction.
///
/// `forced_index` is 0-based. `crossover_draws[i]` is the uniform(0,1) draw
/// for component i; it is ignored at the forced index. Mutated components are
/// a[i] + w_d * (b[i] - c[i]); the whole trial is clamped to the bounds.
Agent make_trial(const Agent& target, const Agent& a, const Agent& b, const Agent& c,
                 const DEConfig& cfg, std::size_t forced_index,
                 std::span<const double> crossover_draws);

/// Draws the forced index and then one crossover value per component from
/// `rng`, in that order, and delegates to the deterministic overload.
Agent make_trial(const Agent& target, const Agent& a, const Agent& b, const Agent& c,
                 const DEConfig& cfg, Rng& rng);

/// Three distinct population indices, all different from `target`.
std::array<std::size_t, 3> sample_donors(std::size_t population_size, std::size_t target, Rng& rng);

void clamp_to_bounds(Agent& agent, const DEConfig& cfg);

template <typename Fitness>
struct Result {
  Agent best;
  Fitness best_fitness{};
  std::vector<Fitness> history;  // best-so-far after each generation
  std::vector<Agent> population;  // final population
  std::vector<Fitness> population_fitness;
};

template <typename Fitness>
using GenerationObserver =
    std::function<void(int generation, const Agent& best, const Fitness& best_fitness)>;

/// Maximises `fitness`. Fitness must provide a strict weak order via
/// operator<, where a < b means b is the better solution.
///
/// Selection replaces an agent only when its trial is strictly better, and
/// the tracked best is only replaced by a strictly better generation best, so
/// `history` is non-decreasing. Each agent's fitness is evaluated once and
/// cached; trials are evaluated once each.
template <typename Fitness>
Result<Fitness> optimize(const std::function<Fitness(const Agent&)>& fitness, const DEConfig& cfg,
                         const GenerationObserver<Fitness>& observer = {}) {
  cfg.validate();
  Rng rng(cfg.rng_seed);

  Result<Fitness> result;
  result.population = initialize_population(cfg, rng);
  auto& pop = result.population;
  auto& scores = result.population_fitness;
  scores.reserve(pop.size());
  for (const auto& agent : pop) scores.push_back(fitness(agent));

  const auto select_best = [&]() {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i) {
      if (scores[best] < scores[i]) best = i;
    }
    return best;
  };

  std::size_t initial_best = select_best();
  result.best = pop[initial_best];
  result.best_fitness = scores[initial_best];

  for (int gen = 0; gen < cfg.generations; ++gen) {
    for (std::size_t k = 0; k < pop.size(); ++k) {
      const auto [ia, ib, ic] = sample_donors(pop.size(), k, rng);
      Agent trial = make_trial(pop[k], pop[ia], pop[ib], pop[ic], cfg, rng);
      Fitness trial_fitness = fitness(trial);
      if (scores[k] < trial_fitness) {
        pop[k] = std::move(trial);
        scores[k] = std::move(trial_fitness);
      }
    }
    const std::size_t gen_best = select_best();
    if (result.best_fitness < scores[gen_best]) {
      result.best = pop[gen_best];
      result.best_fitness = scores[gen_best];
    }
    result.history.push_back(result.best_fitness);
    if (observer) observer(gen, result.best, result.best_fitness);
  }
  return result;
}

}  // namespace cosmosfl::de
