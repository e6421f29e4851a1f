#include "cosmosfl/de.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "cosmosfl/error.hpp"

namespace cosmosfl::de {

void DEConfig::validate() const {
  if (population_size < 4) {
    throw ValidationError("DE population size must be at least 4 (target plus three donors)");
  }
  if (generations < 1) throw ValidationError("DE needs at least one generation");
  if (!(crossover_probability >= 0.0 && crossover_probability <= 1.0)) {
    throw ValidationError("crossover probability must lie in [0, 1]");
  }
  if (!(differential_weight > 0.0)) throw ValidationError("differential weight must be positive");
  if (bounds.empty()) throw ValidationError("DE dimension must be positive");
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (!(bounds[i].lo < bounds[i].hi)) {
      throw ValidationError("DE bounds for dimension " + std::to_string(i) + " are empty");
    }
  }
}

DEConfig DEConfig::with_uniform_bounds(std::size_t n, Bounds b, std::uint64_t seed) {
  DEConfig cfg;
  cfg.bounds.assign(n, b);
  cfg.rng_seed = seed;
  return cfg;
}

std::vector<Agent> initialize_population(const DEConfig& cfg, Rng& rng) {
  std::vector<Agent> pop(static_cast<std::size_t>(cfg.population_size));
  for (auto& agent : pop) {
    agent.genome.reserve(cfg.dimension());
    for (const auto& b : cfg.bounds) agent.genome.push_back(rng.uniform(b.lo, b.hi));
  }
  return pop;
}

void clamp_to_bounds(Agent& agent, const DEConfig& cfg) {
  for (std::size_t i = 0; i < agent.genome.size(); ++i) {
    agent.genome[i] = std::clamp(agent.genome[i], cfg.bounds[i].lo, cfg.bounds[i].hi);
  }
}

Agent make_trial(const Agent& target, const Agent& a, const Agent& b, const Agent& c,
                 const DEConfig& cfg, std::size_t forced_index,
                 std::span<const double> crossover_draws) {
  const std::size_t n = cfg.dimension();
  if (target.genome.size() != n || a.genome.size() != n || b.genome.size() != n ||
      c.genome.size() != n || crossover_draws.size() != n || forced_index >= n) {
    throw ValidationError("make_trial: agent dimensions do not match the configuration");
  }
  Agent trial = target;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == forced_index || crossover_draws[i] < cfg.crossover_probability) {
      trial.genome[i] = a.genome[i] + cfg.differential_weight * (b.genome[i] - c.genome[i]);
    }
  }
  clamp_to_bounds(trial, cfg);
  return trial;
}

Agent make_trial(const Agent& target, const Agent& a, const Agent& b, const Agent& c,
                 const DEConfig& cfg, Rng& rng) {
  const std::size_t n = cfg.dimension();
  const std::size_t forced = rng.index(n);
  std::vector<double> draws(n);
  for (auto& d : draws) d = rng.uniform01();
  return make_trial(target, a, b, c, cfg, forced, draws);
}

std::array<std::size_t, 3> sample_donors(std::size_t population_size, std::size_t target, Rng& rng) {
  if (population_size < 4) throw ValidationError("need at least four agents to sample donors");
  std::array<std::size_t, 3> picked{};
  std::size_t count = 0;
  while (count < 3) {
    const auto candidate = static_cast<std::size_t>(rng.index(population_size));
    if (candidate == target) continue;
    if (std::find(picked.begin(), picked.begin() + count, candidate) != picked.begin() + count) {
      continue;
    }
    picked[count++] = candidate;
  }
  return picked;
}

}  // namespace cosmosfl::de
