// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "cosmosfl/error.hpp"
#include "cosmosfl/harness.hpp"
#include "cosmosfl/mock_endpoint.hpp"

using namespace cosmosfl;
namespace fs = std::filesystem;
using nlohmann::json;
using Stopwatch = std::chrono::steady_clock;

namespace {

const fs::path kDesk = fs::path(COSMOSFL_DATA_DIR) / "desk-d4j";
constexpr std::uint64_t kPlanSeed = 7;  // matches design.json

struct Outcome {
  bool pass = false;
  std::string detail;
};

double ms_since(Stopwatch::time_point t0) {
  return std::chrono::duration<double, std::milli>(Stopwatch::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cosmosfl_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

PredictionSet set_of(std::initializer_list<const char*> names) {
  PredictionSet s;
  for (const char* n : names) s.emplace(n);
  return s;
}

PredictionSet random_run(Rng& rng, int universe, bool non_empty) {
  PredictionSet s;
  const int n = static_cast<int>(rng.index(4)) + (non_empty ? 1 : 0);
  while (static_cast<int>(s.size()) < std::min(n, universe)) s.emplace("m" + std::to_string(rng.index(universe)));
  return s;
}

const FixtureSet& desk_fixtures() {
  static const FixtureSet f = load_fixture_set(kDesk / "fixtures");
  return f;
}

std::vector<BugId> desk_bugs() {
  std::vector<BugId> out;
  for (const auto& [id, f] : desk_fixtures()) out.push_back(id);
  return out;
}

CollectOptions replay_options() {
  CollectOptions o;
  o.virtual_latency = LatencyModel{};
  o.in_flight = 4;
  return o;
}

/// Pool of the four desk mock models over every desk bug.
const RunPool& desk_pool(int pool_size) {
  static std::map<int, RunPool> cache;
  auto& pool = cache[pool_size];
  if (pool.empty()) {
    ExperimentPlan plan;
    plan.models = {"A", "B", "C", "D"};
    plan.bugs = desk_bugs();
    plan.runs_per_model_pool = pool_size;
    plan.r_values = {4};
    plan.rng_seed = kPlanSeed;
    plan.ensemble_mode = EnsembleMode::none;
    const auto dir = scratch("pool" + std::to_string(pool_size));
    RunStore store(dir);
    collect(plan, EndpointSet::from_entries(load_endpoint_file(kDesk / "endpoints.json")), desk_fixtures(), store,
            replay_options());
    pool = load_pool(store);
    fs::remove_all(dir);
  }
  return pool;
}

Dataset first_runs(const std::vector<ModelName>& models, int runs) {
  RunSample sample;
  for (const auto& m : models) {
    for (int i = 0; i < runs; ++i) sample[m].push_back(i);
  }
  return select_runs(desk_pool(30), desk_bugs(), sample);
}

// 1 -------------------------------------------------------------------------
Outcome worked_example() {
  const std::vector<PredictionSet> runs{set_of({"m1", "m2"}), set_of({"m2"}), set_of({"m2"}), set_of({"m2"}),
                                        set_of({"m3"})};
  const auto t0 = Stopwatch::now();
  const auto scores = aggregate_predictions(runs);
  const double conf = confidence(scores);
  const double elapsed = ms_since(t0);
  const auto get = [&](const char* m) { return scores.at(MethodId(m)); };
  const bool exact = scores.size() == 3 && std::abs(get("m2") - 0.7) < 1e-12 && std::abs(get("m1") - 0.1) < 1e-12 &&
                     std::abs(get("m3") - 0.2) < 1e-12 && std::abs(conf - 0.7) < 1e-12;
  return {exact && elapsed < 1.0, "m2=" + fmt("%.17g", get("m2")) + " m1=" + fmt("%.17g", get("m1")) +
                                      " m3=" + fmt("%.17g", get("m3")) + " confidence=" + fmt("%.17g", conf) +
                                      " in " + fmt("%.4f", elapsed) + " ms"};
}

// 2 -------------------------------------------------------------------------
Outcome normalisation() {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<PredictionSet> runs(1 + rng.index(30));
    for (auto& r : runs) r = random_run(rng, 12, true);
    const auto scores = aggregate_predictions(runs);
    double sum = 0.0;
    for (const auto& [m, v] : scores) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return {worst <= 1e-9, "max |sum - 1| = " + fmt("%.3g", worst) + " over 1000 run sets"};
}

// 3 -------------------------------------------------------------------------
Outcome pooling_equivalence() {
  Rng rng(3);
  double pooled_gap = 0.0, scale_gap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int models = 2 + static_cast<int>(rng.index(3));
    const int runs = 1 + static_cast<int>(rng.index(8));
    std::map<ModelName, std::vector<ScoreMap>> per_model;
    std::vector<PredictionSet> all;
    WeightVector equal, scaled;
    const double c = 10.0 * (1.0 - rng.uniform01());  // (0, 10]
    for (int m = 0; m < models; ++m) {
      const ModelName name = "M" + std::to_string(m);
      equal[name] = 1.0;
      scaled[name] = c;
      for (int r = 0; r < runs; ++r) {
        const auto p = random_run(rng, 10, false);
        all.push_back(p);
        per_model[name].push_back(score_run(p));
      }
    }
    const auto weighted = aggregate_weighted(per_model, equal);
    const auto pooled = aggregate_predictions(all);
    const auto rescaled = aggregate_weighted(per_model, scaled);
    std::set<MethodId> keys;
    for (const auto* m : {&weighted, &pooled, &rescaled}) {
      for (const auto& [k, v] : *m) keys.insert(k);
    }
    const auto at = [](const ScoreMap& s, const MethodId& k) {
      const auto it = s.find(k);
      return it == s.end() ? 0.0 : it->second;
    };
    for (const auto& k : keys) {
      pooled_gap = std::max(pooled_gap, std::abs(at(weighted, k) - at(pooled, k)));
      scale_gap = std::max(scale_gap, std::abs(at(weighted, k) - at(rescaled, k)));
    }
  }
  return {pooled_gap <= 1e-9 && scale_gap <= 1e-12,
          "max weighted-vs-pooled gap " + fmt("%.3g", pooled_gap) + ", max scaling gap " + fmt("%.3g", scale_gap)};
}

// 4 -------------------------------------------------------------------------
Outcome de_fidelity() {
  int exact = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng gen(seed * 1000 + 17);
    const std::size_t n = 1 + gen.index(6);
    auto cfg = de::DEConfig::with_uniform_bounds(n, {-2.0, 3.0}, seed);
    cfg.differential_weight = 0.2 + 2.0 * gen.uniform01();
    cfg.crossover_probability = gen.uniform01();
    std::array<de::Agent, 4> agents;
    for (auto& a : agents) {
      for (std::size_t i = 0; i < n; ++i) a.genome.push_back(gen.uniform(-2.0, 3.0));
    }
    // Expected value: the forced index comes first, then one uniform draw per
    // component; chosen components become a + w_d (b - c), clipped to bounds.
    Rng oracle(seed);
    const std::size_t forced = oracle.index(n);
    std::vector<double> expected = agents[0].genome;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = oracle.uniform01();
      if (i == forced || u < cfg.crossover_probability) {
        double v = agents[1].genome[i] + cfg.differential_weight * (agents[2].genome[i] - agents[3].genome[i]);
        expected[i] = v < -2.0 ? -2.0 : (v > 3.0 ? 3.0 : v);
      }
    }
    Rng rng(seed);
    const auto trial = de::make_trial(agents[0], agents[1], agents[2], agents[3], cfg, rng);
    if (trial.genome == expected) ++exact;
  }

  bool monotone = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto cfg = de::DEConfig::with_uniform_bounds(3, {0.0, 1.0}, seed);
    const auto bumpy = [](const de::Agent& a) {
      return std::sin(9 * a.genome[0]) * std::cos(7 * a.genome[1]) + a.genome[2] * a.genome[2];
    };
    const auto r = de::optimize<double>(bumpy, cfg);
    monotone = monotone && std::is_sorted(r.history.begin(), r.history.end());
  }

  auto cfg = de::DEConfig::with_uniform_bounds(4, {0.0, 1.0}, 5);
  Rng init(cfg.rng_seed);
  const auto initial = de::initialize_population(cfg, init);
  const auto flat = de::optimize<int>([](const de::Agent&) { return 1; }, cfg);
  const bool invariant = flat.population == initial;

  return {exact == 50 && monotone && invariant, std::to_string(exact) + "/50 trials exact, history monotone: " +
                                                    (monotone ? "yes" : "no") +
                                                    ", constant fitness invariant: " + (invariant ? "yes" : "no")};
}

// 5 -------------------------------------------------------------------------
Outcome de_vs_grid() {
  const auto t0 = Stopwatch::now();
  const auto data = first_runs({"A", "B", "C"}, 5);
  const auto truth = ground_truth_of(desk_fixtures());

  // Exhaustive oracle on the 0.05 lattice of the weight cube, through the
  // reference scoring path.
  int grid_best = -1;
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      for (int k = 0; k <= 20; ++k) {
        if (i + j + k == 0) continue;
        const WeightVector w{{"A", i / 20.0}, {"B", j / 20.0}, {"C", k / 20.0}};
        grid_best = std::max(grid_best, fl_fitness(w, data, truth).acc1);
      }
    }
  }

  int matched = 0;
  std::string found;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    de::DEConfig cfg;
    cfg.rng_seed = seed;
    const auto r = optimize_weights(data, truth, cfg);
    if (r.best_fitness.acc1 == grid_best) ++matched;
    found += (seed > 1 ? "," : "") + std::to_string(r.best_fitness.acc1);
  }
  const double elapsed = ms_since(t0) / 1000.0;
  return {matched >= 18 && elapsed < 60.0, "grid optimum acc@1=" + std::to_string(grid_best) + ", DE matched " +
                                               std::to_string(matched) + "/20 seeds [" + found + "] in " +
                                               fmt("%.2f", elapsed) + " s"};
}

// 6 -------------------------------------------------------------------------
Outcome cv_hygiene() {
  const auto data = first_runs({"A", "B", "C", "D"}, 5);
  de::DEConfig cfg;
  cfg.rng_seed = 6;
  const auto cv = cross_validate(data, ground_truth_of(desk_fixtures()), cfg, 10, projects_of(desk_fixtures()));
  std::set<BugId> validated;
  for (const auto& fold : cv.folds) {
    for (const auto& bug : fold.validation_bugs) {
      if (fold.training_bugs.contains(bug)) {
        return {false, "bug " + bug + " is in both halves of fold " + std::to_string(fold.fold)};
      }
      validated.insert(bug);
    }
  }
  double sum = 0.0;
  for (const auto& [m, w] : cv.mean_weights) sum += w;
  const bool ok = cv.folds.size() == 10 && validated.size() == data.size() && std::abs(sum - 1.0) <= 1e-9;
  return {ok, std::to_string(cv.folds.size()) + " folds, " + std::to_string(validated.size()) +
                  " bugs validated once each, mean weights sum to 1 " + fmt("%+.3g", sum - 1.0)};
}

// 7 -------------------------------------------------------------------------
Outcome orthogonality() {
  const auto design = json::parse(slurp(kDesk / "design.json"));
  const auto expected = design.at("overlap_regions").get<std::map<std::string, int>>();
  const auto top = top_ranked_by_model(desk_pool(30), {"A", "B", "C", "D"}, desk_bugs(),
                                       ground_truth_of(desk_fixtures()), 5);
  const auto regions = overlap_regions(top);
  std::string diff;
  for (const auto& [region, n] : expected) {
    const auto it = regions.find(region);
    const int got = it == regions.end() ? -1 : it->second;
    if (got != n) diff += " " + region + ":" + std::to_string(got) + "!=" + std::to_string(n);
  }
  if (regions.size() != expected.size()) diff += " region count differs";
  return {diff.empty(), diff.empty() ? std::to_string(regions.size()) + " regions match the designed counts (A=" +
                                           std::to_string(regions.at("A")) + ", A&B=" +
                                           std::to_string(regions.at("A&B")) + ", A&B&C&D=" +
                                           std::to_string(regions.at("A&B&C&D")) + ")"
                                     : "mismatch:" + diff};
}

// 8 -------------------------------------------------------------------------
Outcome ensemble_benefit() {
  ExperimentPlan plan;
  plan.models = {"A", "B", "C", "D"};
  plan.bugs = desk_bugs();
  plan.r_values = {20};
  plan.single_r_values = {5};
  plan.samples_per_r = 20;
  plan.rng_seed = kPlanSeed;
  plan.ensemble_mode = EnsembleMode::equal;
  const auto report = evaluate(plan, desk_pool(30), desk_fixtures());
  double ensemble = -1.0, best_single = -1.0;
  std::string detail;
  for (const auto& a : report.aggregates) {
    if (a.statistic != "mean") continue;
    if (a.configuration == kEqualEnsemble && a.r == 20) ensemble = a.acc[0];
    if (a.configuration.size() == 1 && a.r == 5) {
      best_single = std::max(best_single, a.acc[0]);
      detail += " " + a.configuration + "=" + fmt("%.2f", a.acc[0]);
    }
  }
  return {ensemble > best_single && best_single >= 0.0,
          "mean acc@1 ensemble(R=20)=" + fmt("%.2f", ensemble) + " vs singles(R=5):" + detail};
}

// 9 -------------------------------------------------------------------------
Outcome agent_loop() {
  const auto t0 = Stopwatch::now();
  const auto dir = scratch("agent_loop");
  auto mock = ScriptedMock::load(kDesk / "mock-models.json");
  MockChatServer server(mock);
  std::vector<EndpointEntry> entries;
  for (const auto& [name, id] : {std::pair{"A", "desk-a"}, std::pair{"B", "desk-b"}}) {
    EndpointEntry e;
    e.kind = "http";
    e.endpoint = {name, server.base_url(), id, std::chrono::milliseconds(5000), 1};
    entries.push_back(e);
  }
  ExperimentPlan plan;
  plan.models = {"A", "B"};
  plan.bugs = {"Chart-1", "Lang-1", "Math-2"};
  plan.runs_per_model_pool = 6;
  plan.r_values = {2, 4};
  plan.samples_per_r = 5;
  plan.rng_seed = kPlanSeed;
  RunStore store(dir / "runs");
  const auto summary =
      collect(plan, EndpointSet::from_entries(entries), desk_fixtures(), store, CollectOptions{});
  const auto pool = load_pool(store);
  report_emit(evaluate(plan, pool, desk_fixtures()), dir / "report");
  server.stop();
  const double elapsed = ms_since(t0) / 1000.0;

  int ok = 0;
  TokenCount recorded;
  bool totals = true;
  for (const auto& [key, rec] : pool) {
    if (rec.status == RunStatus::ok) ++ok;
    recorded += rec.cost.tokens;
    totals = totals && to_json(rec).at("tokens_total").get<std::int64_t>() == rec.cost.tokens.in + rec.cost.tokens.out;
  }
  const auto declared = mock.declared_tokens();
  const bool report_ok = fs::exists(dir / "report" / "report.json");
  fs::remove_all(dir);
  const bool pass = summary.written == 36 && ok == 36 && recorded.in == declared.in &&
                    recorded.out == declared.out && totals && report_ok && elapsed < 10.0;
  return {pass, std::to_string(ok) + "/" + std::to_string(pool.size()) + " runs parsed, tokens " +
                    std::to_string(recorded.total()) + " recorded vs " + std::to_string(declared.total()) +
                    " declared, in " + fmt("%.2f", elapsed) + " s over HTTP"};
}

// 10 ------------------------------------------------------------------------
Outcome energy() {
  std::vector<PowerSample> flat, ramp;
  for (int i = 0; i <= 10; ++i) {
    flat.push_back({i * 1000.0, 100.0});
    ramp.push_back({i * 1000.0, 10.0 * i});
  }
  const double e_flat = *integrate_energy(flat, {0, 10000});
  const double e_ramp = *integrate_energy(ramp, {0, 10000});

  Rng rng(10);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PowerSample> s;
    double t = rng.uniform(0, 1000);
    for (int i = 0, n = 3 + static_cast<int>(rng.index(50)); i < n; ++i) {
      s.push_back({t, rng.uniform(0, 400)});
      t += rng.uniform(0.5, 300);
    }
    const double split = s[1 + rng.index(s.size() - 2)].timestamp_ms;
    const double whole = *integrate_energy(s, {s.front().timestamp_ms, s.back().timestamp_ms});
    const double parts = *integrate_energy(s, {s.front().timestamp_ms, split}) +
                         *integrate_energy(s, {split, s.back().timestamp_ms});
    worst = std::max(worst, std::abs(whole - parts));
  }
  const bool pass = std::abs(e_flat - 1000.0) <= 1e-9 && std::abs(e_ramp - 500.0) <= 1e-9 && worst <= 1e-9;
  return {pass, "constant " + fmt("%.12g", e_flat) + " J, ramp " + fmt("%.12g", e_ramp) +
                    " J, max additivity gap " + fmt("%.3g", worst) + " J"};
}

// 11 ------------------------------------------------------------------------
Outcome replay() {
  ExperimentPlan plan;
  plan.models = {"A", "B", "C", "D"};
  plan.bugs = desk_bugs();
  plan.runs_per_model_pool = 8;
  plan.r_values = {4, 8};
  plan.single_r_values = {2, 4};
  plan.samples_per_r = 4;
  plan.rng_seed = kPlanSeed;
  plan.k_folds = 4;
  plan.ensemble_mode = EnsembleMode::de_optimized;
  plan.de.population_size = 12;
  plan.de.generations = 6;

  const std::vector<std::string> files{"report.json",       "rows.csv",           "overlap.csv",
                                       "plot_acc_at_k.csv", "plot_cost_accuracy.csv", "plot_de_weights.csv",
                                       "traces.jsonl"};
  std::vector<std::map<std::string, std::string>> outputs;
  for (int pass = 0; pass < 2; ++pass) {
    const auto dir = scratch("replay" + std::to_string(pass));
    const auto power = dir / "power.csv";
    {
      std::ofstream out(power);
      out << "timestamp_ms,power_w\n";
      for (int i = 0; i <= 4000; ++i) out << i * 100000 << "," << 80 + (i * 37) % 50 << "\n";
    }
    auto opts = replay_options();
    opts.power_csv = power;
    RunStore store(dir / "runs");
    collect(plan, EndpointSet::from_entries(load_endpoint_file(kDesk / "endpoints.json")), desk_fixtures(), store,
            opts);
    report_emit(evaluate(plan, load_pool(store), desk_fixtures()), dir / "out");
    std::map<std::string, std::string> bytes;
    for (const auto& f : files) bytes[f] = slurp(dir / "out" / f);
    outputs.push_back(std::move(bytes));
    fs::remove_all(dir);
  }
  std::string differing;
  std::size_t total = 0;
  for (const auto& f : files) {
    total += outputs[0][f].size();
    if (outputs[0][f] != outputs[1][f] || outputs[0][f].empty()) differing += " " + f;
  }
  return {differing.empty(), differing.empty()
                                 ? std::to_string(files.size()) + " files identical (" + std::to_string(total) + " bytes)"
                                 : "differing:" + differing};
}

// 12 ------------------------------------------------------------------------
Outcome acc_properties() {
  Rng rng(12);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::map<BugId, RankedList> results;
    std::map<BugId, GroundTruth> truth;
    const int bugs = 1 + static_cast<int>(rng.index(15));
    std::size_t longest = 0;
    int any_hit = 0;
    for (int b = 0; b < bugs; ++b) {
      const BugId id = "B" + std::to_string(b);
      std::vector<PredictionSet> runs(1 + rng.index(6));
      for (auto& r : runs) r = random_run(rng, 9, false);
      results[id] = rank(aggregate_predictions(runs));
      GroundTruth gt{id, {}};
      for (int f = 0, n = 1 + static_cast<int>(rng.index(2)); f < n; ++f) {
        gt.faulty_methods.emplace("m" + std::to_string(rng.index(9)));
      }
      longest = std::max(longest, results[id].size());
      any_hit += std::any_of(results[id].begin(), results[id].end(),
                             [&](const RankedEntry& e) { return gt.is_faulty(e.method); });
      truth[id] = gt;
    }
    int prev = 0;
    for (int k = 1; k <= 10; ++k) {
      const int a = acc_at_k(results, truth, k);
      if (a < prev || a < 0 || a > bugs) ++violations;
      if (static_cast<std::size_t>(k) >= longest && a != any_hit) ++violations;
      prev = a;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over 1000 result sets (k = 1..10)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"worked-example exactness", worked_example},
      {"score normalisation", normalisation},
      {"pooling equivalence and weight scaling", pooling_equivalence},
      {"DE trial fidelity and monotone best", de_fidelity},
      {"DE versus exhaustive weight grid", de_vs_grid},
      {"cross-validation hygiene", cv_hygiene},
      {"orthogonality regions", orthogonality},
      {"ensemble benefit on the engineered corpus", ensemble_benefit},
      {"agent loop end to end over HTTP", agent_loop},
      {"energy integration", energy},
      {"replay determinism", replay},
      {"acc@k monotonicity and bounds", acc_properties},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (i + 1) << ": " << criteria[i].first << " -- "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " acceptance criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
