#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "cosmosfl/error.hpp"
#include "cosmosfl/harness.hpp"

namespace cosmosfl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SampleCost {
  std::int64_t tokens = 0;
  std::int64_t wall_ms = 0;
  double energy = 0.0;
  bool energy_complete = true;
};

SampleCost sample_cost(const RunPool& pool, const std::vector<BugId>& bugs, const RunSample& sample) {
  SampleCost c;
  for (const auto& bug : bugs) {
    for (const auto& [model, indices] : sample) {
      for (int idx : indices) {
        const auto& rec = pool.at(RunKey{model, bug, idx});
        c.tokens += rec.cost.tokens.total();
        c.wall_ms += rec.cost.wall_time_ms;
        if (rec.cost.energy_j) {
          c.energy += *rec.cost.energy_j;
        } else {
          c.energy_complete = false;
        }
      }
    }
  }
  return c;
}

/// Metrics of one sample. `weights_for` yields the voting weights of a bug.
template <typename WeightsFor>
MetricRow score_sample(const std::string& configuration, int r, int sample_index, const Dataset& data,
                       const std::map<BugId, GroundTruth>& truth, const WeightsFor& weights_for,
                       const SampleCost& cost) {
  MetricRow row;
  row.configuration = configuration;
  row.r = r;
  row.sample = sample_index;
  std::map<BugId, RankedList> rankings;
  double confidence_sum = 0.0;
  for (const auto& [bug, runs] : data) {
    std::map<ModelName, std::vector<ScoreMap>> scored;
    for (const auto& [model, predictions] : runs) {
      for (const auto& p : predictions) scored[model].push_back(score_run(p));
    }
    const ScoreMap scores = aggregate_weighted(scored, weights_for(bug));
    confidence_sum += confidence(scores);
    auto ranking = rank(scores);
    row.wasted_effort += wasted_effort(ranking, truth.at(bug));
    rankings.emplace(bug, std::move(ranking));
  }
  for (int k = 1; k <= kMaxK; ++k) row.acc[static_cast<std::size_t>(k - 1)] = acc_at_k(rankings, truth, k);
  row.confidence_mean = data.empty() ? 0.0 : confidence_sum / static_cast<double>(data.size());
  row.tokens_total = cost.tokens;
  row.wall_time_ms = cost.wall_ms;
  if (cost.energy_complete) row.energy_j = cost.energy;
  return row;
}

WeightVector uniform_weights(const std::vector<ModelName>& models) {
  WeightVector w;
  for (const auto& m : models) w[m] = 1.0;
  return w;
}

int count_overlapping_windows(const RunPool& pool, const ExperimentPlan& plan) {
  const std::set<ModelName> models(plan.models.begin(), plan.models.end());
  const std::set<BugId> bugs(plan.bugs.begin(), plan.bugs.end());
  std::vector<std::pair<TimeWindow, std::size_t>> windows;
  for (const auto& [key, rec] : pool) {
    if (rec.cost.energy_j && models.contains(key.model) && bugs.contains(key.bug)) {
      windows.push_back({rec.window, windows.size()});
    }
  }
  std::sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first.start_ms, a.first.end_ms, a.second) < std::tie(b.first.start_ms, b.first.end_ms, b.second);
  });
  std::vector<bool> marked(windows.size(), false);
  std::size_t furthest = 0;
  for (std::size_t i = 1; i < windows.size(); ++i) {
    if (windows[i].first.start_ms < windows[furthest].first.end_ms) {
      marked[i] = true;
      marked[furthest] = true;
    }
    if (windows[i].first.end_ms > windows[furthest].first.end_ms) furthest = i;
  }
  return static_cast<int>(std::count(marked.begin(), marked.end(), true));
}

}  // namespace

std::map<ModelName, std::set<BugId>> top_ranked_by_model(const RunPool& pool, const std::vector<ModelName>& models,
                                                         const std::vector<BugId>& bugs,
                                                         const std::map<BugId, GroundTruth>& truth, int runs) {
  std::map<ModelName, std::set<BugId>> top;
  for (const auto& model : models) {
    RunSample sample;
    for (int i = 0; i < runs; ++i) sample[model].push_back(i);
    auto& hits = top[model];
    for (const auto& [bug, per_model] : select_runs(pool, bugs, sample)) {
      const auto ranking = rank(aggregate_predictions(per_model.at(model)));
      if (!ranking.empty() && truth.at(bug).is_faulty(ranking.front().method)) hits.insert(bug);
    }
  }
  return top;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<MetricRow>& rows) {
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, std::vector<const MetricRow*>> groups;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.configuration, row.r);
    auto& g = groups[key];
    if (g.empty()) order.push_back(key);
    g.push_back(&row);
  }

  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& g = groups[key];
    const auto n = static_cast<double>(g.size());
    const auto stats = [&](auto field) {
      const double first = field(*g.front());
      if (std::all_of(g.begin(), g.end(), [&](const MetricRow* r) { return field(*r) == first; })) {
        return std::make_pair(first, 0.0);
      }
      double mean = 0.0;
      for (const auto* r : g) mean += field(*r);
      mean /= n;
      double ss = 0.0;
      for (const auto* r : g) ss += (field(*r) - mean) * (field(*r) - mean);
      return std::make_pair(mean, g.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
    };
    AggregateRow mean{key.first, key.second, "mean", {}, 0, 0, 0, 0, {}};
    AggregateRow sd{key.first, key.second, "stddev", {}, 0, 0, 0, 0, {}};
    for (std::size_t k = 0; k < kMaxK; ++k) {
      std::tie(mean.acc[k], sd.acc[k]) = stats([k](const MetricRow& r) { return static_cast<double>(r.acc[k]); });
    }
    std::tie(mean.wasted_effort, sd.wasted_effort) =
        stats([](const MetricRow& r) { return static_cast<double>(r.wasted_effort); });
    std::tie(mean.confidence_mean, sd.confidence_mean) = stats([](const MetricRow& r) { return r.confidence_mean; });
    std::tie(mean.tokens_total, sd.tokens_total) =
        stats([](const MetricRow& r) { return static_cast<double>(r.tokens_total); });
    std::tie(mean.wall_time_ms, sd.wall_time_ms) =
        stats([](const MetricRow& r) { return static_cast<double>(r.wall_time_ms); });
    if (std::all_of(g.begin(), g.end(), [](const MetricRow* r) { return r->energy_j.has_value(); })) {
      const auto [m, s] = stats([](const MetricRow& r) { return *r.energy_j; });
      mean.energy_j = m;
      sd.energy_j = s;
    }
    out.push_back(std::move(mean));
    out.push_back(std::move(sd));
  }
  return out;
}

double aggregate_discrepancy(const Report& report) {
  const auto expected = aggregate_rows(report.rows);
  if (expected.size() != report.aggregates.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  const auto diff = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected[i];
    const auto& a = report.aggregates[i];
    if (e.configuration != a.configuration || e.r != a.r || e.statistic != a.statistic ||
        e.energy_j.has_value() != a.energy_j.has_value()) {
      return std::numeric_limits<double>::infinity();
    }
    for (std::size_t k = 0; k < kMaxK; ++k) diff(e.acc[k], a.acc[k]);
    diff(e.wasted_effort, a.wasted_effort);
    diff(e.confidence_mean, a.confidence_mean);
    diff(e.tokens_total, a.tokens_total);
    diff(e.wall_time_ms, a.wall_time_ms);
    if (e.energy_j) diff(*e.energy_j, *a.energy_j);
  }
  return worst;
}

Report evaluate(const ExperimentPlan& plan, const RunPool& pool, const FixtureSet& fixtures,
                const EvaluateOptions& options) {
  plan.validate();
  for (const auto& bug : plan.bugs) {
    if (!fixtures.contains(bug)) throw ValidationError("plan bug '" + bug + "' has no fixture");
  }
  const auto truth = ground_truth_of(fixtures);
  const auto projects = projects_of(fixtures);

  Report report;
  report.plan = to_json(plan);

  for (const auto& model : plan.models) {
    for (int r : plan.single_rs()) {
      const auto samples = sample_runs(plan.runs_per_model_pool, {model}, r, plan.samples_per_r, plan.rng_seed);
      const WeightVector w{{model, 1.0}};
      for (int s = 0; s < plan.samples_per_r; ++s) {
        const auto& sample = samples[static_cast<std::size_t>(s)];
        const Dataset data = select_runs(pool, plan.bugs, sample);
        report.rows.push_back(score_sample(model, r, s, data, truth,
                                           [&](const BugId&) -> const WeightVector& { return w; },
                                           sample_cost(pool, plan.bugs, sample)));
      }
    }
  }

  if (plan.ensemble_mode != EnsembleMode::none) {
    const WeightVector equal = uniform_weights(plan.models);
    std::vector<MetricRow> de_rows;
    for (int r : plan.r_values) {
      const auto samples = sample_runs(plan.runs_per_model_pool, plan.models, r, plan.samples_per_r, plan.rng_seed);
      std::map<ModelName, double> weight_sum;
      for (int s = 0; s < plan.samples_per_r; ++s) {
        const auto& sample = samples[static_cast<std::size_t>(s)];
        const Dataset data = select_runs(pool, plan.bugs, sample);
        const SampleCost cost = sample_cost(pool, plan.bugs, sample);
        report.rows.push_back(score_sample(std::string(kEqualEnsemble), r, s, data, truth,
                                           [&](const BugId&) -> const WeightVector& { return equal; }, cost));
        if (plan.ensemble_mode != EnsembleMode::de_optimized) continue;

        if (options.de_weights) {
          const WeightVector& fixed = *options.de_weights;
          de_rows.push_back(score_sample(std::string(kDeEnsemble), r, s, data, truth,
                                         [&](const BugId&) -> const WeightVector& { return fixed; }, cost));
          continue;
        }
        de::DEConfig cfg = plan.de;
        cfg.rng_seed = derive_seed(plan.rng_seed, mix_seed(static_cast<std::uint64_t>(r)) ^ static_cast<std::uint64_t>(s));
        const auto cv = cross_validate(data, truth, cfg, plan.k_folds, projects);
        std::map<BugId, const WeightVector*> fold_weights;
        for (const auto& fold : cv.folds) {
          for (const auto& bug : fold.validation_bugs) fold_weights[bug] = &fold.weights;
        }
        de_rows.push_back(score_sample(std::string(kDeEnsemble), r, s, data, truth,
                                       [&](const BugId& bug) -> const WeightVector& { return *fold_weights.at(bug); },
                                       cost));
        for (const auto& [model, w] : cv.mean_weights) weight_sum[model] += w;
        for (const auto& t : cv.trace) {
          json line = json::parse(trace_line(t));
          line["r"] = r;
          line["sample"] = s;
          report.de_trace.push_back(line.dump());
        }
      }
      if (!weight_sum.empty()) {
        for (auto& [model, w] : weight_sum) w /= static_cast<double>(plan.samples_per_r);
        report.de_mean_weights[r] = weight_sum;
      }
    }
    report.rows.insert(report.rows.end(), de_rows.begin(), de_rows.end());
  }

  report.aggregates = aggregate_rows(report.rows);
  report.overlap_runs = std::min(plan.overlap_runs, plan.runs_per_model_pool);
  report.top_ranked = top_ranked_by_model(pool, plan.models, plan.bugs, truth, report.overlap_runs);
  if (plan.models.size() >= 2) report.overlap = overlap_regions(report.top_ranked);
  report.energy_overlapping_runs = count_overlapping_windows(pool, plan);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

double round9(double x) {
  if (!std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

void round_floats(json& j) {
  if (j.is_number_float()) {
    j = round9(j.get<double>());
  } else if (j.is_structured()) {
    for (auto& v : j) round_floats(v);
  }
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string{}; }

json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string canonical_json(json j) {
  round_floats(j);
  return j.dump(2) + "\n";
}

json to_json(const Report& report) {
  json j;
  j["format"] = "cosmos-report/1";
  j["plan"] = report.plan;
  j["rows"] = json::array();
  for (const auto& r : report.rows) {
    json row{{"configuration", r.configuration},
             {"r", r.r},
             {"sample", r.sample},
             {"wasted_effort", r.wasted_effort},
             {"confidence_mean", r.confidence_mean},
             {"tokens_total", r.tokens_total},
             {"wall_time_ms", r.wall_time_ms},
             {"energy_j", optional_json(r.energy_j)}};
    for (int k = 1; k <= kMaxK; ++k) row["acc_at_" + std::to_string(k)] = r.acc[static_cast<std::size_t>(k - 1)];
    j["rows"].push_back(std::move(row));
  }
  j["aggregates"] = json::array();
  for (const auto& a : report.aggregates) {
    json row{{"configuration", a.configuration},
             {"r", a.r},
             {"statistic", a.statistic},
             {"wasted_effort", a.wasted_effort},
             {"confidence_mean", a.confidence_mean},
             {"tokens_total", a.tokens_total},
             {"wall_time_ms", a.wall_time_ms},
             {"energy_j", optional_json(a.energy_j)}};
    for (int k = 1; k <= kMaxK; ++k) row["acc_at_" + std::to_string(k)] = a.acc[static_cast<std::size_t>(k - 1)];
    j["aggregates"].push_back(std::move(row));
  }
  json top = json::object();
  for (const auto& [model, bugs] : report.top_ranked) top[model] = bugs;
  j["overlap"] = {{"runs_per_model", report.overlap_runs}, {"regions", report.overlap}, {"top_ranked", top}};
  json weights = json::array();
  for (const auto& [r, w] : report.de_mean_weights) weights.push_back({{"r", r}, {"weights", w}});
  j["de_mean_weights"] = weights;
  j["de_traces"] = report.de_trace.empty() ? json(nullptr) : json("traces.jsonl");
  j["energy_overlapping_runs"] = report.energy_overlapping_runs;
  j["external_baselines"] = report.external_baselines;
  return j;
}

Report report_from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != "cosmos-report/1") throw ValidationError("not a cosmos-report/1 document");
    Report report;
    report.plan = j.at("plan");
    for (const auto& r : j.at("rows")) {
      MetricRow row;
      row.configuration = r.at("configuration").get<std::string>();
      row.r = r.at("r").get<int>();
      row.sample = r.at("sample").get<int>();
      for (int k = 1; k <= kMaxK; ++k) {
        row.acc[static_cast<std::size_t>(k - 1)] = r.at("acc_at_" + std::to_string(k)).get<int>();
      }
      row.wasted_effort = r.at("wasted_effort").get<std::int64_t>();
      row.confidence_mean = r.at("confidence_mean").get<double>();
      row.tokens_total = r.at("tokens_total").get<std::int64_t>();
      row.wall_time_ms = r.at("wall_time_ms").get<std::int64_t>();
      row.energy_j = optional_from(r.at("energy_j"));
      report.rows.push_back(std::move(row));
    }
    for (const auto& a : j.at("aggregates")) {
      AggregateRow row;
      row.configuration = a.at("configuration").get<std::string>();
      row.r = a.at("r").get<int>();
      row.statistic = a.at("statistic").get<std::string>();
      for (int k = 1; k <= kMaxK; ++k) {
        row.acc[static_cast<std::size_t>(k - 1)] = a.at("acc_at_" + std::to_string(k)).get<double>();
      }
      row.wasted_effort = a.at("wasted_effort").get<double>();
      row.confidence_mean = a.at("confidence_mean").get<double>();
      row.tokens_total = a.at("tokens_total").get<double>();
      row.wall_time_ms = a.at("wall_time_ms").get<double>();
      row.energy_j = optional_from(a.at("energy_j"));
      report.aggregates.push_back(std::move(row));
    }
    const auto& overlap = j.at("overlap");
    report.overlap_runs = overlap.at("runs_per_model").get<int>();
    report.overlap = overlap.at("regions").get<std::map<std::string, int>>();
    report.top_ranked = overlap.at("top_ranked").get<std::map<ModelName, std::set<BugId>>>();
    for (const auto& w : j.at("de_mean_weights")) {
      report.de_mean_weights[w.at("r").get<int>()] = w.at("weights").get<WeightVector>();
    }
    report.energy_overlapping_runs = j.value("energy_overlapping_runs", 0);
    report.external_baselines = j.value("external_baselines", json::object());
    return report;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

Report load_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
  Report report = report_from_json(doc);
  const fs::path traces = path.parent_path() / "traces.jsonl";
  if (doc.at("de_traces").is_string() && fs::exists(traces)) {
    std::ifstream t(traces);
    for (std::string line; std::getline(t, line);) {
      if (!line.empty()) report.de_trace.push_back(line);
    }
  }
  // Stored values carry 9 significant digits.
  const auto expected = aggregate_rows(report.rows);
  if (expected.size() != report.aggregates.size()) {
    throw ValidationError(path.string() + ": aggregate rows do not match the sample rows");
  }
  Report recomputed = report;
  recomputed.aggregates = expected;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto check = [&](double stored, double fresh) {
      if (std::abs(stored - fresh) > 1e-9 + 1e-8 * std::abs(fresh)) {
        throw ValidationError(path.string() + ": aggregate for " + expected[i].configuration + " R=" +
                              std::to_string(expected[i].r) + " (" + expected[i].statistic +
                              ") is not recomputable from the sample rows");
      }
    };
    const auto& a = report.aggregates[i];
    const auto& e = expected[i];
    if (a.configuration != e.configuration || a.r != e.r || a.statistic != e.statistic ||
        a.energy_j.has_value() != e.energy_j.has_value()) {
      throw ValidationError(path.string() + ": aggregate rows do not match the sample rows");
    }
    for (std::size_t k = 0; k < kMaxK; ++k) check(a.acc[k], e.acc[k]);
    check(a.wasted_effort, e.wasted_effort);
    check(a.confidence_mean, e.confidence_mean);
    check(a.tokens_total, e.tokens_total);
    check(a.wall_time_ms, e.wall_time_ms);
    if (e.energy_j) check(*a.energy_j, *e.energy_j);
  }
  return report;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

void report_emit(const Report& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

  write_file(dir / "report.json", canonical_json(to_json(report)));

  std::string rows =
      "kind,configuration,r,sample,acc_at_1,acc_at_2,acc_at_3,acc_at_4,acc_at_5,wasted_effort,"
      "confidence_mean,tokens_total,wall_time_ms,energy_j\n";
  for (const auto& r : report.rows) {
    rows += "sample," + csv_field(r.configuration) + "," + std::to_string(r.r) + "," + std::to_string(r.sample);
    for (int a : r.acc) rows += "," + std::to_string(a);
    rows += "," + std::to_string(r.wasted_effort) + "," + fmt(r.confidence_mean) + "," +
            std::to_string(r.tokens_total) + "," + std::to_string(r.wall_time_ms) + "," + fmt(r.energy_j) + "\n";
  }
  for (const auto& a : report.aggregates) {
    rows += a.statistic + "," + csv_field(a.configuration) + "," + std::to_string(a.r) + ",";
    for (double v : a.acc) rows += "," + fmt(v);
    rows += "," + fmt(a.wasted_effort) + "," + fmt(a.confidence_mean) + "," + fmt(a.tokens_total) + "," +
            fmt(a.wall_time_ms) + "," + fmt(a.energy_j) + "\n";
  }
  write_file(dir / "rows.csv", rows);

  std::string overlap = "region,count\n";
  for (const auto& [region, count] : report.overlap) overlap += csv_field(region) + "," + std::to_string(count) + "\n";
  write_file(dir / "overlap.csv", overlap);

  std::string scatter = "configuration,r,sample,energy_j,wall_time_ms,tokens_total,acc_at_1\n";
  for (const auto& r : report.rows) {
    scatter += csv_field(r.configuration) + "," + std::to_string(r.r) + "," + std::to_string(r.sample) + "," +
               fmt(r.energy_j) + "," + std::to_string(r.wall_time_ms) + "," + std::to_string(r.tokens_total) + "," +
               std::to_string(r.acc[0]) + "\n";
  }
  write_file(dir / "plot_cost_accuracy.csv", scatter);

  std::string bars = "configuration,r,k,mean_acc\n";
  for (const auto& a : report.aggregates) {
    if (a.statistic != "mean") continue;
    for (int k = 1; k <= kMaxK; ++k) {
      bars += csv_field(a.configuration) + "," + std::to_string(a.r) + "," + std::to_string(k) + "," +
              fmt(a.acc[static_cast<std::size_t>(k - 1)]) + "\n";
    }
  }
  write_file(dir / "plot_acc_at_k.csv", bars);

  std::string weights = "r,model,weight\n";
  for (const auto& [r, w] : report.de_mean_weights) {
    for (const auto& [model, value] : w) weights += std::to_string(r) + "," + csv_field(model) + "," + fmt(value) + "\n";
  }
  write_file(dir / "plot_de_weights.csv", weights);

  if (!report.de_trace.empty()) {
    std::string traces;
    for (const auto& line : report.de_trace) traces += line + "\n";
    write_file(dir / "traces.jsonl", traces);
  }
}

}  // namespace cosmosfl
