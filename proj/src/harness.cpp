#include "cosmosfl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "cosmosfl/error.hpp"
#include "cosmosfl/mock_endpoint.hpp"

namespace cosmosfl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(EnsembleMode m) {
  switch (m) {
    case EnsembleMode::none: return "none";
    case EnsembleMode::equal: return "equal";
    case EnsembleMode::de_optimized: return "de-optimized";
  }
  return "unknown";
}

EnsembleMode ensemble_mode_from_string(std::string_view s) {
  for (auto m : {EnsembleMode::none, EnsembleMode::equal, EnsembleMode::de_optimized}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown ensemble mode '" + std::string(s) + "' (none | equal | de-optimized)");
}

void ExperimentPlan::validate() const {
  if (models.empty()) throw ValidationError("plan names no models");
  if (std::set<ModelName>(models.begin(), models.end()).size() != models.size()) {
    throw ValidationError("plan lists a model twice");
  }
  if (bugs.empty()) throw ValidationError("plan names no bugs");
  if (runs_per_model_pool < 1) throw ValidationError("run pool size must be positive");
  if (samples_per_r < 1) throw ValidationError("samples per R must be positive");
  if (overlap_runs < 1) throw ValidationError("overlap runs must be positive");
  for (int r : single_rs()) {
    if (r < 1 || r > runs_per_model_pool) {
      throw ValidationError("R=" + std::to_string(r) + " must lie in [1, " +
                            std::to_string(runs_per_model_pool) + "] (the per-model run pool)");
    }
  }
  if (ensemble_mode == EnsembleMode::none) return;
  if (models.size() < 2) throw ValidationError("ensemble modes need at least two models");
  const int m = static_cast<int>(models.size());
  for (int r : r_values) {
    if (r < m || r % m != 0) {
      throw ValidationError("ensemble R=" + std::to_string(r) + " is not a multiple of the " +
                            std::to_string(m) + " models: runs must split as R_M x M = R");
    }
    if (r / m > runs_per_model_pool) {
      throw ValidationError("ensemble R=" + std::to_string(r) + " needs " + std::to_string(r / m) +
                            " runs per model but the pool holds " + std::to_string(runs_per_model_pool));
    }
  }
  if (ensemble_mode == EnsembleMode::de_optimized && k_folds < 2) {
    throw ValidationError("cross-validation needs at least 2 folds");
  }
}

json to_json(const ExperimentPlan& p) {
  return {{"models", p.models},
          {"bugs", p.bugs},
          {"runs_per_model_pool", p.runs_per_model_pool},
          {"r_values", p.r_values},
          {"single_r_values", p.single_rs()},
          {"samples_per_r", p.samples_per_r},
          {"ensemble_mode", to_string(p.ensemble_mode)},
          {"rng_seed", p.rng_seed},
          {"overlap_runs", p.overlap_runs},
          {"k_folds", p.k_folds},
          {"de",
           {{"population_size", p.de.population_size},
            {"generations", p.de.generations},
            {"differential_weight", p.de.differential_weight},
            {"crossover_probability", p.de.crossover_probability}}}};
}

// ---------------------------------------------------------------------------

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string file_safe(const std::string& s) {
  std::string out = s;
  for (auto& c : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

}  // namespace

std::vector<EndpointEntry> load_endpoint_file(const fs::path& path) {
  const json doc = read_json(path);
  std::vector<EndpointEntry> out;
  try {
    for (const auto& e : doc.at("endpoints")) {
      EndpointEntry entry;
      entry.endpoint.name = e.at("name").get<std::string>();
      entry.kind = e.value("kind", std::string{"http"});
      entry.endpoint.model_id = e.value("model_id", entry.endpoint.name);
      const double timeout_s = e.value("request_timeout_s", 120.0);
      if (!(timeout_s > 0.0)) throw ValidationError("endpoint '" + entry.endpoint.name + "': timeout must be > 0");
      entry.endpoint.request_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_s * 1000.0));
      entry.endpoint.max_retries = e.value("max_retries", 2);
      if (entry.kind == "http") {
        entry.endpoint.base_url = e.at("base_url").get<std::string>();
      } else if (entry.kind == "mock") {
        fs::path script = e.at("script").get<std::string>();
        if (script.is_relative()) script = path.parent_path() / script;
        entry.mock_script = script;
        entry.endpoint.base_url = "mock:" + script.string();
      } else {
        throw ValidationError("endpoint '" + entry.endpoint.name + "': unknown kind '" + entry.kind + "'");
      }
      out.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return out;
}

EndpointSet EndpointSet::from_entries(const std::vector<EndpointEntry>& entries) {
  EndpointSet set;
  std::map<fs::path, std::shared_ptr<ScriptedMock>> mocks;
  for (const auto& e : entries) {
    if (e.kind == "mock") {
      auto& mock = mocks[e.mock_script];
      if (!mock) mock = std::make_shared<ScriptedMock>(ScriptedMock::load(e.mock_script));
      set.add(e.endpoint, mock);
    } else {
      set.add(e.endpoint, std::make_shared<HttpChatClient>(
                              HttpEndpointOptions{e.endpoint.base_url, e.endpoint.request_timeout,
                                                  e.endpoint.max_retries}));
    }
  }
  return set;
}

void EndpointSet::add(ModelEndpoint endpoint, std::shared_ptr<ChatClient> client) {
  if (endpoint.request_timeout.count() <= 0) {
    throw ValidationError("endpoint '" + endpoint.name + "': timeout must be > 0");
  }
  const auto name = endpoint.name;
  if (!members_.emplace(name, Member{std::move(endpoint), std::move(client)}).second) {
    throw ValidationError("duplicate endpoint name '" + name + "'");
  }
}

const ModelEndpoint& EndpointSet::endpoint(const ModelName& name) const {
  const auto it = members_.find(name);
  if (it == members_.end()) throw ValidationError("no endpoint configured for model '" + name + "'");
  return it->second.endpoint;
}

ChatClient& EndpointSet::client(const ModelName& name) const {
  const auto it = members_.find(name);
  if (it == members_.end()) throw ValidationError("no endpoint configured for model '" + name + "'");
  return *it->second.client;
}

std::vector<ModelName> EndpointSet::names() const {
  std::vector<ModelName> out;
  for (const auto& [name, m] : members_) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

fs::path RunStore::path_for(const RunKey& key) const {
  return root_ / file_safe(key.model) / (file_safe(key.bug) + "__" + std::to_string(key.run_index) + ".json");
}

std::set<RunKey> RunStore::existing_keys() const {
  std::lock_guard lock(mutex_);
  std::set<RunKey> keys;
  std::set<fs::path> indexed_files;
  const fs::path index = root_ / "index.json";
  if (fs::exists(index)) {
    for (const auto& e : read_json(index).value("runs", json::array())) {
      RunKey key{e.at("model").get<std::string>(), e.at("bug_id").get<std::string>(), e.at("run_index").get<int>()};
      const auto p = path_for(key);
      if (fs::exists(p)) {
        keys.insert(key);
        indexed_files.insert(p);
      }
    }
  }
  if (!fs::exists(root_)) return keys;
  for (const auto& dir : fs::directory_iterator(root_)) {
    if (!dir.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(dir.path())) {
      if (f.path().extension() != ".json" || indexed_files.contains(f.path())) continue;
      const auto rec = run_record_from_json(read_json(f.path()));
      keys.insert({rec.model, rec.bug_id, rec.run_index});
    }
  }
  return keys;
}

void RunStore::write(const RunRecord& record) {
  std::lock_guard lock(mutex_);
  const auto path = path_for({record.model, record.bug_id, record.run_index});
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  write_text(path, to_json(record).dump(1) + "\n");
}

RunRecord RunStore::read(const RunKey& key) const {
  return run_record_from_json(read_json(path_for(key)));
}

void RunStore::write_index() const {
  const auto keys = existing_keys();
  std::lock_guard lock(mutex_);
  json runs = json::array();
  for (const auto& k : keys) runs.push_back({{"model", k.model}, {"bug_id", k.bug}, {"run_index", k.run_index}});
  std::error_code ec;
  fs::create_directories(root_, ec);
  write_text(root_ / "index.json", json{{"runs", runs}}.dump(1) + "\n");
}

RunPool load_pool(const RunStore& store) {
  RunPool pool;
  for (const auto& key : store.existing_keys()) pool.emplace(key, store.read(key));
  return pool;
}

// ---------------------------------------------------------------------------

CollectSummary collect(const ExperimentPlan& plan, const EndpointSet& endpoints,
                       const FixtureSet& fixtures, RunStore& store, const CollectOptions& options) {
  plan.validate();
  for (const auto& bug : plan.bugs) {
    if (!fixtures.contains(bug)) throw ValidationError("plan bug '" + bug + "' has no fixture");
  }
  for (const auto& model : plan.models) endpoints.endpoint(model);

  struct Job {
    RunKey key;
    std::size_t ordinal;
  };
  const auto existing = store.existing_keys();
  std::vector<Job> todo;
  CollectSummary summary;
  std::size_t ordinal = 0;
  for (const auto& model : plan.models) {
    for (const auto& bug : plan.bugs) {
      for (int i = 0; i < plan.runs_per_model_pool; ++i, ++ordinal) {
        RunKey key{model, bug, i};
        if (existing.contains(key)) {
          ++summary.skipped;
        } else {
          todo.push_back({std::move(key), ordinal});
        }
      }
    }
  }

  const ToolRegistry tools = default_tools();
  const SteadyClock session_clock;
  std::mutex summary_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::vector<RunKey> written;
  std::exception_ptr failure;

  const auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const Job& job = todo[i];
      try {
        const auto& endpoint = endpoints.endpoint(job.key.model);
        const auto& fixture = fixtures.at(job.key.bug);
        const auto seed = plan.rng_seed + static_cast<std::uint64_t>(job.key.run_index);
        RunRecord record;
        if (options.virtual_latency) {
          ManualClock clock(static_cast<double>(job.ordinal) * options.slot_ms);
          SimulatedLatencyClient timed(endpoints.client(job.key.model), clock, *options.virtual_latency);
          record = run_inference(fixture, endpoint, timed, tools, options.run, job.key.run_index, seed, clock);
        } else {
          record = run_inference(fixture, endpoint, endpoints.client(job.key.model), tools, options.run,
                                 job.key.run_index, seed, session_clock);
        }
        store.write(record);
        std::lock_guard lock(summary_mutex);
        ++summary.written;
        ++summary.status_counts[record.model][std::string(to_string(record.status))];
        written.push_back(job.key);
        if (record.status == RunStatus::endpoint_error) {
          ++summary.endpoint_failures;
          if (options.max_endpoint_failures >= 0 && summary.endpoint_failures > options.max_endpoint_failures) {
            summary.budget_exceeded = true;
            abort = true;
          }
        }
      } catch (...) {
        std::lock_guard lock(summary_mutex);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
    }
  };

  const auto threads = static_cast<std::size_t>(std::max(1, options.in_flight));
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < std::min(threads, todo.size()); ++t) workers.emplace_back(worker);
  for (auto& w : workers) w.join();
  store.write_index();
  if (failure) std::rethrow_exception(failure);

  if (options.power_csv) {
    const auto samples = ingest_power_csv(*options.power_csv);
    std::sort(written.begin(), written.end());
    for (const auto& key : written) {
      auto record = store.read(key);
      if (record.window.start_ms < record.window.end_ms) store.write(attach_costs(std::move(record), samples));
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------

std::vector<RunSample> sample_runs(int pool_size, const std::vector<ModelName>& models, int r, int samples,
                                   std::uint64_t seed) {
  if (models.empty()) throw ValidationError("sampling needs at least one model");
  if (samples < 1) throw ValidationError("sample count must be positive");
  const int m = static_cast<int>(models.size());
  if (r < m || r % m != 0) {
    throw ValidationError("R=" + std::to_string(r) + " cannot be split evenly over " + std::to_string(m) +
                          " models (R_M x M = R)");
  }
  const int per_model = r / m;
  if (per_model > pool_size) {
    throw ValidationError("R=" + std::to_string(r) + " needs " + std::to_string(per_model) +
                          " runs per model but the pool holds " + std::to_string(pool_size));
  }

  std::uint64_t salt = static_cast<std::uint64_t>(r);
  for (const auto& model : models) salt = mix_seed(salt ^ stable_hash(model));
  Rng rng(derive_seed(seed, salt));

  std::vector<RunSample> out;
  out.reserve(static_cast<std::size_t>(samples));
  std::vector<int> indices(static_cast<std::size_t>(pool_size));
  for (int s = 0; s < samples; ++s) {
    RunSample sample;
    for (const auto& model : models) {
      std::iota(indices.begin(), indices.end(), 0);
      for (int i = 0; i < per_model; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.index(static_cast<std::uint64_t>(pool_size - i));
        std::swap(indices[static_cast<std::size_t>(i)], indices[j]);
      }
      std::vector<int> chosen(indices.begin(), indices.begin() + per_model);
      std::sort(chosen.begin(), chosen.end());
      sample[model] = std::move(chosen);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

Dataset select_runs(const RunPool& pool, const std::vector<BugId>& bugs, const RunSample& sample) {
  Dataset data;
  for (const auto& bug : bugs) {
    auto& per_model = data[bug];
    for (const auto& [model, indices] : sample) {
      auto& runs = per_model[model];
      for (int idx : indices) {
        const auto it = pool.find(RunKey{model, bug, idx});
        if (it == pool.end()) {
          throw ValidationError("missing run (bug " + bug + ", model " + model + ", index " +
                                std::to_string(idx) + ")");
        }
        runs.push_back(it->second.predictions);
      }
    }
  }
  return data;
}

}  // namespace cosmosfl
