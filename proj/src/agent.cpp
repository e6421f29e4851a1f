#include "cosmosfl/agent.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "cosmosfl/error.hpp"
#include "cosmosfl_prompt_asset.hpp"

namespace cosmosfl {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

}  // namespace

bool is_class_level_coverage_tool(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "get_failing_tests_covered_classes" || lower.find("class_coverage") != std::string::npos ||
         lower.find("covered_classes") != std::string::npos;
}

void ToolRegistry::add(ToolSpec spec) {
  const auto& name = spec.declaration.name;
  if (name.empty()) throw ValidationError("tool name must not be empty");
  if (is_class_level_coverage_tool(name)) {
    throw ValidationError("class-level coverage tool '" + name + "' is not supported");
  }
  if (contains(name)) throw ValidationError("duplicate tool '" + name + "'");
  if (!spec.handler) throw ValidationError("tool '" + name + "' has no handler");
  tools_.push_back(std::move(spec));
}

std::vector<ToolDeclaration> ToolRegistry::declarations() const {
  std::vector<ToolDeclaration> out;
  for (const auto& t : tools_) out.push_back(t.declaration);
  return out;
}

bool ToolRegistry::contains(std::string_view name) const {
  return std::any_of(tools_.begin(), tools_.end(),
                     [&](const ToolSpec& t) { return t.declaration.name == name; });
}

std::string ToolRegistry::dispatch(const BugFixture& fixture, const ToolCall& call) const {
  const auto it = std::find_if(tools_.begin(), tools_.end(),
                               [&](const ToolSpec& t) { return t.declaration.name == call.name; });
  if (it == tools_.end()) return "error: unknown tool '" + call.name + "'";
  json args;
  try {
    args = call.arguments.empty() ? json::object() : json::parse(call.arguments);
  } catch (const json::parse_error&) {
    return "error: arguments for '" + call.name + "' are not valid JSON";
  }
  if (!args.is_object()) return "error: arguments for '" + call.name + "' must be a JSON object";
  for (const auto& p : it->declaration.parameters) {
    if (!args.contains(p.name)) return "error: missing argument '" + p.name + "'";
    if (p.type == "string" && !args[p.name].is_string()) {
      return "error: argument '" + p.name + "' must be a string";
    }
  }
  return it->handler(fixture, args);
}

ToolRegistry default_tools() {
  ToolRegistry registry;
  registry.add({{std::string(kToolMethodCoverage),
                 "List the methods of the given class that are covered by the failing tests.",
                 {{"class_name", "string", "Fully qualified class name"}}},
                [](const BugFixture& f, const json& args) {
                  return render_coverage(tool_method_coverage(f, args["class_name"].get<std::string>()));
                }});
  registry.add({{std::string(kToolCodeSnippet),
                 "Return the source code of the given method.",
                 {{"method_name", "string", "Fully qualified method signature"}}},
                [](const BugFixture& f, const json& args) {
                  return tool_code_snippet(f, args["method_name"].get<std::string>());
                }});
  registry.add({{std::string(kToolComments),
                 "Return the documentation comments of the given method.",
                 {{"method_name", "string", "Fully qualified method signature"}}},
                [](const BugFixture& f, const json& args) {
                  return tool_comments(f, args["method_name"].get<std::string>());
                }});
  return registry;
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
  PromptTemplate t;
  std::string* current = nullptr;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.starts_with("#version ")) {
      t.version = std::string(trim(line.substr(9)));
    } else if (line.starts_with("#section ")) {
      const auto name = trim(line.substr(9));
      if (name == "system") current = &t.system;
      else if (name == "user") current = &t.user;
      else if (name == "force") current = &t.force;
      else throw ValidationError("unknown prompt section '" + std::string(name) + "'");
    } else if (current) {
      *current += line;
      *current += '\n';
    }
    if (end == text.size()) break;
  }
  for (auto* s : {&t.system, &t.user, &t.force}) {
    while (!s->empty() && s->back() == '\n') s->pop_back();
  }
  if (t.version.empty() || t.system.empty() || t.user.empty() || t.force.empty()) {
    throw ValidationError("prompt template needs #version and system, user and force sections");
  }
  return t;
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate t = parse(kBuiltinPromptTemplate);
  return t;
}

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::truncated: return "truncated";
    case RunStatus::parse_failed: return "parse-failed";
    case RunStatus::endpoint_error: return "endpoint-error";
  }
  return "unknown";
}

RunStatus run_status_from_string(std::string_view s) {
  for (auto v : {RunStatus::ok, RunStatus::truncated, RunStatus::parse_failed, RunStatus::endpoint_error}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown run status '" + std::string(s) + "'");
}

std::string_view to_string(StepKind k) {
  switch (k) {
    case StepKind::model_message: return "model-message";
    case StepKind::tool_call: return "tool-call";
    case StepKind::tool_result: return "tool-result";
    case StepKind::final_answer: return "final-answer";
  }
  return "unknown";
}

StepKind step_kind_from_string(std::string_view s) {
  for (auto v : {StepKind::model_message, StepKind::tool_call, StepKind::tool_result, StepKind::final_answer}) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError("unknown step kind '" + std::string(s) + "'");
}

json to_json(const RunRecord& r) {
  json j;
  j["bug_id"] = r.bug_id;
  j["model"] = r.model;
  j["run_index"] = r.run_index;
  j["status"] = to_string(r.status);
  j["predicted_methods"] = json::array();
  for (const auto& m : r.predictions) j["predicted_methods"].push_back(m.str());
  j["tokens_in"] = r.cost.tokens.in;
  j["tokens_out"] = r.cost.tokens.out;
  j["tokens_total"] = r.cost.tokens.total();
  j["wall_time_ms"] = r.cost.wall_time_ms;
  j["energy_j"] = r.cost.energy_j ? json(*r.cost.energy_j) : json(nullptr);
  j["power_mean_w"] = r.cost.power_mean_w ? json(*r.cost.power_mean_w) : json(nullptr);
  j["window_start_ms"] = r.window.start_ms;
  j["window_end_ms"] = r.window.end_ms;
  j["prompt_version"] = r.prompt_version;
  if (!r.error.empty()) j["error"] = r.error;
  j["steps"] = json::array();
  for (const auto& s : r.steps) {
    j["steps"].push_back({{"index", s.index},
                          {"kind", to_string(s.kind)},
                          {"payload", s.payload},
                          {"tokens_in", s.tokens.in},
                          {"tokens_out", s.tokens.out}});
  }
  return j;
}

RunRecord run_record_from_json(const json& j) {
  try {
    RunRecord r;
    r.bug_id = j.at("bug_id").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.run_index = j.at("run_index").get<int>();
    r.status = run_status_from_string(j.at("status").get<std::string>());
    for (const auto& m : j.at("predicted_methods")) r.predictions.emplace(m.get<std::string>());
    r.cost.tokens.in = j.at("tokens_in").get<std::int64_t>();
    r.cost.tokens.out = j.at("tokens_out").get<std::int64_t>();
    if (j.contains("tokens_total") && j.at("tokens_total").get<std::int64_t>() != r.cost.tokens.total()) {
      throw ValidationError("tokens_total does not equal tokens_in + tokens_out");
    }
    if (r.cost.tokens.in < 0 || r.cost.tokens.out < 0) throw ValidationError("negative token count");
    r.cost.wall_time_ms = j.at("wall_time_ms").get<std::int64_t>();
    if (r.cost.wall_time_ms < 0) throw ValidationError("negative wall time");
    if (!j.at("energy_j").is_null()) r.cost.energy_j = j.at("energy_j").get<double>();
    if (j.contains("power_mean_w") && !j.at("power_mean_w").is_null()) {
      r.cost.power_mean_w = j.at("power_mean_w").get<double>();
    }
    r.window.start_ms = j.value("window_start_ms", 0.0);
    r.window.end_ms = j.value("window_end_ms", 0.0);
    r.prompt_version = j.value("prompt_version", std::string{});
    r.error = j.value("error", std::string{});
    for (const auto& s : j.at("steps")) {
      r.steps.push_back({s.at("index").get<int>(), step_kind_from_string(s.at("kind").get<std::string>()),
                         s.at("payload").get<std::string>(),
                         {s.value("tokens_in", std::int64_t{0}), s.value("tokens_out", std::int64_t{0})}});
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed run record: ") + e.what());
  }
}

std::optional<PredictionSet> parse_final_answer(std::string_view text) {
  static constexpr std::string_view kPrefix = "Answer:";
  PredictionSet predictions;
  bool matched = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.starts_with(kPrefix)) {
      const auto value = trim(line.substr(kPrefix.size()));
      if (!value.empty()) {
        matched = true;
        if (!iequals(value, "none")) predictions.emplace(std::string(value));
      }
    }
    if (end == text.size()) break;
  }
  if (!matched) return std::nullopt;
  return predictions;
}

namespace {

std::string render_failing_tests(const BugFixture& fixture) {
  std::string out;
  for (const auto& t : fixture.failing_tests) {
    out += "- " + t.name + "\n";
    if (!t.message.empty()) out += "  Message: " + t.message + "\n";
    if (!t.stack_trace.empty()) {
      out += "  Stack trace:\n";
      std::size_t pos = 0;
      while (pos < t.stack_trace.size()) {
        auto end = t.stack_trace.find('\n', pos);
        if (end == std::string::npos) end = t.stack_trace.size();
        out += "    " + t.stack_trace.substr(pos, end - pos) + "\n";
        pos = end + 1;
      }
    }
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::string describe(const ToolCall& call) { return call.name + " " + call.arguments; }

}  // namespace

RunRecord run_inference(const BugFixture& fixture, const ModelEndpoint& endpoint, ChatClient& client,
                        const ToolRegistry& tools, const RunOptions& options, int run_index,
                        std::uint64_t seed, const Clock& clock) {
  if (options.max_steps < 1) throw ValidationError("max_steps must be at least 1");
  const PromptTemplate& prompt = options.prompt ? *options.prompt : PromptTemplate::builtin();

  RunRecord record;
  record.bug_id = fixture.bug_id;
  record.model = endpoint.name;
  record.run_index = run_index;
  record.prompt_version = prompt.version;
  record.window.start_ms = clock.now_ms();

  ChatRequest request;
  request.model = endpoint.model_id;
  request.temperature = options.temperature;
  request.seed = seed;
  request.messages.push_back(
      {"system", replace_all(prompt.system, "{{max_steps}}", std::to_string(options.max_steps)), {}, {}});
  request.messages.push_back(
      {"user",
       replace_all(replace_all(prompt.user, "{{bug_id}}", fixture.bug_id), "{{failing_tests}}",
                   render_failing_tests(fixture)),
       {},
       {}});
  const auto declarations = tools.declarations();

  const auto add_step = [&](StepKind kind, std::string payload, TokenCount tokens) {
    record.steps.push_back({static_cast<int>(record.steps.size()), kind, std::move(payload), tokens});
  };

  int tool_calls = 0;
  bool forced = false;
  while (true) {
    const std::int64_t remaining = options.max_output_tokens - record.cost.tokens.out;
    if (remaining <= 0) {
      record.status = RunStatus::truncated;
      break;
    }
    request.tools = forced ? std::vector<ToolDeclaration>{} : declarations;
    request.max_tokens = remaining;

    ChatResponse response;
    try {
      response = client.complete(request);
    } catch (const EndpointError& e) {
      record.status = RunStatus::endpoint_error;
      record.error = e.what();
      record.predictions.clear();
      break;
    }
    record.cost.tokens += response.usage;

    if (response.tool_call && !forced) {
      const ToolCall call = *response.tool_call;
      add_step(StepKind::tool_call, describe(call), response.usage);
      const std::string result = tools.dispatch(fixture, call);
      add_step(StepKind::tool_result, result, {});
      request.messages.push_back({"assistant", response.content, call, {}});
      request.messages.push_back({"tool", result, std::nullopt, call.id});
      if (++tool_calls >= options.max_steps) {
        forced = true;
        request.messages.push_back({"user", prompt.force, {}, {}});
      }
      continue;
    }
    if (response.tool_call) {
      // Still calling tools after the forced-answer turn.
      add_step(StepKind::model_message, describe(*response.tool_call), response.usage);
      record.status = RunStatus::truncated;
      break;
    }

    add_step(StepKind::final_answer, response.content, response.usage);
    if (auto parsed = parse_final_answer(response.content)) {
      record.predictions = std::move(*parsed);
      record.status = RunStatus::ok;
    } else {
      record.status = forced ? RunStatus::truncated : RunStatus::parse_failed;
    }
    break;
  }

  record.window.end_ms = clock.now_ms();
  record.cost.wall_time_ms =
      static_cast<std::int64_t>(std::llround(std::max(0.0, record.window.end_ms - record.window.start_ms)));
  return record;
}

std::vector<RunRecord> repeat_runs(const BugFixture& fixture, const ModelEndpoint& endpoint,
                                   ChatClient& client, const ToolRegistry& tools,
                                   const RunOptions& options, int repetitions,
                                   std::uint64_t base_seed, const Clock& clock) {
  if (repetitions < 1) throw ValidationError("repetitions must be at least 1");
  std::vector<RunRecord> runs;
  runs.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < repetitions; ++i) {
    const auto seed = base_seed + static_cast<std::uint64_t>(i);
    try {
      runs.push_back(run_inference(fixture, endpoint, client, tools, options, i, seed, clock));
    } catch (const std::exception& e) {
      RunRecord failed;
      failed.bug_id = fixture.bug_id;
      failed.model = endpoint.name;
      failed.run_index = i;
      failed.status = RunStatus::endpoint_error;
      failed.error = e.what();
      failed.window.start_ms = failed.window.end_ms = clock.now_ms();
      runs.push_back(std::move(failed));
    }
  }
  return runs;
}

RunRecord attach_costs(RunRecord run, std::span<const PowerSample> samples) {
  if (!(run.window.start_ms < run.window.end_ms)) {
    throw ValidationError("run " + run.bug_id + "/" + run.model + "/" + std::to_string(run.run_index) +
                          " has a zero-length time window");
  }
  attach_energy(run.cost, run.window, samples);
  return run;
}

}  // namespace cosmosfl
