#pragma once

// One fault-localisation inference run: an instruction-following tool-calling
// loop against a model endpoint, with answers parsed into a PredictionSet.

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cosmosfl/chat.hpp"
#include "cosmosfl/cost_meter.hpp"
#include "cosmosfl/fixture.hpp"
#include "cosmosfl/scoring.hpp"

namespace cosmosfl {

struct ModelEndpoint {
  std::string name;      // ensemble member identity
  std::string base_url;  // http(s)://... or mock:<script path>
  std::string model_id;
  std::chrono::milliseconds request_timeout{120000};
  int max_retries = 2;
};

/// Tool handler: reads the bug fixture and the decoded argument object.
using ToolHandler = std::function<std::string(const BugFixture&, const nlohmann::json& args)>;

struct ToolSpec {
  ToolDeclaration declaration;
  ToolHandler handler;
};

inline constexpr std::string_view kToolMethodCoverage = "get_failing_tests_covered_methods_for_class";
inline constexpr std::string_view kToolCodeSnippet = "get_code_snippet";
inline constexpr std::string_view kToolComments = "get_comments";

/// Ordered set of tools offered to the model. Class-level coverage tools are
/// refused: small models call them redundantly.
class ToolRegistry {
 public:
  /// Throws ValidationError for duplicate names or class-level coverage tools.
  void add(ToolSpec spec);

  const std::vector<ToolSpec>& tools() const noexcept { return tools_; }
  std::vector<ToolDeclaration> declarations() const;
  bool contains(std::string_view name) const;

  /// Runs the named tool. Unknown tools, malformed argument JSON and missing
  /// arguments produce an "error: ..." string rather than an exception.
  std::string dispatch(const BugFixture& fixture, const ToolCall& call) const;

 private:
  std::vector<ToolSpec> tools_;
};

/// Method coverage, code snippet and comments.
ToolRegistry default_tools();

bool is_class_level_coverage_tool(std::string_view name);

struct PromptTemplate {
  std::string version;
  std::string system;
  std::string user;   // placeholders {{bug_id}}, {{failing_tests}}
  std::string force;  // sent once the tool budget is spent

  /// Parses "#version" / "#section <name>" markup.
  static PromptTemplate parse(std::string_view text);
  /// The checked-in default template.
  static const PromptTemplate& builtin();
};

enum class RunStatus { ok, truncated, parse_failed, endpoint_error };

std::string_view to_string(RunStatus s);
RunStatus run_status_from_string(std::string_view s);

enum class StepKind { model_message, tool_call, tool_result, final_answer };

std::string_view to_string(StepKind k);
StepKind step_kind_from_string(std::string_view s);

struct AgentStep {
  int index = 0;
  StepKind kind = StepKind::model_message;
  std::string payload;
  TokenCount tokens;  // for the model exchange that produced this step
};

struct RunRecord {
  BugId bug_id;
  ModelName model;
  int run_index = 0;
  RunStatus status = RunStatus::ok;
  std::vector<AgentStep> steps;
  PredictionSet predictions;
  CostRecord cost;
  TimeWindow window;
  std::string prompt_version;
  std::string error;  // endpoint failure detail, if any
};

nlohmann::json to_json(const RunRecord& record);
/// Throws ValidationError for missing fields or a tokens_total mismatch.
RunRecord run_record_from_json(const nlohmann::json& j);

/// Extracts "Answer: <method>" lines. "Answer: none" parses to an empty set.
/// Returns nullopt when no line matches.
std::optional<PredictionSet> parse_final_answer(std::string_view text);

struct RunOptions {
  int max_steps = 10;                    // tool calls before the forced answer turn
  std::int64_t max_output_tokens = 4096;  // per run
  double temperature = 0.0;
  const PromptTemplate* prompt = nullptr;  // builtin() when null
};

/// Executes one run. Never throws for endpoint or model misbehaviour; the
/// outcome is reflected in RunRecord::status.
RunRecord run_inference(const BugFixture& fixture, const ModelEndpoint& endpoint, ChatClient& client,
                        const ToolRegistry& tools, const RunOptions& options, int run_index,
                        std::uint64_t seed, const Clock& clock);

/// R independent runs with indices 0..R-1 and seeds base_seed + index.
std::vector<RunRecord> repeat_runs(const BugFixture& fixture, const ModelEndpoint& endpoint,
                                   ChatClient& client, const ToolRegistry& tools,
                                   const RunOptions& options, int repetitions,
                                   std::uint64_t base_seed, const Clock& clock);

/// Integrates energy over the run's window. Throws ValidationError when the
/// window has zero length.
RunRecord attach_costs(RunRecord run, std::span<const PowerSample> samples);

}  // namespace cosmosfl
