#pragma once

// Recorded bug fixtures: failing-test context, coverage, source snippets,
// comments and ground truth, plus the three agent tools that read them.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cosmosfl/scoring.hpp"

namespace cosmosfl {

inline constexpr std::string_view kFixtureFormat = "cosmos-fixture/1";

struct FailingTest {
  std::string name;
  std::string message;
  std::string stack_trace;
};

struct BugFixture {
  BugId bug_id;
  std::string project;
  std::vector<FailingTest> failing_tests;
  std::map<std::string, std::vector<MethodId>> coverage;  // class -> covered methods
  std::map<MethodId, std::string> snippets;
  std::map<MethodId, std::string> comments;
  GroundTruth ground_truth;
};

using FixtureSet = std::map<BugId, BugFixture>;

/// Empty when `fixture` satisfies every invariant, otherwise a description of
/// the first violation.
std::string fixture_violation(const BugFixture& fixture);

/// Parses one fixture document (format "cosmos-fixture/1"). `source` names the
/// document in error messages.
std::vector<BugFixture> parse_fixture_document(const nlohmann::json& doc, const std::string& source);

nlohmann::json fixture_document(const std::string& project, const std::vector<BugFixture>& bugs);

/// Loads a fixture file, or every *.json file of a directory in name order.
/// Throws IoError when unreadable, ValidationError for malformed JSON (with
/// byte offset), invariant violations (naming the bug) and duplicate bug ids.
FixtureSet load_fixture_set(const std::filesystem::path& path);

std::map<BugId, GroundTruth> ground_truth_of(const FixtureSet& fixtures);
std::map<BugId, std::string> projects_of(const FixtureSet& fixtures);

// Tool payloads. Failures are in-band text, never exceptions.

inline constexpr std::string_view kClassNotCovered = "class not covered by failing tests";
inline constexpr std::string_view kMethodNotFound = "method not found";
inline constexpr std::string_view kNoComments = "no comments available";

struct CoverageAnswer {
  std::vector<MethodId> methods;
  std::string message;  // set when the class is unknown
};

CoverageAnswer tool_method_coverage(const BugFixture& fixture, std::string_view class_name);
std::string tool_code_snippet(const BugFixture& fixture, std::string_view method);
std::string tool_comments(const BugFixture& fixture, std::string_view method);

/// Text handed to the model for a coverage query: one method per line, or the
/// not-covered message.
std::string render_coverage(const CoverageAnswer& answer);

}  // namespace cosmosfl
