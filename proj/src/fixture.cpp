#include "cosmosfl/fixture.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cosmosfl/error.hpp"

namespace cosmosfl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fixture_violation(const BugFixture& f) {
  if (f.bug_id.empty()) return "empty bug id";
  if (f.ground_truth.faulty_methods.empty()) return "ground truth names no faulty method";
  std::set<MethodId> covered;
  for (const auto& [cls, methods] : f.coverage) covered.insert(methods.begin(), methods.end());
  for (const auto& m : f.ground_truth.faulty_methods) {
    if (!covered.contains(m)) {
      return "ground-truth method '" + m.str() + "' is not covered by any class";
    }
  }
  for (const auto& m : covered) {
    if (m.empty()) return "empty method id in coverage";
    if (!f.snippets.contains(m)) return "covered method '" + m.str() + "' has no snippet";
  }
  return {};
}

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

template <typename T>
T get_as(const json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

BugFixture parse_bug(const json& b, const std::string& project, const std::string& where) {
  if (!b.is_object()) throw ValidationError(where + ": bug entry must be an object");
  BugFixture f;
  f.bug_id = get_as<std::string>(require(b, "bug_id", where), where + ".bug_id");
  f.project = b.contains("project") ? get_as<std::string>(b["project"], where + ".project") : project;
  const std::string at = where + " (" + f.bug_id + ")";

  for (const auto& t : require(b, "failing_tests", at)) {
    f.failing_tests.push_back({get_as<std::string>(require(t, "name", at), at),
                               t.value("message", std::string{}),
                               t.value("stack_trace", std::string{})});
  }
  for (const auto& [cls, methods] : get_as<json::object_t>(require(b, "coverage", at), at)) {
    auto& out = f.coverage[cls];
    for (const auto& m : methods) out.emplace_back(get_as<std::string>(m, at + ".coverage"));
  }
  for (const auto& [m, text] : get_as<json::object_t>(require(b, "snippets", at), at)) {
    f.snippets.emplace(MethodId(m), get_as<std::string>(text, at + ".snippets"));
  }
  if (b.contains("comments")) {
    for (const auto& [m, text] : get_as<json::object_t>(b["comments"], at)) {
      f.comments.emplace(MethodId(m), get_as<std::string>(text, at + ".comments"));
    }
  }
  f.ground_truth.bug_id = f.bug_id;
  for (const auto& m : require(b, "ground_truth", at)) {
    f.ground_truth.faulty_methods.emplace(get_as<std::string>(m, at + ".ground_truth"));
  }
  if (auto v = fixture_violation(f); !v.empty()) {
    throw ValidationError(where + ": bug '" + f.bug_id + "' is invalid: " + v);
  }
  return f;
}

}  // namespace

std::vector<BugFixture> parse_fixture_document(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ValidationError(source + ": fixture document must be an object");
  const auto format = doc.value("format", std::string{});
  if (format != kFixtureFormat) {
    throw ValidationError(source + ": unsupported fixture format '" + format + "' (expected " +
                          std::string(kFixtureFormat) + ")");
  }
  const auto project = doc.value("project", std::string{});
  const auto& bugs = require(doc, "bugs", source);
  if (!bugs.is_array()) throw ValidationError(source + ": 'bugs' must be an array");
  std::vector<BugFixture> out;
  for (std::size_t i = 0; i < bugs.size(); ++i) {
    out.push_back(parse_bug(bugs[i], project, source + ": bugs[" + std::to_string(i) + "]"));
  }
  return out;
}

json fixture_document(const std::string& project, const std::vector<BugFixture>& bugs) {
  json doc;
  doc["format"] = kFixtureFormat;
  doc["project"] = project;
  doc["bugs"] = json::array();
  for (const auto& f : bugs) {
    json b;
    b["bug_id"] = f.bug_id;
    if (f.project != project) b["project"] = f.project;
    b["failing_tests"] = json::array();
    for (const auto& t : f.failing_tests) {
      b["failing_tests"].push_back({{"name", t.name}, {"message", t.message}, {"stack_trace", t.stack_trace}});
    }
    b["coverage"] = json::object();
    for (const auto& [cls, methods] : f.coverage) {
      auto& arr = b["coverage"][cls] = json::array();
      for (const auto& m : methods) arr.push_back(m.str());
    }
    b["snippets"] = json::object();
    for (const auto& [m, text] : f.snippets) b["snippets"][m.str()] = text;
    b["comments"] = json::object();
    for (const auto& [m, text] : f.comments) b["comments"][m.str()] = text;
    b["ground_truth"] = json::array();
    for (const auto& m : f.ground_truth.faulty_methods) b["ground_truth"].push_back(m.str());
    doc["bugs"].push_back(std::move(b));
  }
  return doc;
}

namespace {

json read_json_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ValidationError(file.string() + ": malformed JSON at byte " + std::to_string(e.byte) +
                          ": " + e.what());
  }
}

}  // namespace

FixtureSet load_fixture_set(const fs::path& path) {
  std::error_code ec;
  std::vector<fs::path> files;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no fixture files in " + path.string());
  } else if (fs::is_regular_file(path, ec)) {
    files.push_back(path);
  } else {
    throw IoError("fixture path not readable: " + path.string());
  }

  FixtureSet set;
  for (const auto& file : files) {
    for (auto& f : parse_fixture_document(read_json_file(file), file.string())) {
      const auto id = f.bug_id;
      if (!set.emplace(id, std::move(f)).second) {
        throw ValidationError(file.string() + ": duplicate bug id '" + id + "'");
      }
    }
  }
  return set;
}

std::map<BugId, GroundTruth> ground_truth_of(const FixtureSet& fixtures) {
  std::map<BugId, GroundTruth> out;
  for (const auto& [id, f] : fixtures) out.emplace(id, f.ground_truth);
  return out;
}

std::map<BugId, std::string> projects_of(const FixtureSet& fixtures) {
  std::map<BugId, std::string> out;
  for (const auto& [id, f] : fixtures) out.emplace(id, f.project);
  return out;
}

CoverageAnswer tool_method_coverage(const BugFixture& fixture, std::string_view class_name) {
  const auto it = fixture.coverage.find(std::string(class_name));
  if (it == fixture.coverage.end()) return {{}, std::string(kClassNotCovered)};
  return {it->second, {}};
}

std::string tool_code_snippet(const BugFixture& fixture, std::string_view method) {
  const auto it = fixture.snippets.find(MethodId(std::string(method)));
  return it == fixture.snippets.end() ? std::string(kMethodNotFound) : it->second;
}

std::string tool_comments(const BugFixture& fixture, std::string_view method) {
  const MethodId id{std::string(method)};
  if (!fixture.snippets.contains(id) && !fixture.comments.contains(id)) {
    return std::string(kMethodNotFound);
  }
  const auto it = fixture.comments.find(id);
  if (it == fixture.comments.end() || it->second.empty()) return std::string(kNoComments);
  return it->second;
}

std::string render_coverage(const CoverageAnswer& answer) {
  if (!answer.message.empty()) return answer.message;
  std::string out;
  for (const auto& m : answer.methods) {
    out += m.str();
    out += '\n';
  }
  return out;
}

}  // namespace cosmosfl
