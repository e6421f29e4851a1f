#include "cosmosfl/mock_endpoint.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "cosmosfl/error.hpp"

namespace cosmosfl {

using nlohmann::json;

namespace {

class UnknownModel : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

class InjectedFailure : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

MockBehaviour parse_behaviour(const json& j, const MockBehaviour& base) {
  MockBehaviour b = base;
  if (j.contains("answers")) b.answers = j.at("answers").get<std::vector<std::vector<std::string>>>();
  if (b.answers.empty()) b.answers = {{}};
  if (j.contains("tool_calls")) {
    b.tool_calls.clear();
    for (const auto& c : j.at("tool_calls")) {
      ToolCall call;
      call.name = c.at("name").get<std::string>();
      call.arguments = c.contains("raw_arguments") ? c.at("raw_arguments").get<std::string>()
                                                   : c.value("arguments", json::object()).dump();
      b.tool_calls.push_back(std::move(call));
    }
  }
  b.style = j.value("style", b.style);
  if (b.style != "grammar" && b.style != "prose") {
    throw ValidationError("mock style must be 'grammar' or 'prose'");
  }
  b.never_answer = j.value("never_answer", b.never_answer);
  if (j.contains("fail_seeds")) b.fail_seeds = j.at("fail_seeds").get<std::vector<std::uint64_t>>();
  return b;
}

std::int64_t quarter_ceil(std::size_t chars) { return static_cast<std::int64_t>((chars + 3) / 4); }

std::string find_bug_id(const ChatRequest& request) {
  static const std::regex kBugLine(R"(Bug ID:\s*(\S+))");
  for (const auto& m : request.messages) {
    if (m.role != "user") continue;
    std::smatch match;
    if (std::regex_search(m.content, match, kBugLine)) return match[1].str();
    break;
  }
  return {};
}

std::string answer_text(const MockBehaviour& b, std::uint64_t seed) {
  const auto& set = b.answers[seed % b.answers.size()];
  if (b.style == "prose") {
    std::string text = "I am not sure where the bug is. It might be related to";
    for (const auto& m : set) text += " " + m;
    return text + ".";
  }
  std::string text = "Based on the failing test and the inspected code:\n";
  if (set.empty()) return text + "Answer: none";
  for (std::size_t i = 0; i < set.size(); ++i) {
    text += "Answer: " + set[i];
    if (i + 1 < set.size()) text += '\n';
  }
  return text;
}

}  // namespace

ScriptedMock::ScriptedMock(std::map<std::string, MockModelScript> models) : models_(std::move(models)) {}

ScriptedMock::ScriptedMock(ScriptedMock&& other) noexcept
    : models_(std::move(other.models_)),
      declared_in_(other.declared_in_.load()),
      declared_out_(other.declared_out_.load()),
      requests_(other.requests_.load()) {}

ScriptedMock ScriptedMock::from_json(const json& script) {
  try {
    if (script.value("format", std::string{}) != "cosmos-mock/1") {
      throw ValidationError("mock script format must be 'cosmos-mock/1'");
    }
    std::map<std::string, MockModelScript> models;
    for (const auto& [model_id, spec] : script.at("models").items()) {
      MockModelScript m;
      m.fallback = parse_behaviour(spec.value("default", json::object()), MockBehaviour{});
      if (spec.contains("bugs")) {
        for (const auto& [bug, b] : spec.at("bugs").items()) m.bugs.emplace(bug, parse_behaviour(b, m.fallback));
      }
      models.emplace(model_id, std::move(m));
    }
    return ScriptedMock(std::move(models));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed mock script: ") + e.what());
  }
}

ScriptedMock ScriptedMock::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read mock script " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return from_json(json::parse(buf.str()));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

const MockBehaviour& ScriptedMock::behaviour(const std::string& model_id, const std::string& bug_id) const {
  const auto m = models_.find(model_id);
  if (m == models_.end()) throw UnknownModel("mock has no model '" + model_id + "'");
  const auto b = m->second.bugs.find(bug_id);
  return b == m->second.bugs.end() ? m->second.fallback : b->second;
}

json ScriptedMock::handle(const json& wire) {
  const ChatRequest request = request_from_wire(wire);
  ++requests_;
  const std::string bug = find_bug_id(request);
  const MockBehaviour& b = behaviour(request.model, bug);
  if (std::find(b.fail_seeds.begin(), b.fail_seeds.end(), request.seed) != b.fail_seeds.end()) {
    throw InjectedFailure("injected failure for seed " + std::to_string(request.seed));
  }

  const auto turn = static_cast<std::size_t>(std::count_if(
      request.messages.begin(), request.messages.end(), [](const ChatMessage& m) { return m.role == "tool"; }));

  ChatResponse response;
  std::size_t reply_chars = 0;
  const bool tools_offered = !request.tools.empty();
  if (!b.tool_calls.empty() && (b.never_answer || (tools_offered && turn < b.tool_calls.size()))) {
    ToolCall call = b.tool_calls[std::min(turn, b.tool_calls.size() - 1)];
    call.id = "call_" + std::to_string(turn);
    reply_chars = call.name.size() + call.arguments.size();
    response.tool_call = std::move(call);
  } else {
    response.content = answer_text(b, request.seed);
    reply_chars = response.content.size();
  }

  std::size_t prompt_chars = 0;
  for (const auto& m : request.messages) {
    prompt_chars += m.content.size();
    if (m.tool_call) prompt_chars += m.tool_call->name.size() + m.tool_call->arguments.size();
  }
  for (const auto& t : request.tools) prompt_chars += t.name.size() + t.description.size();
  response.usage = {quarter_ceil(prompt_chars), quarter_ceil(reply_chars)};
  declared_in_ += response.usage.in;
  declared_out_ += response.usage.out;
  return to_wire(response);
}

ChatResponse ScriptedMock::complete(const ChatRequest& request) {
  return response_from_wire(handle(to_wire(request)));
}

MockChatServer::MockChatServer(ScriptedMock& mock, int port)
    : mock_(mock), server_(std::make_unique<httplib::Server>()) {
  server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(mock_.handle(json::parse(req.body)).dump(), "application/json");
    } catch (const UnknownModel& e) {
      res.status = 404;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const InjectedFailure& e) {
      res.status = 500;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  if (port == 0) {
    port_ = server_->bind_to_any_port("127.0.0.1");
  } else if (server_->bind_to_port("127.0.0.1", port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw IoError("mock server could not bind a port");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

MockChatServer::~MockChatServer() { stop(); }

std::string MockChatServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void MockChatServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void MockChatServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cosmosfl
