#include "cosmosfl/chat.hpp"

#include <httplib.h>

#include "cosmosfl/error.hpp"

namespace cosmosfl {

using nlohmann::json;

namespace {

json tool_call_to_wire(const ToolCall& call) {
  return {{"id", call.id},
          {"type", "function"},
          {"function", {{"name", call.name}, {"arguments", call.arguments}}}};
}

ToolCall tool_call_from_wire(const json& j) {
  ToolCall call;
  call.id = j.value("id", std::string{});
  const auto& fn = j.at("function");
  call.name = fn.at("name").get<std::string>();
  const auto& args = fn.contains("arguments") ? fn.at("arguments") : json::object();
  // Some servers send the arguments as an object rather than a string.
  call.arguments = args.is_string() ? args.get<std::string>() : args.dump();
  return call;
}

}  // namespace

json to_wire(const ChatRequest& r) {
  json j;
  j["model"] = r.model;
  j["temperature"] = r.temperature;
  j["seed"] = r.seed;
  if (r.max_tokens) j["max_tokens"] = *r.max_tokens;
  j["messages"] = json::array();
  for (const auto& m : r.messages) {
    json msg{{"role", m.role}, {"content", m.content}};
    if (m.tool_call) msg["tool_calls"] = json::array({tool_call_to_wire(*m.tool_call)});
    if (!m.tool_call_id.empty()) msg["tool_call_id"] = m.tool_call_id;
    j["messages"].push_back(std::move(msg));
  }
  if (!r.tools.empty()) {
    j["tools"] = json::array();
    for (const auto& t : r.tools) {
      json props = json::object();
      json required = json::array();
      for (const auto& p : t.parameters) {
        props[p.name] = {{"type", p.type}, {"description", p.description}};
        required.push_back(p.name);
      }
      j["tools"].push_back(
          {{"type", "function"},
           {"function",
            {{"name", t.name},
             {"description", t.description},
             {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}}}});
    }
  }
  return j;
}

ChatRequest request_from_wire(const json& j) {
  try {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    r.temperature = j.value("temperature", 0.0);
    r.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("max_tokens")) r.max_tokens = j.at("max_tokens").get<std::int64_t>();
    for (const auto& m : j.at("messages")) {
      ChatMessage msg;
      msg.role = m.at("role").get<std::string>();
      if (m.contains("content") && m.at("content").is_string()) msg.content = m.at("content");
      if (m.contains("tool_calls") && !m.at("tool_calls").empty()) {
        msg.tool_call = tool_call_from_wire(m.at("tool_calls").at(0));
      }
      msg.tool_call_id = m.value("tool_call_id", std::string{});
      r.messages.push_back(std::move(msg));
    }
    if (j.contains("tools")) {
      for (const auto& t : j.at("tools")) {
        const auto& fn = t.at("function");
        ToolDeclaration decl{fn.at("name").get<std::string>(), fn.value("description", std::string{}), {}};
        if (fn.contains("parameters") && fn.at("parameters").contains("properties")) {
          for (const auto& [name, spec] : fn.at("parameters").at("properties").items()) {
            decl.parameters.push_back(
                {name, spec.value("type", std::string{"string"}), spec.value("description", std::string{})});
          }
        }
        r.tools.push_back(std::move(decl));
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed chat request: ") + e.what());
  }
}

json to_wire(const ChatResponse& r) {
  json msg{{"role", "assistant"}, {"content", r.content}};
  if (r.tool_call) msg["tool_calls"] = json::array({tool_call_to_wire(*r.tool_call)});
  return {{"object", "chat.completion"},
          {"choices", json::array({{{"index", 0},
                                    {"message", msg},
                                    {"finish_reason", r.tool_call ? "tool_calls" : "stop"}}})},
          {"usage",
           {{"prompt_tokens", r.usage.in},
            {"completion_tokens", r.usage.out},
            {"total_tokens", r.usage.total()}}}};
}

ChatResponse response_from_wire(const json& j) {
  try {
    ChatResponse r;
    const auto& msg = j.at("choices").at(0).at("message");
    if (msg.contains("content") && msg.at("content").is_string()) r.content = msg.at("content");
    if (msg.contains("tool_calls") && msg.at("tool_calls").is_array() && !msg.at("tool_calls").empty()) {
      r.tool_call = tool_call_from_wire(msg.at("tool_calls").at(0));
    }
    if (j.contains("usage")) {
      r.usage.in = j.at("usage").value("prompt_tokens", std::int64_t{0});
      r.usage.out = j.at("usage").value("completion_tokens", std::int64_t{0});
    }
    if (r.usage.in < 0 || r.usage.out < 0) throw ValidationError("negative token usage");
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed chat response: ") + e.what());
  }
}

HttpChatClient::HttpChatClient(HttpEndpointOptions options) : options_(std::move(options)) {
  const auto& url = options_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  host_ = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/v1/chat/completions";
}

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  const std::string body = to_wire(request).dump();
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    httplib::Client cli(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    auto res = cli.Post(path_, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw EndpointError(host_ + path_ + " rejected the request: HTTP " + std::to_string(res->status));
    }
    try {
      return response_from_wire(json::parse(res->body));
    } catch (const std::exception& e) {
      throw EndpointError(host_ + path_ + " returned an unreadable response: " + e.what());
    }
  }
  throw EndpointError(host_ + path_ + " unreachable after " + std::to_string(options_.max_retries + 1) +
                      " attempts (" + last_error + ")");
}

ChatResponse SimulatedLatencyClient::complete(const ChatRequest& request) {
  auto response = inner_.complete(request);
  clock_.advance(model_.per_request_ms +
                 model_.per_prompt_token_ms * static_cast<double>(response.usage.in) +
                 model_.per_completion_token_ms * static_cast<double>(response.usage.out));
  return response;
}

}  // namespace cosmosfl
