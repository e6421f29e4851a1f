#pragma once

// Chat-completions wire protocol (the OpenAI-compatible shape served by local
// model runners) and the clients that speak it.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cosmosfl/cost_meter.hpp"

namespace cosmosfl {

struct ToolCall {
  std::string id;
  std::string name;
  std::string arguments;  // JSON text as produced by the model; may be malformed
};

struct ChatMessage {
  std::string role;  // system | user | assistant | tool
  std::string content;
  std::optional<ToolCall> tool_call;  // assistant messages only
  std::string tool_call_id;           // tool messages only
};

struct ToolParameter {
  std::string name;
  std::string type = "string";
  std::string description;
};

struct ToolDeclaration {
  std::string name;
  std::string description;
  std::vector<ToolParameter> parameters;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  std::vector<ToolDeclaration> tools;  // empty: the model must answer in text
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> max_tokens;
};

struct ChatResponse {
  std::optional<ToolCall> tool_call;  // first tool call, if any
  std::string content;
  TokenCount usage;  // prompt / completion tokens as reported by the endpoint
};

nlohmann::json to_wire(const ChatRequest& request);
ChatRequest request_from_wire(const nlohmann::json& j);
nlohmann::json to_wire(const ChatResponse& response);
/// Throws ValidationError when the document is not a chat completion.
ChatResponse response_from_wire(const nlohmann::json& j);

/// A model endpoint. Implementations must be safe to call concurrently.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Throws EndpointError when no response can be obtained.
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct HttpEndpointOptions {
  std::string base_url;  // e.g. http://127.0.0.1:11434
  std::chrono::milliseconds timeout{120000};
  int max_retries = 2;
};

/// POSTs to {base_url}/v1/chat/completions. Transport failures and 5xx
/// replies are retried up to max_retries times; 4xx replies are not.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpEndpointOptions options);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  HttpEndpointOptions options_;
  std::string host_;  // scheme://host:port
  std::string path_;
};

struct LatencyModel {
  double per_request_ms = 50.0;
  double per_prompt_token_ms = 0.05;
  double per_completion_token_ms = 20.0;
};

/// Advances a ManualClock by a deterministic latency after every completion,
/// so that timed runs are replayable.
class SimulatedLatencyClient final : public ChatClient {
 public:
  SimulatedLatencyClient(ChatClient& inner, ManualClock& clock, LatencyModel model)
      : inner_(inner), clock_(clock), model_(model) {}
  ChatResponse complete(const ChatRequest& request) override;

 private:
  ChatClient& inner_;
  ManualClock& clock_;
  LatencyModel model_;
};

}  // namespace cosmosfl
