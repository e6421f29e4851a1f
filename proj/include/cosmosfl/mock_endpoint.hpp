#pragma once

// Deterministic scripted model endpoint for tests and offline experiments.
//
// Script format ("cosmos-mock/1"):
//   {"format": "cosmos-mock/1",
//    "models": {"<model_id>": {"default": <behaviour>, "bugs": {"<bug_id>": <behaviour>}}}}
//   behaviour: {"answers": [["m1", "m2"], ["m3"], []],   answer set = answers[seed % n]
//               "tool_calls": [{"name": ..., "arguments": {...}} | {"name": ..., "raw_arguments": "..."}],
//               "style": "grammar" | "prose",            prose never matches the answer grammar
//               "never_answer": false,                   keep calling tools, even when none are offered
//               "fail_seeds": [3, 7]}                    requests carrying these seeds fail
// Bug entries override the model default field by field. The bug is read from
// the "Bug ID: <id>" line of the first user message. Token usage is declared
// as ceil(chars / 4) of the request text (prompt) and of the reply (completion).

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cosmosfl/chat.hpp"

namespace httplib {
class Server;
}

namespace cosmosfl {

struct MockBehaviour {
  std::vector<std::vector<std::string>> answers{{}};
  std::vector<ToolCall> tool_calls;
  std::string style = "grammar";
  bool never_answer = false;
  std::vector<std::uint64_t> fail_seeds;
};

struct MockModelScript {
  MockBehaviour fallback;
  std::map<std::string, MockBehaviour> bugs;
};

class ScriptedMock final : public ChatClient {
 public:
  explicit ScriptedMock(std::map<std::string, MockModelScript> models);
  ScriptedMock(ScriptedMock&& other) noexcept;
  ScriptedMock& operator=(ScriptedMock&&) = delete;

  static ScriptedMock from_json(const nlohmann::json& script);
  static ScriptedMock load(const std::filesystem::path& path);

  /// Throws EndpointError for injected failures and unknown models.
  ChatResponse complete(const ChatRequest& request) override;

  /// Wire-level entry point used by the HTTP server and by the in-process
  /// client, so both paths exercise the protocol encoding.
  nlohmann::json handle(const nlohmann::json& request);

  const MockBehaviour& behaviour(const std::string& model_id, const std::string& bug_id) const;

  /// Token totals declared in successful responses so far.
  TokenCount declared_tokens() const { return {declared_in_.load(), declared_out_.load()}; }
  std::int64_t request_count() const { return requests_.load(); }

 private:
  std::map<std::string, MockModelScript> models_;
  std::atomic<std::int64_t> declared_in_{0};
  std::atomic<std::int64_t> declared_out_{0};
  std::atomic<std::int64_t> requests_{0};
};

/// Serves a ScriptedMock over HTTP on 127.0.0.1 with an ephemeral port.
/// Injected failures answer HTTP 500, unknown models 404, bad requests 400.
class MockChatServer {
 public:
  explicit MockChatServer(ScriptedMock& mock, int port = 0);
  ~MockChatServer();
  MockChatServer(const MockChatServer&) = delete;
  MockChatServer& operator=(const MockChatServer&) = delete;

  int port() const noexcept { return port_; }
  std::string base_url() const;
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

 private:
  ScriptedMock& mock_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace cosmosfl
