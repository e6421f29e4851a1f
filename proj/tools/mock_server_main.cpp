// Serves a scripted mock model over the chat-completions protocol until
// SIGINT or SIGTERM.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "cosmosfl/error.hpp"
#include "cosmosfl/mock_endpoint.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Scripted chat-completions mock server"};
  std::string script;
  int port = 0;
  app.add_option("--script", script, "Mock script (cosmos-mock/1)")->required();
  app.add_option("--port", port, "Port on 127.0.0.1 (0: any free port)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    auto mock = cosmosfl::ScriptedMock::load(script);
    cosmosfl::MockChatServer server(mock, port);
    std::cout << server.base_url() << std::endl;
    int received = 0;
    sigwait(&signals, &received);
    server.stop();
    const auto tokens = mock.declared_tokens();
    std::cerr << "served " << mock.request_count() << " requests, " << tokens.in << " prompt / " << tokens.out
              << " completion tokens\n";
  } catch (const cosmosfl::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const cosmosfl::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
