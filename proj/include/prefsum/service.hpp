#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "prefsum/config.hpp"
#include "prefsum/interaction.hpp"

namespace httplib {
class Server;
}

namespace prefsum {

// An error with its HTTP status and a stable machine-readable code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  nlohmann::json body() const { return {{"code", code_}, {"message", what()}}; }

 private:
  int status_;
  std::string code_;
};

// Thrown out of a blocked resolve() when the session shuts down.
class FeedbackCancelled : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mailbox between HTTP handlers and a session loop waiting on a human.
class FeedbackQueue : public FeedbackProvider {
 public:
  explicit FeedbackQueue(std::chrono::milliseconds timeout) : timeout_(timeout) {}

  void announce(const PreferenceQuery& query) override;
  // Waits for the answer to this query. Throws FeedbackTimeout when the
  // deadline passes and FeedbackCancelled after cancel().
  PreferenceFeedback resolve(const PreferenceQuery& query) override;

  // The published query while it is still unanswered.
  std::optional<PreferenceQuery> outstanding() const;
  // Throws ServiceError 409 for stale, unknown or already answered ids.
  void submit(const std::string& query_id, Choice choice);
  void cancel();

 private:
  using Clock = std::chrono::steady_clock;
  void publish_locked(const PreferenceQuery& query);

  std::chrono::milliseconds timeout_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<PreferenceQuery> query_;
  Clock::time_point published_;
  std::optional<PreferenceFeedback> answer_;
  std::set<std::string> answered_;
  bool cancelled_ = false;
};

// Builds a run configuration from a create-session request: an optional
// full "config" object, then the flat overrides mode, strategy, k, nc,
// oracle, seed, budget, eval_subset, pipeline.
RunConfig config_from_request(const nlohmann::json& request);

struct ServiceOptions {
  // Used when a request names no "models" directory and does not ask
  // for inline pretraining.
  std::filesystem::path default_models;
};

// Concurrent interactive sessions, each driven by its own thread.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options = {});
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  nlohmann::json create(const nlohmann::json& request);
  nlohmann::json describe(const std::string& id) const;
  nlohmann::json next_query(const std::string& id) const;
  nlohmann::json post_feedback(const std::string& id, const nlohmann::json& body);
  nlohmann::json metrics(const std::string& id) const;

  // Blocks until the session's loop has exited. For tests and the CLI.
  void wait(const std::string& id);
  void shutdown();

  // Registers the HTTP routes on a server.
  void bind(httplib::Server& server);

 private:
  struct Entry;
  std::shared_ptr<Entry> find(const std::string& id) const;
  static void loop(std::shared_ptr<Entry> entry);

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t next_id_ = 1;
};

}  // namespace prefsum
