#include "prefsum/service.hpp"

#include <fstream>
#include <regex>

#include "httplib.h"
#include "prefsum/models.hpp"

namespace prefsum {

using nlohmann::json;

void FeedbackQueue::publish_locked(const PreferenceQuery& query) {
  if (query_ && query_->query_id == query.query_id) return;
  query_ = query;
  answer_.reset();
  published_ = Clock::now();
}

void FeedbackQueue::announce(const PreferenceQuery& query) {
  std::lock_guard lock(mutex_);
  publish_locked(query);
}

PreferenceFeedback FeedbackQueue::resolve(const PreferenceQuery& query) {
  std::unique_lock lock(mutex_);
  publish_locked(query);
  const auto deadline = published_ + timeout_;
  const bool ready = cv_.wait_until(lock, deadline, [&] { return cancelled_ || answer_.has_value(); });
  if (cancelled_) throw FeedbackCancelled("session stopped while waiting for feedback");
  if (!ready) {
    answered_.insert(query_->query_id);
    query_.reset();
    throw FeedbackTimeout("no feedback for query '" + query.query_id + "' before the deadline");
  }
  PreferenceFeedback fb = *answer_;
  answered_.insert(query_->query_id);
  query_.reset();
  answer_.reset();
  return fb;
}

std::optional<PreferenceQuery> FeedbackQueue::outstanding() const {
  std::lock_guard lock(mutex_);
  if (query_ && !answer_) return query_;
  return std::nullopt;
}

void FeedbackQueue::submit(const std::string& query_id, Choice choice) {
  {
    std::lock_guard lock(mutex_);
    if (query_ && query_->query_id == query_id) {
      if (answer_) throw ServiceError(409, "already_answered", "query '" + query_id + "' was already answered");
      PreferenceFeedback fb;
      fb.query_id = query_id;
      fb.choice = choice;
      fb.source = FeedbackSource::kHuman;
      fb.latency_seconds = std::chrono::duration<double>(Clock::now() - published_).count();
      answer_ = fb;
    } else if (answered_.count(query_id)) {
      throw ServiceError(409, "already_answered", "query '" + query_id + "' is no longer outstanding");
    } else {
      throw ServiceError(409, "stale_query", "query '" + query_id + "' is not the outstanding query");
    }
  }
  cv_.notify_all();
}

void FeedbackQueue::cancel() {
  {
    std::lock_guard lock(mutex_);
    cancelled_ = true;
  }
  cv_.notify_all();
}

RunConfig config_from_request(const json& request) {
  if (!request.is_object()) throw std::invalid_argument("request must be a JSON object");
  RunConfig c = request.contains("config") ? config_from_json(request.at("config")) : RunConfig{};
  if (request.contains("mode")) c.session.mode = session_mode_from_string(request.at("mode").get<std::string>());
  if (request.contains("strategy")) {
    c.sampling.strategy = strategy_from_string(request.at("strategy").get<std::string>());
  }
  if (request.contains("k")) c.sampling.k = request.at("k").get<std::size_t>();
  if (request.contains("nc")) c.oracle.nc = request.at("nc").get<double>();
  if (request.contains("oracle")) c.oracle.mode = oracle_mode_from_string(request.at("oracle").get<std::string>());
  if (request.contains("seed")) c.session.seed = request.at("seed").get<std::uint64_t>();
  if (request.contains("budget")) c.session.budget = request.at("budget").get<std::size_t>();
  if (request.contains("eval_subset")) c.session.eval_subset = request.at("eval_subset").get<std::size_t>();
  if (request.contains("n_offline")) c.split.n_offline = request.at("n_offline").get<std::size_t>();
  if (request.contains("n_online")) c.split.n_online = request.at("n_online").get<std::size_t>();
  if (request.contains("split_seed")) c.split.seed = request.at("split_seed").get<std::uint64_t>();
  const bool explicit_pipeline = request.contains("config") && request.at("config").contains("session") &&
                                 request.at("config").at("session").contains("pipeline");
  if (request.contains("pipeline")) {
    c.session.pipeline = request.at("pipeline").get<bool>();
  } else if (!explicit_pipeline) {
    // Humans are slow; overlap training with their next judgment.
    c.session.pipeline = c.oracle.mode == OracleMode::kHuman;
  }
  c.validate();
  return c;
}

struct SessionService::Entry {
  std::string id;
  RunConfig config;
  std::shared_ptr<const Dataset> dataset;
  std::unique_ptr<Session> session;
  std::unique_ptr<SimulatedOracle> simulated;
  std::unique_ptr<FeedbackQueue> human;
  std::filesystem::path output_dir;

  mutable std::mutex mutex;
  json initial;
  std::vector<json> history;
  bool finished = false;
  std::string error;
  std::thread thread;

  FeedbackProvider& provider() {
    if (human) return *human;
    return *simulated;
  }
};

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {}

SessionService::~SessionService() { shutdown(); }

void SessionService::shutdown() {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(mutex_);
    for (auto& [_, e] : sessions_) entries.push_back(e);
  }
  for (auto& e : entries) {
    if (e->human) e->human->cancel();
  }
  for (auto& e : entries) {
    if (e->thread.joinable()) e->thread.join();
  }
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown_session", "no session '" + id + "'");
  return it->second;
}

json SessionService::create(const json& request) {
  if (!request.is_object()) throw ServiceError(400, "invalid_request", "request body must be a JSON object");
  std::string id;
  if (request.contains("session_id")) {
    if (!request.at("session_id").is_string()) throw ServiceError(400, "invalid_request", "session_id must be a string");
    id = request.at("session_id").get<std::string>();
    static const std::regex kIdPattern("[A-Za-z0-9_-]{1,64}");
    if (!std::regex_match(id, kIdPattern)) throw ServiceError(400, "invalid_request", "malformed session_id");
    std::lock_guard lock(mutex_);
    if (sessions_.count(id)) throw ServiceError(409, "duplicate_session", "session '" + id + "' already exists");
  }

  auto entry = std::make_shared<Entry>();
  try {
    entry->config = config_from_request(request);
  } catch (const std::exception& e) {
    throw ServiceError(400, "invalid_config", e.what());
  }
  if (!request.contains("corpus") || !request.at("corpus").is_string()) {
    throw ServiceError(400, "invalid_request", "request needs a \"corpus\" path");
  }
  try {
    Dataset raw = load_corpus(request.at("corpus").get<std::string>());
    Dataset split = request.contains("manifest")
                        ? apply_manifest(raw, load_manifest(request.at("manifest").get<std::string>()))
                        : split_dataset(raw, entry->config.split.n_offline, entry->config.split.n_online,
                                        entry->config.split.seed);
    entry->dataset = std::make_shared<const Dataset>(std::move(split));
  } catch (const std::exception& e) {
    throw ServiceError(400, "invalid_corpus", e.what());
  }

  ModelBundle models;
  if (request.value("pretrain", false)) {
    try {
      models = pretrain_models(*entry->dataset, entry->config);
    } catch (const std::exception& e) {
      throw ServiceError(400, "invalid_config", std::string("inline pretraining failed: ") + e.what());
    }
  } else {
    const std::filesystem::path dir =
        request.contains("models") ? std::filesystem::path(request.at("models").get<std::string>()) : options_.default_models;
    if (dir.empty() || !std::filesystem::exists(dir / "policy.json") || !std::filesystem::exists(dir / "reward.json")) {
      throw ServiceError(400, "missing_models", "no pretrained checkpoints at '" + dir.string() + "'");
    }
    try {
      models = load_models(dir, *entry->dataset);
    } catch (const std::exception& e) {
      throw ServiceError(400, "missing_models", e.what());
    }
  }

  try {
    entry->session = std::make_unique<Session>(entry->dataset, models, entry->config);
  } catch (const std::exception& e) {
    throw ServiceError(400, "invalid_config", e.what());
  }
  if (entry->config.oracle.mode == OracleMode::kHuman) {
    entry->human = std::make_unique<FeedbackQueue>(std::chrono::milliseconds(
        static_cast<long long>(entry->config.oracle.timeout_seconds * 1000.0)));
  } else {
    entry->simulated = std::make_unique<SimulatedOracle>(*entry->dataset, entry->config.oracle);
  }
  if (request.contains("output_dir")) entry->output_dir = request.at("output_dir").get<std::string>();
  entry->initial = to_json(entry->session->initial_metrics());

  {
    std::lock_guard lock(mutex_);
    if (id.empty()) {
      do {
        id = "s" + std::to_string(next_id_++);
      } while (sessions_.count(id));
    } else if (sessions_.count(id)) {
      throw ServiceError(409, "duplicate_session", "session '" + id + "' already exists");
    }
    entry->id = id;
    sessions_.emplace(id, entry);
  }
  entry->thread = std::thread(&SessionService::loop, entry);
  return describe(id);
}

void SessionService::loop(std::shared_ptr<Entry> entry) {
  auto on_record = [&](const MetricsRecord& r) {
    std::lock_guard lock(entry->mutex);
    entry->history.push_back(to_json(r));
  };
  std::string error;
  try {
    while (true) {
      try {
        run_session(*entry->session, entry->provider(), on_record);
        break;
      } catch (const FeedbackTimeout&) {
        // The query was aborted with the state untouched; ask again.
      }
    }
    if (!entry->output_dir.empty()) {
      std::filesystem::create_directories(entry->output_dir);
      std::ofstream(entry->output_dir / "metrics.jsonl") << metrics_log(entry->session->history());
      save_transcript(entry->session->transcript(), entry->output_dir / "transcript.jsonl");
      save_config(entry->config, entry->output_dir / "config.json");
    }
  } catch (const FeedbackCancelled&) {
    error = "session stopped";
  } catch (const std::exception& e) {
    error = e.what();
  }
  std::lock_guard lock(entry->mutex);
  entry->finished = true;
  entry->error = error;
}

json SessionService::describe(const std::string& id) const {
  const auto e = find(id);
  std::optional<PreferenceQuery> q;
  if (e->human) q = e->human->outstanding();
  std::lock_guard lock(e->mutex);
  std::string status = "training";
  if (e->finished) {
    status = "finished";
  } else if (q) {
    status = "awaiting_feedback";
  }
  json out = {{"session_id", e->id},
              {"mode", to_string(e->config.session.mode)},
              {"strategy", to_string(e->config.sampling.strategy)},
              {"oracle", to_string(e->config.oracle.mode)},
              {"status", status},
              {"query_id", q && !e->finished ? json(q->query_id) : json(nullptr)},
              {"interactions", e->history.size()},
              {"budget", e->config.session.budget}};
  if (!e->error.empty()) out["error"] = e->error;
  return out;
}

json SessionService::next_query(const std::string& id) const {
  const auto e = find(id);
  if (!e->human) throw ServiceError(409, "no_outstanding_query", "session '" + id + "' uses a simulated oracle");
  const auto q = e->human->outstanding();
  if (!q) throw ServiceError(409, "no_outstanding_query", "no outstanding query");
  json out = to_json(*q);
  out["session_id"] = id;
  return out;
}

json SessionService::post_feedback(const std::string& id, const json& body) {
  const auto e = find(id);
  if (!body.is_object() || !body.contains("query_id") || !body.at("query_id").is_string() ||
      !body.contains("choice") || !body.at("choice").is_string()) {
    throw ServiceError(400, "invalid_request", "feedback needs string fields query_id and choice");
  }
  Choice choice;
  try {
    choice = choice_from_label(body.at("choice").get<std::string>());
  } catch (const std::invalid_argument& ex) {
    throw ServiceError(400, "invalid_choice", ex.what());
  }
  if (!e->human) throw ServiceError(409, "stale_query", "session '" + id + "' does not take human feedback");
  {
    std::lock_guard lock(e->mutex);
    if (e->finished) throw ServiceError(409, "stale_query", "session '" + id + "' has finished");
  }
  const std::string query_id = body.at("query_id").get<std::string>();
  e->human->submit(query_id, choice);
  json ack = describe(id);
  ack["accepted"] = query_id;
  return ack;
}

json SessionService::metrics(const std::string& id) const {
  const auto e = find(id);
  std::lock_guard lock(e->mutex);
  return {{"session_id", e->id}, {"initial", e->initial}, {"history", e->history}};
}

void SessionService::wait(const std::string& id) {
  const auto e = find(id);
  if (e->thread.joinable()) e->thread.join();
}

void SessionService::bind(httplib::Server& server) {
  auto respond = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(body.dump(), "application/json");
  };
  auto guarded = [respond](auto handler) {
    return [respond, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const ServiceError& e) {
        respond(res, e.status(), e.body());
      } catch (const json::exception& e) {
        respond(res, 400, {{"code", "invalid_request"}, {"message", e.what()}});
      } catch (const std::exception& e) {
        respond(res, 500, {{"code", "internal"}, {"message", e.what()}});
      }
    };
  };
  auto parse = [](const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::exception&) {
      throw ServiceError(400, "invalid_request", "body is not valid JSON");
    }
  };

  server.Post("/sessions", guarded([this, respond, parse](const httplib::Request& req, httplib::Response& res) {
    respond(res, 201, create(parse(req)));
  }));
  server.Get(R"(/sessions/([A-Za-z0-9_-]+))",
             guarded([this, respond](const httplib::Request& req, httplib::Response& res) {
               respond(res, 200, describe(req.matches[1]));
             }));
  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/query)",
             guarded([this, respond](const httplib::Request& req, httplib::Response& res) {
               respond(res, 200, next_query(req.matches[1]));
             }));
  server.Post(R"(/sessions/([A-Za-z0-9_-]+)/feedback)",
              guarded([this, respond, parse](const httplib::Request& req, httplib::Response& res) {
                respond(res, 200, post_feedback(req.matches[1], parse(req)));
              }));
  server.Get(R"(/sessions/([A-Za-z0-9_-]+)/metrics)",
             guarded([this, respond](const httplib::Request& req, httplib::Response& res) {
               respond(res, 200, metrics(req.matches[1]));
             }));
  server.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace prefsum
