#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "prefsum/backbone.hpp"
#include "prefsum/config.hpp"
#include "prefsum/corpus.hpp"
#include "prefsum/metrics.hpp"
#include "prefsum/models.hpp"
#include "prefsum/ppo.hpp"
#include "prefsum/reward.hpp"
#include "prefsum/sampling.hpp"

namespace prefsum {

enum class FeedbackSource { kSimulated, kHuman };

std::string_view to_string(FeedbackSource source);
FeedbackSource feedback_source_from_string(std::string_view name);
// "A" / "B".
std::string_view choice_label(Choice choice);
Choice choice_from_label(std::string_view label);

// What the oracle sees. Carries sentences only, never the gold summary.
struct PreferenceQuery {
  std::string query_id;
  std::size_t interaction = 0;
  std::string doc_id;
  std::vector<std::string> sentences;
  SummarySelection a;
  SummarySelection b;
};

nlohmann::json to_json(const PreferenceQuery& query);

struct PreferenceFeedback {
  std::string query_id;
  Choice choice = Choice::kFirst;
  FeedbackSource source = FeedbackSource::kSimulated;
  double latency_seconds = 0.0;
};

// Raised by a provider that gave up waiting; the interaction is aborted.
class FeedbackTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a replayed transcript does not match the live query.
class ReplayMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FeedbackProvider {
 public:
  virtual ~FeedbackProvider() = default;
  // Called when a query is issued ahead of its resolve call (pipelining).
  virtual void announce(const PreferenceQuery& /*query*/) {}
  virtual PreferenceFeedback resolve(const PreferenceQuery& query) = 0;
};

// With probability nc a fair coin picks; otherwise the higher ROUGE-1 F1
// against the gold wins, then the higher ROUGE-L F1, then A.
PreferenceFeedback simulated_preference(const PreferenceQuery& query, const std::string& gold,
                                        const OracleConfig& config, Rng& rng);

// Holds the gold summaries away from the learner. Each query draws from
// its own stream derived from the interaction index.
class SimulatedOracle : public FeedbackProvider {
 public:
  SimulatedOracle(const Dataset& dataset, OracleConfig config);
  PreferenceFeedback resolve(const PreferenceQuery& query) override;

 private:
  std::unordered_map<std::string, std::string> gold_;
  OracleConfig config_;
};

struct TranscriptEntry {
  PreferenceQuery query;
  PreferenceFeedback feedback;
};

nlohmann::json to_json(const TranscriptEntry& entry);
TranscriptEntry transcript_entry_from_json(const nlohmann::json& j);
void save_transcript(const std::vector<TranscriptEntry>& transcript, const std::filesystem::path& path);
std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& path);

// Answers queries from a recorded transcript, in order.
class ReplayProvider : public FeedbackProvider {
 public:
  explicit ReplayProvider(std::vector<TranscriptEntry> transcript);
  PreferenceFeedback resolve(const PreferenceQuery& query) override;
  std::size_t remaining() const { return transcript_.size() - next_; }

 private:
  std::vector<TranscriptEntry> transcript_;
  std::size_t next_ = 0;
};

struct RougeTriple {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

// Mean F1 of greedy summaries against gold.
RougeTriple evaluate_corpus(const PolicyParams& policy, const std::vector<const Document*>& docs,
                            const FeatureCache& cache, std::size_t budget);

double mean_entropy(const SentenceScores& scores);
// Removes and returns the pool document with the highest mean per-sentence
// Bernoulli entropy; ties toward the lower id.
const Document* select_active_query(const PolicyParams& policy, std::vector<const Document*>& pool,
                                    const FeatureCache& cache);

struct MetricsRecord {
  std::size_t interaction = 0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double mean_reward = 0.0;
  Strategy strategy = Strategy::kNone;
  std::string online_id;
  std::string choice;
  std::vector<std::string> offline_ids;
  // LRS reward or DSS distance behind each pick (null for random).
  std::vector<double> offline_scores;
  // r^M the rollout on each offline document received.
  std::vector<double> offline_rewards;
  std::string oracle_source;
};

nlohmann::json to_json(const MetricsRecord& record);
MetricsRecord metrics_record_from_json(const nlohmann::json& j);
// One compact JSON object per line.
std::string metrics_log(const std::vector<MetricsRecord>& history);

// A query handed out but not yet trained on.
struct PendingQuery {
  PreferenceQuery query;
  const Document* doc = nullptr;
  bool toggled = false;
  // Where the document came from, so an aborted query can be put back.
  std::size_t pool_position = 0;
};

// Learner state of one interactive run. The learner never reads gold
// summaries: feedback arrives as PreferenceFeedback and evaluation goes
// through the separately held evaluation documents.
class Session {
 public:
  Session(std::shared_ptr<const Dataset> dataset, const ModelBundle& models, RunConfig config);

  const RunConfig& config() const { return config_; }
  SessionMode mode() const { return config_.session.mode; }
  const PolicyParams& policy() const { return policy_; }
  const RewardModel& reward() const { return reward_; }
  const RewardNormalizer& normalizer() const { return normalizer_; }
  const TripletStore& store() const { return store_; }
  const OfflinePool& pool() const { return pool_; }
  const FeatureCache& cache() const { return *cache_; }
  std::size_t interaction() const { return interaction_; }
  const std::vector<MetricsRecord>& history() const { return history_; }
  const MetricsRecord& initial_metrics() const { return initial_; }
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }
  const std::vector<const Document*>& eval_docs() const { return eval_docs_; }
  // Documents not yet consumed, in the order they would be visited.
  std::vector<std::string> remaining_online_ids() const;

  // True once the budget is spent or the online documents are exhausted,
  // counting queries already handed out.
  bool finished() const;

  PendingQuery prepare_query();
  // Returns the query's document to the pool untouched.
  void abort_query(const PendingQuery& pending);
  // Fine-tunes the reward model, samples offline documents, runs PPO and
  // appends a metrics record.
  const MetricsRecord& complete_interaction(const PendingQuery& pending, const PreferenceFeedback& feedback);

  // prepare, resolve, complete. A FeedbackTimeout aborts the query and is
  // rethrown with the state unchanged.
  const MetricsRecord& run_interaction(FeedbackProvider& provider);

  MetricsRecord evaluate() const;
  // Digest of the learner state, for abort and resume checks.
  std::uint64_t state_hash() const;

  nlohmann::json checkpoint() const;
  static std::unique_ptr<Session> restore(std::shared_ptr<const Dataset> dataset, const ModelBundle& models,
                                          const nlohmann::json& checkpoint);

 private:
  struct Restoring {};
  Session(std::shared_ptr<const Dataset> dataset, std::shared_ptr<const Featurizer> featurizer,
          RunConfig config, Restoring);

  std::shared_ptr<const Dataset> dataset_;
  RunConfig config_;
  std::shared_ptr<FeatureCache> cache_;
  PolicyParams policy_;
  RewardModel reward_;
  RewardNormalizer normalizer_;
  TripletStore store_;
  OfflinePool pool_;
  // Active: remaining pool. Online: the stream. Few-shot: the cycle.
  std::vector<const Document*> online_;
  std::size_t cursor_ = 0;
  std::size_t issued_ = 0;
  // Queries ever prepared, aborted ones included; keeps query ids unique.
  std::size_t generation_ = 0;
  std::size_t interaction_ = 0;
  std::vector<const Document*> eval_docs_;
  MetricsRecord initial_;
  std::vector<MetricsRecord> history_;
  std::vector<TranscriptEntry> transcript_;
};

struct SessionResult {
  MetricsRecord initial;
  std::vector<MetricsRecord> history;
  std::vector<TranscriptEntry> transcript;
};

// Runs interactions until the session finishes. With config.session.pipeline
// set, the next query is prepared before the current feedback is trained on.
SessionResult run_session(Session& session, FeedbackProvider& provider,
                          const std::function<void(const MetricsRecord&)>& on_record = {});

}  // namespace prefsum
