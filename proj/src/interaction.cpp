#include "prefsum/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace prefsum {
namespace {

// Seed streams of one session.
constexpr std::uint64_t kPairStream = 1;
constexpr std::uint64_t kRolloutStream = 2;
constexpr std::uint64_t kEvalStream = 3;

double bernoulli_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

std::size_t active_index(const PolicyParams& policy, const std::vector<const Document*>& pool,
                         const FeatureCache& cache) {
  if (pool.empty()) throw std::invalid_argument("active query pool is empty");
  std::size_t best = 0;
  double best_h = -1.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double h = mean_entropy(score_sentences(policy, cache.sentences(*pool[i])));
    if (h > best_h || (h == best_h && pool[i]->id < pool[best]->id)) {
      best = i;
      best_h = h;
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(FeedbackSource source) {
  return source == FeedbackSource::kHuman ? "human" : "simulated";
}

FeedbackSource feedback_source_from_string(std::string_view name) {
  if (name == "simulated") return FeedbackSource::kSimulated;
  if (name == "human") return FeedbackSource::kHuman;
  throw std::invalid_argument("unknown feedback source '" + std::string(name) + "'");
}

std::string_view choice_label(Choice choice) { return choice == Choice::kFirst ? "A" : "B"; }

Choice choice_from_label(std::string_view label) {
  if (label == "A") return Choice::kFirst;
  if (label == "B") return Choice::kSecond;
  throw std::invalid_argument("choice must be \"A\" or \"B\"");
}

PreferenceFeedback simulated_preference(const PreferenceQuery& query, const std::string& gold,
                                        const OracleConfig& config, Rng& rng) {
  PreferenceFeedback fb;
  fb.query_id = query.query_id;
  fb.source = FeedbackSource::kSimulated;
  if (uniform01(rng) < config.nc) {
    fb.choice = uniform01(rng) < 0.5 ? Choice::kFirst : Choice::kSecond;
    return fb;
  }
  const double a1 = rouge_n(query.a.text, gold, 1).f1;
  const double b1 = rouge_n(query.b.text, gold, 1).f1;
  if (a1 != b1) {
    fb.choice = a1 > b1 ? Choice::kFirst : Choice::kSecond;
    return fb;
  }
  const double al = rouge_l(query.a.text, gold).f1;
  const double bl = rouge_l(query.b.text, gold).f1;
  fb.choice = bl > al ? Choice::kSecond : Choice::kFirst;
  return fb;
}

SimulatedOracle::SimulatedOracle(const Dataset& dataset, OracleConfig config) : config_(config) {
  if (!(config_.nc >= 0.0 && config_.nc <= 1.0)) throw std::invalid_argument("nc must lie in [0, 1]");
  for (const auto& d : dataset.documents()) {
    if (d.has_gold()) gold_.emplace(d.id, d.gold_text());
  }
}

PreferenceFeedback SimulatedOracle::resolve(const PreferenceQuery& query) {
  const auto it = gold_.find(query.doc_id);
  if (it == gold_.end()) throw CorpusError("no gold summary for document '" + query.doc_id + "'");
  Rng rng(derive_seed(config_.seed, query.interaction));
  return simulated_preference(query, it->second, config_, rng);
}

ReplayProvider::ReplayProvider(std::vector<TranscriptEntry> transcript) : transcript_(std::move(transcript)) {}

PreferenceFeedback ReplayProvider::resolve(const PreferenceQuery& query) {
  if (next_ >= transcript_.size()) throw ReplayMismatch("transcript exhausted");
  const auto& e = transcript_[next_];
  if (e.query.interaction != query.interaction || e.query.doc_id != query.doc_id ||
      e.query.a.indices != query.a.indices || e.query.b.indices != query.b.indices) {
    throw ReplayMismatch("transcript entry " + std::to_string(next_ + 1) + " does not match query for '" +
                         query.doc_id + "' at interaction " + std::to_string(query.interaction));
  }
  ++next_;
  PreferenceFeedback fb = e.feedback;
  fb.query_id = query.query_id;
  return fb;
}

RougeTriple evaluate_corpus(const PolicyParams& policy, const std::vector<const Document*>& docs,
                            const FeatureCache& cache, std::size_t budget) {
  if (docs.empty()) throw std::invalid_argument("evaluation set is empty");
  RougeTriple r;
  for (const Document* d : docs) {
    const auto summary = decode_greedy(*d, score_sentences(policy, cache.sentences(*d)), budget);
    const std::string gold = d->gold_text();
    r.rouge1 += rouge_n(summary.text, gold, 1).f1;
    r.rouge2 += rouge_n(summary.text, gold, 2).f1;
    r.rougeL += rouge_l(summary.text, gold).f1;
  }
  const double n = static_cast<double>(docs.size());
  r.rouge1 /= n;
  r.rouge2 /= n;
  r.rougeL /= n;
  return r;
}

double mean_entropy(const SentenceScores& scores) {
  if (scores.size() == 0) return 0.0;
  double h = 0.0;
  for (double p : scores.probs) h += bernoulli_entropy(p);
  return h / static_cast<double>(scores.size());
}

const Document* select_active_query(const PolicyParams& policy, std::vector<const Document*>& pool,
                                    const FeatureCache& cache) {
  const std::size_t i = active_index(policy, pool, cache);
  const Document* doc = pool[i];
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
  return doc;
}

std::string metrics_log(const std::vector<MetricsRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

Session::Session(std::shared_ptr<const Dataset> dataset, std::shared_ptr<const Featurizer> featurizer,
                 RunConfig config, Restoring)
    : dataset_(std::move(dataset)),
      config_(std::move(config)),
      cache_(std::make_shared<FeatureCache>(std::move(featurizer))),
      pool_(dataset_->split(Split::kOffline), *cache_) {
  config_.validate();
}

Session::Session(std::shared_ptr<const Dataset> dataset, const ModelBundle& models, RunConfig config)
    : Session(std::move(dataset), models.featurizer, std::move(config), Restoring{}) {
  policy_ = models.policy;
  reward_ = models.reward;
  normalizer_ = models.normalizer;
  store_ = models.store;
  if (!policy_.frozen()) throw std::invalid_argument("session needs a pretrained, frozen policy");
  if (!normalizer_.initialized()) throw std::invalid_argument("session needs a calibrated reward normalizer");

  online_ = dataset_->split(Split::kOnline);
  if (online_.empty()) throw std::invalid_argument("online split is empty");
  if (mode() == SessionMode::kFewshot && online_.size() > 4) {
    throw std::invalid_argument("few-shot sessions take at most 4 online documents, got " +
                                std::to_string(online_.size()));
  }
  if (config_.sampling.effective_k() > pool_.size()) {
    throw std::invalid_argument("k exceeds the offline pool size");
  }
  for (const Document* d : online_) store_.register_document(d->id, cache_->document(*d));

  std::vector<const Document*> eval;
  for (const Document* d : online_) {
    if (d->has_gold()) eval.push_back(d);
  }
  const std::size_t cap = config_.session.eval_subset;
  if (cap > 0 && eval.size() > cap) {
    Rng rng(derive_seed(config_.session.eval_seed, kEvalStream));
    std::shuffle(eval.begin(), eval.end(), rng);
    eval.resize(cap);
    std::sort(eval.begin(), eval.end(), [](const Document* a, const Document* b) { return a->id < b->id; });
  }
  eval_docs_ = std::move(eval);
  initial_ = evaluate();
}

std::vector<std::string> Session::remaining_online_ids() const {
  std::vector<std::string> out;
  const std::size_t start = mode() == SessionMode::kOnline ? cursor_ : 0;
  for (std::size_t i = start; i < online_.size(); ++i) out.push_back(online_[i]->id);
  return out;
}

bool Session::finished() const {
  if (issued_ >= config_.session.budget) return true;
  switch (mode()) {
    case SessionMode::kActive: return online_.empty();
    case SessionMode::kOnline: return cursor_ >= online_.size();
    case SessionMode::kFewshot: return false;
  }
  return true;
}

PendingQuery Session::prepare_query() {
  if (finished()) throw std::logic_error("session has no further queries");
  PendingQuery p;
  switch (mode()) {
    case SessionMode::kActive: {
      p.pool_position = active_index(policy_, online_, *cache_);
      p.doc = online_[p.pool_position];
      online_.erase(online_.begin() + static_cast<std::ptrdiff_t>(p.pool_position));
      break;
    }
    case SessionMode::kOnline:
      p.pool_position = cursor_;
      p.doc = online_[cursor_++];
      break;
    case SessionMode::kFewshot:
      p.pool_position = cursor_;
      p.doc = online_[cursor_++ % online_.size()];
      break;
  }
  ++issued_;
  const Document& doc = *p.doc;
  const auto pair = generate_candidate_pair(policy_, doc, cache_->sentences(doc), config_.session.summary_budget,
                                            derive_seed(derive_seed(config_.session.seed, kPairStream), issued_));
  p.toggled = pair.toggled;
  p.query.interaction = issued_;
  p.query.query_id = "q" + std::to_string(issued_) + "-" + std::to_string(++generation_);
  p.query.doc_id = doc.id;
  p.query.sentences = doc.sentences;
  p.query.a = pair.a;
  p.query.b = pair.b;
  return p;
}

void Session::abort_query(const PendingQuery& pending) {
  if (pending.query.interaction != issued_) throw std::logic_error("only the latest query can be aborted");
  switch (mode()) {
    case SessionMode::kActive:
      online_.insert(online_.begin() + static_cast<std::ptrdiff_t>(pending.pool_position), pending.doc);
      break;
    case SessionMode::kOnline:
    case SessionMode::kFewshot:
      --cursor_;
      break;
  }
  --issued_;
}

const MetricsRecord& Session::complete_interaction(const PendingQuery& pending, const PreferenceFeedback& feedback) {
  if (feedback.query_id != pending.query.query_id) {
    throw std::invalid_argument("feedback for '" + feedback.query_id + "' does not answer query '" +
                                pending.query.query_id + "'");
  }
  if (pending.query.interaction != interaction_ + 1) {
    throw std::logic_error("queries must be completed in the order they were issued");
  }
  const std::size_t t = interaction_ + 1;
  const Document& doc = *pending.doc;
  const std::size_t m = config_.session.summary_budget;

  const bool first = feedback.choice == Choice::kFirst;
  const auto& preferred = first ? pending.query.a : pending.query.b;
  const auto& dispreferred = first ? pending.query.b : pending.query.a;
  FinetuneOptions ft = config_.finetune;
  ft.seed = derive_seed(ft.seed, t);
  reward_ = finetune_on_feedback(reward_, store_,
                                 make_triplet(doc, preferred.text, dispreferred.text, Objective::kQuality, *cache_),
                                 ft);

  const auto selection = sample_offline(pool_, config_.sampling, doc, policy_, reward_, normalizer_, m, t);

  const std::uint64_t rollout_base = derive_seed(derive_seed(config_.session.seed, kRolloutStream), t);
  std::vector<Trajectory> batch;
  batch.push_back(rollout(policy_, reward_, normalizer_, doc, *cache_, m, config_.ppo, derive_seed(rollout_base, 0)));
  for (std::size_t j = 0; j < selection.size(); ++j) {
    batch.push_back(rollout(policy_, reward_, normalizer_, *selection.docs[j], *cache_, m, config_.ppo,
                            derive_seed(rollout_base, j + 1)));
  }
  compute_advantages(batch, config_.ppo);
  PPOConfig ppo = config_.ppo;
  ppo.seed = derive_seed(ppo.seed, t);
  policy_ = ppo_update(policy_, batch, ppo).policy;
  interaction_ = t;

  MetricsRecord r = evaluate();
  r.strategy = config_.sampling.strategy;
  r.online_id = doc.id;
  r.choice = std::string(choice_label(feedback.choice));
  r.offline_ids = selection.ids();
  r.offline_scores = selection.scores;
  for (std::size_t j = 1; j < batch.size(); ++j) r.offline_rewards.push_back(batch[j].terminal.value);
  r.oracle_source = std::string(to_string(feedback.source));
  history_.push_back(std::move(r));
  transcript_.push_back({pending.query, feedback});
  return history_.back();
}

const MetricsRecord& Session::run_interaction(FeedbackProvider& provider) {
  PendingQuery pending = prepare_query();
  PreferenceFeedback feedback;
  try {
    feedback = provider.resolve(pending.query);
  } catch (...) {
    abort_query(pending);
    throw;
  }
  return complete_interaction(pending, feedback);
}

MetricsRecord Session::evaluate() const {
  MetricsRecord r;
  r.interaction = interaction_;
  r.strategy = config_.sampling.strategy;
  const std::size_t m = config_.session.summary_budget;
  if (!eval_docs_.empty()) {
    const auto rouge = evaluate_corpus(policy_, eval_docs_, *cache_, m);
    r.rouge1 = rouge.rouge1;
    r.rouge2 = rouge.rouge2;
    r.rougeL = rouge.rougeL;
    double total = 0.0;
    for (const Document* d : eval_docs_) {
      const auto summary = decode_greedy(*d, score_sentences(policy_, cache_->sentences(*d)), m);
      total += peek_reward(reward_, normalizer_, cache_->document(*d), cache_->text(summary.text)).value;
    }
    r.mean_reward = total / static_cast<double>(eval_docs_.size());
  }
  return r;
}

SessionResult run_session(Session& session, FeedbackProvider& provider,
                          const std::function<void(const MetricsRecord&)>& on_record) {
  if (!session.config().session.pipeline) {
    while (!session.finished()) {
      const auto& r = session.run_interaction(provider);
      if (on_record) on_record(r);
    }
  } else if (!session.finished()) {
    PendingQuery pending = session.prepare_query();
    while (true) {
      PreferenceFeedback feedback;
      try {
        feedback = provider.resolve(pending.query);
      } catch (...) {
        session.abort_query(pending);
        throw;
      }
      std::optional<PendingQuery> next;
      if (!session.finished()) {
        next = session.prepare_query();
        provider.announce(next->query);
      }
      const auto& r = session.complete_interaction(pending, feedback);
      if (on_record) on_record(r);
      if (!next) break;
      pending = std::move(*next);
    }
  }
  return {session.initial_metrics(), session.history(), session.transcript()};
}

}  // namespace prefsum
