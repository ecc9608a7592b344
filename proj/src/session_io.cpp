#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "prefsum/interaction.hpp"

namespace prefsum {
namespace {

using nlohmann::json;

json scores_to_json(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) {
    if (std::isnan(v)) {
      out.push_back(nullptr);
    } else {
      out.push_back(v);
    }
  }
  return out;
}

std::vector<double> scores_from_json(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) {
    out.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  }
  return out;
}

json selection_to_json(const SummarySelection& s) { return {{"indices", s.indices}, {"text", s.text}}; }

SummarySelection selection_from_json(const json& j, const std::string& doc_id) {
  SummarySelection s;
  s.doc_id = doc_id;
  s.indices = j.at("indices").get<std::vector<std::size_t>>();
  s.text = j.value("text", "");
  return s;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> ids_of(const std::vector<const Document*>& docs) {
  std::vector<std::string> out;
  for (const Document* d : docs) out.push_back(d->id);
  return out;
}

std::vector<const Document*> docs_of(const Dataset& dataset, const json& ids) {
  std::vector<const Document*> out;
  for (const auto& id : ids) out.push_back(&dataset.at(id.get<std::string>()));
  return out;
}

}  // namespace

json to_json(const PreferenceQuery& q) {
  return {{"query_id", q.query_id},
          {"interaction", q.interaction},
          {"doc_id", q.doc_id},
          {"sentences", q.sentences},
          {"a", selection_to_json(q.a)},
          {"b", selection_to_json(q.b)}};
}

json to_json(const TranscriptEntry& e) {
  return {{"interaction", e.query.interaction},
          {"query_id", e.query.query_id},
          {"doc_id", e.query.doc_id},
          {"a", selection_to_json(e.query.a)},
          {"b", selection_to_json(e.query.b)},
          {"choice", choice_label(e.feedback.choice)},
          {"source", to_string(e.feedback.source)},
          {"latency_seconds", e.feedback.latency_seconds}};
}

TranscriptEntry transcript_entry_from_json(const json& j) {
  TranscriptEntry e;
  e.query.interaction = j.at("interaction").get<std::size_t>();
  e.query.query_id = j.at("query_id").get<std::string>();
  e.query.doc_id = j.at("doc_id").get<std::string>();
  e.query.a = selection_from_json(j.at("a"), e.query.doc_id);
  e.query.b = selection_from_json(j.at("b"), e.query.doc_id);
  e.feedback.query_id = e.query.query_id;
  e.feedback.choice = choice_from_label(j.at("choice").get<std::string>());
  e.feedback.source = feedback_source_from_string(j.at("source").get<std::string>());
  e.feedback.latency_seconds = j.value("latency_seconds", 0.0);
  return e;
}

void save_transcript(const std::vector<TranscriptEntry>& transcript, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write transcript '" + path.string() + "'");
  for (const auto& e : transcript) out << to_json(e).dump() << '\n';
}

std::vector<TranscriptEntry> load_transcript(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transcript '" + path.string() + "'");
  std::vector<TranscriptEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(transcript_entry_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

json to_json(const MetricsRecord& r) {
  return {{"interaction", r.interaction},
          {"rouge1", r.rouge1},
          {"rouge2", r.rouge2},
          {"rougeL", r.rougeL},
          {"mean_reward", r.mean_reward},
          {"strategy", to_string(r.strategy)},
          {"online_id", r.online_id},
          {"choice", r.choice},
          {"offline_ids", r.offline_ids},
          {"offline_scores", scores_to_json(r.offline_scores)},
          {"offline_rewards", scores_to_json(r.offline_rewards)},
          {"oracle_source", r.oracle_source}};
}

MetricsRecord metrics_record_from_json(const json& j) {
  MetricsRecord r;
  r.interaction = j.at("interaction").get<std::size_t>();
  r.rouge1 = j.at("rouge1").get<double>();
  r.rouge2 = j.at("rouge2").get<double>();
  r.rougeL = j.at("rougeL").get<double>();
  r.mean_reward = j.at("mean_reward").get<double>();
  r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  r.online_id = j.value("online_id", "");
  r.choice = j.value("choice", "");
  r.offline_ids = j.value("offline_ids", std::vector<std::string>{});
  r.offline_scores = scores_from_json(j.value("offline_scores", json::array()));
  r.offline_rewards = scores_from_json(j.value("offline_rewards", json::array()));
  r.oracle_source = j.value("oracle_source", "");
  return r;
}

json Session::checkpoint() const {
  if (issued_ != interaction_) throw std::logic_error("cannot checkpoint with a query outstanding");
  json history = json::array();
  for (const auto& r : history_) history.push_back(to_json(r));
  json transcript = json::array();
  for (const auto& e : transcript_) transcript.push_back(to_json(e));
  json triplets = json::array();
  for (std::size_t i = 0; i < store_.size(); ++i) {
    const auto& t = store_.at(i);
    triplets.push_back({{"doc_id", t.doc_id},
                        {"preferred_text", t.preferred_text},
                        {"dispreferred_text", t.dispreferred_text},
                        {"objective", to_string(t.objective)}});
  }
  json lrs = nullptr;
  if (pool_.lrs_stamp()) lrs = {{"stamp", *pool_.lrs_stamp()}, {"rewards", scores_to_json(pool_.lrs_rewards())}};
  return {{"format", "prefsum-session"},
          {"version", 1},
          {"config", to_json(config_)},
          {"policy", to_json(policy_, config_.session.summary_budget)},
          {"reward", to_json(reward_, normalizer_)},
          {"triplets", std::move(triplets)},
          {"online", ids_of(online_)},
          {"cursor", cursor_},
          {"interaction", interaction_},
          {"generation", generation_},
          {"eval", ids_of(eval_docs_)},
          {"lrs", std::move(lrs)},
          {"initial", to_json(initial_)},
          {"history", std::move(history)},
          {"transcript", std::move(transcript)}};
}

std::unique_ptr<Session> Session::restore(std::shared_ptr<const Dataset> dataset, const ModelBundle& models,
                                          const json& j) {
  if (j.value("format", "") != "prefsum-session") throw std::runtime_error("not a session checkpoint");
  const Dataset& ds = *dataset;
  std::unique_ptr<Session> s(new Session(dataset, models.featurizer, config_from_json(j.at("config")), Restoring{}));
  s->policy_ = policy_from_json(j.at("policy"));
  std::tie(s->reward_, s->normalizer_) = reward_from_json(j.at("reward"));
  for (const auto& t : j.at("triplets")) {
    s->store_.add(make_triplet(ds.at(t.at("doc_id").get<std::string>()), t.at("preferred_text").get<std::string>(),
                               t.at("dispreferred_text").get<std::string>(),
                               objective_from_string(t.at("objective").get<std::string>()), *s->cache_));
  }
  for (const Document* d : ds.split(Split::kOnline)) s->store_.register_document(d->id, s->cache_->document(*d));
  s->online_ = docs_of(ds, j.at("online"));
  s->cursor_ = j.at("cursor").get<std::size_t>();
  s->interaction_ = j.at("interaction").get<std::size_t>();
  s->issued_ = s->interaction_;
  s->generation_ = j.at("generation").get<std::size_t>();
  s->eval_docs_ = docs_of(ds, j.at("eval"));
  if (!j.at("lrs").is_null()) {
    s->pool_.restore_lrs(j.at("lrs").at("stamp").get<std::size_t>(), scores_from_json(j.at("lrs").at("rewards")));
  }
  s->initial_ = metrics_record_from_json(j.at("initial"));
  for (const auto& r : j.at("history")) s->history_.push_back(metrics_record_from_json(r));
  for (const auto& e : j.at("transcript")) {
    auto entry = transcript_entry_from_json(e);
    const Document& doc = ds.at(entry.query.doc_id);
    entry.query.sentences = doc.sentences;
    s->transcript_.push_back(std::move(entry));
  }
  return s;
}

std::uint64_t Session::state_hash() const {
  json j = checkpoint();
  // Aborted queries bump the generation counter without touching the learner.
  j.erase("generation");
  return fnv1a(j.dump());
}

}  // namespace prefsum
