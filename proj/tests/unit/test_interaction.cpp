#include "doctest.h"

#include <cmath>
#include <set>

#include "../common/oracles.hpp"
#include "prefsum/interaction.hpp"
#include "support.hpp"

using namespace prefsum;
using testing::make_doc;

namespace {

PreferenceQuery query_of(std::string a, std::string b) {
  PreferenceQuery q;
  q.query_id = "q";
  q.doc_id = "d";
  q.a.text = std::move(a);
  q.b.text = std::move(b);
  return q;
}

class AlwaysFirst : public FeedbackProvider {
 public:
  PreferenceFeedback resolve(const PreferenceQuery& q) override {
    ++calls;
    return {q.query_id, Choice::kFirst, FeedbackSource::kHuman, 0.0};
  }
  int calls = 0;
};

class TimesOut : public FeedbackProvider {
 public:
  PreferenceFeedback resolve(const PreferenceQuery&) override { throw FeedbackTimeout("no answer"); }
};

// Records every announced query ahead of its resolution.
class Announcing : public SimulatedOracle {
 public:
  using SimulatedOracle::SimulatedOracle;
  void announce(const PreferenceQuery& q) override { announced.push_back(q); }
  std::vector<PreferenceQuery> announced;
};

RunConfig world_config(SessionMode mode = SessionMode::kOnline) {
  RunConfig c = testing::small_world().config;
  c.session.mode = mode;
  return c;
}

std::unique_ptr<Session> make_session(const RunConfig& c) {
  const auto& w = testing::small_world();
  return std::make_unique<Session>(w.dataset, w.models, c);
}

std::shared_ptr<const Dataset> resplit(std::size_t n_online) {
  const auto& w = testing::small_world();
  return std::make_shared<const Dataset>(split_dataset(w.corpus.dataset, w.config.split.n_offline, n_online, 17));
}

}  // namespace

TEST_CASE("simulated preference follows ROUGE-1, then ROUGE-L, then A") {
  OracleConfig c;
  c.nc = 0.0;
  Rng rng(1);
  const std::string gold = "the cat sat on the mat";
  CHECK(simulated_preference(query_of("the cat sat", "a dog ran"), gold, c, rng).choice == Choice::kFirst);
  CHECK(simulated_preference(query_of("a dog ran", "the cat sat"), gold, c, rng).choice == Choice::kSecond);
  // Same unigrams, so ROUGE-L decides: "mat the" keeps only one in order.
  CHECK(simulated_preference(query_of("mat the", "the mat"), gold, c, rng).choice == Choice::kSecond);
  CHECK(simulated_preference(query_of("the mat", "mat the"), gold, c, rng).choice == Choice::kFirst);
  // A full tie goes to A.
  CHECK(simulated_preference(query_of("x y", "y x"), gold, c, rng).choice == Choice::kFirst);
}

TEST_CASE("with nc = 1 the oracle is a fair coin") {
  OracleConfig c;
  c.nc = 1.0;
  Rng rng(7);
  int second = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    second += simulated_preference(query_of("the cat sat", "nothing"), "the cat sat", c, rng).choice == Choice::kSecond;
  }
  CHECK(std::abs(second / double(trials) - 0.5) < 0.02);
}

TEST_CASE("with nc = 0.1 the better summary wins about 95% of the time") {
  OracleConfig c;
  c.nc = 0.1;
  Rng rng(8);
  int first = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    first += simulated_preference(query_of("the cat sat", "nothing"), "the cat sat", c, rng).choice == Choice::kFirst;
  }
  CHECK(std::abs(first / double(trials) - 0.95) < 0.01);
}

TEST_CASE("SimulatedOracle draws per interaction and needs gold") {
  const auto& w = testing::small_world();
  OracleConfig c;
  c.nc = 0.5;
  SimulatedOracle oracle(*w.dataset, c);
  const Document& doc = *w.dataset->split(Split::kOnline)[0];
  PreferenceQuery q = query_of(doc.sentences[0], doc.sentences[1]);
  q.doc_id = doc.id;
  q.interaction = 3;
  CHECK(oracle.resolve(q).choice == oracle.resolve(q).choice);
  q.doc_id = "missing";
  CHECK_THROWS_AS(oracle.resolve(q), CorpusError);
  c.nc = 1.5;
  CHECK_THROWS_AS(SimulatedOracle(*w.dataset, c), std::invalid_argument);
}

TEST_CASE("labels and sources") {
  CHECK(choice_label(Choice::kFirst) == "A");
  CHECK(choice_from_label("B") == Choice::kSecond);
  CHECK_THROWS_AS(choice_from_label("C"), std::invalid_argument);
  CHECK(feedback_source_from_string(to_string(FeedbackSource::kHuman)) == FeedbackSource::kHuman);
}

TEST_CASE("mean entropy") {
  SentenceScores s;
  s.probs = {0.5, 0.5};
  CHECK(mean_entropy(s) == doctest::Approx(std::log(2.0)));
  s.probs = {1e-300, 0.5};
  CHECK(mean_entropy(s) == doctest::Approx(std::log(2.0) / 2.0));
  s.probs = {0.2};
  CHECK(mean_entropy(s) == doctest::Approx(-(0.2 * std::log(0.2) + 0.8 * std::log(0.8))));
  CHECK(mean_entropy(SentenceScores{}) == 0.0);
}

TEST_CASE("active selection removes the most uncertain document") {
  const auto& w = testing::small_world();
  FeatureCache cache(w.models.featurizer);
  auto pool = w.dataset->split(Split::kOnline);
  std::set<std::string> seen;
  while (!pool.empty()) {
    double best = -1.0;
    for (const auto* d : pool) best = std::max(best, mean_entropy(score_sentences(w.models.policy, cache.sentences(*d))));
    const std::size_t before = pool.size();
    const Document* picked = select_active_query(w.models.policy, pool, cache);
    CHECK(pool.size() == before - 1);
    CHECK(std::find(pool.begin(), pool.end(), picked) == pool.end());
    CHECK(mean_entropy(score_sentences(w.models.policy, cache.sentences(*picked))) == best);
    CHECK(seen.insert(picked->id).second);
  }
  CHECK_THROWS_AS(select_active_query(w.models.policy, pool, cache), std::invalid_argument);
}

TEST_CASE("evaluate_corpus averages greedy ROUGE") {
  const auto& w = testing::small_world();
  FeatureCache cache(w.models.featurizer);
  const auto docs = w.dataset->split(Split::kOnline);
  double r1 = 0.0;
  for (const auto* d : docs) {
    const auto s = decode_greedy(*d, score_sentences(w.models.policy, cache.sentences(*d)), 3);
    r1 += oracle::rouge_n(tokenize(s.text), tokenize(d->gold_text()), 1).f;
  }
  const auto got = evaluate_corpus(w.models.policy, docs, cache, 3);
  CHECK(got.rouge1 == doctest::Approx(r1 / static_cast<double>(docs.size())).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate_corpus(w.models.policy, {}, cache, 3), std::invalid_argument);
}

TEST_CASE("online sessions visit the stream in order and respect the budget") {
  auto s = make_session(world_config());
  const auto stream = s->remaining_online_ids();
  CHECK(stream.size() == 8);
  SimulatedOracle oracle(*testing::small_world().dataset, s->config().oracle);
  std::size_t i = 0;
  while (!s->finished()) {
    CHECK(s->remaining_online_ids().front() == stream[i]);
    const auto& r = s->run_interaction(oracle);
    CHECK(r.online_id == stream[i]);
    CHECK(r.interaction == ++i);
  }
  CHECK(i == 6);
  CHECK(s->history().size() == 6);
  CHECK(s->transcript().size() == 6);
  CHECK_THROWS_AS(s->prepare_query(), std::logic_error);
}

TEST_CASE("queries carry sentences only and distinct candidates") {
  auto s = make_session(world_config());
  const PendingQuery p = s->prepare_query();
  const Document& doc = testing::small_world().dataset->at(p.query.doc_id);
  CHECK(p.query.sentences == doc.sentences);
  CHECK(p.query.a.indices != p.query.b.indices);
  CHECK(p.query.a.indices.size() <= s->config().session.summary_budget);
  const auto j = to_json(p.query);
  CHECK_FALSE(j.contains("gold_summary"));
  CHECK(j.dump().find(doc.gold_text()) == std::string::npos);
}

TEST_CASE("few-shot sessions cycle through at most four documents") {
  const auto& w = testing::small_world();
  RunConfig c = world_config(SessionMode::kFewshot);
  c.split.n_online = 4;
  c.session.budget = 9;
  Session s(resplit(4), w.models, c);
  const auto ids = s.remaining_online_ids();
  REQUIRE(ids.size() == 4);
  AlwaysFirst human;
  std::size_t i = 0;
  while (!s.finished()) CHECK(s.run_interaction(human).online_id == ids[i++ % 4]);
  CHECK(i == 9);

  RunConfig too_many = world_config(SessionMode::kFewshot);
  CHECK_THROWS_AS(Session(w.dataset, w.models, too_many), std::invalid_argument);
}

TEST_CASE("active sessions never repeat a document") {
  RunConfig c = world_config(SessionMode::kActive);
  c.session.budget = 100;
  auto s = make_session(c);
  AlwaysFirst human;
  std::set<std::string> seen;
  while (!s->finished()) CHECK(seen.insert(s->run_interaction(human).online_id).second);
  CHECK(seen.size() == 8);
}

TEST_CASE("a timed-out query leaves the learner state unchanged") {
  auto s = make_session(world_config(SessionMode::kActive));
  AlwaysFirst human;
  s->run_interaction(human);
  const auto hash = s->state_hash();
  const auto remaining = s->remaining_online_ids();
  TimesOut silent;
  CHECK_THROWS_AS(s->run_interaction(silent), FeedbackTimeout);
  CHECK(s->state_hash() == hash);
  CHECK(s->remaining_online_ids() == remaining);
  CHECK(s->interaction() == 1);
  CHECK(s->history().size() == 1);

  // The retried query targets the same document with a fresh id.
  const PendingQuery p = s->prepare_query();
  CHECK(p.query.interaction == 2);
  CHECK(s->complete_interaction(p, {p.query.query_id, Choice::kSecond, FeedbackSource::kHuman, 0.0}).choice == "B");
}

TEST_CASE("feedback must answer the pending query") {
  auto s = make_session(world_config());
  const PendingQuery p = s->prepare_query();
  CHECK_THROWS_AS(s->complete_interaction(p, {"other", Choice::kFirst, FeedbackSource::kHuman, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("the learner runs without any gold on the online documents") {
  const auto& w = testing::small_world();
  std::vector<Document> docs = w.dataset->documents();
  for (auto& d : docs) {
    if (d.split == Split::kOnline) d.gold_summary.reset();
  }
  auto stripped = std::make_shared<const Dataset>(docs, w.dataset->split_seed());
  Session s(stripped, w.models, world_config());
  AlwaysFirst human;
  run_session(s, human);
  CHECK(human.calls == 6);
  CHECK(s.eval_docs().empty());
  CHECK(s.history().back().rouge1 == 0.0);
}

TEST_CASE("replaying a transcript reproduces the metrics") {
  RunConfig c = world_config();
  c.sampling.strategy = Strategy::kRandom;
  c.sampling.k = 2;
  auto live = make_session(c);
  SimulatedOracle oracle(*testing::small_world().dataset, c.oracle);
  const auto result = run_session(*live, oracle);

  testing::TempDir dir("replay");
  save_transcript(result.transcript, dir / "t.jsonl");
  const auto loaded = load_transcript(dir / "t.jsonl");
  REQUIRE(loaded.size() == result.transcript.size());

  auto again = make_session(c);
  ReplayProvider replay(loaded);
  const auto replayed = run_session(*again, replay);
  CHECK(metrics_log(replayed.history) == metrics_log(result.history));
  CHECK(again->state_hash() == live->state_hash());
  CHECK(replay.remaining() == 0);

  auto wrong = loaded;
  wrong[0].query.doc_id = "elsewhere";
  auto third = make_session(c);
  ReplayProvider bad(wrong);
  CHECK_THROWS_AS(third->run_interaction(bad), ReplayMismatch);
}

TEST_CASE("checkpoint and resume continue the same trajectory") {
  RunConfig c = world_config();
  c.sampling.strategy = Strategy::kLrs;
  c.sampling.k = 2;
  const auto& w = testing::small_world();
  SimulatedOracle oracle(*w.dataset, c.oracle);

  auto straight = make_session(c);
  run_session(*straight, oracle);

  auto first = make_session(c);
  for (int i = 0; i < 3; ++i) first->run_interaction(oracle);
  const auto saved = nlohmann::json::parse(first->checkpoint().dump());
  auto resumed = Session::restore(w.dataset, w.models, saved);
  CHECK(resumed->state_hash() == first->state_hash());
  run_session(*resumed, oracle);
  CHECK(metrics_log(resumed->history()) == metrics_log(straight->history()));
  CHECK(resumed->state_hash() == straight->state_hash());
}

TEST_CASE("DSS records log the nearest offline documents") {
  RunConfig c = world_config();
  c.sampling.strategy = Strategy::kDss;
  c.sampling.k = 3;
  const auto& w = testing::small_world();
  auto s = make_session(c);
  SimulatedOracle oracle(*w.dataset, c.oracle);
  FeatureCache cache(w.models.featurizer);
  const OfflinePool pool(w.dataset->split(Split::kOffline), cache);
  for (int i = 0; i < 3; ++i) {
    const auto& r = s->run_interaction(oracle);
    const auto want = sample_dss(pool, w.dataset->at(r.online_id), 3);
    CHECK(r.offline_ids == want.ids());
    CHECK(r.offline_scores == want.scores);
    CHECK(r.offline_rewards.size() == 3);
  }
}

TEST_CASE("pipelined sessions draw the next query from the pre-update policy") {
  RunConfig c = world_config();
  c.session.pipeline = true;
  const auto& w = testing::small_world();
  auto piped = make_session(c);
  Announcing oracle(*w.dataset, c.oracle);
  const auto result = run_session(*piped, oracle);
  CHECK(result.history.size() == 6);
  CHECK(oracle.announced.size() == 5);

  auto fresh = make_session(c);
  const PendingQuery q1 = fresh->prepare_query();
  const PendingQuery q2 = fresh->prepare_query();
  CHECK(result.transcript[0].query.a == q1.query.a);
  CHECK(result.transcript[1].query.a == q2.query.a);
  CHECK(result.transcript[1].query.b == q2.query.b);
  CHECK(oracle.announced[0].query_id == result.transcript[1].query.query_id);
}

TEST_CASE("metrics records and transcript entries round-trip through JSON") {
  MetricsRecord r;
  r.interaction = 4;
  r.rouge1 = 0.25;
  r.strategy = Strategy::kDss;
  r.online_id = "doc";
  r.choice = "B";
  r.offline_ids = {"x", "y"};
  r.offline_scores = {0.1, 0.2};
  r.offline_rewards = {0.3, 0.4};
  r.oracle_source = "human";
  const auto back = metrics_record_from_json(to_json(r));
  CHECK(to_json(back) == to_json(r));
  CHECK(metrics_log({r, r}).find('\n') == metrics_log({r}).size() - 1);

  TranscriptEntry e;
  e.query = query_of("a", "b");
  e.feedback = {"q", Choice::kSecond, FeedbackSource::kHuman, 1.5};
  CHECK(to_json(transcript_entry_from_json(to_json(e))) == to_json(e));
}
