#include "doctest.h"

#include <cmath>
#include <set>

#include "prefsum/backbone.hpp"
#include "support.hpp"

using namespace prefsum;
using testing::make_doc;

namespace {

SentenceScores scores_of(std::vector<double> probs) {
  SentenceScores s;
  s.doc_id = "d";
  for (double p : probs) s.logits.push_back(std::log(p / (1.0 - p)));
  s.probs = std::move(probs);
  return s;
}

Document doc_of(std::size_t n) {
  std::vector<std::string> sentences;
  for (std::size_t i = 0; i < n; ++i) sentences.push_back("sentence number " + std::to_string(i));
  return make_doc("d", sentences);
}

std::shared_ptr<const Featurizer> featurizer_for(const std::vector<Document>& docs) {
  std::vector<const Document*> ptrs;
  for (const auto& d : docs) ptrs.push_back(&d);
  return std::make_shared<Featurizer>(FeatureConfig{}, IdfTable::build(ptrs));
}

// Five-sentence documents whose gold summary is the sentence carrying the
// marker word; the marker moves around so position alone cannot solve it.
std::vector<Document> marker_corpus(const std::string& prefix, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  const char* fillers[] = {"river", "stone", "cloud", "table", "music", "paper", "light", "grass"};
  std::vector<Document> docs;
  for (std::size_t d = 0; d < count; ++d) {
    const std::size_t marked = uniform_index(rng, 5);
    std::vector<std::string> sentences;
    for (std::size_t i = 0; i < 5; ++i) {
      std::string s;
      for (int w = 0; w < 4; ++w) s += std::string(w ? " " : "") + fillers[uniform_index(rng, 8)];
      if (i == marked) s += " important";
      sentences.push_back(s);
    }
    docs.push_back(make_doc(prefix + std::to_string(d), sentences, std::vector<std::string>{sentences[marked]}));
  }
  return docs;
}

}  // namespace

TEST_CASE("log_sigmoid is stable and exact") {
  CHECK(log_sigmoid(0.0) == doctest::Approx(-std::log(2.0)));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(log_sigmoid(800.0) == 0.0);
  for (double z : {-5.0, -0.3, 0.7, 4.0}) {
    CHECK(log_sigmoid(z) == doctest::Approx(std::log(1.0 / (1.0 + std::exp(-z)))).epsilon(1e-12));
  }
  CHECK(action_log_prob(2.0, 1) == doctest::Approx(log_sigmoid(2.0)));
  CHECK(action_log_prob(2.0, 0) == doctest::Approx(log_sigmoid(-2.0)));
}

TEST_CASE("greedy decode takes the most probable sentences") {
  const auto s = scores_of({0.2, 0.9, 0.5, 0.9, 0.1});
  CHECK(greedy_indices(s, 2) == std::vector<std::size_t>{1, 3});
  CHECK(greedy_indices(s, 3) == std::vector<std::size_t>{1, 2, 3});
  CHECK(greedy_indices(s, 10).size() == 5);
  // Ties go to the lower index.
  CHECK(greedy_indices(scores_of({0.5, 0.5, 0.5}), 1) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(greedy_indices(s, 0), std::invalid_argument);
  const auto sel = decode_greedy(doc_of(5), s, 1);
  CHECK(sel.indices == std::vector<std::size_t>{1});
  CHECK(sel.text == "sentence number 1");
}

TEST_CASE("sampled actions are repaired to a non-empty, in-budget set") {
  Rng rng(1);
  SUBCASE("near-zero probabilities fall back to the argmax") {
    const auto s = scores_of({1e-9, 2e-9, 1e-9});
    const auto a = sample_actions(s, 2, rng);
    CHECK(a == std::vector<std::uint8_t>{0, 1, 0});
  }
  SUBCASE("near-one probabilities are cut to the budget by probability") {
    const auto s = scores_of({0.999999, 0.9999999, 0.99999, 0.99999999});
    const auto a = sample_actions(s, 2, rng);
    CHECK(a == std::vector<std::uint8_t>{0, 1, 0, 1});
  }
  SUBCASE("properties over random scores") {
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + uniform_index(rng, 8);
      std::vector<double> p(n);
      for (auto& x : p) x = 0.01 + 0.98 * uniform01(rng);
      const std::size_t budget = 1 + uniform_index(rng, 4);
      const auto a = sample_actions(scores_of(p), budget, rng);
      const std::size_t k = std::count(a.begin(), a.end(), std::uint8_t{1});
      REQUIRE(k >= 1);
      REQUIRE(k <= budget);
    }
  }
}

TEST_CASE("Bernoulli draws follow the scores") {
  const auto s = scores_of({0.3, 0.6, 0.8});
  Rng rng(42);
  std::array<int, 3> hits{};
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    // Budget 3 never truncates, so only the empty draw is repaired.
    const auto a = sample_actions(s, 3, rng);
    for (int i = 0; i < 3; ++i) hits[i] += a[i];
  }
  // P(empty) = 0.7 * 0.4 * 0.2 = 0.056 and the repair adds sentence 2.
  CHECK(hits[0] / double(trials) == doctest::Approx(0.3).epsilon(0.05));
  CHECK(hits[1] / double(trials) == doctest::Approx(0.6).epsilon(0.03));
  CHECK(hits[2] / double(trials) == doctest::Approx(0.8 + 0.056).epsilon(0.03));
}

TEST_CASE("stochastic decode is a function of its seed") {
  const Document d = doc_of(6);
  const auto s = scores_of({0.4, 0.5, 0.6, 0.3, 0.5, 0.5});
  CHECK(decode_stochastic(d, s, 3, 9) == decode_stochastic(d, s, 3, 9));
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t seed = 0; seed < 50; ++seed) seen.insert(decode_stochastic(d, s, 3, seed).indices);
  CHECK(seen.size() > 5);
}

TEST_CASE("candidate pairs always differ") {
  SUBCASE("exhaustively over small documents and extreme scores") {
    const std::vector<double> levels = {1e-6, 0.5, 1.0 - 1e-6};
    for (std::size_t n = 2; n <= 4; ++n) {
      const Document d = doc_of(n);
      std::vector<std::size_t> digits(n, 0);
      while (true) {
        std::vector<double> p;
        for (auto x : digits) p.push_back(levels[x]);
        for (std::size_t budget = 1; budget <= n; ++budget) {
          const auto pair = generate_candidate_pair(d, scores_of(p), budget, 3);
          REQUIRE(pair.a.indices != pair.b.indices);
          REQUIRE_FALSE(pair.b.indices.empty());
          REQUIRE(pair.a == decode_greedy(d, scores_of(p), budget));
        }
        std::size_t i = 0;
        while (i < n && ++digits[i] == levels.size()) digits[i++] = 0;
        if (i == n) break;
      }
    }
  }
  SUBCASE("a saturated policy falls back to toggling the lowest-margin sentence") {
    const Document d = doc_of(3);
    const auto pair = generate_candidate_pair(d, scores_of({1.0 - 1e-12, 0.3 * 1e-10, 1e-12}), 1, 0);
    CHECK(pair.toggled);
    CHECK(pair.a.indices == std::vector<std::size_t>{0});
    CHECK(pair.b.indices == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("single-sentence documents are rejected") {
    CHECK_THROWS_AS(generate_candidate_pair(doc_of(1), scores_of({0.5}), 1, 0), std::invalid_argument);
  }
}

TEST_CASE("sentence features carry the position block") {
  const std::vector<Document> docs = {doc_of(3)};
  const auto f = featurizer_for(docs);
  const SentenceFeatures sf = sentence_features(*f, docs[0]);
  const auto base = static_cast<Eigen::Index>(f->dim());
  REQUIRE(sf.count() == 3);
  CHECK(sf.rows.cols() == base + 3);
  CHECK(sf.rows(0, base) == 0.0);
  CHECK(sf.rows(1, base) == 0.5);
  CHECK(sf.rows(2, base) == 1.0);
  CHECK(sf.rows(0, base + 1) == 1.0);
  CHECK(sf.rows(2, base + 2) == 1.0);
  CHECK(sf.rows(1, base + 1) + sf.rows(1, base + 2) == 0.0);

  FeatureCache cache(f);
  CHECK(&cache.sentences(docs[0]) == &cache.sentences(docs[0]));
  CHECK(cache.sentence_dim() == f->dim() + 3);
}

TEST_CASE("freezing copies the scorer once") {
  PolicyParams p = PolicyParams::create(10);
  CHECK_FALSE(p.frozen());
  CHECK_THROWS_AS(p.reference_scorer(), std::logic_error);
  PolicyParams f = freeze(p);
  CHECK(f.reference_scorer() == f.scorer);
  CHECK_THROWS_AS(freeze(f), std::logic_error);
  CHECK(policy_from_json(to_json(f, 3)).reference == f.reference);
}

TEST_CASE("supervised loss gradient matches finite differences") {
  const std::vector<Document> docs = marker_corpus("m", 3, 1);
  const auto f = featurizer_for(docs);
  FeatureCache cache(f);
  const LabeledDocument ld = label_document(docs[0], cache, 1);
  const PolicyParams p = PolicyParams::create(cache.sentence_dim(), PolicyConfig{8, 4});
  nnet::FiniteDiffOptions opt;
  opt.max_coordinates = 300;
  CHECK(nnet::finite_diff_check(p.scorer, [&](const nnet::Mlp& m) { return supervised_loss(m, ld); }, opt) < 1e-4);

  // A zero network predicts 0.5 everywhere: BCE is ln 2.
  const nnet::Mlp zero = nnet::Mlp::zeros({cache.sentence_dim(), 1}, {nnet::Activation::kSigmoid});
  CHECK(supervised_loss(zero, ld).loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("pretraining learns a marker word") {
  const std::vector<Document> train = marker_corpus("train", 60, 2);
  const std::vector<Document> held = marker_corpus("held", 30, 3);
  std::vector<Document> all = train;
  all.insert(all.end(), held.begin(), held.end());
  FeatureCache cache(featurizer_for(all));
  std::vector<LabeledDocument> labeled;
  for (const auto& d : train) labeled.push_back(label_document(d, cache, 1));

  PretrainOptions opt;
  opt.epochs = 40;
  opt.lr = 0.1;
  const PretrainResult r = pretrain_supervised(PolicyParams::create(cache.sentence_dim()), labeled, opt);
  CHECK(r.policy.frozen());
  CHECK(r.losses.size() == 41);
  CHECK(r.losses.back() < 0.5 * r.losses.front());

  int hits = 0;
  for (const auto& d : held) {
    const auto s = score_sentences(r.policy, cache.sentences(d));
    hits += decode_greedy(d, s, 1).text == d.gold_summary->front();
  }
  MESSAGE(hits); CHECK(hits >= 27);
}

TEST_CASE("pretraining with a first-sentence gold favours position zero") {
  std::vector<Document> docs;
  for (int d = 0; d < 30; ++d) {
    std::vector<std::string> s;
    for (int i = 0; i < 4; ++i) s.push_back("word" + std::to_string((d * 7 + i * 3) % 23) + " filler");
    docs.push_back(make_doc("f" + std::to_string(d), s, std::vector<std::string>{s[0]}));
  }
  FeatureCache cache(featurizer_for(docs));
  std::vector<LabeledDocument> labeled;
  for (const auto& d : docs) labeled.push_back(label_document(d, cache, 1));
  PretrainOptions opt;
  opt.epochs = 30;
  opt.lr = 0.1;
  const auto r = pretrain_supervised(PolicyParams::create(cache.sentence_dim()), labeled, opt);
  int first = 0;
  for (const auto& d : docs) first += greedy_indices(score_sentences(r.policy, cache.sentences(d)), 1)[0] == 0;
  CHECK(first == 30);
}

TEST_CASE("pretraining argument errors") {
  CHECK_THROWS_AS(pretrain_supervised(PolicyParams::create(4), {}, {}), std::invalid_argument);
  const nnet::Mlp net = nnet::Mlp::zeros({4, 1}, {nnet::Activation::kSigmoid});
  SentenceFeatures sf;
  sf.rows = Eigen::MatrixXd::Zero(5, 4);
  CHECK_THROWS_AS(score_sentences(nnet::Mlp::zeros({3, 1}, {nnet::Activation::kSigmoid}), sf), nnet::ShapeError);
  CHECK(score_sentences(net, sf).probs == std::vector<double>(5, 0.5));
}
