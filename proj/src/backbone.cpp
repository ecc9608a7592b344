#include "prefsum/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prefsum {
namespace {

using nnet::Activation;

nnet::Mlp make_head(std::size_t in, std::size_t hidden, Activation out, std::uint64_t seed) {
  if (hidden == 0) return nnet::Mlp::create({in, 1}, {out}, seed);
  return nnet::Mlp::create({in, hidden, 1}, {Activation::kTanh, out}, seed);
}

// Indices sorted by probability, highest first; lower index wins ties.
std::vector<std::size_t> ranked(const SentenceScores& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.probs[a] > scores.probs[b];
  });
  return order;
}

std::vector<std::size_t> indices_of(const std::vector<std::uint8_t>& actions) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

SentenceFeatures sentence_features(const Featurizer& featurizer, const Document& doc) {
  const std::size_t n = doc.size();
  if (n == 0) throw std::invalid_argument("document '" + doc.id + "' has no sentences");
  const auto f = static_cast<Eigen::Index>(featurizer.dim());
  SentenceFeatures out;
  out.doc_id = doc.id;
  out.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), f + kPositionFeatures);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.rows.row(r).head(f) = featurizer.featurize(doc.sentences[i]).values.transpose();
    out.rows(r, f) = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
    out.rows(r, f + 1) = i == 0 ? 1.0 : 0.0;
    out.rows(r, f + 2) = i + 1 == n ? 1.0 : 0.0;
  }
  return out;
}

FeatureCache::FeatureCache(std::shared_ptr<const Featurizer> featurizer)
    : featurizer_(std::move(featurizer)) {
  if (!featurizer_) throw std::invalid_argument("FeatureCache needs a featurizer");
}

const SentenceFeatures& FeatureCache::sentences(const Document& doc) const {
  {
    std::lock_guard lock(mutex_);
    auto it = sentences_.find(doc.id);
    if (it != sentences_.end()) return it->second;
  }
  SentenceFeatures computed = sentence_features(*featurizer_, doc);
  std::lock_guard lock(mutex_);
  return sentences_.try_emplace(doc.id, std::move(computed)).first->second;
}

const FeatureVector& FeatureCache::document(const Document& doc) const {
  {
    std::lock_guard lock(mutex_);
    auto it = documents_.find(doc.id);
    if (it != documents_.end()) return it->second;
  }
  FeatureVector computed = featurizer_->featurize(doc.text());
  std::lock_guard lock(mutex_);
  return documents_.try_emplace(doc.id, std::move(computed)).first->second;
}

PolicyParams PolicyParams::create(std::size_t feature_dim, const PolicyConfig& config) {
  PolicyParams p;
  p.feature_dim = feature_dim;
  p.scorer = make_head(feature_dim, config.hidden, Activation::kSigmoid, derive_seed(config.seed, 1));
  p.value = make_head(feature_dim, config.hidden, Activation::kIdentity, derive_seed(config.seed, 2));
  return p;
}

const nnet::Mlp& PolicyParams::reference_scorer() const {
  if (!reference) throw std::logic_error("policy has no frozen reference");
  return *reference;
}

PolicyParams freeze(PolicyParams policy) {
  if (policy.reference) throw std::logic_error("reference policy is already frozen");
  policy.reference = policy.scorer;
  return policy;
}

double log_sigmoid(double logit) {
  if (logit >= 0.0) return -std::log1p(std::exp(-logit));
  return logit - std::log1p(std::exp(logit));
}

SentenceScores score_sentences(const nnet::Mlp& scorer, const SentenceFeatures& features) {
  if (scorer.input_size() != static_cast<std::size_t>(features.rows.cols())) {
    throw nnet::ShapeError("sentence features have " + std::to_string(features.rows.cols()) +
                           " columns, scorer expects " + std::to_string(scorer.input_size()));
  }
  SentenceScores s;
  s.doc_id = features.doc_id;
  s.logits.reserve(features.count());
  s.probs.reserve(features.count());
  nnet::ForwardCache cache;
  for (std::size_t i = 0; i < features.count(); ++i) {
    const Eigen::VectorXd p = scorer.forward(features.row(i), cache);
    const double z = cache.preactivations.back()[0];
    s.logits.push_back(z);
    // Kept strictly inside (0, 1) even when the sigmoid saturates.
    s.probs.push_back(std::clamp(p[0], 1e-300, std::nextafter(1.0, 0.0)));
  }
  return s;
}

SentenceScores score_sentences(const PolicyParams& policy, const SentenceFeatures& features) {
  return score_sentences(policy.scorer, features);
}

std::vector<std::size_t> greedy_indices(const SentenceScores& scores, std::size_t budget) {
  if (budget == 0) throw std::invalid_argument("budget must be at least 1");
  auto order = ranked(scores);
  order.resize(std::min(budget, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

SummarySelection decode_greedy(const Document& doc, const SentenceScores& scores,
                               std::size_t budget) {
  return make_selection(doc, greedy_indices(scores, budget));
}

std::vector<std::uint8_t> sample_actions(const SentenceScores& scores, std::size_t budget,
                                         Rng& rng) {
  if (budget == 0) throw std::invalid_argument("budget must be at least 1");
  const std::size_t n = scores.size();
  std::vector<std::uint8_t> actions(n, 0);
  std::size_t selected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    actions[i] = uniform01(rng) < scores.probs[i] ? 1 : 0;
    selected += actions[i];
  }
  if (selected == 0 && n > 0) {
    actions[ranked(scores).front()] = 1;
  } else if (selected > budget) {
    std::size_t kept = 0;
    for (std::size_t i : ranked(scores)) {
      if (!actions[i]) continue;
      if (kept < budget) {
        ++kept;
      } else {
        actions[i] = 0;
      }
    }
  }
  return actions;
}

SummarySelection decode_stochastic(const Document& doc, const SentenceScores& scores,
                                   std::size_t budget, std::uint64_t seed) {
  Rng rng(seed);
  return make_selection(doc, indices_of(sample_actions(scores, budget, rng)));
}

CandidatePair generate_candidate_pair(const Document& doc, const SentenceScores& scores,
                                      std::size_t budget, std::uint64_t seed) {
  if (doc.size() < 2) {
    throw std::invalid_argument("document '" + doc.id + "' has one sentence; no distinct pair exists");
  }
  if (scores.size() != doc.size()) throw std::invalid_argument("scores do not match document");
  CandidatePair pair;
  pair.a = decode_greedy(doc, scores, budget);
  for (int attempt = 0; attempt < kCandidateAttempts; ++attempt) {
    pair.b = decode_stochastic(doc, scores, budget, derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    if (pair.b.indices != pair.a.indices) return pair;
  }

  // Lowest |p - 0.5| first, lower index on ties.
  std::vector<std::size_t> by_margin(doc.size());
  std::iota(by_margin.begin(), by_margin.end(), std::size_t{0});
  std::stable_sort(by_margin.begin(), by_margin.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(scores.probs[x] - 0.5) < std::abs(scores.probs[y] - 0.5);
  });
  std::vector<std::size_t> toggled = pair.a.indices;
  const std::size_t target = by_margin.front();
  if (pair.a.contains(target)) {
    if (toggled.size() > 1) {
      toggled.erase(std::find(toggled.begin(), toggled.end(), target));
    } else {
      // Removing the only sentence would leave an empty summary; add the
      // lowest-margin sentence outside A instead.
      auto outside = std::find_if(by_margin.begin(), by_margin.end(),
                                  [&](std::size_t i) { return !pair.a.contains(i); });
      toggled.push_back(*outside);
    }
  } else {
    toggled.push_back(target);
  }
  pair.b = make_selection(doc, std::move(toggled));
  pair.toggled = true;
  return pair;
}

CandidatePair generate_candidate_pair(const PolicyParams& policy, const Document& doc,
                                      const SentenceFeatures& features, std::size_t budget,
                                      std::uint64_t seed) {
  return generate_candidate_pair(doc, score_sentences(policy, features), budget, seed);
}

LabeledDocument label_document(const Document& doc, const FeatureCache& cache, std::size_t budget) {
  LabeledDocument out;
  out.features = cache.sentences(doc);
  out.labels.assign(doc.size(), 0);
  const auto sel = build_extractive_labels(doc, std::min(budget, doc.size()));
  for (std::size_t i : sel.indices) out.labels[i] = 1;
  return out;
}

nnet::Gradient supervised_loss(const nnet::Mlp& scorer, const LabeledDocument& doc) {
  const std::size_t n = doc.features.count();
  if (n == 0 || doc.labels.size() != n) throw std::invalid_argument("label/sentence count mismatch");
  nnet::Gradient grad = nnet::Gradient::zeros_like(scorer);
  nnet::BatchCache cache;
  scorer.forward_batch(doc.features.rows.transpose(), cache);
  const double scale = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd dz(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const double z = cache.preactivations.back()(0, c);
    const double y = doc.labels[i];
    // BCE with logits: softplus(z) - y z = -(y log s + (1-y) log(1-s)).
    grad.loss -= scale * (y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z));
    dz(0, c) = scale * (std::exp(log_sigmoid(z)) - y);
  }
  scorer.backward_batch_from_preactivation(cache, dz, grad, false);
  return grad;
}

double mean_supervised_loss(const nnet::Mlp& scorer, const std::vector<LabeledDocument>& docs) {
  if (docs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& d : docs) total += supervised_loss(scorer, d).loss;
  return total / static_cast<double>(docs.size());
}

PretrainResult pretrain_supervised(PolicyParams init, const std::vector<LabeledDocument>& docs,
                                   const PretrainOptions& options) {
  if (docs.empty()) throw std::invalid_argument("pretraining needs at least one labeled document");
  if (options.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  PretrainResult result;
  nnet::Mlp scorer = init.scorer;
  result.losses.push_back(mean_supervised_loss(scorer, docs));

  const std::size_t batch = options.batch_docs == 0 ? docs.size() : options.batch_docs;
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.seed);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    if (batch < docs.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      nnet::Gradient grad = nnet::Gradient::zeros_like(scorer);
      for (std::size_t j = start; j < end; ++j) grad += supervised_loss(scorer, docs[order[j]]);
      grad *= 1.0 / static_cast<double>(end - start);
      scorer = nnet::train_step(scorer, grad, options.lr);
    }
    result.losses.push_back(mean_supervised_loss(scorer, docs));
  }
  init.scorer = std::move(scorer);
  result.policy = freeze(std::move(init));
  return result;
}

nlohmann::json to_json(const PolicyParams& policy, std::size_t budget) {
  nlohmann::json j = {{"format", "prefsum-policy"},
                      {"version", 1},
                      {"feature_dim", policy.feature_dim},
                      {"budget", budget},
                      {"frozen", policy.frozen()},
                      {"scorer", nnet::to_json(policy.scorer)},
                      {"value", nnet::to_json(policy.value)}};
  if (policy.reference) j["reference"] = nnet::to_json(*policy.reference);
  return j;
}

PolicyParams policy_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "prefsum-policy") throw std::runtime_error("not a policy checkpoint");
  PolicyParams p;
  p.feature_dim = j.at("feature_dim").get<std::size_t>();
  p.scorer = nnet::mlp_from_json(j.at("scorer"));
  p.value = nnet::mlp_from_json(j.at("value"));
  if (j.value("frozen", false)) p.reference = nnet::mlp_from_json(j.at("reference"));
  if (p.scorer.input_size() != p.feature_dim || p.value.input_size() != p.feature_dim) {
    throw nnet::ShapeError("policy checkpoint feature dimension mismatch");
  }
  return p;
}

}  // namespace prefsum
