#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prefsum/corpus.hpp"
#include "prefsum/features.hpp"
#include "prefsum/nnet.hpp"
#include "prefsum/random.hpp"

namespace prefsum {

// Relative position, is-first, is-last.
inline constexpr std::size_t kPositionFeatures = 3;

// One row per sentence: featurize(sentence) followed by the position block.
struct SentenceFeatures {
  std::string doc_id;
  Eigen::MatrixXd rows;

  std::size_t count() const { return static_cast<std::size_t>(rows.rows()); }
  Eigen::VectorXd row(std::size_t i) const { return rows.row(static_cast<Eigen::Index>(i)).transpose(); }
};

SentenceFeatures sentence_features(const Featurizer& featurizer, const Document& doc);

// Memoizes per-document features. Safe for concurrent use; returned
// references stay valid for the cache's lifetime.
class FeatureCache {
 public:
  explicit FeatureCache(std::shared_ptr<const Featurizer> featurizer);

  const SentenceFeatures& sentences(const Document& doc) const;
  const FeatureVector& document(const Document& doc) const;
  FeatureVector text(std::string_view text) const { return featurizer_->featurize(text); }

  const Featurizer& featurizer() const { return *featurizer_; }
  std::shared_ptr<const Featurizer> featurizer_ptr() const { return featurizer_; }
  std::size_t sentence_dim() const { return featurizer_->dim() + kPositionFeatures; }

 private:
  std::shared_ptr<const Featurizer> featurizer_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, SentenceFeatures> sentences_;
  mutable std::unordered_map<std::string, FeatureVector> documents_;
};

struct PolicyConfig {
  std::size_t hidden = 64;
  std::uint64_t seed = 1;
};

// The extractive policy: a sigmoid sentence scorer, a value head over the
// same sentence features, and the frozen supervised reference.
struct PolicyParams {
  std::size_t feature_dim = 0;
  nnet::Mlp scorer;
  nnet::Mlp value;
  std::optional<nnet::Mlp> reference;

  static PolicyParams create(std::size_t feature_dim, const PolicyConfig& config = {});
  bool frozen() const { return reference.has_value(); }
  const nnet::Mlp& reference_scorer() const;
};

// Copies the scorer into the reference slot. Throws std::logic_error when
// the reference is already set.
PolicyParams freeze(PolicyParams policy);

struct SentenceScores {
  std::string doc_id;
  std::vector<double> logits;
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
};

// Numerically stable log sigma(z).
double log_sigmoid(double logit);
// log pi(action | sentence) for a Bernoulli policy with the given logit.
inline double action_log_prob(double logit, std::uint8_t action) {
  return action ? log_sigmoid(logit) : log_sigmoid(-logit);
}

SentenceScores score_sentences(const nnet::Mlp& scorer, const SentenceFeatures& features);
SentenceScores score_sentences(const PolicyParams& policy, const SentenceFeatures& features);

// The min(m, n) most probable sentences, lower index first on ties,
// returned ascending.
std::vector<std::size_t> greedy_indices(const SentenceScores& scores, std::size_t budget);
SummarySelection decode_greedy(const Document& doc, const SentenceScores& scores,
                               std::size_t budget);

// Sequential Bernoulli draws y_i ~ p_i, then repaired: an empty draw gets
// the argmax sentence, a draw above the budget keeps its m most probable
// members. Returns the per-sentence actions actually taken.
std::vector<std::uint8_t> sample_actions(const SentenceScores& scores, std::size_t budget, Rng& rng);
SummarySelection decode_stochastic(const Document& doc, const SentenceScores& scores,
                                   std::size_t budget, std::uint64_t seed);

struct CandidatePair {
  SummarySelection a;
  SummarySelection b;
  // True when B came from the lowest-margin toggle instead of sampling.
  bool toggled = false;
};

inline constexpr int kCandidateAttempts = 20;

// A = greedy decode; B = stochastic decode redrawn until it differs from A,
// falling back to toggling the lowest-margin sentence. Throws
// std::invalid_argument for single-sentence documents.
CandidatePair generate_candidate_pair(const Document& doc, const SentenceScores& scores,
                                      std::size_t budget, std::uint64_t seed);
CandidatePair generate_candidate_pair(const PolicyParams& policy, const Document& doc,
                                      const SentenceFeatures& features, std::size_t budget,
                                      std::uint64_t seed);

struct LabeledDocument {
  SentenceFeatures features;
  std::vector<std::uint8_t> labels;
};

LabeledDocument label_document(const Document& doc, const FeatureCache& cache, std::size_t budget);

// Mean per-sentence binary cross-entropy of the scorer on one document and
// its gradient.
nnet::Gradient supervised_loss(const nnet::Mlp& scorer, const LabeledDocument& doc);

struct PretrainOptions {
  int epochs = 30;
  double lr = 1e-2;
  // Documents per gradient step; 0 means full batch.
  std::size_t batch_docs = 1;
  std::uint64_t seed = 7;
};

struct PretrainResult {
  PolicyParams policy;
  // Mean loss over the training set before training, then after each epoch.
  std::vector<double> losses;
};

// Minimizes sentence-level BCE and freezes the result as the reference.
PretrainResult pretrain_supervised(PolicyParams init, const std::vector<LabeledDocument>& docs,
                                   const PretrainOptions& options);

double mean_supervised_loss(const nnet::Mlp& scorer, const std::vector<LabeledDocument>& docs);

nlohmann::json to_json(const PolicyParams& policy, std::size_t budget);
PolicyParams policy_from_json(const nlohmann::json& j);

}  // namespace prefsum
