#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prefsum/backbone.hpp"
#include "prefsum/corpus.hpp"
#include "prefsum/features.hpp"
#include "prefsum/nnet.hpp"

namespace prefsum {

enum class Objective { kTopic = 0, kLength = 1, kQuality = 2 };
inline constexpr std::array<Objective, 3> kObjectives = {Objective::kTopic, Objective::kLength,
                                                         Objective::kQuality};

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view name);

// (D, preferred, dispreferred) with the preferred summary ranked first.
struct TripletExample {
  std::string doc_id;
  std::string preferred_text;
  std::string dispreferred_text;
  Objective objective = Objective::kQuality;
  FeatureVector doc_features;
  FeatureVector preferred_features;
  FeatureVector dispreferred_features;
};

TripletExample make_triplet(const Document& doc, std::string preferred, std::string dispreferred,
                            Objective objective, const FeatureCache& cache);

// Triplets grouped by objective plus the registry of known documents.
// Flat indices run over topic, then length, then quality triplets.
class TripletStore {
 public:
  void add(TripletExample triplet);
  void register_document(const std::string& doc_id, const FeatureVector& features);
  bool knows_document(const std::string& doc_id) const { return documents_.count(doc_id) > 0; }

  const std::vector<TripletExample>& triplets(Objective objective) const {
    return groups_[static_cast<std::size_t>(objective)];
  }
  std::size_t size() const;
  std::size_t count(Objective objective) const { return triplets(objective).size(); }
  const TripletExample& at(std::size_t flat_index) const;
  std::size_t flat_index(Objective objective, std::size_t i) const;

  // Distinct document ids and summary texts referenced by the union.
  std::size_t document_count() const { return documents_.size(); }
  std::size_t summary_count() const;

 private:
  std::array<std::vector<TripletExample>, 3> groups_;
  std::unordered_map<std::string, FeatureVector> documents_;
};

struct TripletOptions {
  std::size_t long_budget = 5;
  std::size_t short_budget = 1;
  std::uint64_t seed = 11;
  bool topic = true;
  bool length = true;
  bool quality = true;
};

struct TripletBuildResult {
  TripletStore store;
  std::vector<std::string> warnings;
};

// One triplet per objective per document: topic pairs each gold summary
// with another document's gold through a random derangement, length pairs
// a long greedy decode with a short one, quality pairs the gold with a
// greedy decode of the gold's sentence count.
TripletBuildResult build_triplets(const std::vector<const Document*>& docs,
                                  const PolicyParams& policy, const FeatureCache& cache,
                                  const TripletOptions& options = {});

struct RewardConfig {
  std::size_t hidden = 64;
  std::size_t embedding_dim = 32;
  double margin = 0.2;
  std::uint64_t seed = 3;
};

// phi(x) = encode(f(x)); decode maps the embedding back to feature space.
struct RewardModel {
  nnet::Mlp encoder;
  nnet::Mlp decoder;
  double margin = 0.2;

  static RewardModel create(std::size_t feature_dim, const RewardConfig& config = {});
};

Eigen::VectorXd encode_doc(const RewardModel& model, const FeatureVector& features);

struct RomsrLoss {
  double total = 0.0;
  double autoencoder = 0.0;
  double respective_order = 0.0;
};

struct RomsrGradient {
  RomsrLoss loss;
  nnet::Gradient encoder;
  nnet::Gradient decoder;
};

// L = L_AE + L_RO over a batch. L_AE sums ||f(x) - decode(phi(x))|| over
// the distinct documents and summaries of the batch; L_RO sums the hinge
// max(0, d(phi D, phi S) - d(phi D, phi S') + margin).
enum class RomsrTerms { kBoth, kAutoencoder, kRespectiveOrder };
RomsrGradient romsr_loss_and_gradient(const RewardModel& model,
                                      std::span<const TripletExample* const> batch,
                                      RomsrTerms terms = RomsrTerms::kBoth);
RomsrLoss romsr_loss(const RewardModel& model, std::span<const TripletExample* const> batch,
                     RomsrTerms terms = RomsrTerms::kBoth);

struct RewardTrainOptions {
  int epochs = 100;
  double lr = 1e-2;
  std::size_t batch_size = 16;
  std::uint64_t seed = 5;
};

struct RewardTrainResult {
  RewardModel model;
  // Mean per-triplet loss over the store before training, then per epoch.
  std::vector<double> losses;
};

RewardTrainResult train_reward(RewardModel model, const TripletStore& store,
                               const RewardTrainOptions& options);

double embedding_distance(const RewardModel& model, const FeatureVector& doc,
                          const FeatureVector& summary);
// 1 / (1 + exp(d)), in (0, 0.5].
double score_from_distance(double distance);
double score_pair(const RewardModel& model, const FeatureVector& doc, const FeatureVector& summary);

struct RewardValue {
  double value = 0.0;
  double score = 0.0;
  bool degenerate = false;
};

// Running extrema of every score seen so far.
class RewardNormalizer {
 public:
  bool initialized() const { return observed_ > 0; }
  double score_min() const { return min_; }
  double score_max() const { return max_; }
  std::size_t observed() const { return observed_; }

  void observe(double score);
  // Maps a score with the current extrema without recording it.
  RewardValue normalize(double score) const;
  // Normalizes with the current extrema, then folds the score in.
  RewardValue normalize_and_observe(double score);

  static RewardNormalizer restore(double score_min, double score_max, std::size_t observed);
  friend bool operator==(const RewardNormalizer&, const RewardNormalizer&) = default;

 private:
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
  std::size_t observed_ = 0;
};

// Scores every document-summary pair in the store into the normalizer.
void calibrate(RewardNormalizer& normalizer, const RewardModel& model, const TripletStore& store);

// Read-only variant of reward_value for logging and evaluation.
RewardValue peek_reward(const RewardModel& model, const RewardNormalizer& normalizer,
                        const FeatureVector& doc, const FeatureVector& summary);

// r^M in [0, 1]. Throws std::logic_error on an uninitialized normalizer;
// a degenerate normalizer (max == min) yields 0.5 with the flag set.
RewardValue reward_value(const RewardModel& model, RewardNormalizer& normalizer,
                         const FeatureVector& doc, const FeatureVector& summary);

enum class Choice { kFirst, kSecond };

struct PreferencePrediction {
  Choice choice = Choice::kFirst;
  bool tie = false;
  double first_distance = 0.0;
  double second_distance = 0.0;
};

// The summary nearer to the document in embedding space; exact ties go to
// the first argument.
PreferencePrediction predict_preference(const RewardModel& model, const FeatureVector& doc,
                                        const FeatureVector& first, const FeatureVector& second);

struct FinetuneOptions {
  int steps = 10;
  double lr = 1e-2;
  std::size_t batch_size = 16;
  std::uint64_t seed = 13;
};

// Appends the feedback triplet (tagged quality) and takes `steps` gradient
// steps on minibatches that always include it.
RewardModel finetune_on_feedback(const RewardModel& model, TripletStore& store,
                                 TripletExample feedback, const FinetuneOptions& options);

// Fraction of triplets whose preferred summary the model ranks first.
double preference_accuracy(const RewardModel& model, std::span<const TripletExample> triplets);

nlohmann::json to_json(const RewardModel& model, const RewardNormalizer& normalizer);
std::pair<RewardModel, RewardNormalizer> reward_from_json(const nlohmann::json& j);

// Line-delimited {doc_id, preferred_text, dispreferred_text, objective}.
void save_triplets(const TripletStore& store, const std::filesystem::path& path);
TripletStore load_triplets(const std::filesystem::path& path, const Dataset& dataset,
                           const FeatureCache& cache);

}  // namespace prefsum
