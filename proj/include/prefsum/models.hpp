#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "prefsum/backbone.hpp"
#include "prefsum/config.hpp"
#include "prefsum/corpus.hpp"
#include "prefsum/features.hpp"
#include "prefsum/reward.hpp"

namespace prefsum {

// Everything a session starts from: the featurizer, the supervised policy
// (frozen as its own reference), and the calibrated reward model with the
// triplets it was trained on.
struct ModelBundle {
  std::shared_ptr<const Featurizer> featurizer;
  PolicyParams policy;
  RewardModel reward;
  RewardNormalizer normalizer;
  TripletStore store;
  std::vector<std::string> warnings;
  std::vector<double> pretrain_losses;
  std::vector<double> reward_losses;
};

// IDF, supervised policy and reward model, all from the pretrain split plus
// the offline pool when config.pretrain_on_offline is set.
ModelBundle pretrain_models(const Dataset& dataset, const RunConfig& config);

// Directory layout: idf.tsv, policy.json, reward.json, triplets.jsonl,
// features.json.
void save_models(const ModelBundle& bundle, const RunConfig& config, const std::filesystem::path& dir);
ModelBundle load_models(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace prefsum
