#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "prefsum/backbone.hpp"
#include "prefsum/features.hpp"
#include "prefsum/ppo.hpp"
#include "prefsum/reward.hpp"
#include "prefsum/sampling.hpp"

namespace prefsum {

enum class SessionMode { kActive, kOnline, kFewshot };
enum class OracleMode { kSimulated, kHuman };

std::string_view to_string(SessionMode mode);
SessionMode session_mode_from_string(std::string_view name);
std::string_view to_string(OracleMode mode);
OracleMode oracle_mode_from_string(std::string_view name);

struct OracleConfig {
  OracleMode mode = OracleMode::kSimulated;
  double nc = 0.1;
  std::uint64_t seed = 29;
  double timeout_seconds = 600.0;
};

struct SplitConfig {
  std::size_t n_offline = 150;
  std::size_t n_online = 32;
  std::uint64_t seed = 7;
};

struct SessionConfig {
  SessionMode mode = SessionMode::kOnline;
  std::size_t budget = 32;
  // Extracted sentences per summary.
  std::size_t summary_budget = 3;
  std::size_t eval_subset = 64;
  std::uint64_t eval_seed = 31;
  std::uint64_t seed = 1;
  // Generate the next query from the pre-update policy while the current
  // feedback is being trained on.
  bool pipeline = false;
};

// Every knob of a run. Serialized by dump-config and stored next to
// checkpoints and logs.
struct RunConfig {
  SplitConfig split;
  FeatureConfig features;
  PolicyConfig policy;
  PretrainOptions pretrain;
  std::size_t label_budget = 3;
  // Pretrain the backbone and reward model on the offline pool as well.
  bool pretrain_on_offline = true;
  RewardConfig reward;
  TripletOptions triplets;
  RewardTrainOptions reward_train;
  FinetuneOptions finetune;
  PPOConfig ppo;
  SamplingConfig sampling;
  OracleConfig oracle;
  SessionConfig session;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace prefsum
