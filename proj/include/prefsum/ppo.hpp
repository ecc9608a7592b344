#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prefsum/backbone.hpp"
#include "prefsum/corpus.hpp"
#include "prefsum/reward.hpp"

namespace prefsum {

struct PPOConfig {
  double clip = 0.2;
  double kl_coef = 0.05;
  double gamma = 0.99;
  double lambda = 0.95;
  int epochs = 4;
  // Steps per minibatch; 0 means all steps of the batch at once.
  std::size_t minibatch_size = 0;
  double lr_policy = 3e-2;
  double lr_value = 1e-2;
  std::uint64_t seed = 17;

  void validate() const;
};

struct RolloutStep {
  std::size_t sentence = 0;
  std::uint8_t action = 0;
  double log_prob = 0.0;
  double ref_log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
  double return_target = 0.0;
  Eigen::VectorXd features;
};

struct Trajectory {
  std::string doc_id;
  std::vector<RolloutStep> steps;
  SummarySelection summary;
  RewardValue terminal;
};

using TerminalReward = std::function<RewardValue(const SummarySelection&)>;

// Samples one summary and records the per-sentence decisions. Step i gets
// -kl_coef * log(pi_theta / pi_theta0) of its taken action; the last step
// also receives the terminal reward.
Trajectory rollout(const PolicyParams& policy, const Document& doc, const SentenceFeatures& features,
                   std::size_t budget, const PPOConfig& config, const TerminalReward& terminal,
                   std::uint64_t seed);

// Terminal reward from the learned reward model; folds the score into the
// normalizer.
Trajectory rollout(const PolicyParams& policy, const RewardModel& reward, RewardNormalizer& normalizer,
                   const Document& doc, const FeatureCache& cache, std::size_t budget,
                   const PPOConfig& config, std::uint64_t seed);

// Raw GAE advantages and return targets for one trajectory (V after the
// last step is 0).
void compute_gae(Trajectory& trajectory, const PPOConfig& config);
// GAE on every trajectory, then advantages standardized over all steps when
// the batch holds at least two trajectories.
void compute_advantages(std::vector<Trajectory>& batch, const PPOConfig& config);

// min(ra A, clip(ra, 1 - eps, 1 + eps) A).
double clipped_surrogate(double ratio, double advantage, double clip);

// Negated mean clipped surrogate over the steps and its gradient with
// respect to the scorer. old_log_probs holds log pi_old of each taken action.
nnet::Gradient surrogate_loss(const nnet::Mlp& scorer, std::span<const RolloutStep* const> steps,
                              double clip);
// Mean 0.5 (V(s) - return)^2 and its gradient.
nnet::Gradient value_loss(const nnet::Mlp& value, std::span<const RolloutStep* const> steps);

struct PPOStats {
  double surrogate_at_entry = 0.0;
  double surrogate_final = 0.0;
  double value_loss_at_entry = 0.0;
  double value_loss_final = 0.0;
  std::size_t steps = 0;
};

struct PPOUpdateResult {
  PolicyParams policy;
  PPOStats stats;
};

// The batch must already carry advantages. The reference network is left
// untouched.
PPOUpdateResult ppo_update(const PolicyParams& policy, const std::vector<Trajectory>& batch,
                           const PPOConfig& config);

}  // namespace prefsum
