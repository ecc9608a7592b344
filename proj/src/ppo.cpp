#include "prefsum/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace prefsum {

void PPOConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must lie in (0, 1)");
  if (!(kl_coef >= 0.0)) throw std::invalid_argument("kl_coef must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(lr_policy >= 0.0) || !(lr_value >= 0.0)) throw std::invalid_argument("learning rates must be non-negative");
}

Trajectory rollout(const PolicyParams& policy, const Document& doc, const SentenceFeatures& features,
                   std::size_t budget, const PPOConfig& config, const TerminalReward& terminal,
                   std::uint64_t seed) {
  if (!policy.frozen()) throw std::logic_error("rollout needs a frozen reference policy");
  const std::size_t n = features.count();
  if (n == 0 || n != doc.size()) throw std::invalid_argument("features do not match document '" + doc.id + "'");

  const SentenceScores scores = score_sentences(policy.scorer, features);
  const SentenceScores ref = score_sentences(policy.reference_scorer(), features);
  Rng rng(seed);
  const auto actions = sample_actions(scores, budget, rng);

  Trajectory t;
  t.doc_id = doc.id;
  std::vector<std::size_t> chosen;
  t.steps.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    RolloutStep& s = t.steps[i];
    s.sentence = i;
    s.action = actions[i];
    s.log_prob = action_log_prob(scores.logits[i], s.action);
    s.ref_log_prob = action_log_prob(ref.logits[i], s.action);
    s.features = features.row(i);
    s.value = policy.value.forward(s.features)[0];
    s.reward = -config.kl_coef * (s.log_prob - s.ref_log_prob);
    if (s.action) chosen.push_back(i);
  }
  t.summary = make_selection(doc, chosen);
  t.terminal = terminal(t.summary);
  t.steps.back().reward += t.terminal.value;
  return t;
}

Trajectory rollout(const PolicyParams& policy, const RewardModel& reward, RewardNormalizer& normalizer,
                   const Document& doc, const FeatureCache& cache, std::size_t budget,
                   const PPOConfig& config, std::uint64_t seed) {
  const FeatureVector& doc_features = cache.document(doc);
  return rollout(policy, doc, cache.sentences(doc), budget, config,
                 [&](const SummarySelection& s) {
                   return reward_value(reward, normalizer, doc_features, cache.text(s.text));
                 },
                 seed);
}

void compute_gae(Trajectory& trajectory, const PPOConfig& config) {
  double next_value = 0.0;
  double running = 0.0;
  for (std::size_t i = trajectory.steps.size(); i-- > 0;) {
    RolloutStep& s = trajectory.steps[i];
    const double delta = s.reward + config.gamma * next_value - s.value;
    running = delta + config.gamma * config.lambda * running;
    s.advantage = running;
    s.return_target = running + s.value;
    next_value = s.value;
  }
}

void compute_advantages(std::vector<Trajectory>& batch, const PPOConfig& config) {
  for (auto& t : batch) compute_gae(t, config);
  if (batch.size() < 2) return;
  double sum = 0.0;
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& t : batch) {
    for (const auto& s : t.steps) {
      sum += s.advantage;
      sq += s.advantage * s.advantage;
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  const double var = std::max(0.0, sq / static_cast<double>(count) - mean * mean);
  const double sd = std::sqrt(var);
  for (auto& t : batch) {
    for (auto& s : t.steps) s.advantage = sd > 1e-12 ? (s.advantage - mean) / sd : s.advantage - mean;
  }
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

namespace {

Eigen::MatrixXd step_columns(std::span<const RolloutStep* const> steps) {
  Eigen::MatrixXd x(steps.front()->features.size(), static_cast<Eigen::Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = steps[i]->features;
  return x;
}

}  // namespace

nnet::Gradient surrogate_loss(const nnet::Mlp& scorer, std::span<const RolloutStep* const> steps,
                              double clip) {
  if (steps.empty()) throw std::invalid_argument("surrogate over an empty batch");
  nnet::Gradient grad = nnet::Gradient::zeros_like(scorer);
  nnet::BatchCache cache;
  scorer.forward_batch(step_columns(steps), cache);
  const double scale = 1.0 / static_cast<double>(steps.size());
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const RolloutStep* s = steps[i];
    const auto c = static_cast<Eigen::Index>(i);
    const double z = cache.preactivations.back()(0, c);
    const double log_prob = action_log_prob(z, s->action);
    const double ratio = std::exp(log_prob - s->log_prob);
    const double a = s->advantage;
    const double term = clipped_surrogate(ratio, a, clip);
    if (!std::isfinite(term)) throw std::domain_error("non-finite PPO surrogate");
    grad.loss -= scale * term;
    const bool clipped = (a > 0.0 && ratio > 1.0 + clip) || (a < 0.0 && ratio < 1.0 - clip);
    if (clipped) continue;
    // d log pi(y|z)/dz = y - sigmoid(z).
    const double p = std::exp(log_sigmoid(z));
    dz(0, c) = -scale * a * ratio * (static_cast<double>(s->action) - p);
  }
  scorer.backward_batch_from_preactivation(cache, dz, grad, false);
  return grad;
}

nnet::Gradient value_loss(const nnet::Mlp& value, std::span<const RolloutStep* const> steps) {
  if (steps.empty()) throw std::invalid_argument("value loss over an empty batch");
  nnet::Gradient grad = nnet::Gradient::zeros_like(value);
  nnet::BatchCache cache;
  const Eigen::MatrixXd v = value.forward_batch(step_columns(steps), cache);
  const double scale = 1.0 / static_cast<double>(steps.size());
  Eigen::MatrixXd dv(1, static_cast<Eigen::Index>(steps.size()));
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const double err = v(0, c) - steps[i]->return_target;
    grad.loss += scale * 0.5 * err * err;
    dv(0, c) = scale * err;
  }
  value.backward_batch(cache, dv, grad, false);
  return grad;
}

PPOUpdateResult ppo_update(const PolicyParams& policy, const std::vector<Trajectory>& batch,
                           const PPOConfig& config) {
  config.validate();
  if (batch.empty()) throw std::invalid_argument("ppo_update needs at least one trajectory");
  std::vector<const RolloutStep*> steps;
  for (const auto& t : batch) {
    for (const auto& s : t.steps) steps.push_back(&s);
  }
  if (steps.empty()) throw std::invalid_argument("ppo_update batch has no steps");

  PPOUpdateResult result;
  result.policy = policy;
  result.stats.steps = steps.size();
  result.stats.surrogate_at_entry = -surrogate_loss(policy.scorer, steps, config.clip).loss;
  result.stats.value_loss_at_entry = value_loss(policy.value, steps).loss;

  const std::size_t mb = config.minibatch_size == 0 ? steps.size() : config.minibatch_size;
  Rng rng(config.seed);
  std::vector<const RolloutStep*> order = steps;
  std::vector<const RolloutStep*> chunk;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (mb < order.size()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      chunk.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto gp = surrogate_loss(result.policy.scorer, chunk, config.clip);
      const auto gv = value_loss(result.policy.value, chunk);
      result.policy.scorer = nnet::train_step(result.policy.scorer, gp, config.lr_policy);
      result.policy.value = nnet::train_step(result.policy.value, gv, config.lr_value);
    }
  }
  result.stats.surrogate_final = -surrogate_loss(result.policy.scorer, steps, config.clip).loss;
  result.stats.value_loss_final = value_loss(result.policy.value, steps).loss;
  return result;
}

}  // namespace prefsum
