#include "prefsum/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace prefsum {
namespace {

void check_k(std::size_t k, const OfflinePool& pool) {
  if (k > pool.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the offline pool size " +
                                std::to_string(pool.size()));
  }
}

// The k smallest finite scores; ties broken by document id.
OfflineSelection k_smallest(const OfflinePool& pool, const std::vector<double>& scores, std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isnan(scores[i])) idx.push_back(i);
  }
  k = std::min(k, idx.size());
  const auto& docs = pool.documents();
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] < scores[b];
                      return docs[a]->id < docs[b]->id;
                    });
  OfflineSelection out;
  for (std::size_t j = 0; j < k; ++j) {
    out.docs.push_back(docs[idx[j]]);
    out.scores.push_back(scores[idx[j]]);
  }
  return out;
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kNone: return "none";
    case Strategy::kRandom: return "random";
    case Strategy::kLrs: return "lrs";
    case Strategy::kDss: return "dss";
  }
  return "none";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "none") return Strategy::kNone;
  if (name == "random") return Strategy::kRandom;
  if (name == "lrs") return Strategy::kLrs;
  if (name == "dss") return Strategy::kDss;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

void SamplingConfig::validate() const {
  if (strategy != Strategy::kNone && k == 0) {
    throw std::invalid_argument("k must be positive for strategy " + std::string(to_string(strategy)));
  }
  if (lrs_refresh_every == 0) throw std::invalid_argument("lrs_refresh_every must be positive");
}

std::vector<std::string> OfflineSelection::ids() const {
  std::vector<std::string> out;
  out.reserve(docs.size());
  for (const Document* d : docs) out.push_back(d->id);
  return out;
}

OfflinePool::OfflinePool(std::vector<const Document*> docs, const FeatureCache& cache)
    : docs_(std::move(docs)), cache_(&cache) {}

void OfflinePool::refresh_lrs(const PolicyParams& policy, const RewardModel& reward,
                              RewardNormalizer& normalizer, std::size_t budget, std::size_t interaction,
                              const SamplingConfig& config) {
  if (lrs_stamp_ && interaction >= *lrs_stamp_ && interaction - *lrs_stamp_ < config.lrs_refresh_every) {
    return;
  }
  std::vector<std::size_t> members(docs_.size());
  std::iota(members.begin(), members.end(), std::size_t{0});
  if (config.lrs_subsample > 0 && config.lrs_subsample < docs_.size()) {
    Rng rng(derive_seed(config.seed, 0x1000 + interaction));
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(config.lrs_subsample);
    std::sort(members.begin(), members.end());
  }
  lrs_rewards_.assign(docs_.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i : members) {
    const Document& doc = *docs_[i];
    const auto scores = score_sentences(policy, cache_->sentences(doc));
    const auto summary = decode_greedy(doc, scores, budget);
    lrs_rewards_[i] = reward_value(reward, normalizer, cache_->document(doc), cache_->text(summary.text)).value;
  }
  lrs_stamp_ = interaction;
}

void OfflinePool::restore_lrs(std::size_t stamp, std::vector<double> rewards) {
  if (rewards.size() != docs_.size()) throw std::invalid_argument("LRS cache does not match the pool");
  lrs_stamp_ = stamp;
  lrs_rewards_ = std::move(rewards);
}

OfflineSelection sample_random(const OfflinePool& pool, std::size_t k, std::uint64_t seed) {
  check_k(k, pool);
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  OfflineSelection out;
  for (std::size_t j = 0; j < k; ++j) {
    std::swap(idx[j], idx[j + uniform_index(rng, idx.size() - j)]);
    out.docs.push_back(pool.documents()[idx[j]]);
    out.scores.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

OfflineSelection sample_lrs(OfflinePool& pool, const PolicyParams& policy, const RewardModel& reward,
                            RewardNormalizer& normalizer, std::size_t budget, std::size_t k,
                            std::size_t interaction, const SamplingConfig& config) {
  check_k(k, pool);
  if (k == 0) return {};
  pool.refresh_lrs(policy, reward, normalizer, budget, interaction, config);
  return k_smallest(pool, pool.lrs_rewards(), k);
}

OfflineSelection sample_dss(const OfflinePool& pool, const Document& online_doc, std::size_t k) {
  check_k(k, pool);
  if (k == 0) return {};
  const FeatureVector& anchor = pool.cache().document(online_doc);
  std::vector<double> distances;
  distances.reserve(pool.size());
  for (const Document* d : pool.documents()) {
    distances.push_back(cosine_distance(pool.cache().document(*d), anchor));
  }
  return k_smallest(pool, distances, k);
}

OfflineSelection sample_offline(OfflinePool& pool, const SamplingConfig& config, const Document& online_doc,
                                const PolicyParams& policy, const RewardModel& reward,
                                RewardNormalizer& normalizer, std::size_t budget, std::size_t interaction) {
  switch (config.strategy) {
    case Strategy::kNone: return {};
    case Strategy::kRandom: return sample_random(pool, config.k, derive_seed(config.seed, interaction));
    case Strategy::kLrs:
      return sample_lrs(pool, policy, reward, normalizer, budget, config.k, interaction, config);
    case Strategy::kDss: return sample_dss(pool, online_doc, config.k);
  }
  return {};
}

}  // namespace prefsum
