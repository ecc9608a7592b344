#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefsum/backbone.hpp"
#include "prefsum/corpus.hpp"
#include "prefsum/reward.hpp"

namespace prefsum {

enum class Strategy { kNone, kRandom, kLrs, kDss };

std::string_view to_string(Strategy strategy);
Strategy strategy_from_string(std::string_view name);

struct SamplingConfig {
  Strategy strategy = Strategy::kNone;
  std::size_t k = 1;
  std::uint64_t seed = 23;
  // LRS rescoring cadence in interactions.
  std::size_t lrs_refresh_every = 1;
  // Documents rescored per LRS refresh; 0 means the whole pool.
  std::size_t lrs_subsample = 0;

  // k is forced to 0 for strategy none.
  std::size_t effective_k() const { return strategy == Strategy::kNone ? 0 : k; }
  void validate() const;
};

// Selected documents with the score that ranked them: the LRS reward, the
// DSS cosine distance, or NaN for random picks.
struct OfflineSelection {
  std::vector<const Document*> docs;
  std::vector<double> scores;

  std::size_t size() const { return docs.size(); }
  std::vector<std::string> ids() const;
};

// Offline documents plus the LRS reward cache. Documents are borrowed from
// the Dataset and must outlive the pool.
class OfflinePool {
 public:
  OfflinePool(std::vector<const Document*> docs, const FeatureCache& cache);

  const std::vector<const Document*>& documents() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  const FeatureCache& cache() const { return *cache_; }

  // Interaction index of the last LRS refresh and the rewards it produced
  // (NaN for documents outside the refreshed subsample).
  const std::optional<std::size_t>& lrs_stamp() const { return lrs_stamp_; }
  const std::vector<double>& lrs_rewards() const { return lrs_rewards_; }

  // Recomputes the reward cache when it is missing or stale.
  void refresh_lrs(const PolicyParams& policy, const RewardModel& reward, RewardNormalizer& normalizer,
                   std::size_t budget, std::size_t interaction, const SamplingConfig& config);
  void invalidate_lrs() { lrs_stamp_.reset(); }
  void restore_lrs(std::size_t stamp, std::vector<double> rewards);

 private:
  std::vector<const Document*> docs_;
  const FeatureCache* cache_;
  std::optional<std::size_t> lrs_stamp_;
  std::vector<double> lrs_rewards_;
};

// Uniform without replacement.
OfflineSelection sample_random(const OfflinePool& pool, std::size_t k, std::uint64_t seed);

// The k pool documents whose greedy summaries under the current policy get
// the lowest reward; ties toward the lower document id.
OfflineSelection sample_lrs(OfflinePool& pool, const PolicyParams& policy, const RewardModel& reward,
                            RewardNormalizer& normalizer, std::size_t budget, std::size_t k,
                            std::size_t interaction, const SamplingConfig& config);

// The k pool documents nearest to the online document by cosine distance;
// ties toward the lower document id.
OfflineSelection sample_dss(const OfflinePool& pool, const Document& online_doc, std::size_t k);

// Dispatches on config.strategy.
OfflineSelection sample_offline(OfflinePool& pool, const SamplingConfig& config, const Document& online_doc,
                                const PolicyParams& policy, const RewardModel& reward,
                                RewardNormalizer& normalizer, std::size_t budget, std::size_t interaction);

}  // namespace prefsum
