#include "prefsum/models.hpp"

#include <fstream>
#include <stdexcept>

namespace prefsum {
namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump() << '\n';
}

}  // namespace

ModelBundle pretrain_models(const Dataset& dataset, const RunConfig& config) {
  auto docs = dataset.split(Split::kPretrain);
  if (config.pretrain_on_offline) {
    const auto offline = dataset.split(Split::kOffline);
    docs.insert(docs.end(), offline.begin(), offline.end());
  }
  if (docs.size() < 2) throw std::invalid_argument("pretraining needs at least two documents");

  ModelBundle b;
  b.featurizer = std::make_shared<Featurizer>(config.features, IdfTable::build(docs));
  FeatureCache cache(b.featurizer);

  std::vector<LabeledDocument> labeled;
  labeled.reserve(docs.size());
  for (const Document* d : docs) {
    labeled.push_back(label_document(*d, cache, std::min(config.label_budget, d->size())));
  }
  auto pre = pretrain_supervised(PolicyParams::create(cache.sentence_dim(), config.policy), labeled,
                                 config.pretrain);
  b.policy = std::move(pre.policy);
  b.pretrain_losses = std::move(pre.losses);

  auto triplets = build_triplets(docs, b.policy, cache, config.triplets);
  b.store = std::move(triplets.store);
  b.warnings = std::move(triplets.warnings);
  if (b.store.size() == 0) throw std::runtime_error("pretraining data produced no reward triplets");

  auto trained = train_reward(RewardModel::create(b.featurizer->dim(), config.reward), b.store,
                              config.reward_train);
  b.reward = std::move(trained.model);
  b.reward_losses = std::move(trained.losses);
  calibrate(b.normalizer, b.reward, b.store);
  return b;
}

void save_models(const ModelBundle& bundle, const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& fc = bundle.featurizer->config();
  write_json({{"semantic_dim", fc.semantic_dim},
              {"keyword_dim", fc.keyword_dim},
              {"top_keywords", fc.top_keywords},
              {"hash_seed", fc.hash_seed}},
             dir / "features.json");
  bundle.featurizer->idf().save(dir / "idf.tsv");
  write_json(to_json(bundle.policy, config.session.summary_budget), dir / "policy.json");
  write_json(to_json(bundle.reward, bundle.normalizer), dir / "reward.json");
  save_triplets(bundle.store, dir / "triplets.jsonl");
}

ModelBundle load_models(const std::filesystem::path& dir, const Dataset& dataset) {
  const auto fj = read_json(dir / "features.json");
  FeatureConfig fc;
  fc.semantic_dim = fj.at("semantic_dim").get<std::size_t>();
  fc.keyword_dim = fj.at("keyword_dim").get<std::size_t>();
  fc.top_keywords = fj.at("top_keywords").get<std::size_t>();
  fc.hash_seed = fj.at("hash_seed").get<std::uint64_t>();

  ModelBundle b;
  b.featurizer = std::make_shared<Featurizer>(fc, IdfTable::load(dir / "idf.tsv"));
  b.policy = policy_from_json(read_json(dir / "policy.json"));
  if (!b.policy.frozen()) throw std::runtime_error("policy checkpoint has no frozen reference");
  if (b.policy.feature_dim != b.featurizer->dim() + kPositionFeatures) {
    throw nnet::ShapeError("policy checkpoint does not match the featurizer");
  }
  std::tie(b.reward, b.normalizer) = reward_from_json(read_json(dir / "reward.json"));
  if (b.reward.encoder.input_size() != b.featurizer->dim()) {
    throw nnet::ShapeError("reward checkpoint does not match the featurizer");
  }
  FeatureCache cache(b.featurizer);
  b.store = load_triplets(dir / "triplets.jsonl", dataset, cache);
  return b;
}

}  // namespace prefsum
