#include "prefsum/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace prefsum {
namespace {

using nlohmann::json;

// Reads optional keys from one config section and rejects keys it was
// never asked about.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (root.contains(name)) {
      node_ = &root.at(name);
      if (!node_->is_object()) throw std::invalid_argument("config section '" + name + "' must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& value) {
    seen_.insert(key);
    if (node_ && node_->contains(key)) {
      try {
        value = node_->at(key).get<T>();
      } catch (const json::exception& e) {
        throw std::invalid_argument("config key " + name_ + "." + key + ": " + e.what());
      }
    }
  }

  template <typename Enum, typename Parse>
  void read_enum(const char* key, Enum& value, Parse parse) {
    std::string text(to_string(value));
    read(key, text);
    value = parse(text);
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items()) {
      if (!seen_.count(key)) throw std::invalid_argument("unknown config key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

std::string_view to_string(SessionMode mode) {
  switch (mode) {
    case SessionMode::kActive: return "active";
    case SessionMode::kOnline: return "online";
    case SessionMode::kFewshot: return "fewshot";
  }
  return "online";
}

SessionMode session_mode_from_string(std::string_view name) {
  if (name == "active") return SessionMode::kActive;
  if (name == "online") return SessionMode::kOnline;
  if (name == "fewshot") return SessionMode::kFewshot;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(OracleMode mode) {
  return mode == OracleMode::kHuman ? "human" : "simulated";
}

OracleMode oracle_mode_from_string(std::string_view name) {
  if (name == "simulated") return OracleMode::kSimulated;
  if (name == "human") return OracleMode::kHuman;
  throw std::invalid_argument("unknown oracle mode '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (features.semantic_dim == 0) throw std::invalid_argument("features.semantic_dim must be positive");
  if (label_budget == 0) throw std::invalid_argument("label_budget must be positive");
  if (session.summary_budget == 0) throw std::invalid_argument("session.summary_budget must be positive");
  if (session.budget == 0) throw std::invalid_argument("session.budget must be positive");
  if (!(oracle.nc >= 0.0 && oracle.nc <= 1.0)) throw std::invalid_argument("oracle.nc must lie in [0, 1]");
  if (!(oracle.timeout_seconds > 0.0)) throw std::invalid_argument("oracle.timeout_seconds must be positive");
  if (reward.margin <= 0.0) throw std::invalid_argument("reward.margin must be positive");
  if (triplets.long_budget <= triplets.short_budget) {
    throw std::invalid_argument("triplets.long_budget must exceed triplets.short_budget");
  }
  ppo.validate();
  sampling.validate();
}

json to_json(const RunConfig& c) {
  return {
      {"split", {{"n_offline", c.split.n_offline}, {"n_online", c.split.n_online}, {"seed", c.split.seed}}},
      {"features",
       {{"semantic_dim", c.features.semantic_dim},
        {"keyword_dim", c.features.keyword_dim},
        {"top_keywords", c.features.top_keywords},
        {"hash_seed", c.features.hash_seed}}},
      {"policy", {{"hidden", c.policy.hidden}, {"seed", c.policy.seed}}},
      {"pretrain",
       {{"epochs", c.pretrain.epochs},
        {"lr", c.pretrain.lr},
        {"batch_docs", c.pretrain.batch_docs},
        {"seed", c.pretrain.seed},
        {"label_budget", c.label_budget},
        {"include_offline", c.pretrain_on_offline}}},
      {"reward",
       {{"hidden", c.reward.hidden},
        {"embedding_dim", c.reward.embedding_dim},
        {"margin", c.reward.margin},
        {"seed", c.reward.seed}}},
      {"triplets",
       {{"long_budget", c.triplets.long_budget},
        {"short_budget", c.triplets.short_budget},
        {"seed", c.triplets.seed},
        {"topic", c.triplets.topic},
        {"length", c.triplets.length},
        {"quality", c.triplets.quality}}},
      {"reward_train",
       {{"epochs", c.reward_train.epochs},
        {"lr", c.reward_train.lr},
        {"batch_size", c.reward_train.batch_size},
        {"seed", c.reward_train.seed}}},
      {"finetune",
       {{"steps", c.finetune.steps},
        {"lr", c.finetune.lr},
        {"batch_size", c.finetune.batch_size},
        {"seed", c.finetune.seed}}},
      {"ppo",
       {{"clip", c.ppo.clip},
        {"kl_coef", c.ppo.kl_coef},
        {"gamma", c.ppo.gamma},
        {"lambda", c.ppo.lambda},
        {"epochs", c.ppo.epochs},
        {"minibatch_size", c.ppo.minibatch_size},
        {"lr_policy", c.ppo.lr_policy},
        {"lr_value", c.ppo.lr_value},
        {"seed", c.ppo.seed}}},
      {"sampling",
       {{"strategy", to_string(c.sampling.strategy)},
        {"k", c.sampling.k},
        {"seed", c.sampling.seed},
        {"lrs_refresh_every", c.sampling.lrs_refresh_every},
        {"lrs_subsample", c.sampling.lrs_subsample}}},
      {"oracle",
       {{"mode", to_string(c.oracle.mode)},
        {"nc", c.oracle.nc},
        {"seed", c.oracle.seed},
        {"timeout_seconds", c.oracle.timeout_seconds}}},
      {"session",
       {{"mode", to_string(c.session.mode)},
        {"budget", c.session.budget},
        {"summary_budget", c.session.summary_budget},
        {"eval_subset", c.session.eval_subset},
        {"eval_seed", c.session.eval_seed},
        {"seed", c.session.seed},
        {"pipeline", c.session.pipeline}}},
  };
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  static const std::set<std::string> kSections = {"split",    "features", "policy", "pretrain",
                                                  "reward",   "triplets", "reward_train",
                                                  "finetune", "ppo",      "sampling",
                                                  "oracle",   "session"};
  for (const auto& [key, _] : j.items()) {
    if (!kSections.count(key)) throw std::invalid_argument("unknown config section '" + key + "'");
  }
  RunConfig c;
  {
    Section s(j, "split");
    s.read("n_offline", c.split.n_offline);
    s.read("n_online", c.split.n_online);
    s.read("seed", c.split.seed);
    s.finish();
  }
  {
    Section s(j, "features");
    s.read("semantic_dim", c.features.semantic_dim);
    s.read("keyword_dim", c.features.keyword_dim);
    s.read("top_keywords", c.features.top_keywords);
    s.read("hash_seed", c.features.hash_seed);
    s.finish();
  }
  {
    Section s(j, "policy");
    s.read("hidden", c.policy.hidden);
    s.read("seed", c.policy.seed);
    s.finish();
  }
  {
    Section s(j, "pretrain");
    s.read("epochs", c.pretrain.epochs);
    s.read("lr", c.pretrain.lr);
    s.read("batch_docs", c.pretrain.batch_docs);
    s.read("seed", c.pretrain.seed);
    s.read("label_budget", c.label_budget);
    s.read("include_offline", c.pretrain_on_offline);
    s.finish();
  }
  {
    Section s(j, "reward");
    s.read("hidden", c.reward.hidden);
    s.read("embedding_dim", c.reward.embedding_dim);
    s.read("margin", c.reward.margin);
    s.read("seed", c.reward.seed);
    s.finish();
  }
  {
    Section s(j, "triplets");
    s.read("long_budget", c.triplets.long_budget);
    s.read("short_budget", c.triplets.short_budget);
    s.read("seed", c.triplets.seed);
    s.read("topic", c.triplets.topic);
    s.read("length", c.triplets.length);
    s.read("quality", c.triplets.quality);
    s.finish();
  }
  {
    Section s(j, "reward_train");
    s.read("epochs", c.reward_train.epochs);
    s.read("lr", c.reward_train.lr);
    s.read("batch_size", c.reward_train.batch_size);
    s.read("seed", c.reward_train.seed);
    s.finish();
  }
  {
    Section s(j, "finetune");
    s.read("steps", c.finetune.steps);
    s.read("lr", c.finetune.lr);
    s.read("batch_size", c.finetune.batch_size);
    s.read("seed", c.finetune.seed);
    s.finish();
  }
  {
    Section s(j, "ppo");
    s.read("clip", c.ppo.clip);
    s.read("kl_coef", c.ppo.kl_coef);
    s.read("gamma", c.ppo.gamma);
    s.read("lambda", c.ppo.lambda);
    s.read("epochs", c.ppo.epochs);
    s.read("minibatch_size", c.ppo.minibatch_size);
    s.read("lr_policy", c.ppo.lr_policy);
    s.read("lr_value", c.ppo.lr_value);
    s.read("seed", c.ppo.seed);
    s.finish();
  }
  {
    Section s(j, "sampling");
    s.read_enum("strategy", c.sampling.strategy, strategy_from_string);
    s.read("k", c.sampling.k);
    s.read("seed", c.sampling.seed);
    s.read("lrs_refresh_every", c.sampling.lrs_refresh_every);
    s.read("lrs_subsample", c.sampling.lrs_subsample);
    s.finish();
  }
  {
    Section s(j, "oracle");
    s.read_enum("mode", c.oracle.mode, oracle_mode_from_string);
    s.read("nc", c.oracle.nc);
    s.read("seed", c.oracle.seed);
    s.read("timeout_seconds", c.oracle.timeout_seconds);
    s.finish();
  }
  {
    Section s(j, "session");
    s.read_enum("mode", c.session.mode, session_mode_from_string);
    s.read("budget", c.session.budget);
    s.read("summary_budget", c.session.summary_budget);
    s.read("eval_subset", c.session.eval_subset);
    s.read("eval_seed", c.session.eval_seed);
    s.read("seed", c.session.seed);
    s.read("pipeline", c.session.pipeline);
    s.finish();
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config '" + path.string() + "'");
  out << to_json(config).dump(2) << '\n';
}

}  // namespace prefsum
