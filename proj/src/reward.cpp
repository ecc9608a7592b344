#include "prefsum/reward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace prefsum {
namespace {

using nlohmann::json;
using nnet::Activation;

// Random cyclic permutation (Sattolo): a derangement for n >= 2.
std::vector<std::size_t> derangement(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i-- > 1;) std::swap(p[i], p[uniform_index(rng, i)]);
  return p;
}

}  // namespace

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kTopic: return "topic";
    case Objective::kLength: return "length";
    case Objective::kQuality: return "quality";
  }
  return "quality";
}

Objective objective_from_string(std::string_view name) {
  if (name == "topic") return Objective::kTopic;
  if (name == "length") return Objective::kLength;
  if (name == "quality") return Objective::kQuality;
  throw std::invalid_argument("unknown objective '" + std::string(name) + "'");
}

TripletExample make_triplet(const Document& doc, std::string preferred, std::string dispreferred,
                            Objective objective, const FeatureCache& cache) {
  TripletExample t;
  t.doc_id = doc.id;
  t.objective = objective;
  t.doc_features = cache.document(doc);
  t.preferred_features = cache.text(preferred);
  t.dispreferred_features = cache.text(dispreferred);
  t.preferred_text = std::move(preferred);
  t.dispreferred_text = std::move(dispreferred);
  return t;
}

void TripletStore::add(TripletExample triplet) {
  documents_.try_emplace(triplet.doc_id, triplet.doc_features);
  groups_[static_cast<std::size_t>(triplet.objective)].push_back(std::move(triplet));
}

void TripletStore::register_document(const std::string& doc_id, const FeatureVector& features) {
  documents_.try_emplace(doc_id, features);
}

std::size_t TripletStore::size() const {
  return groups_[0].size() + groups_[1].size() + groups_[2].size();
}

const TripletExample& TripletStore::at(std::size_t flat_index) const {
  for (const auto& group : groups_) {
    if (flat_index < group.size()) return group[flat_index];
    flat_index -= group.size();
  }
  throw std::out_of_range("triplet index out of range");
}

std::size_t TripletStore::flat_index(Objective objective, std::size_t i) const {
  std::size_t offset = 0;
  for (std::size_t g = 0; g < static_cast<std::size_t>(objective); ++g) offset += groups_[g].size();
  return offset + i;
}

std::size_t TripletStore::summary_count() const {
  std::set<std::string_view> texts;
  for (const auto& group : groups_) {
    for (const auto& t : group) {
      texts.insert(t.preferred_text);
      texts.insert(t.dispreferred_text);
    }
  }
  return texts.size();
}

TripletBuildResult build_triplets(const std::vector<const Document*>& docs,
                                  const PolicyParams& policy, const FeatureCache& cache,
                                  const TripletOptions& options) {
  if (options.topic && docs.size() < 2) {
    throw std::invalid_argument("topic triplets need at least two documents");
  }
  for (const Document* d : docs) {
    if (!d->has_gold()) throw CorpusError("document '" + d->id + "' has no gold_summary");
  }
  TripletBuildResult result;
  Rng rng(options.seed);
  const auto partner = derangement(docs.size(), rng);

  for (std::size_t i = 0; i < docs.size(); ++i) {
    const Document& doc = *docs[i];
    const std::string gold = doc.gold_text();
    result.store.register_document(doc.id, cache.document(doc));
    const auto scores = score_sentences(policy, cache.sentences(doc));

    if (options.topic) {
      std::string foreign = docs[partner[i]]->gold_text();
      if (foreign == gold) {
        result.warnings.push_back("topic triplet for '" + doc.id + "' skipped: identical gold summaries");
      } else {
        result.store.add(make_triplet(doc, gold, std::move(foreign), Objective::kTopic, cache));
      }
    }
    if (options.length) {
      auto long_sel = decode_greedy(doc, scores, options.long_budget);
      auto short_sel = decode_greedy(doc, scores, options.short_budget);
      if (long_sel.text == short_sel.text) {
        result.warnings.push_back("length triplet for '" + doc.id +
                                  "' skipped: long and short summaries coincide");
      } else {
        result.store.add(
            make_triplet(doc, std::move(long_sel.text), std::move(short_sel.text), Objective::kLength, cache));
      }
    }
    if (options.quality) {
      const std::size_t m = std::max<std::size_t>(1, doc.gold_summary->size());
      auto machine = decode_greedy(doc, scores, m);
      if (machine.text == gold) {
        result.warnings.push_back("quality triplet for '" + doc.id +
                                  "' skipped: machine summary equals the gold summary");
      } else {
        result.store.add(make_triplet(doc, gold, std::move(machine.text), Objective::kQuality, cache));
      }
    }
  }
  return result;
}

RewardModel RewardModel::create(std::size_t feature_dim, const RewardConfig& config) {
  if (config.margin <= 0.0) throw std::invalid_argument("margin must be positive");
  RewardModel m;
  m.margin = config.margin;
  m.encoder = nnet::Mlp::create({feature_dim, config.hidden, config.embedding_dim},
                                {Activation::kTanh, Activation::kIdentity}, derive_seed(config.seed, 1));
  m.decoder = nnet::Mlp::create({config.embedding_dim, config.hidden, feature_dim},
                                {Activation::kTanh, Activation::kIdentity}, derive_seed(config.seed, 2));
  return m;
}

Eigen::VectorXd encode_doc(const RewardModel& model, const FeatureVector& features) {
  return model.encoder.forward(features.values);
}

namespace {

RomsrGradient romsr_evaluate(const RewardModel& model, std::span<const TripletExample* const> batch,
                             RomsrTerms terms, bool with_gradient) {
  RomsrGradient out;
  out.encoder = nnet::Gradient::zeros_like(model.encoder);
  out.decoder = nnet::Gradient::zeros_like(model.decoder);
  if (batch.empty()) throw std::invalid_argument("romsr_loss needs a nonempty batch");

  // Distinct members of D u S in this batch, one column each.
  std::unordered_map<std::string, Eigen::Index> slot;
  std::vector<const FeatureVector*> members;
  auto intern = [&](std::string key, const FeatureVector& f) {
    auto [it, fresh] = slot.try_emplace(std::move(key), static_cast<Eigen::Index>(members.size()));
    if (fresh) members.push_back(&f);
    return it->second;
  };
  struct Ids {
    Eigen::Index doc, pos, neg;
  };
  std::vector<Ids> ids;
  ids.reserve(batch.size());
  for (const TripletExample* t : batch) {
    ids.push_back({intern("d\x1f" + t->doc_id, t->doc_features),
                   intern("s\x1f" + t->preferred_text, t->preferred_features),
                   intern("s\x1f" + t->dispreferred_text, t->dispreferred_features)});
  }

  const auto m = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd features(static_cast<Eigen::Index>(model.encoder.input_size()), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (members[static_cast<std::size_t>(j)]->values.size() != features.rows()) {
      throw nnet::ShapeError("feature vector does not match the reward encoder");
    }
    features.col(j) = members[static_cast<std::size_t>(j)]->values;
  }
  nnet::BatchCache encoder_cache;
  const Eigen::MatrixXd embedding = model.encoder.forward_batch(features, encoder_cache);
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(embedding.rows(), m);

  if (terms != RomsrTerms::kRespectiveOrder) {
    nnet::BatchCache decoder_cache;
    const Eigen::MatrixXd residual = features - model.decoder.forward_batch(embedding, decoder_cache);
    Eigen::MatrixXd d_recon = Eigen::MatrixXd::Zero(residual.rows(), m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double norm = residual.col(j).norm();
      out.loss.autoencoder += norm;
      if (norm > 0.0) d_recon.col(j) = -residual.col(j) / norm;
    }
    if (with_gradient) grad += model.decoder.backward_batch(decoder_cache, d_recon, out.decoder);
  }

  if (terms != RomsrTerms::kAutoencoder) {
    for (const auto& id : ids) {
      const Eigen::VectorXd dp_vec = embedding.col(id.doc) - embedding.col(id.pos);
      const Eigen::VectorXd dn_vec = embedding.col(id.doc) - embedding.col(id.neg);
      const double dp = dp_vec.norm();
      const double dn = dn_vec.norm();
      const double hinge = dp - dn + model.margin;
      if (hinge <= 0.0) continue;
      out.loss.respective_order += hinge;
      if (dp > 0.0) {
        grad.col(id.doc) += dp_vec / dp;
        grad.col(id.pos) -= dp_vec / dp;
      }
      if (dn > 0.0) {
        grad.col(id.doc) -= dn_vec / dn;
        grad.col(id.neg) += dn_vec / dn;
      }
    }
  }

  if (with_gradient) model.encoder.backward_batch(encoder_cache, grad, out.encoder, false);
  out.loss.total = out.loss.autoencoder + out.loss.respective_order;
  out.encoder.loss = out.loss.total;
  out.decoder.loss = out.loss.total;
  return out;
}

}  // namespace

RomsrGradient romsr_loss_and_gradient(const RewardModel& model,
                                      std::span<const TripletExample* const> batch, RomsrTerms terms) {
  return romsr_evaluate(model, batch, terms, true);
}

RomsrLoss romsr_loss(const RewardModel& model, std::span<const TripletExample* const> batch,
                     RomsrTerms terms) {
  return romsr_evaluate(model, batch, terms, false).loss;
}

namespace {

double mean_store_loss(const RewardModel& model, const TripletStore& store) {
  std::vector<const TripletExample*> all;
  for (std::size_t i = 0; i < store.size(); ++i) all.push_back(&store.at(i));
  return romsr_loss(model, all).total / static_cast<double>(all.size());
}

RewardModel apply_step(const RewardModel& model, RomsrGradient grad, double lr, std::size_t batch) {
  const double scale = 1.0 / static_cast<double>(batch);
  grad.encoder *= scale;
  grad.decoder *= scale;
  RewardModel next;
  next.margin = model.margin;
  next.encoder = nnet::train_step(model.encoder, grad.encoder, lr);
  next.decoder = nnet::train_step(model.decoder, grad.decoder, lr);
  return next;
}

}  // namespace

RewardTrainResult train_reward(RewardModel model, const TripletStore& store,
                               const RewardTrainOptions& options) {
  if (store.size() == 0) throw std::invalid_argument("train_reward needs a nonempty triplet store");
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  RewardTrainResult result;
  result.losses.push_back(mean_store_loss(model, store));
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.seed);
  std::vector<const TripletExample*> batch;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      for (std::size_t j = start; j < end; ++j) batch.push_back(&store.at(order[j]));
      model = apply_step(model, romsr_loss_and_gradient(model, batch), options.lr, batch.size());
    }
    result.losses.push_back(mean_store_loss(model, store));
  }
  result.model = std::move(model);
  return result;
}

double embedding_distance(const RewardModel& model, const FeatureVector& doc,
                          const FeatureVector& summary) {
  return (encode_doc(model, doc) - encode_doc(model, summary)).norm();
}

double score_from_distance(double distance) {
  // exp(-d) / (1 + exp(-d)) == 1 / (1 + exp(d)), without overflow for large d.
  const double e = std::exp(-distance);
  return e / (1.0 + e);
}

double score_pair(const RewardModel& model, const FeatureVector& doc, const FeatureVector& summary) {
  return score_from_distance(embedding_distance(model, doc, summary));
}

void RewardNormalizer::observe(double score) {
  if (!std::isfinite(score)) throw std::domain_error("non-finite reward score");
  min_ = std::min(min_, score);
  max_ = std::max(max_, score);
  ++observed_;
}

RewardValue RewardNormalizer::normalize_and_observe(double score) {
  const RewardValue v = normalize(score);
  observe(score);
  return v;
}

RewardValue RewardNormalizer::normalize(double score) const {
  if (!initialized()) throw std::logic_error("reward normalizer is uninitialized");
  RewardValue v;
  v.score = score;
  if (max_ <= min_) {
    v.value = 0.5;
    v.degenerate = true;
  } else {
    v.value = std::clamp((score - min_) / (max_ - min_), 0.0, 1.0);
  }
  return v;
}

RewardNormalizer RewardNormalizer::restore(double score_min, double score_max, std::size_t observed) {
  RewardNormalizer n;
  if (observed > 0) {
    if (score_min > score_max) throw std::invalid_argument("normalizer min exceeds max");
    n.min_ = score_min;
    n.max_ = score_max;
  }
  n.observed_ = observed;
  return n;
}

void calibrate(RewardNormalizer& normalizer, const RewardModel& model, const TripletStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store.at(i);
    normalizer.observe(score_pair(model, t.doc_features, t.preferred_features));
    normalizer.observe(score_pair(model, t.doc_features, t.dispreferred_features));
  }
}

RewardValue peek_reward(const RewardModel& model, const RewardNormalizer& normalizer,
                        const FeatureVector& doc, const FeatureVector& summary) {
  return normalizer.normalize(score_pair(model, doc, summary));
}

RewardValue reward_value(const RewardModel& model, RewardNormalizer& normalizer,
                         const FeatureVector& doc, const FeatureVector& summary) {
  if (!normalizer.initialized()) throw std::logic_error("reward normalizer is uninitialized");
  return normalizer.normalize_and_observe(score_pair(model, doc, summary));
}

PreferencePrediction predict_preference(const RewardModel& model, const FeatureVector& doc,
                                        const FeatureVector& first, const FeatureVector& second) {
  const Eigen::VectorXd d = encode_doc(model, doc);
  PreferencePrediction p;
  p.first_distance = (d - encode_doc(model, first)).norm();
  p.second_distance = (d - encode_doc(model, second)).norm();
  p.tie = p.first_distance == p.second_distance;
  p.choice = p.second_distance < p.first_distance ? Choice::kSecond : Choice::kFirst;
  return p;
}

RewardModel finetune_on_feedback(const RewardModel& model, TripletStore& store,
                                 TripletExample feedback, const FinetuneOptions& options) {
  if (!store.knows_document(feedback.doc_id)) {
    throw std::invalid_argument("feedback references unknown document '" + feedback.doc_id + "'");
  }
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  feedback.objective = Objective::kQuality;
  store.add(std::move(feedback));
  const std::size_t fresh = store.flat_index(Objective::kQuality, store.count(Objective::kQuality) - 1);

  std::vector<std::size_t> others;
  others.reserve(store.size() - 1);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (i != fresh) others.push_back(i);
  }
  RewardModel current = model;
  Rng rng(options.seed);
  std::vector<const TripletExample*> batch;
  for (int step = 0; step < options.steps; ++step) {
    batch.assign(1, &store.at(fresh));
    const std::size_t extra = std::min(options.batch_size - 1, others.size());
    // Partial Fisher-Yates: the first `extra` entries become the sample.
    for (std::size_t j = 0; j < extra; ++j) {
      std::swap(others[j], others[j + uniform_index(rng, others.size() - j)]);
      batch.push_back(&store.at(others[j]));
    }
    current = apply_step(current, romsr_loss_and_gradient(current, batch), options.lr, batch.size());
  }
  return current;
}

double preference_accuracy(const RewardModel& model, std::span<const TripletExample> triplets) {
  if (triplets.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& t : triplets) {
    const auto p = predict_preference(model, t.doc_features, t.preferred_features, t.dispreferred_features);
    // A tie defaults to the first argument, which would credit the model for
    // an undecided pair; count it as wrong.
    if (p.choice == Choice::kFirst && !p.tie) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(triplets.size());
}

json to_json(const RewardModel& model, const RewardNormalizer& normalizer) {
  json norm = {{"observed", normalizer.observed()}};
  if (normalizer.initialized()) {
    norm["score_min"] = normalizer.score_min();
    norm["score_max"] = normalizer.score_max();
  }
  return {{"format", "prefsum-reward"},
          {"version", 1},
          {"margin", model.margin},
          {"encoder", nnet::to_json(model.encoder)},
          {"decoder", nnet::to_json(model.decoder)},
          {"normalizer", std::move(norm)}};
}

std::pair<RewardModel, RewardNormalizer> reward_from_json(const json& j) {
  if (j.value("format", "") != "prefsum-reward") throw std::runtime_error("not a reward checkpoint");
  RewardModel m;
  m.margin = j.at("margin").get<double>();
  m.encoder = nnet::mlp_from_json(j.at("encoder"));
  m.decoder = nnet::mlp_from_json(j.at("decoder"));
  if (m.encoder.input_size() != m.decoder.output_size() ||
      m.encoder.output_size() != m.decoder.input_size()) {
    throw nnet::ShapeError("encoder and decoder do not mirror each other");
  }
  const auto& nj = j.at("normalizer");
  const auto observed = nj.at("observed").get<std::size_t>();
  RewardNormalizer n = observed > 0 ? RewardNormalizer::restore(nj.at("score_min").get<double>(),
                                                                nj.at("score_max").get<double>(), observed)
                                    : RewardNormalizer{};
  return {std::move(m), n};
}

void save_triplets(const TripletStore& store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write triplet file '" + path.string() + "'");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store.at(i);
    out << json{{"doc_id", t.doc_id},
                {"preferred_text", t.preferred_text},
                {"dispreferred_text", t.dispreferred_text},
                {"objective", to_string(t.objective)}}
               .dump()
        << '\n';
  }
}

TripletStore load_triplets(const std::filesystem::path& path, const Dataset& dataset,
                           const FeatureCache& cache) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triplet file '" + path.string() + "'");
  TripletStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const Document& doc = dataset.at(j.at("doc_id").get<std::string>());
      store.add(make_triplet(doc, j.at("preferred_text").get<std::string>(),
                             j.at("dispreferred_text").get<std::string>(),
                             objective_from_string(j.at("objective").get<std::string>()), cache));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

}  // namespace prefsum
