#include "prefsum/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "prefsum/metrics.hpp"
#include "prefsum/random.hpp"

namespace prefsum {
namespace {

using nlohmann::json;

constexpr std::size_t kSplitCount = 4;

std::size_t split_slot(Split s) { return static_cast<std::size_t>(s); }

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out.push_back(' ');
    out += p;
  }
  return out;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string> read_string_list(const json& record, const char* key,
                                          const std::string& where) {
  const auto& value = record.at(key);
  if (!value.is_array()) throw CorpusError(where + ": field '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) throw CorpusError(where + ": field '" + key + "' holds a non-string");
    out.push_back(item.get<std::string>());
  }
  return out;
}

Document parse_record(const std::string& line, const std::string& where) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw CorpusError(where + ": invalid JSON (" + e.what() + ")");
  }
  if (!record.is_object()) throw CorpusError(where + ": record is not an object");
  if (!record.contains("id") || !record["id"].is_string()) {
    throw CorpusError(where + ": missing string field 'id'");
  }
  if (!record.contains("sentences")) throw CorpusError(where + ": missing field 'sentences'");

  Document doc;
  doc.id = record["id"].get<std::string>();
  doc.sentences = read_string_list(record, "sentences", where);
  if (doc.sentences.empty()) throw CorpusError(where + ": record has zero sentences");
  for (const auto& s : doc.sentences) {
    if (blank(s)) throw CorpusError(where + ": record contains an empty sentence");
  }
  if (record.contains("gold_summary") && !record["gold_summary"].is_null()) {
    doc.gold_summary = read_string_list(record, "gold_summary", where);
  }
  return doc;
}

void require_gold(const Document& doc) {
  if (!doc.has_gold()) {
    throw CorpusError("document '" + doc.id + "' in split " + std::string(to_string(doc.split)) +
                      " has no gold_summary");
  }
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kPretrain: return "pretrain";
    case Split::kOffline: return "offline";
    case Split::kOnline: return "online";
    case Split::kTest: return "test";
  }
  return "unknown";
}

Split split_from_string(std::string_view name) {
  if (name == "pretrain") return Split::kPretrain;
  if (name == "offline") return Split::kOffline;
  if (name == "online") return Split::kOnline;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::string Document::text() const { return join(sentences); }

std::string Document::gold_text() const {
  if (!gold_summary) throw CorpusError("document '" + id + "' has no gold_summary");
  return join(*gold_summary);
}

bool SummarySelection::contains(std::size_t index) const {
  return std::binary_search(indices.begin(), indices.end(), index);
}

SummarySelection make_selection(const Document& doc, std::vector<std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("selection must not be empty");
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw std::invalid_argument("selection has duplicate sentence indices");
  }
  if (indices.back() >= doc.size()) {
    throw std::invalid_argument("selection index out of range for document '" + doc.id + "'");
  }
  SummarySelection sel;
  sel.doc_id = doc.id;
  for (std::size_t i : indices) {
    if (!sel.text.empty()) sel.text.push_back(' ');
    sel.text += doc.sentences[i];
  }
  sel.indices = std::move(indices);
  return sel;
}

Dataset::Dataset(std::vector<Document> documents, std::uint64_t split_seed)
    : docs_(std::move(documents)), split_seed_(split_seed) {
  reindex();
  order_.assign(kSplitCount, {});
  for (std::size_t i = 0; i < docs_.size(); ++i) order_[split_slot(docs_[i].split)].push_back(i);
}

void Dataset::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (docs_[i].sentences.empty()) {
      throw CorpusError("document '" + docs_[i].id + "' has zero sentences");
    }
    if (!index_.emplace(docs_[i].id, i).second) {
      throw CorpusError("duplicate document id '" + docs_[i].id + "'");
    }
  }
}

const Document* Dataset::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &docs_[it->second];
}

const Document& Dataset::at(std::string_view id) const {
  const Document* doc = find(id);
  if (doc == nullptr) throw CorpusError("unknown document id '" + std::string(id) + "'");
  return *doc;
}

std::vector<const Document*> Dataset::split(Split which) const {
  std::vector<const Document*> out;
  if (order_.empty()) return out;
  for (std::size_t i : order_[split_slot(which)]) out.push_back(&docs_[i]);
  return out;
}

std::size_t Dataset::count(Split which) const {
  return order_.empty() ? 0 : order_[split_slot(which)].size();
}

Dataset parse_corpus(std::istream& in, std::string_view source) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    Document doc = parse_record(line, where);
    if (auto [it, fresh] = seen.emplace(doc.id, line_no); !fresh) {
      throw CorpusError(where + ": duplicate id '" + doc.id + "' (first seen on line " +
                        std::to_string(it->second) + ")");
    }
    docs.push_back(std::move(doc));
  }
  return Dataset(std::move(docs));
}

Dataset load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file '" + path.string() + "'");
  return parse_corpus(in, path.string());
}

void save_corpus(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file '" + path.string() + "'");
  for (const auto& doc : dataset.documents()) {
    json record = {{"id", doc.id}, {"sentences", doc.sentences}};
    if (doc.gold_summary) record["gold_summary"] = *doc.gold_summary;
    out << record.dump() << '\n';
  }
}

Dataset split_dataset(const Dataset& dataset, std::size_t n_offline, std::size_t n_online,
                      std::uint64_t seed) {
  const std::size_t total = dataset.size();
  if (n_offline + n_online > total) {
    throw CorpusError("split needs " + std::to_string(n_offline + n_online) +
                      " documents but the corpus has " + std::to_string(total));
  }
  std::vector<std::size_t> perm(total);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Document> docs = dataset.documents();
  for (auto& d : docs) d.split = Split::kPretrain;
  std::vector<std::vector<std::size_t>> order(kSplitCount);
  for (std::size_t r = 0; r < total; ++r) {
    const std::size_t i = perm[r];
    if (r < n_offline) {
      docs[i].split = Split::kOffline;
      order[split_slot(Split::kOffline)].push_back(i);
    } else if (r < n_offline + n_online) {
      docs[i].split = Split::kOnline;
      order[split_slot(Split::kOnline)].push_back(i);
    }
  }
  for (std::size_t i = 0; i < total; ++i) {
    if (docs[i].split == Split::kPretrain) order[split_slot(Split::kPretrain)].push_back(i);
    if (docs[i].split != Split::kOnline) require_gold(docs[i]);
  }

  Dataset out(std::move(docs), seed);
  out.order_ = std::move(order);
  return out;
}

SplitManifest SplitManifest::of(const Dataset& dataset) {
  SplitManifest m;
  m.seed = dataset.split_seed();
  for (const Document* d : dataset.split(Split::kOffline)) m.offline.push_back(d->id);
  for (const Document* d : dataset.split(Split::kOnline)) m.online.push_back(d->id);
  return m;
}

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write split manifest '" + path.string() + "'");
  json j = {{"seed", manifest.seed}, {"offline", manifest.offline}, {"online", manifest.online}};
  out << j.dump(2) << '\n';
}

SplitManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open split manifest '" + path.string() + "'");
  try {
    json j = json::parse(in);
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.offline = j.at("offline").get<std::vector<std::string>>();
    m.online = j.at("online").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw CorpusError("malformed split manifest '" + path.string() + "': " + e.what());
  }
}

Dataset apply_manifest(const Dataset& dataset, const SplitManifest& manifest) {
  std::vector<Document> docs = dataset.documents();
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].split = Split::kPretrain;
    pos.emplace(docs[i].id, i);
  }
  std::vector<std::vector<std::size_t>> order(kSplitCount);
  auto assign = [&](const std::vector<std::string>& ids, Split s) {
    for (const auto& id : ids) {
      auto it = pos.find(id);
      if (it == pos.end()) throw CorpusError("manifest references unknown document '" + id + "'");
      if (docs[it->second].split != Split::kPretrain) {
        throw CorpusError("manifest assigns document '" + id + "' twice");
      }
      docs[it->second].split = s;
      order[split_slot(s)].push_back(it->second);
    }
  };
  assign(manifest.offline, Split::kOffline);
  assign(manifest.online, Split::kOnline);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].split == Split::kPretrain) order[split_slot(Split::kPretrain)].push_back(i);
    if (docs[i].split != Split::kOnline) require_gold(docs[i]);
  }
  Dataset out(std::move(docs), manifest.seed);
  out.order_ = std::move(order);
  return out;
}

SummarySelection build_extractive_labels(const Document& doc, std::size_t budget) {
  if (!doc.has_gold()) throw CorpusError("document '" + doc.id + "' has no gold_summary");
  if (budget == 0 || budget > doc.size()) {
    throw std::invalid_argument("label budget must be in [1, sentence count]");
  }
  const auto gold = tokenize(doc.gold_text());
  std::vector<std::vector<std::string>> sent_tokens;
  sent_tokens.reserve(doc.size());
  for (const auto& s : doc.sentences) sent_tokens.push_back(tokenize(s));

  std::vector<std::size_t> chosen;
  std::vector<bool> used(doc.size(), false);
  double best_so_far = -1.0;
  while (chosen.size() < budget) {
    double best = -1.0;
    std::size_t best_i = doc.size();
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (used[i]) continue;
      std::vector<std::size_t> trial = chosen;
      trial.push_back(i);
      std::sort(trial.begin(), trial.end());
      std::vector<std::string> tokens;
      for (std::size_t t : trial) tokens.insert(tokens.end(), sent_tokens[t].begin(), sent_tokens[t].end());
      const double f1 = rouge_n(tokens, gold, 1).f1;
      if (f1 > best) {
        best = f1;
        best_i = i;
      }
    }
    if (best_i == doc.size()) break;
    if (!chosen.empty() && best <= best_so_far) break;
    chosen.push_back(best_i);
    used[best_i] = true;
    best_so_far = best;
  }
  return make_selection(doc, std::move(chosen));
}

}  // namespace prefsum
