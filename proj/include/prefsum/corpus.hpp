#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace prefsum {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kPretrain, kOffline, kOnline, kTest };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Document {
  std::string id;
  std::vector<std::string> sentences;
  std::optional<std::vector<std::string>> gold_summary;
  Split split = Split::kPretrain;

  std::size_t size() const { return sentences.size(); }
  bool has_gold() const { return gold_summary.has_value(); }
  // Sentences joined by a single space.
  std::string text() const;
  // Throws CorpusError when the document carries no gold summary.
  std::string gold_text() const;

  friend bool operator==(const Document&, const Document&) = default;
};

// An extractive summary: strictly ascending sentence positions plus the
// joined text of those sentences in document order.
struct SummarySelection {
  std::string doc_id;
  std::vector<std::size_t> indices;
  std::string text;

  bool contains(std::size_t index) const;
  friend bool operator==(const SummarySelection&, const SummarySelection&) = default;
};

// Sorts and validates `indices` against `doc`; throws std::invalid_argument
// on empty, duplicate or out-of-range positions.
SummarySelection make_selection(const Document& doc, std::vector<std::size_t> indices);

struct SplitManifest;

// Immutable collection of documents with unique ids. Split membership is
// stored on each document; the per-split order is kept separately so the
// online stream order survives a save/load cycle.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Document> documents, std::uint64_t split_seed = 0);

  const std::vector<Document>& documents() const { return docs_; }
  std::size_t size() const { return docs_.size(); }
  std::uint64_t split_seed() const { return split_seed_; }

  const Document* find(std::string_view id) const;
  const Document& at(std::string_view id) const;

  // Documents of one split in split order.
  std::vector<const Document*> split(Split which) const;
  std::size_t count(Split which) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.docs_ == b.docs_ && a.split_seed_ == b.split_seed_ && a.order_ == b.order_;
  }

 private:
  friend Dataset split_dataset(const Dataset&, std::size_t, std::size_t, std::uint64_t);
  friend Dataset apply_manifest(const Dataset&, const SplitManifest&);

  void reindex();

  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t split_seed_ = 0;
  // Positions into docs_ per split, in split order.
  std::vector<std::vector<std::size_t>> order_;
};

// Reads one JSON object per line: {"id", "sentences", "gold_summary"?}.
// Every document lands in the pretrain split.
Dataset load_corpus(const std::filesystem::path& path);
Dataset parse_corpus(std::istream& in, std::string_view source = "<stream>");
void save_corpus(const Dataset& dataset, const std::filesystem::path& path);

// Deterministic partition: a seeded permutation assigns the first
// n_offline documents to offline, the next n_online to online (in
// permutation order, which is the online stream order) and leaves the rest
// in pretrain. Pretrain and offline documents must carry gold summaries.
Dataset split_dataset(const Dataset& dataset, std::size_t n_offline, std::size_t n_online,
                      std::uint64_t seed);

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> offline;
  std::vector<std::string> online;

  static SplitManifest of(const Dataset& dataset);
  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);
Dataset apply_manifest(const Dataset& dataset, const SplitManifest& manifest);

// Greedy extractive oracle: repeatedly adds the sentence that maximizes the
// ROUGE-1 F1 of the running selection against the gold summary. The first
// pick is always taken; later picks only when they strictly improve.
SummarySelection build_extractive_labels(const Document& doc, std::size_t budget = 3);

}  // namespace prefsum
