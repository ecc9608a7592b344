#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefsum/corpus.hpp"

namespace prefsum {

// Topic-structured toy corpora. Every topic owns three disjoint
// vocabularies: content words that mark summary-worthy sentences, filler
// words for background sentences, and a summary register that paraphrases
// the content words one-to-one. Gold summaries rewrite a document's
// salient sentences, swapping each content word for its paraphrase with
// probability paraphrase_rate and dropping function words.
struct SyntheticConfig {
  std::size_t documents = 200;
  std::size_t topics = 8;
  std::size_t topic_words = 40;
  std::size_t filler_words = 30;
  // Content words a document keeps coming back to.
  std::size_t key_words = 4;
  std::size_t min_sentences = 8;
  std::size_t max_sentences = 14;
  std::size_t min_salient = 2;
  std::size_t max_salient = 3;
  double paraphrase_rate = 0.3;
  // Chance that a filler sentence borrows one content word.
  double filler_noise = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticCorpus {
  Dataset dataset;
  // Parallel to dataset.documents().
  std::vector<std::size_t> topic;
  std::vector<std::vector<std::size_t>> salient;
};

SyntheticCorpus generate_corpus(const SyntheticConfig& config);

// 3 topics of 10 content words, 60 documents, fully paraphrased gold
// summaries.
SyntheticConfig reward_benchmark_config(std::uint64_t seed);
// 200 documents over 8 topics with mostly extractive gold summaries and a
// large filler vocabulary, so background sentences rarely repeat words.
SyntheticConfig end_to_end_config(std::uint64_t seed);

}  // namespace prefsum
