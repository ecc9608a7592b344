#include "prefsum/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "prefsum/random.hpp"

namespace prefsum {
namespace {

const std::vector<std::string> kFunctionWords = {
    "the", "a",    "of",   "and", "to",   "in",    "on",    "for",  "with", "was",
    "is",  "that", "this", "by",  "from", "after", "about", "more", "were", "has"};

const char* const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "kr", "pl"};
const char* const kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};

class WordFactory {
 public:
  explicit WordFactory(std::uint64_t seed) : rng_(seed) {
    used_.insert(kFunctionWords.begin(), kFunctionWords.end());
  }

  std::string make() {
    while (true) {
      std::string w;
      const std::size_t syllables = 2 + uniform_index(rng_, 2);
      for (std::size_t i = 0; i < syllables; ++i) {
        w += kOnsets[uniform_index(rng_, std::size(kOnsets))];
        w += kVowels[uniform_index(rng_, std::size(kVowels))];
      }
      if (uniform01(rng_) < 0.5) w += kOnsets[uniform_index(rng_, 14)];
      if (used_.insert(w).second) return w;
    }
  }

  std::vector<std::string> make(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(make());
    return out;
  }

 private:
  Rng rng_;
  std::unordered_set<std::string> used_;
};

struct Topic {
  std::vector<std::string> content;
  std::vector<std::string> filler;
  std::vector<std::string> paraphrase;
};

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  s += '.';
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

const std::string& pick(const std::vector<std::string>& v, Rng& rng) { return v[uniform_index(rng, v.size())]; }

}  // namespace

void SyntheticConfig::validate() const {
  if (documents == 0 || topics == 0) throw std::invalid_argument("synthetic corpus needs documents and topics");
  if (key_words == 0 || key_words > topic_words) throw std::invalid_argument("key_words must lie in [1, topic_words]");
  if (filler_words == 0) throw std::invalid_argument("filler_words must be positive");
  if (min_sentences == 0 || min_sentences > max_sentences) throw std::invalid_argument("bad sentence range");
  if (min_salient == 0 || min_salient > max_salient || max_salient > min_sentences) {
    throw std::invalid_argument("bad salient sentence range");
  }
  if (!(paraphrase_rate >= 0.0 && paraphrase_rate <= 1.0)) throw std::invalid_argument("paraphrase_rate must lie in [0, 1]");
  if (!(filler_noise >= 0.0 && filler_noise <= 1.0)) throw std::invalid_argument("filler_noise must lie in [0, 1]");
}

SyntheticCorpus generate_corpus(const SyntheticConfig& config) {
  config.validate();
  WordFactory words(derive_seed(config.seed, 1));
  std::vector<Topic> topics(config.topics);
  for (auto& t : topics) {
    t.content = words.make(config.topic_words);
    t.filler = words.make(config.filler_words);
    t.paraphrase = words.make(config.topic_words);
  }

  Rng rng(derive_seed(config.seed, 2));
  SyntheticCorpus out;
  std::vector<Document> docs;
  for (std::size_t d = 0; d < config.documents; ++d) {
    const std::size_t ti = uniform_index(rng, config.topics);
    const Topic& topic = topics[ti];

    std::vector<std::size_t> content_idx(config.topic_words);
    std::iota(content_idx.begin(), content_idx.end(), std::size_t{0});
    std::shuffle(content_idx.begin(), content_idx.end(), rng);
    const std::vector<std::size_t> keys(content_idx.begin(), content_idx.begin() + static_cast<std::ptrdiff_t>(config.key_words));

    const std::size_t n = config.min_sentences + uniform_index(rng, config.max_sentences - config.min_sentences + 1);
    const std::size_t s = config.min_salient + uniform_index(rng, config.max_salient - config.min_salient + 1);
    std::vector<std::size_t> positions(n);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    std::shuffle(positions.begin(), positions.end(), rng);
    std::vector<std::size_t> salient(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(s));
    std::sort(salient.begin(), salient.end());

    Document doc;
    char id[32];
    std::snprintf(id, sizeof id, "doc-%04zu", d);
    doc.id = id;
    std::vector<std::string> gold;
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_salient = std::binary_search(salient.begin(), salient.end(), i);
      const std::size_t len = 8 + uniform_index(rng, 5);
      // Slots >= 0 index topic.content; kFiller and kFunction mark the rest.
      constexpr long kFiller = -1;
      constexpr long kFunction = -2;
      std::vector<long> slots;
      if (is_salient) {
        for (std::size_t k = 4 + uniform_index(rng, 2); k > 0; --k) {
          // Mostly the document's key words, sometimes other topic words.
          slots.push_back(static_cast<long>(uniform01(rng) < 0.7 ? keys[uniform_index(rng, keys.size())]
                                                                 : uniform_index(rng, config.topic_words)));
        }
      } else {
        slots.assign(3 + uniform_index(rng, 2), kFiller);
        if (uniform01(rng) < config.filler_noise) {
          slots.push_back(static_cast<long>(uniform_index(rng, config.topic_words)));
        }
      }
      slots.resize(std::max(len, slots.size()), kFunction);
      std::shuffle(slots.begin(), slots.end(), rng);

      std::vector<std::string> sentence;
      std::vector<std::string> summary;
      for (long slot : slots) {
        if (slot == kFunction) {
          sentence.push_back(pick(kFunctionWords, rng));
        } else if (slot == kFiller) {
          sentence.push_back(pick(topic.filler, rng));
        } else {
          const auto ci = static_cast<std::size_t>(slot);
          sentence.push_back(topic.content[ci]);
          summary.push_back(uniform01(rng) < config.paraphrase_rate ? topic.paraphrase[ci] : topic.content[ci]);
        }
      }
      doc.sentences.push_back(join(sentence));
      if (is_salient) gold.push_back(join(summary));
    }
    doc.gold_summary = std::move(gold);
    docs.push_back(std::move(doc));
    out.topic.push_back(ti);
    out.salient.push_back(std::move(salient));
  }
  out.dataset = Dataset(std::move(docs), config.seed);
  return out;
}

SyntheticConfig reward_benchmark_config(std::uint64_t seed) {
  SyntheticConfig c;
  c.documents = 60;
  c.topics = 3;
  c.topic_words = 10;
  c.paraphrase_rate = 1.0;
  c.seed = seed;
  return c;
}

SyntheticConfig end_to_end_config(std::uint64_t seed) {
  SyntheticConfig c;
  c.documents = 200;
  c.topics = 8;
  c.filler_words = 200;
  c.paraphrase_rate = 0.3;
  c.seed = seed;
  return c;
}

}  // namespace prefsum
