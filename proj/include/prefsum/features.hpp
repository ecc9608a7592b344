#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prefsum/corpus.hpp"

namespace prefsum {

struct FeatureConfig {
  std::size_t semantic_dim = 256;
  std::size_t keyword_dim = 64;
  std::size_t top_keywords = 10;
  std::uint64_t hash_seed = 0x5eed5eedULL;

  std::size_t dim() const { return semantic_dim + keyword_dim; }
  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
// Unseen terms get the df = 0 value.
class IdfTable {
 public:
  IdfTable() = default;
  static IdfTable build(const std::vector<const Document*>& documents);

  double idf(std::string_view term) const;
  std::size_t document_count() const { return document_count_; }
  std::size_t term_count() const { return idf_.size(); }

  // "#documents\t<N>" header, then one "term\tidf" line per term, sorted.
  void save(const std::filesystem::path& path) const;
  static IdfTable load(const std::filesystem::path& path);

  friend bool operator==(const IdfTable&, const IdfTable&) = default;

 private:
  std::size_t document_count_ = 0;
  std::unordered_map<std::string, double> idf_;
};

// f(text): L2-normalized hashed TF-IDF block followed by a hashed
// indicator block of the text's top-K TF-IDF terms.
struct FeatureVector {
  Eigen::VectorXd values;
  std::size_t semantic_dim = 0;
  // Set when the text had no tokens; values are then all zero.
  bool empty = false;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  auto semantic() const { return values.head(static_cast<Eigen::Index>(semantic_dim)); }
  auto keywords() const {
    return values.tail(values.size() - static_cast<Eigen::Index>(semantic_dim));
  }
};

class Featurizer {
 public:
  Featurizer() = default;
  Featurizer(FeatureConfig config, IdfTable idf);

  FeatureVector featurize(std::string_view text) const;

  const FeatureConfig& config() const { return config_; }
  const IdfTable& idf() const { return idf_; }
  std::size_t dim() const { return config_.dim(); }

 private:
  std::size_t bucket(std::string_view term, std::uint64_t salt, std::size_t dim) const;

  FeatureConfig config_;
  IdfTable idf_;
};

// 1 - cos(a, b); 1 when either side is the zero vector. Throws
// std::invalid_argument on a length mismatch.
double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
inline double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
  return cosine_distance(a.values, b.values);
}

}  // namespace prefsum
