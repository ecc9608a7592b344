#include "prefsum/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "prefsum/metrics.hpp"

namespace prefsum {
namespace {

constexpr std::uint64_t kSemanticSalt = 0x73656d616e746963ULL;
constexpr std::uint64_t kKeywordSalt = 0x6b6579776f726473ULL;

// FNV-1a over the salt bytes followed by the term bytes.
std::uint64_t fnv1a(std::string_view term, std::uint64_t salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 8; ++i) {
    h ^= (salt >> (8 * i)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
  for (unsigned char c : term) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

IdfTable IdfTable::build(const std::vector<const Document*>& documents) {
  IdfTable table;
  table.document_count_ = documents.size();
  std::unordered_map<std::string, std::size_t> df;
  for (const Document* doc : documents) {
    std::set<std::string> terms;
    for (const auto& s : doc->sentences) {
      for (auto& t : tokenize(s)) terms.insert(std::move(t));
    }
    for (const auto& t : terms) ++df[t];
  }
  const double n = static_cast<double>(table.document_count_);
  for (const auto& [term, count] : df) {
    table.idf_.emplace(term, std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  return table;
}

double IdfTable::idf(std::string_view term) const {
  auto it = idf_.find(std::string(term));
  if (it != idf_.end()) return it->second;
  return std::log(1.0 + static_cast<double>(document_count_)) + 1.0;
}

void IdfTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write IDF table '" + path.string() + "'");
  out << "#documents\t" << document_count_ << '\n';
  std::map<std::string, double> sorted(idf_.begin(), idf_.end());
  out << std::setprecision(17);
  for (const auto& [term, value] : sorted) out << term << '\t' << value << '\n';
}

IdfTable IdfTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open IDF table '" + path.string() + "'");
  IdfTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected a tab");
    }
    const std::string key = line.substr(0, tab);
    const std::string value = line.substr(tab + 1);
    if (line_no == 1 && key == "#documents") {
      table.document_count_ = std::stoull(value);
      continue;
    }
    table.idf_[key] = std::stod(value);
  }
  return table;
}

Featurizer::Featurizer(FeatureConfig config, IdfTable idf)
    : config_(config), idf_(std::move(idf)) {
  if (config_.semantic_dim == 0 || config_.keyword_dim == 0) {
    throw std::invalid_argument("feature dimensions must be positive");
  }
}

std::size_t Featurizer::bucket(std::string_view term, std::uint64_t salt, std::size_t dim) const {
  return static_cast<std::size_t>(fnv1a(term, config_.hash_seed ^ salt) % dim);
}

FeatureVector Featurizer::featurize(std::string_view text) const {
  FeatureVector fv;
  fv.semantic_dim = config_.semantic_dim;
  fv.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.dim()));

  std::map<std::string, int> tf;
  for (auto& t : tokenize(text)) ++tf[std::move(t)];
  if (tf.empty()) {
    fv.empty = true;
    return fv;
  }

  std::vector<std::pair<double, std::string_view>> weights;
  weights.reserve(tf.size());
  for (const auto& [term, count] : tf) {
    const double w = static_cast<double>(count) * idf_.idf(term);
    weights.emplace_back(w, term);
    fv.values[static_cast<Eigen::Index>(bucket(term, kSemanticSalt, config_.semantic_dim))] += w;
  }
  const double norm = fv.semantic().norm();
  if (norm > 0.0) fv.values.head(static_cast<Eigen::Index>(config_.semantic_dim)) /= norm;

  // Highest weight first; equal weights in lexicographic order.
  std::sort(weights.begin(), weights.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const std::size_t k = std::min(config_.top_keywords, weights.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t b = bucket(weights[i].second, kKeywordSalt, config_.keyword_dim);
    fv.values[static_cast<Eigen::Index>(config_.semantic_dim + b)] = 1.0;
  }
  return fv;
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_distance: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double cos = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return 1.0 - cos;
}

}  // namespace prefsum
