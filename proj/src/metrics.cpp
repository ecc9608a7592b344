#include "prefsum/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace prefsum {
namespace {

bool is_separator(unsigned char c) {
  if (c >= 0x80) return false;
  return std::isspace(c) != 0 || std::ispunct(c) != 0;
}

// Hook for language-specific normalization (stemming etc.). Identity.
std::string normalize_token(std::string token) { return token; }

using NgramCounts = std::map<std::vector<std::string_view>, int>;

NgramCounts count_ngrams(std::span<const std::string> tokens, int n, int* total) {
  NgramCounts counts;
  *total = 0;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string_view> gram;
    gram.reserve(n);
    for (int j = 0; j < n; ++j) gram.emplace_back(tokens[i + j]);
    ++counts[std::move(gram)];
    ++*total;
  }
  return counts;
}

}  // namespace

RougeScore make_rouge_score(double matches, double candidate_total, double reference_total) {
  RougeScore s;
  if (candidate_total <= 0.0 || reference_total <= 0.0) return s;
  s.precision = matches / candidate_total;
  s.recall = matches / reference_total;
  if (s.precision + s.recall > 0.0) {
    s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_separator(c)) {
      if (!current.empty()) tokens.push_back(normalize_token(std::move(current)));
      current.clear();
      continue;
    }
    current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  if (!current.empty()) tokens.push_back(normalize_token(std::move(current)));
  return tokens;
}

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   int n) {
  if (n != 1 && n != 2) throw std::invalid_argument("rouge_n: order must be 1 or 2");
  int cand_total = 0;
  int ref_total = 0;
  const NgramCounts cand = count_ngrams(candidate, n, &cand_total);
  const NgramCounts ref = count_ngrams(reference, n, &ref_total);
  int matches = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) matches += std::min(count, it->second);
  }
  return make_rouge_score(matches, cand_total, ref_total);
}

RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return rouge_n(c, r, n);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  return make_rouge_score(lcs, static_cast<double>(candidate.size()),
                          static_cast<double>(reference.size()));
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  return rouge_l(c, r);
}

}  // namespace prefsum
