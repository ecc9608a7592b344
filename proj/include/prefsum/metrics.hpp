#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prefsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Builds a score from a match count and the two totals. Zero totals give
// an all-zero score.
RougeScore make_rouge_score(double matches, double candidate_total, double reference_total);

// Lowercases ASCII and splits on ASCII whitespace and punctuation. Bytes
// outside ASCII are kept inside tokens so non-Latin scripts survive.
std::vector<std::string> tokenize(std::string_view text);

// Clipped n-gram overlap, n in {1, 2}. Throws std::invalid_argument for
// any other order.
RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n);
RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   int n);

// Longest-common-subsequence based score over tokens.
RougeScore rouge_l(std::string_view candidate, std::string_view reference);
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace prefsum
