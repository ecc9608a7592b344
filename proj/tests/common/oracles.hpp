#pragma once

// Independent reference computations for the test suites. Nothing here
// calls into the library under test.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

struct Prf {
  double p = 0.0;
  double r = 0.0;
  double f = 0.0;
};

inline Prf prf(double matches, double cand, double ref) {
  Prf s;
  if (cand <= 0.0 || ref <= 0.0) return s;
  s.p = matches / cand;
  s.r = matches / ref;
  s.f = s.p + s.r > 0.0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
  return s;
}

// Clipped overlap by greedy one-to-one matching of n-gram positions.
inline Prf rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int n) {
  const auto grams = [n](const std::vector<std::string>& t) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
    return out;
  };
  const auto c = grams(cand);
  const auto r = grams(ref);
  std::vector<bool> used(r.size(), false);
  double matches = 0.0;
  for (const auto& g : c) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!used[j] && r[j] == g) {
        used[j] = true;
        matches += 1.0;
        break;
      }
    }
  }
  return prf(matches, static_cast<double>(c.size()), static_cast<double>(r.size()));
}

// Memoized recursion over suffixes.
inline std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<int>> memo(a.size() + 1, std::vector<int>(b.size() + 1, -1));
  auto go = [&](auto&& self, std::size_t i, std::size_t j) -> int {
    if (i == a.size() || j == b.size()) return 0;
    int& m = memo[i][j];
    if (m >= 0) return m;
    if (a[i] == b[j]) {
      m = 1 + self(self, i + 1, j + 1);
    } else {
      m = std::max(self(self, i + 1, j), self(self, i, j + 1));
    }
    return m;
  };
  return static_cast<std::size_t>(go(go, 0, 0));
}

inline Prf rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  return prf(static_cast<double>(lcs(cand, ref)), static_cast<double>(cand.size()),
             static_cast<double>(ref.size()));
}

// Hand-computed ROUGE values. Texts are already lowercase and unpunctuated
// except where a fixture checks normalization.
struct RougeFixture {
  const char* candidate;
  const char* reference;
  Prf r1;
  Prf r2;
  Prf rl;
};

inline std::vector<RougeFixture> rouge_fixtures() {
  return {
      {"the cat sat", "the cat sat on the mat", {1.0, 0.5, 2.0 / 3.0}, {1.0, 0.4, 4.0 / 7.0}, {1.0, 0.5, 2.0 / 3.0}},
      {"a b d", "a b c d", {1.0, 0.75, 6.0 / 7.0}, {0.5, 1.0 / 3.0, 0.4}, {1.0, 0.75, 6.0 / 7.0}},
      {"a a a", "a", {1.0 / 3.0, 1.0, 0.5}, {0.0, 0.0, 0.0}, {1.0 / 3.0, 1.0, 0.5}},
      {"The quick brown fox.", "the quick brown fox", {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}},
      {"alpha beta", "gamma delta", {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}},
      {"", "a b", {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}},
      {"a b c d", "d c b a", {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, {0.25, 0.25, 0.25}},
      {"x y x y", "x y", {0.5, 1.0, 2.0 / 3.0}, {1.0 / 3.0, 1.0, 0.5}, {0.5, 1.0, 2.0 / 3.0}},
      {"the cat, the dog", "the dog the cat", {1.0, 1.0, 1.0}, {2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0}, {0.5, 0.5, 0.5}},
      {"a b c", "a b c a b c", {1.0, 0.5, 2.0 / 3.0}, {1.0, 0.4, 4.0 / 7.0}, {1.0, 0.5, 2.0 / 3.0}},
      {"b", "a b c", {1.0, 1.0 / 3.0, 0.5}, {0.0, 0.0, 0.0}, {1.0, 1.0 / 3.0, 0.5}},
  };
}

// Straight-line two-layer network: tanh hidden layer, identity output.
inline Eigen::VectorXd two_layer(const Eigen::MatrixXd& w1, const Eigen::VectorXd& b1,
                                 const Eigen::MatrixXd& w2, const Eigen::VectorXd& b2,
                                 const Eigen::VectorXd& x) {
  Eigen::VectorXd h(w1.rows());
  for (Eigen::Index i = 0; i < w1.rows(); ++i) {
    double z = b1[i];
    for (Eigen::Index j = 0; j < w1.cols(); ++j) z += w1(i, j) * x[j];
    h[i] = std::tanh(z);
  }
  Eigen::VectorXd y(w2.rows());
  for (Eigen::Index i = 0; i < w2.rows(); ++i) {
    double z = b2[i];
    for (Eigen::Index j = 0; j < w2.cols(); ++j) z += w2(i, j) * h[j];
    y[i] = z;
  }
  return y;
}

}  // namespace oracle
