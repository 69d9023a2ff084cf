#include <doctest.h>

#include <cmath>
#include <vector>

#include "privml/common.hpp"
#include "privml/metrics.hpp"

using namespace privml;

namespace reference {

// Pairwise definition of AUC: fraction of (positive, negative) pairs where
// the positive scores higher, ties counted as half.
double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::uint64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace reference

TEST_SUITE_BEGIN("metrics");

TEST_CASE("auc: separable and anti-separable cases") {
  std::vector<double> scores{0.9, 0.8, 0.2, 0.1};
  std::vector<int> labels{1, 1, 0, 0};
  CHECK(auc_score(scores, labels) == doctest::Approx(1.0));

  std::vector<int> flipped{0, 0, 1, 1};
  CHECK(auc_score(scores, flipped) == doctest::Approx(0.0));
}

TEST_CASE("auc: hand-computed tie case") {
  // Scores {1,1,2}, labels {0,1,1}: the tied pair contributes 1/2 of the two
  // positive-negative pairs, the separated pair contributes 1.
  std::vector<double> scores{1.0, 1.0, 2.0};
  std::vector<int> labels{0, 1, 1};
  CHECK(auc_score(scores, labels) == doctest::Approx(0.75));
}

TEST_CASE("auc: all scores identical gives one half") {
  std::vector<double> scores(10, 0.5);
  std::vector<int> labels{1, 0, 1, 0, 1, 0, 0, 0, 1, 0};
  CHECK(auc_score(scores, labels) == doctest::Approx(0.5));
}

TEST_CASE("auc: matches pairwise count on random data") {
  SeededRng rng(4242);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    const std::size_t n = 150 + 25 * static_cast<std::size_t>(trial);
    for (std::size_t i = 0; i < n; ++i) {
      // Quantized scores so ties actually occur.
      scores.push_back(std::floor(rng.uniform01() * 12.0) / 12.0);
      labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
    }
    // Ensure both classes are present.
    labels[0] = 1;
    labels[1] = 0;
    CHECK(auc_score(scores, labels) ==
          doctest::Approx(reference::pairwise_auc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("auc: single-class input is rejected") {
  std::vector<double> scores{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(auc_score(scores, {1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(auc_score(scores, {0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(auc_score(scores, {1, 1}), std::invalid_argument);
}

TEST_CASE("classification report: counts, accuracy, recall") {
  std::vector<double> scores{0.9, 0.6, 0.5, 0.4, 0.1, 0.7};
  std::vector<int> labels{1, 0, 1, 1, 0, 0};
  auto rep = classification_report(scores, labels);
  // Predictions at 0.5 (inclusive): 1, 1, 1, 0, 0, 1.
  CHECK(rep.tp == 2);
  CHECK(rep.fp == 2);
  CHECK(rep.tn == 1);
  CHECK(rep.fn == 1);
  CHECK(rep.accuracy == doctest::Approx(3.0 / 6.0));
  CHECK(rep.recall_defined);
  CHECK(rep.recall == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("classification report: recall undefined without positives") {
  std::vector<double> scores{0.9, 0.1};
  std::vector<int> labels{0, 0};
  auto rep = classification_report(scores, labels);
  CHECK_FALSE(rep.recall_defined);
  CHECK(rep.accuracy == doctest::Approx(0.5));
}

TEST_CASE("classification report: custom threshold") {
  std::vector<double> scores{0.9, 0.6, 0.5, 0.4};
  std::vector<int> labels{1, 1, 0, 0};
  auto rep = classification_report(scores, labels, 0.7);
  CHECK(rep.tp == 1);
  CHECK(rep.fn == 1);
  CHECK(rep.tn == 2);
  CHECK(rep.fp == 0);
}

TEST_CASE("quartiles: odd and even lengths") {
  // Odd length: halves exclude the median element.
  auto odd = quartiles({7.0, 15.0, 36.0, 39.0, 40.0, 41.0, 42.0});
  CHECK(odd.median == doctest::Approx(39.0));
  CHECK(odd.q1 == doctest::Approx(15.0));
  CHECK(odd.q3 == doctest::Approx(41.0));

  // Even length: median is the midpoint of the middle pair.
  auto even = quartiles({1.0, 2.0, 3.0, 4.0});
  CHECK(even.median == doctest::Approx(2.5));
  CHECK(even.q1 == doctest::Approx(1.5));
  CHECK(even.q3 == doctest::Approx(3.5));

  auto single = quartiles({5.0});
  CHECK(single.median == doctest::Approx(5.0));
  CHECK(single.q1 == doctest::Approx(5.0));
  CHECK(single.q3 == doctest::Approx(5.0));
}

TEST_SUITE_END();
