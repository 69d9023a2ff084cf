#include "privml/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace privml {

double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc_score: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::uint64_t positives = 0;
  for (int y : labels) positives += (y != 0) ? 1 : 0;
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("auc_score: need both classes present");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk groups of tied scores; every member of a group gets the group's
  // average rank (ranks are 1-based).
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) positive_rank_sum += midrank;
    }
    i = j;
  }

  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

ClassificationReport classification_report(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           double threshold) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("classification_report: scores and labels differ in length");
  }
  ClassificationReport rep;
  rep.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++rep.tp;
    else if (predicted && !actual) ++rep.fp;
    else if (!predicted && !actual) ++rep.tn;
    else ++rep.fn;
  }
  const std::uint64_t total = rep.tp + rep.fp + rep.tn + rep.fn;
  if (total > 0) {
    rep.accuracy = static_cast<double>(rep.tp + rep.tn) / static_cast<double>(total);
  }
  const std::uint64_t positives = rep.tp + rep.fn;
  rep.recall_defined = positives > 0;
  if (rep.recall_defined) {
    rep.recall = static_cast<double>(rep.tp) / static_cast<double>(positives);
  }
  return rep;
}

namespace {

// Median of values[lo, hi): midpoint of the middle pair when the range has
// even length. Assumes the range is sorted and non-empty.
double median_of(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  const std::size_t len = hi - lo;
  const std::size_t mid = lo + len / 2;
  if (len % 2 == 1) return v[mid];
  return 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

QuartileSummary quartiles(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("quartiles: empty input");
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  QuartileSummary q;
  q.median = median_of(values, 0, n);
  if (n == 1) {
    q.q1 = q.q3 = values[0];
    return q;
  }
  // Halves exclude the middle element when n is odd.
  q.q1 = median_of(values, 0, n / 2);
  q.q3 = median_of(values, (n + 1) / 2, n);
  return q;
}

}  // namespace privml
