#pragma once

// Evaluation metrics for the readmission task: Mann-Whitney AUC with midrank
// tie handling, thresholded classification counts, and quartile summaries
// (median-of-halves convention, midpoint for even length).

#include <cstdint>
#include <vector>

namespace privml {

// Rank-based AUC; equivalent to the pairwise probability that a positive
// outranks a negative, counting ties as 1/2. Throws std::invalid_argument if
// either class is absent.
double auc_score(const std::vector<double>& scores, const std::vector<int>& labels);

struct ClassificationReport {
  double threshold = 0.5;
  double accuracy = 0.0;
  double recall = 0.0;
  bool recall_defined = false;  // false when there are no positive labels
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Counts with `score >= threshold` predicting the positive class.
ClassificationReport classification_report(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           double threshold = 0.5);

struct QuartileSummary {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

// Median = midpoint of the middle pair for even n; quartiles are medians of
// the lower/upper halves (middle element excluded for odd n).
QuartileSummary quartiles(std::vector<double> values);

}  // namespace privml
