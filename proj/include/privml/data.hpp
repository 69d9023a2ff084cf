#pragma once

// CSV ingestion and preprocessing for the readmission task, plus a synthetic
// generator with a planted logistic signal for dataset-free runs.
//
// Pipeline: load_records -> split_table -> preprocess_fit (train only) ->
// preprocess_apply (train and test). Numeric features are median-imputed and
// min-max scaled into [0,1] (test-time values clamped); categorical features
// are one-hot encoded against train-fitted vocabularies with unseen values
// mapping to an all-zero block; diagnosis codes collapse to ten ICD9 groups.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace privml {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Column-major string table. Missing values ('?' or empty fields) are
// normalized to "?" on load.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> cells;  // cells[column][row]

  std::size_t rows() const { return cells.empty() ? 0 : cells[0].size(); }
  bool has_column(const std::string& name) const;
  // Index of a column; throws DataError if absent.
  std::size_t column_index(const std::string& name) const;
  const std::vector<std::string>& column(const std::string& name) const;

  static bool is_missing(const std::string& cell) { return cell == "?"; }
};

// Core columns the readmission pipeline cannot run without.
std::vector<std::string> diabetes_required_columns();

// Parses a comma-separated file (double-quoted fields allowed). Throws
// DataError if any required column is absent from the header; a header with
// no data rows yields an empty table.
RawTable load_records(const std::string& path,
                      const std::vector<std::string>& required = diabetes_required_columns());

// Ten diagnosis groups; `icd9_group` maps a raw code to one of them.
// Unparseable or missing codes land in `missing`.
enum class Icd9Group : int {
  circulatory = 0,
  respiratory = 1,
  digestive = 2,
  diabetes = 3,
  injury = 4,
  musculoskeletal = 5,
  genitourinary = 6,
  neoplasms = 7,
  other = 8,
  missing = 9,
};
inline constexpr int kIcd9GroupCount = 10;

Icd9Group icd9_group(const std::string& code);
const char* icd9_group_name(Icd9Group group);

struct PreprocessOptions {
  // When false only diag_1 is grouped and diag_2/diag_3 are dropped; when
  // true all three diagnosis columns contribute a one-hot group block.
  bool group_secondary_diagnoses = false;
  // When true the age bracket becomes a numeric feature at its midpoint
  // ("[50-60)" -> 55) instead of a one-hot block.
  bool age_ordinal = false;
};

struct NumericFeature {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;        // train median, used to impute missing values
  bool age_bracket = false;   // parse cells as "[lo-hi)" bracket midpoints
};

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> vocabulary;  // sorted; may include "?"
};

struct PreprocessSpec {
  PreprocessOptions options;
  std::string label_column;
  std::string positive_value;
  std::vector<NumericFeature> numeric_features;
  std::vector<CategoricalFeature> categorical_features;
  std::vector<std::string> diagnosis_features;

  std::size_t feature_count() const;
  std::vector<std::string> feature_names() const;
  std::uint64_t digest() const;

  void save(const std::string& path) const;
  static PreprocessSpec load(const std::string& path);
};

struct Dataset {
  Eigen::MatrixXd features;  // N x d
  std::vector<int> labels;   // {0,1}
  std::vector<std::string> feature_names;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  std::uint64_t digest() const;

  void save(const std::string& path) const;
  static Dataset load(const std::string& path);
};

// Fits scaling, vocabularies and imputation values on the train partition
// only; known schema columns absent from the table are skipped.
PreprocessSpec preprocess_fit(const RawTable& train, const PreprocessOptions& options = {});

Dataset preprocess_apply(const PreprocessSpec& spec, const RawTable& records);

// Seeded shuffle split; train gets floor(fraction * N) rows. Requires N >= 4.
std::pair<RawTable, RawTable> split_table(const RawTable& table, double train_fraction,
                                          std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

// Planted generating model of a synthetic dataset, usable as an oracle.
struct SynthInfo {
  std::vector<double> weights;
  double bias = 0.0;
  double score(const Eigen::VectorXd& x) const;
};

// Uniform features in [0,1]^d with labels drawn from a logistic rule along a
// random direction. signal_strength 0 gives labels independent of the
// features; positive_rate sets the approximate class balance.
Dataset synthesize(std::size_t n, std::size_t d, double positive_rate, double signal_strength,
                   std::uint64_t seed, SynthInfo* info = nullptr);

// Multiplies feature column j by scales[j]; mimics raw EHR magnitudes when
// applied to a synthetic [0,1] set.
void scale_columns(Dataset& dataset, const std::vector<double>& scales);

// Per-column min-max rescaling of a dataset onto [0,1] (fit on itself);
// constant columns map to zero.
Dataset minmax_rescale(const Dataset& dataset);

}  // namespace privml
