#include "privml/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "privml/common.hpp"
#include "privml/metrics.hpp"

namespace privml {

namespace {

// Known schema of the readmission export. Columns outside these lists (ids,
// the three sparse columns dropped in preprocessing, unknown extras) are
// ignored by fit/apply.
const std::vector<std::string> kNumericColumns = {
    "time_in_hospital", "num_lab_procedures", "num_procedures",  "num_medications",
    "number_outpatient", "number_emergency",   "number_inpatient", "number_diagnoses",
};

const std::vector<std::string> kCategoricalColumns = {
    "race",
    "gender",
    "age",
    "admission_type_id",
    "discharge_disposition_id",
    "admission_source_id",
    "max_glu_serum",
    "A1Cresult",
    "metformin",
    "repaglinide",
    "nateglinide",
    "chlorpropamide",
    "glimepiride",
    "acetohexamide",
    "glipizide",
    "glyburide",
    "tolbutamide",
    "pioglitazone",
    "rosiglitazone",
    "troglitazone",
    "tolazamide",
    "examide",
    "citoglipton",
    "insulin",
    "glyburide-metformin",
    "glipizide-metformin",
    "glimepiride-pioglitazone",
    "metformin-rosiglitazone",
    "metformin-pioglitazone",
    "change",
    "diabetesMed",
};

const std::vector<std::string> kDiagnosisColumns = {"diag_1", "diag_2", "diag_3"};

constexpr const char* kLabelColumn = "readmitted";
constexpr const char* kPositiveValue = "<30";

std::string normalize_cell(std::string cell) {
  if (cell.empty() || cell == "?") return "?";
  return cell;
}

bool parse_double(const std::string& text, double* out) {
  if (RawTable::is_missing(text)) return false;
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || !std::isfinite(value)) return false;
  *out = value;
  return true;
}

// Age brackets look like "[50-60)"; the midpoint stands in for the bracket.
bool parse_age_bracket(const std::string& text, double* out) {
  double lo = 0.0, hi = 0.0;
  if (std::sscanf(text.c_str(), "[%lf-%lf)", &lo, &hi) != 2) return false;
  *out = 0.5 * (lo + hi);
  return true;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

bool RawTable::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::size_t RawTable::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw DataError("table has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

const std::vector<std::string>& RawTable::column(const std::string& name) const {
  return cells[column_index(name)];
}

std::vector<std::string> diabetes_required_columns() {
  return {"readmitted", "race", "gender", "age", "time_in_hospital", "diag_1"};
}

RawTable load_records(const std::string& path, const std::vector<std::string>& required) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_records: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  // Field-at-a-time scan so quoted fields may contain commas and newlines;
  // a doubled quote inside a quoted field is a literal quote.
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  auto end_field = [&]() {
    record.push_back(normalize_cell(std::move(field)));
    field.clear();
  };
  auto end_record = [&]() {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c != '\r') {
      field.push_back(c);
    }
    ++i;
  }
  if (quoted) throw DataError("load_records: unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();

  RawTable table;
  if (records.empty()) {
    if (!required.empty()) {
      throw DataError("load_records: file has no header row");
    }
    return table;
  }
  table.columns = records[0];
  std::vector<std::string> missing;
  for (const auto& name : required) {
    if (!table.has_column(name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string joined;
    for (const auto& name : missing) {
      if (!joined.empty()) joined += ", ";
      joined += name;
    }
    throw DataError("load_records: missing required columns: " + joined);
  }

  table.cells.assign(table.columns.size(), {});
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.columns.size()) {
      throw DataError("load_records: row " + std::to_string(r) + " has " +
                      std::to_string(records[r].size()) + " fields, expected " +
                      std::to_string(table.columns.size()));
    }
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      table.cells[c].push_back(std::move(records[r][c]));
    }
  }
  return table;
}

Icd9Group icd9_group(const std::string& code) {
  if (RawTable::is_missing(code)) return Icd9Group::missing;
  // Supplementary E/V codes carry no primary-diagnosis range.
  if (code[0] == 'E' || code[0] == 'V') return Icd9Group::other;
  double value = 0.0;
  if (!parse_double(code, &value) || value < 0.0) return Icd9Group::missing;
  const int base = static_cast<int>(value);  // "785.4" groups by 785
  if (base == 250) return Icd9Group::diabetes;
  if ((base >= 390 && base <= 459) || base == 785) return Icd9Group::circulatory;
  if ((base >= 460 && base <= 519) || base == 786) return Icd9Group::respiratory;
  if ((base >= 520 && base <= 579) || base == 787) return Icd9Group::digestive;
  if ((base >= 580 && base <= 629) || base == 788) return Icd9Group::genitourinary;
  if (base >= 710 && base <= 739) return Icd9Group::musculoskeletal;
  if (base >= 800 && base <= 999) return Icd9Group::injury;
  if (base >= 140 && base <= 239) return Icd9Group::neoplasms;
  return Icd9Group::other;
}

const char* icd9_group_name(Icd9Group group) {
  switch (group) {
    case Icd9Group::circulatory: return "circulatory";
    case Icd9Group::respiratory: return "respiratory";
    case Icd9Group::digestive: return "digestive";
    case Icd9Group::diabetes: return "diabetes";
    case Icd9Group::injury: return "injury";
    case Icd9Group::musculoskeletal: return "musculoskeletal";
    case Icd9Group::genitourinary: return "genitourinary";
    case Icd9Group::neoplasms: return "neoplasms";
    case Icd9Group::other: return "other";
    case Icd9Group::missing: return "missing";
  }
  return "unknown";
}

std::size_t PreprocessSpec::feature_count() const {
  std::size_t d = numeric_features.size();
  for (const auto& cf : categorical_features) d += cf.vocabulary.size();
  d += diagnosis_features.size() * kIcd9GroupCount;
  return d;
}

std::vector<std::string> PreprocessSpec::feature_names() const {
  std::vector<std::string> names;
  names.reserve(feature_count());
  for (const auto& nf : numeric_features) names.push_back(nf.name);
  for (const auto& cf : categorical_features) {
    for (const auto& value : cf.vocabulary) names.push_back(cf.name + "=" + value);
  }
  for (const auto& diag : diagnosis_features) {
    for (int g = 0; g < kIcd9GroupCount; ++g) {
      names.push_back(diag + "=" + icd9_group_name(static_cast<Icd9Group>(g)));
    }
  }
  return names;
}

std::uint64_t PreprocessSpec::digest() const {
  Fnv1a h;
  h.update_u64(options.group_secondary_diagnoses ? 1 : 0);
  h.update_u64(options.age_ordinal ? 1 : 0);
  h.update_str(label_column);
  h.update_str(positive_value);
  for (const auto& nf : numeric_features) {
    h.update_str(nf.name);
    h.update_u64(std::bit_cast<std::uint64_t>(nf.min));
    h.update_u64(std::bit_cast<std::uint64_t>(nf.max));
    h.update_u64(std::bit_cast<std::uint64_t>(nf.median));
    h.update_u64(nf.age_bracket ? 1 : 0);
  }
  for (const auto& cf : categorical_features) {
    h.update_str(cf.name);
    for (const auto& value : cf.vocabulary) h.update_str(value);
  }
  for (const auto& diag : diagnosis_features) h.update_str(diag);
  return h.digest();
}

void PreprocessSpec::save(const std::string& path) const {
  nlohmann::json j;
  j["kind"] = "preprocess-spec";
  j["version"] = 1;
  j["options"] = {{"group_secondary_diagnoses", options.group_secondary_diagnoses},
                  {"age_ordinal", options.age_ordinal}};
  j["label"] = {{"column", label_column}, {"positive", positive_value}};
  j["numeric"] = nlohmann::json::array();
  for (const auto& nf : numeric_features) {
    j["numeric"].push_back({{"name", nf.name},
                            {"min", nf.min},
                            {"max", nf.max},
                            {"median", nf.median},
                            {"age_bracket", nf.age_bracket}});
  }
  j["categorical"] = nlohmann::json::array();
  for (const auto& cf : categorical_features) {
    j["categorical"].push_back({{"name", cf.name}, {"vocabulary", cf.vocabulary}});
  }
  j["diagnosis"] = diagnosis_features;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("spec: cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

PreprocessSpec PreprocessSpec::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("spec: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("spec: malformed JSON: ") + e.what());
  }
  if (j.value("kind", "") != "preprocess-spec") {
    throw DataError("spec: '" + path + "' is not a preprocess spec");
  }
  PreprocessSpec spec;
  spec.options.group_secondary_diagnoses = j["options"]["group_secondary_diagnoses"].get<bool>();
  spec.options.age_ordinal = j["options"]["age_ordinal"].get<bool>();
  spec.label_column = j["label"]["column"].get<std::string>();
  spec.positive_value = j["label"]["positive"].get<std::string>();
  for (const auto& item : j["numeric"]) {
    NumericFeature nf;
    nf.name = item["name"].get<std::string>();
    nf.min = item["min"].get<double>();
    nf.max = item["max"].get<double>();
    nf.median = item["median"].get<double>();
    nf.age_bracket = item["age_bracket"].get<bool>();
    spec.numeric_features.push_back(std::move(nf));
  }
  for (const auto& item : j["categorical"]) {
    CategoricalFeature cf;
    cf.name = item["name"].get<std::string>();
    cf.vocabulary = item["vocabulary"].get<std::vector<std::string>>();
    spec.categorical_features.push_back(std::move(cf));
  }
  spec.diagnosis_features = j["diagnosis"].get<std::vector<std::string>>();
  return spec;
}

std::uint64_t Dataset::digest() const {
  Fnv1a h;
  h.update_u64(size());
  h.update_u64(dim());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      h.update_u64(std::bit_cast<std::uint64_t>(features(r, c)));
    }
  }
  for (int y : labels) h.update_u64(static_cast<std::uint64_t>(y));
  for (const auto& name : feature_names) h.update_str(name);
  return h.digest();
}

void Dataset::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("dataset: cannot open '" + path + "' for writing");
  out.write("PMDS", 4);
  write_u64(out, 1);  // version
  write_u64(out, size());
  write_u64(out, dim());
  for (const auto& name : feature_names) write_string(out, name);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      write_f64(out, features(r, c));
    }
  }
  for (int y : labels) write_u64(out, static_cast<std::uint64_t>(y));
  if (!out) throw DataError("dataset: write to '" + path + "' failed");
}

Dataset Dataset::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("dataset: cannot open '" + path + "'");
  expect_magic(in, "PMDS");
  const std::uint64_t version = read_u64(in);
  if (version != 1) throw DataError("dataset: unsupported version " + std::to_string(version));
  const std::uint64_t n = read_u64(in);
  const std::uint64_t d = read_u64(in);
  Dataset ds;
  ds.feature_names.reserve(d);
  for (std::uint64_t c = 0; c < d; ++c) ds.feature_names.push_back(read_string(in));
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint64_t c = 0; c < d; ++c) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = read_f64(in);
    }
  }
  ds.labels.reserve(n);
  for (std::uint64_t r = 0; r < n; ++r) ds.labels.push_back(static_cast<int>(read_u64(in)));
  if (!in) throw DataError("dataset: truncated file '" + path + "'");
  return ds;
}

PreprocessSpec preprocess_fit(const RawTable& train, const PreprocessOptions& options) {
  if (train.rows() == 0) throw DataError("preprocess_fit: empty train table");
  PreprocessSpec spec;
  spec.options = options;
  spec.label_column = kLabelColumn;
  spec.positive_value = kPositiveValue;

  std::vector<std::string> numeric_names = kNumericColumns;
  if (options.age_ordinal) numeric_names.push_back("age");
  for (const auto& name : numeric_names) {
    if (!train.has_column(name)) continue;
    NumericFeature nf;
    nf.name = name;
    nf.age_bracket = (name == "age");
    std::vector<double> values;
    for (const auto& cell : train.column(name)) {
      double value = 0.0;
      const bool ok = nf.age_bracket ? parse_age_bracket(cell, &value) : parse_double(cell, &value);
      if (ok) values.push_back(value);
    }
    if (!values.empty()) {
      nf.min = *std::min_element(values.begin(), values.end());
      nf.max = *std::max_element(values.begin(), values.end());
      nf.median = quartiles(values).median;
    }
    spec.numeric_features.push_back(std::move(nf));
  }

  for (const auto& name : kCategoricalColumns) {
    if (options.age_ordinal && name == "age") continue;
    if (!train.has_column(name)) continue;
    std::set<std::string> distinct;
    for (const auto& cell : train.column(name)) distinct.insert(cell);
    CategoricalFeature cf;
    cf.name = name;
    cf.vocabulary.assign(distinct.begin(), distinct.end());
    spec.categorical_features.push_back(std::move(cf));
  }

  for (const auto& name : kDiagnosisColumns) {
    if (!options.group_secondary_diagnoses && name != "diag_1") continue;
    if (!train.has_column(name)) continue;
    spec.diagnosis_features.push_back(name);
  }

  if (spec.feature_count() == 0) {
    throw DataError("preprocess_fit: no known feature columns in table");
  }
  return spec;
}

Dataset preprocess_apply(const PreprocessSpec& spec, const RawTable& records) {
  const std::size_t n = records.rows();
  const std::size_t d = spec.feature_count();
  Dataset ds;
  ds.feature_names = spec.feature_names();
  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const auto& label_cells = records.column(spec.label_column);
  ds.labels.reserve(n);
  for (const auto& cell : label_cells) ds.labels.push_back(cell == spec.positive_value ? 1 : 0);

  std::size_t col = 0;
  for (const auto& nf : spec.numeric_features) {
    const auto& cells = records.column(nf.name);
    const double range = nf.max - nf.min;
    for (std::size_t r = 0; r < n; ++r) {
      double value = 0.0;
      const bool ok =
          nf.age_bracket ? parse_age_bracket(cells[r], &value) : parse_double(cells[r], &value);
      if (!ok) value = nf.median;
      double scaled = range > 0.0 ? (value - nf.min) / range : 0.0;
      scaled = std::clamp(scaled, 0.0, 1.0);
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = scaled;
    }
    ++col;
  }

  for (const auto& cf : spec.categorical_features) {
    const auto& cells = records.column(cf.name);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t v = 0; v < cf.vocabulary.size(); ++v) index.emplace(cf.vocabulary[v], v);
    for (std::size_t r = 0; r < n; ++r) {
      auto it = index.find(cells[r]);
      if (it != index.end()) {
        // Unseen categories leave the whole block at zero.
        ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col + it->second)) =
            1.0;
      }
    }
    col += cf.vocabulary.size();
  }

  for (const auto& diag : spec.diagnosis_features) {
    const auto& cells = records.column(diag);
    for (std::size_t r = 0; r < n; ++r) {
      const auto group = static_cast<std::size_t>(icd9_group(cells[r]));
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col + group)) = 1.0;
    }
    col += kIcd9GroupCount;
  }

  return ds;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SeededRng rng(derive_seed(seed, "split"));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::size_t split_point(std::size_t n, double train_fraction) {
  if (n < 4) throw DataError("split: need at least 4 rows");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DataError("split: train fraction must lie in (0,1)");
  }
  return static_cast<std::size_t>(train_fraction * static_cast<double>(n));
}

}  // namespace

std::pair<RawTable, RawTable> split_table(const RawTable& table, double train_fraction,
                                          std::uint64_t seed) {
  const std::size_t n = table.rows();
  const std::size_t cut = split_point(n, train_fraction);
  const auto order = shuffled_indices(n, seed);
  RawTable train, test;
  train.columns = test.columns = table.columns;
  train.cells.assign(table.columns.size(), {});
  test.cells.assign(table.columns.size(), {});
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = (i < cut) ? train : test;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      dst.cells[c].push_back(table.cells[c][order[i]]);
    }
  }
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
  const std::size_t n = dataset.size();
  const std::size_t cut = split_point(n, train_fraction);
  const auto order = shuffled_indices(n, seed);
  Dataset train, test;
  train.feature_names = test.feature_names = dataset.feature_names;
  const Eigen::Index d = dataset.features.cols();
  train.features.resize(static_cast<Eigen::Index>(cut), d);
  test.features.resize(static_cast<Eigen::Index>(n - cut), d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(order[i]);
    if (i < cut) {
      train.features.row(static_cast<Eigen::Index>(i)) = dataset.features.row(src);
      train.labels.push_back(dataset.labels[order[i]]);
    } else {
      test.features.row(static_cast<Eigen::Index>(i - cut)) = dataset.features.row(src);
      test.labels.push_back(dataset.labels[order[i]]);
    }
  }
  return {std::move(train), std::move(test)};
}

double SynthInfo::score(const Eigen::VectorXd& x) const {
  double s = bias;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += weights[static_cast<std::size_t>(i)] * x(i);
  return s;
}

Dataset synthesize(std::size_t n, std::size_t d, double positive_rate, double signal_strength,
                   std::uint64_t seed, SynthInfo* info) {
  if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
    throw DataError("synthesize: positive rate must lie in (0,1)");
  }
  if (n == 0 || d == 0) throw DataError("synthesize: n and d must be positive");
  SeededRng rng(derive_seed(seed, "synthesize"));

  // Unit direction u; u.(x - 1/2) has standard deviation 1/sqrt(12) under
  // uniform features, so dividing by it gives the logit a unit-scale slope.
  Eigen::VectorXd direction(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < direction.size(); ++i) direction(i) = rng.gaussian();
  const double norm = direction.norm();
  if (norm > 0.0) direction /= norm;
  const double slope = signal_strength * std::sqrt(12.0);

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.reserve(n);
  ds.feature_names.reserve(d);
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("synth_" + std::to_string(j));
  std::vector<double> raw(n);
  for (std::size_t r = 0; r < n; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = rng.uniform01();
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
      z += direction(static_cast<Eigen::Index>(c)) * (x - 0.5);
    }
    raw[r] = slope * z;
  }

  // Averaging the sigmoid flattens the class balance toward 1/2 as the slope
  // grows, so the intercept is calibrated against the drawn features: bisect
  // b until the mean label probability hits the requested rate.
  double lo = -64.0, hi = 64.0;
  for (int iter = 0; iter < 80; ++iter) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double z : raw) mean += sigmoid(z + mid);
    mean /= static_cast<double>(n);
    (mean < positive_rate ? lo : hi) = mid;
  }
  const double intercept = 0.5 * (lo + hi);

  SynthInfo planted;
  planted.weights.resize(d);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    planted.weights[i] = slope * direction(static_cast<Eigen::Index>(i));
    weight_sum += planted.weights[i];
  }
  planted.bias = intercept - 0.5 * weight_sum;

  for (std::size_t r = 0; r < n; ++r) {
    ds.labels.push_back(rng.bernoulli(sigmoid(raw[r] + intercept)) ? 1 : 0);
  }
  if (info != nullptr) *info = planted;
  return ds;
}

void scale_columns(Dataset& dataset, const std::vector<double>& scales) {
  if (scales.size() != dataset.dim()) {
    throw DataError("scale_columns: scale count does not match feature count");
  }
  for (std::size_t c = 0; c < scales.size(); ++c) {
    dataset.features.col(static_cast<Eigen::Index>(c)) *= scales[c];
  }
}

Dataset minmax_rescale(const Dataset& dataset) {
  Dataset out = dataset;
  for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
    const double lo = out.features.col(c).minCoeff();
    const double hi = out.features.col(c).maxCoeff();
    if (hi > lo) {
      out.features.col(c) = (out.features.col(c).array() - lo) / (hi - lo);
    } else {
      out.features.col(c).setZero();
    }
  }
  return out;
}

}  // namespace privml
