#include <doctest.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "privml/common.hpp"
#include "privml/data.hpp"
#include "privml/metrics.hpp"

using namespace privml;

namespace {

RawTable make_table(std::vector<std::string> columns,
                    std::vector<std::vector<std::string>> rows) {
  RawTable t;
  t.columns = std::move(columns);
  t.cells.assign(t.columns.size(), {});
  for (const auto& row : rows) {
    REQUIRE(row.size() == t.columns.size());
    for (std::size_t c = 0; c < row.size(); ++c) t.cells[c].push_back(row[c]);
  }
  return t;
}

std::string write_temp(const std::string& name, const std::string& text) {
  const std::string path = "/tmp/privml_data_" + name;
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

// Column index of a feature by exact name; fails the test if absent.
Eigen::Index feature_col(const Dataset& ds, const std::string& name) {
  for (std::size_t i = 0; i < ds.feature_names.size(); ++i) {
    if (ds.feature_names[i] == name) return static_cast<Eigen::Index>(i);
  }
  REQUIRE_MESSAGE(false, "feature not found: " << name);
  return 0;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("csv loader: quoting, missing markers, extra columns") {
  const auto path = write_temp(
      "basic.csv",
      "race,gender,notes,readmitted\n"
      "Caucasian,Female,\"kept, with comma\",NO\n"
      "?,Male,plain,<30\n"
      "AfricanAmerican,,x,>30\n");
  RawTable t = load_records(path, {"race", "readmitted"});
  CHECK(t.rows() == 3);
  CHECK(t.columns.size() == 4);  // unknown column kept
  CHECK(t.column("notes")[0] == "kept, with comma");
  CHECK(RawTable::is_missing(t.column("race")[1]));
  CHECK(RawTable::is_missing(t.column("gender")[2]));  // empty field -> missing
  CHECK(t.column("readmitted")[1] == "<30");
}

TEST_CASE("csv loader: header with no data rows is an empty table") {
  const auto path = write_temp("empty.csv", "race,gender,readmitted\n");
  RawTable t = load_records(path, {"race"});
  CHECK(t.rows() == 0);
  CHECK(t.columns.size() == 3);
}

TEST_CASE("csv loader: missing required columns are listed") {
  const auto path = write_temp("short.csv", "race,gender\nCaucasian,Female\n");
  try {
    load_records(path, {"race", "readmitted", "diag_1"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("readmitted") != std::string::npos);
    CHECK(what.find("diag_1") != std::string::npos);
    CHECK(what.find("race") == std::string::npos);
  }
}

TEST_CASE("csv loader: ragged row is rejected") {
  const auto path = write_temp("ragged.csv", "a,b,c\n1,2,3\n4,5\n");
  CHECK_THROWS_AS(load_records(path, {}), DataError);
}

TEST_CASE("icd9 grouping table") {
  struct Case {
    const char* code;
    Icd9Group group;
  };
  const Case cases[] = {
      {"250.83", Icd9Group::diabetes},     {"250", Icd9Group::diabetes},
      {"428", Icd9Group::circulatory},     {"785.6", Icd9Group::circulatory},
      {"486", Icd9Group::respiratory},     {"786.05", Icd9Group::respiratory},
      {"536", Icd9Group::digestive},       {"787.01", Icd9Group::digestive},
      {"599", Icd9Group::genitourinary},   {"788.2", Icd9Group::genitourinary},
      {"715", Icd9Group::musculoskeletal}, {"847", Icd9Group::injury},
      {"999", Icd9Group::injury},          {"162", Icd9Group::neoplasms},
      {"239", Icd9Group::neoplasms},       {"V45", Icd9Group::other},
      {"E915", Icd9Group::other},          {"41", Icd9Group::other},
      {"780", Icd9Group::other},           {"251", Icd9Group::other},
      {"?", Icd9Group::missing},           {"garbage", Icd9Group::missing},
  };
  for (const auto& c : cases) {
    CAPTURE(c.code);
    CHECK(icd9_group(c.code) == c.group);
  }
  CHECK(std::string(icd9_group_name(Icd9Group::diabetes)) == "diabetes");
}

TEST_CASE("fit and apply: scaling, imputation, one-hot") {
  RawTable train = make_table(
      {"time_in_hospital", "num_procedures", "race", "diag_1", "readmitted"},
      {
          {"2", "5", "Caucasian", "428", "NO"},
          {"4", "5", "Asian", "250.83", "<30"},
          {"6", "5", "Caucasian", "?", ">30"},
      });
  PreprocessSpec spec = preprocess_fit(train);
  CHECK(spec.numeric_features.size() == 2);
  CHECK(spec.numeric_features[0].name == "time_in_hospital");
  CHECK(spec.numeric_features[0].min == 2.0);
  CHECK(spec.numeric_features[0].max == 6.0);
  CHECK(spec.numeric_features[0].median == 4.0);
  CHECK(spec.categorical_features.size() == 1);
  CHECK(spec.categorical_features[0].vocabulary == std::vector<std::string>{"Asian", "Caucasian"});
  CHECK(spec.diagnosis_features == std::vector<std::string>{"diag_1"});
  // 2 numerics + 2 race values + 10 diagnosis groups
  CHECK(spec.feature_count() == 14);

  Dataset ds = preprocess_apply(spec, train);
  CHECK(ds.size() == 3);
  CHECK(ds.labels == std::vector<int>{0, 1, 0});
  const auto tih = feature_col(ds, "time_in_hospital");
  CHECK(ds.features(0, tih) == doctest::Approx(0.0));
  CHECK(ds.features(1, tih) == doctest::Approx(0.5));
  CHECK(ds.features(2, tih) == doctest::Approx(1.0));
  // Constant column maps to zero everywhere.
  const auto np = feature_col(ds, "num_procedures");
  for (int r = 0; r < 3; ++r) CHECK(ds.features(r, np) == 0.0);
  CHECK(ds.features(0, feature_col(ds, "race=Caucasian")) == 1.0);
  CHECK(ds.features(0, feature_col(ds, "race=Asian")) == 0.0);
  CHECK(ds.features(0, feature_col(ds, "diag_1=circulatory")) == 1.0);
  CHECK(ds.features(1, feature_col(ds, "diag_1=diabetes")) == 1.0);
  CHECK(ds.features(2, feature_col(ds, "diag_1=missing")) == 1.0);
}

TEST_CASE("apply: clamping, unseen category, median imputation") {
  RawTable train = make_table({"time_in_hospital", "race", "readmitted"},
                              {
                                  {"2", "Caucasian", "NO"},
                                  {"4", "Asian", "NO"},
                                  {"6", "Caucasian", "<30"},
                              });
  PreprocessSpec spec = preprocess_fit(train);
  RawTable test = make_table({"time_in_hospital", "race", "readmitted"},
                             {
                                 {"9", "Hispanic", "NO"},   // beyond max; unseen race
                                 {"?", "Asian", "<30"},     // missing numeric
                                 {"1", "Caucasian", "NO"},  // below min
                             });
  Dataset ds = preprocess_apply(spec, test);
  const auto tih = feature_col(ds, "time_in_hospital");
  CHECK(ds.features(0, tih) == 1.0);  // clamped from 1.75
  CHECK(ds.features(1, tih) == doctest::Approx(0.5));  // median 4 -> 0.5
  CHECK(ds.features(2, tih) == 0.0);  // clamped from -0.25
  // Unseen category leaves the whole block zero.
  CHECK(ds.features(0, feature_col(ds, "race=Asian")) == 0.0);
  CHECK(ds.features(0, feature_col(ds, "race=Caucasian")) == 0.0);
}

TEST_CASE("age: one-hot by default, bracket midpoint behind the flag") {
  RawTable train = make_table({"age", "readmitted"},
                              {
                                  {"[10-20)", "NO"},
                                  {"[50-60)", "<30"},
                                  {"[90-100)", "NO"},
                              });
  PreprocessSpec onehot = preprocess_fit(train);
  CHECK(onehot.numeric_features.empty());
  CHECK(onehot.categorical_features.size() == 1);
  CHECK(onehot.categorical_features[0].vocabulary.size() == 3);

  PreprocessSpec ordinal = preprocess_fit(train, {.age_ordinal = true});
  CHECK(ordinal.categorical_features.empty());
  REQUIRE(ordinal.numeric_features.size() == 1);
  CHECK(ordinal.numeric_features[0].age_bracket);
  CHECK(ordinal.numeric_features[0].min == 15.0);
  CHECK(ordinal.numeric_features[0].max == 95.0);
  Dataset ds = preprocess_apply(ordinal, train);
  CHECK(ds.features(1, 0) == doctest::Approx((55.0 - 15.0) / 80.0));
}

TEST_CASE("secondary diagnoses only behind the flag") {
  RawTable train = make_table({"diag_1", "diag_2", "diag_3", "readmitted"},
                              {
                                  {"428", "250.01", "V45", "NO"},
                                  {"486", "?", "599", "<30"},
                                  {"250", "428", "?", "NO"},
                                  {"162", "786", "715", ">30"},
                              });
  PreprocessSpec primary = preprocess_fit(train);
  CHECK(primary.diagnosis_features == std::vector<std::string>{"diag_1"});
  CHECK(primary.feature_count() == 10);

  PreprocessSpec all = preprocess_fit(train, {.group_secondary_diagnoses = true});
  CHECK(all.diagnosis_features == std::vector<std::string>{"diag_1", "diag_2", "diag_3"});
  CHECK(all.feature_count() == 30);
  Dataset ds = preprocess_apply(all, train);
  CHECK(ds.features(0, feature_col(ds, "diag_2=diabetes")) == 1.0);
  CHECK(ds.features(1, feature_col(ds, "diag_2=missing")) == 1.0);
  CHECK(ds.features(0, feature_col(ds, "diag_3=other")) == 1.0);
}

TEST_CASE("train split range property: non-constant numerics span exactly [0,1]") {
  SeededRng rng(99);
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < 40; ++i) {
    rows.push_back({std::to_string(1 + static_cast<int>(rng.uniform_below(13))),
                    rng.bernoulli(0.5) ? "Male" : "Female",
                    rng.bernoulli(0.2) ? "<30" : "NO"});
  }
  RawTable table = make_table({"num_medications", "gender", "readmitted"}, rows);
  auto [train, test] = split_table(table, 0.75, 7);
  PreprocessSpec spec = preprocess_fit(train);
  Dataset ds = preprocess_apply(spec, train);
  const auto col = feature_col(ds, "num_medications");
  CHECK(ds.features.col(col).minCoeff() == 0.0);
  CHECK(ds.features.col(col).maxCoeff() == 1.0);
}

TEST_CASE("split: sizes, determinism, multiset preservation") {
  RawTable table = make_table({"num_procedures", "readmitted"},
                              {{"1", "NO"}, {"2", "<30"}, {"3", "NO"}, {"4", ">30"}});
  auto [train, test] = split_table(table, 0.75, 5);
  CHECK(train.rows() == 3);
  CHECK(test.rows() == 1);
  auto [train2, test2] = split_table(table, 0.75, 5);
  CHECK(train2.cells == train.cells);
  CHECK(test2.cells == test.cells);

  std::multiset<std::string> seen, expected;
  for (int i = 0; i < 4; ++i) expected.insert(table.cells[0][i]);
  for (const auto& v : train.cells[0]) seen.insert(v);
  for (const auto& v : test.cells[0]) seen.insert(v);
  CHECK(seen == expected);

  RawTable tiny = make_table({"a", "readmitted"}, {{"1", "NO"}, {"2", "NO"}});
  CHECK_THROWS_AS(split_table(tiny, 0.75, 1), DataError);
}

TEST_CASE("split on datasets: disjoint, exhaustive, seeded") {
  Dataset ds = synthesize(101, 5, 0.3, 1.0, 11);
  auto [train, test] = split(ds, 0.75, 3);
  CHECK(train.size() == 75);
  CHECK(test.size() == 26);
  // Multiset equality via per-row digests.
  std::multiset<std::uint64_t> seen, expected;
  auto row_digest = [](const Dataset& d, std::size_t r) {
    Fnv1a h;
    for (Eigen::Index c = 0; c < d.features.cols(); ++c) {
      h.update_u64(std::bit_cast<std::uint64_t>(d.features(static_cast<Eigen::Index>(r), c)));
    }
    h.update_u64(static_cast<std::uint64_t>(d.labels[r]));
    return h.digest();
  };
  for (std::size_t r = 0; r < ds.size(); ++r) expected.insert(row_digest(ds, r));
  for (std::size_t r = 0; r < train.size(); ++r) seen.insert(row_digest(train, r));
  for (std::size_t r = 0; r < test.size(); ++r) seen.insert(row_digest(test, r));
  CHECK(seen == expected);
}

TEST_CASE("synthesize: determinism, class balance, planted signal") {
  SynthInfo info;
  Dataset a = synthesize(4000, 8, 0.1, 1.0, 77, &info);
  Dataset b = synthesize(4000, 8, 0.1, 1.0, 77);
  CHECK(a.digest() == b.digest());
  CHECK(a.features.minCoeff() >= 0.0);
  CHECK(a.features.maxCoeff() <= 1.0);

  double rate = 0.0;
  for (int y : a.labels) rate += y;
  rate /= static_cast<double>(a.size());
  CHECK(rate == doctest::Approx(0.1).epsilon(0.3));  // 0.07 .. 0.13

  // Planted linear model scores.
  std::vector<double> scores;
  for (std::size_t r = 0; r < a.size(); ++r) {
    scores.push_back(info.score(a.features.row(static_cast<Eigen::Index>(r)).transpose()));
  }
  const double planted_auc = auc_score(scores, a.labels);
  CHECK(planted_auc >= 0.65);  // moderate signal separates moderately

  // No signal: the planted direction carries no information.
  SynthInfo flat_info;
  Dataset flat = synthesize(4000, 8, 0.3, 0.0, 13, &flat_info);
  SeededRng probe(123);
  std::vector<double> probe_scores;
  for (std::size_t r = 0; r < flat.size(); ++r) {
    probe_scores.push_back(flat.features.row(static_cast<Eigen::Index>(r)).sum() +
                           probe.uniform01());
  }
  CHECK(auc_score(probe_scores, flat.labels) == doctest::Approx(0.5).epsilon(0.06));

  // Strong signal: the planted model is a near-perfect ranker.
  SynthInfo strong_info;
  Dataset strong = synthesize(2000, 8, 0.3, 8.0, 21, &strong_info);
  std::vector<double> strong_scores;
  for (std::size_t r = 0; r < strong.size(); ++r) {
    strong_scores.push_back(
        strong_info.score(strong.features.row(static_cast<Eigen::Index>(r)).transpose()));
  }
  CHECK(auc_score(strong_scores, strong.labels) >= 0.9);
  double strong_rate = 0.0;
  for (int y : strong.labels) strong_rate += y;
  strong_rate /= static_cast<double>(strong.size());
  CHECK(strong_rate == doctest::Approx(0.3).epsilon(0.15));
}

TEST_CASE("column scaling helpers") {
  Dataset ds = synthesize(200, 4, 0.3, 1.0, 31);
  Dataset scaled = ds;
  scale_columns(scaled, {1.0, 10.0, 100.0, 1000.0});
  CHECK(scaled.features.col(3).maxCoeff() > 100.0);
  Dataset back = minmax_rescale(scaled);
  CHECK(back.features.minCoeff() >= 0.0);
  CHECK(back.features.maxCoeff() <= 1.0);
  // Rescaling is scale-invariant, so it recovers the rescaled original.
  Dataset direct = minmax_rescale(ds);
  CHECK((back.features - direct.features).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(scale_columns(scaled, {1.0}), DataError);
}

TEST_CASE("dataset and spec serialization with digests") {
  RawTable train = make_table({"time_in_hospital", "race", "diag_1", "readmitted"},
                              {
                                  {"2", "Caucasian", "428", "NO"},
                                  {"4", "?", "250.3", "<30"},
                                  {"7", "Asian", "V45", ">30"},
                              });
  PreprocessSpec spec = preprocess_fit(train);
  CHECK(spec.digest() == preprocess_fit(train).digest());

  const std::string spec_path = "/tmp/privml_data_spec.json";
  spec.save(spec_path);
  PreprocessSpec loaded = PreprocessSpec::load(spec_path);
  CHECK(loaded.digest() == spec.digest());
  CHECK(loaded.feature_names() == spec.feature_names());
  // Missing value is its own vocabulary entry.
  CHECK(loaded.categorical_features[0].vocabulary ==
        std::vector<std::string>{"?", "Asian", "Caucasian"});

  Dataset ds = preprocess_apply(spec, train);
  const std::string ds_path = "/tmp/privml_data_cache.bin";
  ds.save(ds_path);
  Dataset restored = Dataset::load(ds_path);
  CHECK(restored.digest() == ds.digest());
  CHECK(restored.feature_names == ds.feature_names);
  CHECK(restored.labels == ds.labels);

  const auto bad_path = write_temp("bad_cache.bin", "not a dataset");
  CHECK_THROWS(Dataset::load(bad_path));
}

TEST_SUITE_END();
