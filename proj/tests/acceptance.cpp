// Acceptance suite: exercises the end-to-end contracts at full parameters and
// prints exactly one PASS/FAIL line per criterion (details on the indented
// lines that follow). Returns the number of failed criteria.
//
//   1. homomorphic add/mul correctness at n = 8192
//   2. NTT vs naive negacyclic product
//   3. RNS fast path vs multiprecision reference
//   4. swish activation fit, rounding, and exponent scan
//   5. encrypted inference == quantized fixed-point forward
//   6. DP sensitivity, accountant vs integration oracle
//   7. benchmark count equalities and wallclock orderings
//   8. training quality (public dataset when present, synthetic otherwise)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "privml/data.hpp"
#include "privml/dpsgd.hpp"
#include "privml/encoding.hpp"
#include "privml/fvrns.hpp"
#include "privml/metrics.hpp"
#include "privml/model.hpp"
#include "privml/polyapprox.hpp"
#include "privml/polyring.hpp"

using namespace privml;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s: criterion %d (%s)\n", pass ? "PASS" : "FAIL", id, name);
  if (!detail.empty()) {
    std::istringstream lines(detail);
    std::string line;
    while (std::getline(lines, line)) std::printf("    %s\n", line.c_str());
  }
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Shared full-size context (criteria 1 and 7).
const EncryptionParams& full_params() {
  static EncryptionParams p = EncryptionParams::create(ParamsConfig{});
  return p;
}
const KeySet& full_keys() {
  static KeySet k = keygen(full_params(), 101);
  return k;
}

// --- criterion 1 ------------------------------------------------------------

void homomorphic_correctness() {
  const auto start = std::chrono::steady_clock::now();
  const EncryptionParams& params = full_params();
  const KeySet& keys = full_keys();
  SeededRng rng(102);

  const int trials = 1000;
  int add_ok = 0, mul_ok = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::int64_t a =
        static_cast<std::int64_t>(rng.uniform_below((1ULL << 21) + 1)) - (1LL << 20);
    const std::int64_t b =
        static_cast<std::int64_t>(rng.uniform_below((1ULL << 21) + 1)) - (1LL << 20);
    const Ciphertext ca = encrypt(encode_int(BigInt(a), params), keys.pk, params, rng);
    const Ciphertext cb = encrypt(encode_int(BigInt(b), params), keys.pk, params, rng);
    if (decode_int(decrypt(add_ct(ca, cb), keys.sk, params), params) == BigInt(a) + b) ++add_ok;
    if (decode_int(decrypt(mul_ct(ca, cb, keys.rk, params), keys.sk, params), params) ==
        BigInt(a) * b) {
      ++mul_ok;
    }
  }

  std::ostringstream detail;
  detail << "n = " << params.n() << ", " << trials << " pairs in [-2^20, 2^20]: " << add_ok
         << " adds exact, " << mul_ok << " products exact (" << std::fixed
         << seconds_since(start) << " s)";
  report(1, "homomorphic correctness", add_ok == trials && mul_ok == trials, detail.str());
}

// --- criterion 2 ------------------------------------------------------------

void ntt_oracle_equivalence() {
  SeededRng rng(201);
  std::ostringstream detail;
  bool pass = true;
  for (std::size_t n : {std::size_t{16}, std::size_t{1024}}) {
    const RnsBase base = RnsBase::create(find_ntt_primes(62, 2, n), n);
    int ok = 0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
      const RnsPoly a = RnsPoly::random_uniform(base, rng);
      const RnsPoly b = RnsPoly::random_uniform(base, rng);
      if (multiply(a, b, MulMethod::ntt).data() == multiply(a, b, MulMethod::naive).data()) ++ok;
    }
    pass = pass && ok == trials;
    detail << "n = " << n << ": " << ok << "/" << trials << " products coefficient-exact\n";
  }
  report(2, "NTT oracle equivalence", pass, detail.str());
}

// --- criterion 3 ------------------------------------------------------------

BigInt floordiv(const BigInt& a, const BigInt& b) {
  BigInt q = a / b;
  if (a % b != 0 && (a < 0) != (b < 0)) --q;
  return q;
}

// Independent multiprecision decryption: reconstruct c0 + c1*s per
// coefficient, then floor((t*v + floor(q/2)) / q) mod t.
std::vector<std::uint64_t> reference_decrypt_instance(const Ciphertext& ct, const SecretKey& sk,
                                                      const EncryptionParams& params,
                                                      std::size_t inst_index) {
  const SchemeInstance& inst = params.instance(inst_index);
  RnsPoly w = ct.c1[inst_index];
  w.to_eval();
  w = dyadic(w, sk.s_eval[inst_index]);
  w.to_coeff();
  add_inplace(w, ct.c0[inst_index]);

  const std::size_t n = params.n();
  const BigInt t(inst.t);
  std::vector<std::uint64_t> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    const BigInt v = inst.q_base.reconstruct_centered(w.data().data() + c, n);
    BigInt m = floordiv(t * v + inst.q_half, inst.q) % t;
    if (m < 0) m += t;
    out[c] = static_cast<std::uint64_t>(m);
  }
  return out;
}

void rns_vs_multiprecision() {
  const auto start = std::chrono::steady_clock::now();
  ParamsConfig config;
  config.n = 256;  // reference prime structure (4x62-bit q, 2x49-bit t) at test size
  const EncryptionParams params = EncryptionParams::create(config);
  const KeySet keys = keygen(params, 301);
  SeededRng rng(302);

  const int trials = 200;
  int mul_ok = 0, dec_ok = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Plaintext ma, mb;
    ma.coeffs.resize(params.instance_count());
    mb.coeffs.resize(params.instance_count());
    for (std::size_t i = 0; i < params.instance_count(); ++i) {
      ma.coeffs[i].resize(params.n());
      mb.coeffs[i].resize(params.n());
      for (auto& v : ma.coeffs[i]) v = rng.uniform_below(params.instance(i).t);
      for (auto& v : mb.coeffs[i]) v = rng.uniform_below(params.instance(i).t);
    }
    const Ciphertext ca = encrypt(ma, keys.pk, params, rng);
    const Ciphertext cb = encrypt(mb, keys.pk, params, rng);

    const Ciphertext fast = mul_ct(ca, cb, keys.rk, params, RnsArithMode::fast);
    const Ciphertext ref = mul_ct(ca, cb, keys.rk, params, RnsArithMode::reference);
    bool same = true;
    for (std::size_t i = 0; i < params.instance_count(); ++i) {
      same = same && fast.c0[i].data() == ref.c0[i].data() &&
             fast.c1[i].data() == ref.c1[i].data();
    }
    if (same) ++mul_ok;

    const Plaintext dec = decrypt(fast, keys.sk, params);
    bool dec_same = true;
    for (std::size_t i = 0; i < params.instance_count(); ++i) {
      dec_same = dec_same &&
                 dec.coeffs[i] == reference_decrypt_instance(fast, keys.sk, params, i);
    }
    if (dec_same) ++dec_ok;
  }

  std::ostringstream detail;
  detail << trials << " random cases: " << mul_ok
         << " ct-mult scalings residue-exact fast vs reference, " << dec_ok
         << " decryptions match the multiprecision re-derivation (" << std::fixed
         << seconds_since(start) << " s)";
  report(3, "RNS vs multiprecision", mul_ok == trials && dec_ok == trials, detail.str());
}

// --- criterion 4 ------------------------------------------------------------

void activation_reproduction() {
  const double published_c2 = 0.12050344;
  const double published_c1 = 0.5;
  const double published_c0 = 0.153613744;

  const double a = calibrate_half_width(swish, published_c2, 0.5, 16.0);
  const ScanResult scan = base2_scan(swish, 2, a);
  const RealPoly& p = scan.fit.poly;

  const bool c1_ok = std::abs(p.c[1] - published_c1) <= 1e-6;
  const bool c2_ok = std::abs(p.c[2] / published_c2 - 1.0) <= 0.02;
  const bool c0_ok = std::abs(p.c[0] / published_c0 - 1.0) <= 0.02;

  auto exponent = [](const Base2Poly& q, std::size_t i) {
    return q.terms[i].zero ? 0 : q.terms[i].exponent * q.terms[i].sign;
  };
  const bool matches_published = exponent(scan.best, 2) == -3 && exponent(scan.best, 1) == -1 &&
                                 exponent(scan.best, 0) == -4;

  Base2Poly published;
  published.terms.resize(3);
  published.terms[0] = {false, -4, +1};
  published.terms[1] = {false, -1, +1};
  published.terms[2] = {false, -3, +1};
  const double published_err =
      max_error(swish, [&](double x) { return published(x); }, a);

  const bool chain_ok =
      scan.fit.max_err <= scan.best_err + 1e-12 && scan.best_err <= scan.rounded_err + 1e-12;

  std::ostringstream detail;
  detail << std::setprecision(9);
  detail << "calibrated interval [-" << a << ", " << a << "], fit (c2, c1, c0) = (" << p.c[2]
         << ", " << p.c[1] << ", " << p.c[0] << "), error " << scan.fit.max_err << "\n";
  detail << "scan winner exponents (" << exponent(scan.best, 2) << ", " << exponent(scan.best, 1)
         << ", " << exponent(scan.best, 0) << "), error " << scan.best_err << "\n";
  if (!matches_published) {
    detail << "discrepancy report: published tuple (-3, -1, -4) has error " << published_err
           << " vs scan winner " << scan.best_err
           << "; the scan's constant term 2^-3 is the better rounding on this interval\n";
  }
  detail << "error chain minimax <= scan <= rounded: " << scan.fit.max_err << " <= "
         << scan.best_err << " <= " << scan.rounded_err;

  // The published tuple matching is the primary outcome; the documented
  // discrepancy report with both errors is the accepted alternative.
  const bool pass = c1_ok && c2_ok && c0_ok && chain_ok &&
                    (matches_published || scan.best_err <= published_err);
  report(4, "activation reproduction", pass, detail.str());
}

// --- criterion 5 ------------------------------------------------------------

void encrypted_inference_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  ParamsConfig config;
  config.n = 1024;  // circuit degree tops out near 160; 1024 keeps runtime sane
  const EncryptionParams params = EncryptionParams::create(config);
  const KeySet keys = keygen(params, 501);

  const Dataset all = synthesize(400, 16, 0.3, 2.0, 502);
  const auto [train_data, test_data] = split(all, 0.75, 502);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch = 64;
  tc.hidden = 32;
  tc.learning_rate = 1e-2;
  tc.activation = ActivationKind::swish_quant;
  tc.seed = 503;
  const TrainResult trained = train(train_data, tc);
  const EncryptedModel em = quantize_model(trained.model, params);

  SeededRng rng(504);
  const std::size_t rows = 50;
  std::size_t exact = 0;
  double max_drift = 0.0, max_bound = 0.0;
  bool drift_ok = true;
  for (std::size_t r = 0; r < rows; ++r) {
    const Eigen::VectorXd x = test_data.features.row(static_cast<Eigen::Index>(r)).transpose();
    const std::vector<std::int64_t> fixed = fixed_point_input(x, em.scale_bits);
    const std::vector<Ciphertext> cts =
        encrypt_features(fixed, em.scale_bits, keys.pk, params, rng);
    const EncryptedForwardResult result = encrypted_forward(em, cts, keys.rk, params);
    const BigInt decoded = decode_int(decrypt(result.score, keys.sk, params), params);
    if (decoded == quantized_forward_integer(em, fixed)) ++exact;

    const double s = forward(trained.model, x);
    const double drift = std::abs(s - quantized_score(em, x));
    const double bound = std::ldexp(1.0, -10) * (1.0 + std::abs(s));
    max_drift = std::max(max_drift, drift);
    max_bound = std::max(max_bound, bound);
    drift_ok = drift_ok && drift <= bound;
  }

  std::ostringstream detail;
  detail << rows << " rows at n = " << params.n() << ": " << exact
         << " encrypted scores equal the integer twin exactly; max float drift "
         << std::scientific << std::setprecision(3) << max_drift << " within 2^-10*(1+|s|) (<= "
         << max_bound << ") (" << std::fixed << seconds_since(start) << " s)";
  report(5, "encrypted inference equivalence", exact == rows && drift_ok, detail.str());
}

// --- criterion 6 ------------------------------------------------------------

namespace oracle {

// Long-double trapezoid integration of the log-moment integrand on the direct
// formula; independent of the adaptive-Simpson implementation under test.
long double log_moment(double q, double sigma, double order) {
  const long double s = sigma;
  const long double alpha = order;
  const long double lo = -12.0L * s - 2.0L;
  const long double hi = alpha + 12.0L * s + 2.0L;
  const std::size_t steps = 400000;
  const long double h = (hi - lo) / steps;
  long double sum = 0.0L;
  for (std::size_t i = 0; i <= steps; ++i) {
    const long double z = lo + h * static_cast<long double>(i);
    const long double ratio = 1.0L + q * std::expm1((2.0L * z - 1.0L) / (2.0L * s * s));
    const long double integrand =
        (std::pow(ratio, alpha) - 1.0L) *
        std::exp(-z * z / (2.0L * s * s)) /
        (s * std::sqrt(2.0L * std::numbers::pi_v<long double>));
    sum += (i == 0 || i == steps) ? integrand / 2.0L : integrand;
  }
  return std::log1p(sum * h);
}

}  // namespace oracle

void dp_mechanics() {
  bool pass = true;
  std::ostringstream detail;

  // Pre-noise sensitivity of the clipped sum: swapping in one extra example
  // moves the sum by at most C.
  SeededRng rng(601);
  const double clip = 1.0;
  int sens_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd sum_a = Eigen::VectorXd::Zero(20);
    for (int k = 0; k < 32; ++k) {
      Eigen::VectorXd g(20);
      for (int i = 0; i < 20; ++i) g(i) = rng.gaussian(0.0, 3.0);
      sum_a += clip_gradient(g, clip);
    }
    Eigen::VectorXd extra(20);
    for (int i = 0; i < 20; ++i) extra(i) = rng.gaussian(0.0, 3.0);
    const Eigen::VectorXd sum_b = sum_a + clip_gradient(extra, clip);
    if ((sum_b - sum_a).norm() <= clip + 1e-12) ++sens_ok;
  }
  pass = pass && sens_ok == 100;
  detail << "sensitivity: " << sens_ok << "/100 neighboring clipped sums within C = " << clip
         << "\n";

  // Accountant vs the independent integration oracle.
  const double q = 0.004, sigma = 4.0;
  const std::vector<double> orders = {1.5, 2.0, 4.0, 8.0, 16.0, 32.0};
  double worst_rel = 0.0;
  for (double order : orders) {
    const double mine = log_moment_single(q, sigma, order);
    const double ref = static_cast<double>(oracle::log_moment(q, sigma, order));
    worst_rel = std::max(worst_rel, std::abs(mine - ref) / std::abs(ref));
  }
  pass = pass && worst_rel <= 0.005;
  detail << "single-step log-moments within " << std::scientific << std::setprecision(2)
         << worst_rel << " relative of the oracle (bound 5e-3)\n";

  const std::size_t steps = 293;
  const double delta = 1e-5;
  PrivacyAccountant acct(orders);
  acct.update(q, sigma, steps);
  const double eps = acct.epsilon(delta);
  double eps_oracle = std::numeric_limits<double>::infinity();
  for (double order : orders) {
    const double lm = static_cast<double>(oracle::log_moment(q, sigma, order));
    eps_oracle = std::min(
        eps_oracle, (static_cast<double>(steps) * lm + std::log(1.0 / delta)) / (order - 1.0));
  }
  const double eps_rel = std::abs(eps - eps_oracle) / eps_oracle;
  pass = pass && eps_rel <= 0.01;
  detail << std::fixed << std::setprecision(6) << "composed epsilon(delta=1e-5) at T = " << steps
         << ": " << eps << " vs oracle " << eps_oracle << " (relative " << std::scientific
         << std::setprecision(2) << eps_rel << ", bound 1e-2)\n";

  // Strict monotonicity in T.
  bool monotone = true;
  double prev = 0.0;
  std::vector<double> grid_eps;
  for (std::size_t t : {50, 100, 200, 400, 800}) {
    PrivacyAccountant per(PrivacyAccountant::default_orders());
    per.update(0.01, 1.5, t);
    const double e = per.epsilon(delta);
    monotone = monotone && e > prev;
    grid_eps.push_back(e);
    prev = e;
  }
  pass = pass && monotone;
  detail << std::fixed << std::setprecision(4) << "epsilon strictly increasing over T grid: ";
  for (std::size_t i = 0; i < grid_eps.size(); ++i) detail << (i ? ", " : "") << grid_eps[i];

  report(6, "DP mechanics", pass, detail.str());
}

// --- criterion 7 ------------------------------------------------------------

void benchmark_orderings() {
  const auto start = std::chrono::steady_clock::now();
  const EncryptionParams& params = full_params();
  const KeySet& keys = full_keys();

  const MlpModel model = MlpModel::init(4, 32, ActivationKind::swish_quant, 701);
  const EncryptedModel swish = quantize_model(model, params);
  EncryptedModel square = swish;
  square.activation = ActivationKind::square;

  SeededRng rng(702);
  std::vector<std::int64_t> fixed(swish.d);
  for (auto& v : fixed) {
    v = static_cast<std::int64_t>(rng.uniform_below(std::uint64_t{1} << swish.scale_bits));
  }
  const std::vector<Ciphertext> cts =
      encrypt_features(fixed, swish.scale_bits, keys.pk, params, rng);

  struct Variant {
    const char* name;
    const EncryptedModel* model;
    PlainMulPath path;
    double median = 0.0;
    OpCounters ops;
  };
  Variant variants[] = {
      {"square", &square, PlainMulPath::shift, 0.0, {}},
      {"swish-generic", &swish, PlainMulPath::generic, 0.0, {}},
      {"swish-shift", &swish, PlainMulPath::shift, 0.0, {}},
  };

  // One warmup per variant, then interleaved timed rounds in an order
  // reshuffled each round: on a single busy core this spreads load bursts
  // evenly across variants (no position or phase bias), and the cross-variant
  // ratio checks below tolerate the remaining common-mode drift.
  for (Variant& v : variants) {
    v.ops = encrypted_forward(*v.model, cts, keys.rk, params, v.path).ops;
  }
  constexpr int kTrials = 7;
  std::vector<double> times[3];
  SeededRng order_rng(703);
  std::size_t order[3] = {0, 1, 2};
  for (int t = 0; t < kTrials; ++t) {
    for (std::size_t i = 2; i > 0; --i) {
      std::swap(order[i], order[order_rng.uniform_below(i + 1)]);
    }
    for (std::size_t i : order) {
      const Variant& v = variants[i];
      const auto t0 = std::chrono::steady_clock::now();
      (void)encrypted_forward(*v.model, cts, keys.rk, params, v.path);
      times[i].push_back(seconds_since(t0));
    }
  }
  for (std::size_t i = 0; i < 3; ++i) variants[i].median = quartiles(times[i]).median;

  const auto muls = [](const OpCounters& ops) { return ops.ct_mul + ops.plain_mul; };
  const bool counts_equal = muls(variants[1].ops) == muls(variants[2].ops);
  const bool square_smaller = muls(variants[0].ops) < muls(variants[1].ops);
  const double shift_vs_square =
      std::abs(variants[2].median - variants[0].median) / variants[0].median;
  const bool within_5pct = shift_vs_square <= 0.05;
  const bool shift_le_generic = variants[2].median <= variants[1].median;

  std::ostringstream detail;
  for (const Variant& v : variants) {
    detail << std::left << std::setw(14) << v.name << " median " << std::fixed
           << std::setprecision(3) << v.median << " s, " << muls(v.ops)
           << " multiplicative ops (" << v.ops.ct_mul << " ct, " << v.ops.plain_mul
           << " plain)\n";
  }
  detail << "swish counts equal: " << (counts_equal ? "yes" : "NO")
         << "; square strictly smaller: " << (square_smaller ? "yes" : "NO")
         << "; shift within 5% of square: " << std::setprecision(1) << shift_vs_square * 100.0
         << "%; shift <= generic: " << (shift_le_generic ? "yes" : "NO") << " ("
         << std::setprecision(1) << seconds_since(start) << " s)";
  report(7, "benchmark orderings", counts_equal && square_smaller && within_5pct && shift_le_generic,
         detail.str());
}

// --- criterion 8 ------------------------------------------------------------

std::string find_diabetes_csv() {
  const char* candidates[] = {
#ifdef PRIVML_SOURCE_DIR
      PRIVML_SOURCE_DIR "/data/diabetic_data.csv",
      PRIVML_SOURCE_DIR "/data/dataset_diabetes/diabetic_data.csv",
#endif
      "data/diabetic_data.csv",
      "diabetic_data.csv",
  };
  for (const char* path : candidates) {
    if (std::filesystem::exists(path)) return path;
  }
  return {};
}

void training_quality_dataset(const std::string& csv) {
  const auto start = std::chrono::steady_clock::now();
  const RawTable table = load_records(csv);
  const auto [train_rows, test_rows] = split_table(table, 0.75, 801);
  const PreprocessSpec spec = preprocess_fit(train_rows);
  const Dataset train_data = preprocess_apply(spec, train_rows);
  const Dataset test_data = preprocess_apply(spec, test_rows);

  bool pass = true;
  std::ostringstream detail;

  double auc_min = 1.0, recall_min = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch = 256;
    tc.activation = ActivationKind::swish_quant;
    tc.seed = seed;
    const TrainResult r = train(train_data, tc);
    const std::vector<double> scores = predict_scores(r.model, test_data);
    auc_min = std::min(auc_min, auc_score(scores, test_data.labels));
    const ClassificationReport rep = classification_report(scores, test_data.labels);
    recall_min = std::min(recall_min, rep.recall_defined ? rep.recall : 0.0);
  }
  pass = pass && auc_min >= 0.66 && recall_min >= 0.50;
  detail << "5 seeds non-private: min AUC " << std::fixed << std::setprecision(4) << auc_min
         << " (>= 0.66), min recall " << recall_min << " (>= 0.50)\n";

  const double target_eps = 4.0, delta = 1e-5;
  const double q = 256.0 / static_cast<double>(train_data.size());
  const std::size_t dp_steps = 10 * std::max<std::size_t>(1, train_data.size() / 256);
  TrainConfig dc;
  dc.epochs = 10;
  dc.batch = 256;
  dc.activation = ActivationKind::swish_quant;
  dc.seed = 1;
  DpConfig dp;
  dp.sigma = solve_noise_scale(target_eps, delta, q, dp_steps);
  dp.clip = 1.0;
  dp.delta = delta;
  dc.dp = dp;
  const TrainResult dp_result = train(train_data, dc);
  const double dp_auc = auc_score(predict_scores(dp_result.model, test_data), test_data.labels);
  pass = pass && dp_auc >= 0.62;
  detail << "DP at (eps = " << target_eps << ", delta = 1e-5), sigma = " << dp.sigma
         << ", spent eps = " << dp_result.final_epsilon << ": AUC " << dp_auc << " (>= 0.62)\n";

  const MlpModel probe = MlpModel::init(train_data.dim(), 32, ActivationKind::swish_quant, 803);
  std::vector<double> std_norms;
  for (std::size_t i = 0; i < std::min<std::size_t>(train_data.size(), 2000); ++i) {
    std_norms.push_back(
        example_gradient(probe, train_data.features.row(static_cast<Eigen::Index>(i)).transpose(),
                         train_data.labels[i], 8.0)
            .norm());
  }
  // Undo the min-max normalization to recover raw clinical scales.
  Dataset raw = train_data;
  std::vector<double> spans;
  for (const NumericFeature& f : spec.numeric_features) spans.push_back(f.max - f.min);
  spans.resize(raw.dim(), 1.0);
  scale_columns(raw, spans);
  std::vector<double> raw_norms;
  for (std::size_t i = 0; i < std::min<std::size_t>(raw.size(), 2000); ++i) {
    raw_norms.push_back(
        example_gradient(probe, raw.features.row(static_cast<Eigen::Index>(i)).transpose(),
                         raw.labels[i], 8.0)
            .norm());
  }
  const double med_std = quartiles(std_norms).median;
  const double med_raw = quartiles(raw_norms).median;
  pass = pass && med_std <= 5.0 && med_raw >= 20.0;
  detail << "median gradient norm: standardized " << med_std << " (<= 5), raw-scale " << med_raw
         << " (>= 20) (" << std::setprecision(1) << seconds_since(start) << " s)";

  report(8, "training quality (diabetes dataset)", pass, detail.str());
}

void training_quality_synthetic() {
  const auto start = std::chrono::steady_clock::now();
  bool pass = true;
  std::ostringstream detail;

  // Standardization effect on gradient norms, with feature scales mimicking
  // the clinical columns (day counts through lab-procedure counts).
  Dataset scaled = synthesize(600, 8, 0.3, 1.5, 801);
  scale_columns(scaled, {1.0, 5.0, 20.0, 60.0, 120.0, 300.0, 30.0, 10.0});
  const Dataset standardized = minmax_rescale(scaled);
  const MlpModel probe = MlpModel::init(8, 32, ActivationKind::swish_quant, 802);
  std::vector<double> raw_norms, std_norms;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    raw_norms.push_back(
        example_gradient(probe, scaled.features.row(static_cast<Eigen::Index>(i)).transpose(),
                         scaled.labels[i], 8.0)
            .norm());
    std_norms.push_back(
        example_gradient(probe,
                         standardized.features.row(static_cast<Eigen::Index>(i)).transpose(),
                         standardized.labels[i], 8.0)
            .norm());
  }
  const double med_raw = quartiles(raw_norms).median;
  const double med_std = quartiles(std_norms).median;
  const double ratio = med_raw / med_std;
  pass = pass && ratio >= 4.0;
  detail << std::fixed << std::setprecision(3) << "median gradient norm raw-scale " << med_raw
         << " vs standardized " << med_std << ": " << std::setprecision(1) << ratio
         << "x reduction (>= 4x)\n";

  // DP utility loss on the planted-signal generator.
  const Dataset all = synthesize(2000, 8, 0.3, 2.0, 803);
  const auto [train_data, test_data] = split(all, 0.75, 803);
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch = 100;
  tc.hidden = 16;
  tc.w_pos = 1.0;
  tc.learning_rate = 5e-3;
  tc.activation = ActivationKind::swish_quant;
  tc.seed = 804;
  const TrainResult plain = train(train_data, tc);
  const double plain_auc = auc_score(predict_scores(plain.model, test_data), test_data.labels);

  TrainConfig dc = tc;
  DpConfig dp;
  dp.sigma = 1.0;
  dp.clip = 1.0;
  dp.delta = 1e-5;
  dc.dp = dp;
  const TrainResult noised = train(train_data, dc);
  const double dp_auc = auc_score(predict_scores(noised.model, test_data), test_data.labels);

  pass = pass && dp_auc >= plain_auc - 0.05;
  detail << std::setprecision(4) << "planted-signal AUC: non-private " << plain_auc
         << ", DP at sigma = 1 " << dp_auc << " (spent eps " << std::setprecision(2)
         << noised.final_epsilon << "); loss " << std::setprecision(4) << (plain_auc - dp_auc)
         << " (<= 0.05) (" << std::setprecision(1) << seconds_since(start) << " s)";

  report(8, "training quality (synthetic fallback)", pass, detail.str());
}

}  // namespace

int main() {
  homomorphic_correctness();
  ntt_oracle_equivalence();
  rns_vs_multiprecision();
  activation_reproduction();
  encrypted_inference_equivalence();
  dp_mechanics();
  benchmark_orderings();
  const std::string csv = find_diabetes_csv();
  if (csv.empty()) {
    training_quality_synthetic();
  } else {
    training_quality_dataset(csv);
  }
  std::printf("%d of 8 criteria failed\n", g_failures);
  return g_failures;
}
