// privml: end-to-end pipeline driver.
//
// Subcommands cover the whole flow: preprocess/synth produce dataset
// directories, train fits the network (optionally under DP), keygen /
// encrypt-model / encrypt-input / infer / decrypt run the encrypted side,
// evaluate and bench report metrics and runtime. Every subcommand writes a
// JSON run manifest next to its output recording the configuration, seeds,
// file digests, wallclock, and operation counters.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "privml/data.hpp"
#include "privml/dpsgd.hpp"
#include "privml/fvrns.hpp"
#include "privml/metrics.hpp"
#include "privml/model.hpp"
#include "privml/polyapprox.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace privml;

namespace {

// --- manifest plumbing ------------------------------------------------------

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot digest '" + path + "'");
  Fnv1a h;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

// Manifest: subcommand + config digest + seeds + input/output paths (outputs
// with content digests) + wallclock + optional op counters.
struct Manifest {
  std::string subcommand;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json extra = json::object();

  void write(const std::string& path, double wallclock_seconds) const {
    json m;
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["config_digest"] = fnv1a(config.dump());
    m["inputs"] = inputs;
    json outs = json::array();
    for (const std::string& p : outputs) {
      outs.push_back({{"path", p}, {"digest", file_digest(p)}});
    }
    m["outputs"] = outs;
    m["wallclock_seconds"] = wallclock_seconds;
    for (auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest '" + path + "'");
    out << m.dump(2) << '\n';
  }
};

std::string manifest_path_for_dir(const std::string& dir) {
  return (fs::path(dir) / "manifest.json").string();
}
std::string manifest_path_for_file(const std::string& file) { return file + ".manifest.json"; }

// --- shared file helpers ----------------------------------------------------

EncryptionParams load_params(const std::string& keys_dir) {
  const std::string path = (fs::path(keys_dir) / "params.bin").string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return EncryptionParams::load(in);
}

template <typename Key>
Key load_key(const std::string& keys_dir, const char* name, const EncryptionParams& params) {
  const std::string path = (fs::path(keys_dir) / name).string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return Key::load(in, &params);
}

EncryptedModel load_emodel(const std::string& path, const EncryptionParams* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return EncryptedModel::load(in, expect);
}

// Ciphertext-vector container for encrypted feature rows.
void save_ct_vector(const std::string& path, const std::vector<Ciphertext>& cts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write("PMCV", 4);
  write_u64(out, 1);  // version
  write_u64(out, cts.size());
  for (const Ciphertext& ct : cts) ct.save(out);
}

std::vector<Ciphertext> load_ct_vector(const std::string& path, const EncryptionParams& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  expect_magic(in, "PMCV");
  if (read_u64(in) != 1) throw std::runtime_error("ciphertext vector: unsupported version");
  const std::uint64_t count = read_u64(in);
  std::vector<Ciphertext> cts;
  cts.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) cts.push_back(Ciphertext::load(in, &params));
  return cts;
}

Ciphertext load_ct(const std::string& path, const EncryptionParams& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return Ciphertext::load(in, &params);
}

Dataset load_split(const std::string& data_dir, const std::string& split) {
  if (split != "train" && split != "test") {
    throw std::runtime_error("split must be 'train' or 'test', got '" + split + "'");
  }
  return Dataset::load((fs::path(data_dir) / (split + ".bin")).string());
}

std::vector<double> read_row_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<double> values;
  double v = 0.0;
  while (in >> v) values.push_back(v);
  if (values.empty()) throw std::runtime_error("row file '" + path + "' holds no numbers");
  return values;
}

json counters_json(const OpCounters& ops) {
  return {{"ct_mul", ops.ct_mul},
          {"plain_mul", ops.plain_mul},
          {"add", ops.add},
          {"mul_total", ops.ct_mul + ops.plain_mul}};
}

std::string base2_string(const Base2Poly& p) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = p.terms.size(); i-- > 0;) {
    const Base2Term& t = p.terms[i];
    if (t.zero) continue;
    if (!first) os << (t.sign < 0 ? " - " : " + ");
    else if (t.sign < 0) os << "-";
    os << "2^" << t.exponent;
    if (i == 1) os << " x";
    if (i > 1) os << " x^" << i;
    first = false;
  }
  if (first) os << "0";
  return os.str();
}

// --- subcommand bodies ------------------------------------------------------

struct PreprocessArgs {
  std::string input, out;
  std::uint64_t seed = 1;
  double train_fraction = 0.75;
  bool group_secondary = false;
  bool age_ordinal = false;
};

int run_preprocess(const PreprocessArgs& a) {
  Stopwatch timer;
  fs::create_directories(a.out);
  const RawTable table = load_records(a.input);
  const auto [train_rows, test_rows] = split_table(table, a.train_fraction, a.seed);

  PreprocessOptions options;
  options.group_secondary_diagnoses = a.group_secondary;
  options.age_ordinal = a.age_ordinal;
  const PreprocessSpec spec = preprocess_fit(train_rows, options);
  const Dataset train = preprocess_apply(spec, train_rows);
  const Dataset test = preprocess_apply(spec, test_rows);

  const std::string spec_path = (fs::path(a.out) / "spec.json").string();
  const std::string train_path = (fs::path(a.out) / "train.bin").string();
  const std::string test_path = (fs::path(a.out) / "test.bin").string();
  spec.save(spec_path);
  train.save(train_path);
  test.save(test_path);

  std::size_t positives = 0;
  for (int y : train.labels) positives += static_cast<std::size_t>(y);
  std::cout << "preprocess: " << table.rows() << " rows -> " << train.size() << " train / "
            << test.size() << " test, " << train.dim() << " features, "
            << positives << " train positives\n";

  Manifest m;
  m.subcommand = "preprocess";
  m.config = {{"input", a.input},
              {"seed", a.seed},
              {"train_fraction", a.train_fraction},
              {"group_secondary_diagnoses", a.group_secondary},
              {"age_ordinal", a.age_ordinal}};
  m.inputs = {a.input};
  m.outputs = {spec_path, train_path, test_path};
  m.extra = {{"rows", table.rows()},
             {"train_rows", train.size()},
             {"test_rows", test.size()},
             {"feature_count", train.dim()},
             {"spec_digest", spec.digest()},
             {"train_digest", train.digest()},
             {"test_digest", test.digest()}};
  m.write(manifest_path_for_dir(a.out), timer.seconds());
  return 0;
}

struct SynthArgs {
  std::size_t n = 1000, d = 16;
  double pos_rate = 0.3, signal = 1.0, train_fraction = 0.75;
  std::uint64_t seed = 1;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  Stopwatch timer;
  fs::create_directories(a.out);
  const Dataset all = synthesize(a.n, a.d, a.pos_rate, a.signal, a.seed);
  const auto [train, test] = split(all, a.train_fraction, a.seed);

  const std::string train_path = (fs::path(a.out) / "train.bin").string();
  const std::string test_path = (fs::path(a.out) / "test.bin").string();
  train.save(train_path);
  test.save(test_path);

  std::cout << "synth: " << all.size() << " rows, " << all.dim() << " features -> "
            << train.size() << " train / " << test.size() << " test\n";

  Manifest m;
  m.subcommand = "synth";
  m.config = {{"n", a.n},         {"d", a.d},
              {"pos_rate", a.pos_rate}, {"signal", a.signal},
              {"seed", a.seed},   {"train_fraction", a.train_fraction}};
  m.outputs = {train_path, test_path};
  m.extra = {{"train_digest", train.digest()}, {"test_digest", test.digest()}};
  m.write(manifest_path_for_dir(a.out), timer.seconds());
  return 0;
}

struct TrainArgs {
  std::string data, out, log, activation = "swish-quant";
  std::size_t epochs = 30, batch = 256, hidden = 32;
  double w_pos = 8.0, lr = 1e-3;
  std::uint64_t seed = 1;
  bool dp = false;
  double sigma = 1.0, clip = 1.0, delta = 1e-5;
  double eps_budget = std::numeric_limits<double>::infinity();
};

int run_train(const TrainArgs& a) {
  Stopwatch timer;
  const Dataset train_data = load_split(a.data, "train");

  TrainConfig config;
  config.epochs = a.epochs;
  config.batch = std::min(a.batch, train_data.size());
  if (config.batch < a.batch) {
    std::cerr << "train: batch clamped to dataset size " << config.batch << "\n";
  }
  config.w_pos = a.w_pos;
  config.learning_rate = a.lr;
  config.hidden = a.hidden;
  config.activation = activation_from_name(a.activation);
  config.seed = a.seed;
  if (a.dp) {
    DpConfig dp;
    dp.sigma = a.sigma;
    dp.clip = a.clip;
    dp.delta = a.delta;
    dp.epsilon_budget = a.eps_budget;
    config.dp = dp;
  }

  TrainResult result = train(train_data, config);

  const std::string spec_path = (fs::path(a.data) / "spec.json").string();
  if (fs::exists(spec_path)) {
    result.model.preprocess_digest = PreprocessSpec::load(spec_path).digest();
  }
  result.model.save(a.out);

  std::ostringstream log_lines;
  for (const TrainRecord& r : result.history) {
    log_lines << "step=" << r.step << " loss=" << std::setprecision(8) << r.loss
              << " epsilon=" << r.epsilon << " grad_norm_median=" << r.grad_norm_median << "\n";
  }
  if (!a.log.empty()) {
    std::ofstream log_out(a.log);
    if (!log_out) throw std::runtime_error("cannot write log '" + a.log + "'");
    log_out << log_lines.str();
  } else {
    std::cout << log_lines.str();
  }
  std::cout << "train: " << result.history.size() << " steps, final loss "
            << (result.history.empty() ? 0.0 : result.history.back().loss);
  if (a.dp) std::cout << ", epsilon " << result.final_epsilon;
  if (result.budget_exhausted) std::cout << " (budget exhausted)";
  std::cout << "\n";

  Manifest m;
  m.subcommand = "train";
  m.config = {{"data", a.data},     {"epochs", a.epochs},   {"batch", config.batch},
              {"activation", a.activation}, {"hidden", a.hidden}, {"w_pos", a.w_pos},
              {"learning_rate", a.lr},      {"seed", a.seed},     {"dp", a.dp}};
  if (a.dp) {
    m.config["sigma"] = a.sigma;
    m.config["clip"] = a.clip;
    m.config["delta"] = a.delta;
    m.config["eps_budget"] = a.eps_budget;
  }
  m.inputs = {a.data};
  m.outputs = {a.out};
  if (!a.log.empty()) m.outputs.push_back(a.log);
  m.extra = {{"steps", result.history.size()},
             {"final_epsilon", result.final_epsilon},
             {"budget_exhausted", result.budget_exhausted}};
  m.write(manifest_path_for_file(a.out), timer.seconds());
  return 0;
}

struct ApproxArgs {
  int degree = 2;
  double interval_a = 4.0;
  double bound = -1.0;  // constraint band half-width K; < 0 means 3 * fit error
  int radius = 3;
  double calibrate_c2 = 0.0;  // > 0: recover the interval from this c2 first
};

int run_approx(const ApproxArgs& a) {
  double half_width = a.interval_a;
  if (a.calibrate_c2 > 0.0) {
    half_width = calibrate_half_width(swish, a.calibrate_c2, 0.5, 16.0);
    std::cout << "calibrated half-width a = " << std::setprecision(10) << half_width
              << " (quadratic coefficient " << a.calibrate_c2 << ")\n";
  }
  ScanConfig config;
  config.radius = a.radius;
  config.K = a.bound;
  const ScanResult scan = base2_scan(swish, a.degree, half_width, config);

  std::cout << std::setprecision(10);
  std::cout << "interval        [-" << half_width << ", " << half_width << "]\n";
  std::cout << "minimax p       ";
  for (std::size_t i = 0; i < scan.fit.poly.c.size(); ++i) {
    std::cout << (i ? " " : "") << "c" << i << "=" << scan.fit.poly.c[i];
  }
  std::cout << "\nminimax error   " << scan.fit.max_err << "\n";
  std::cout << "rounded p^      " << base2_string(scan.rounded) << "  error "
            << scan.rounded_err << "\n";
  std::cout << "scanned p*      " << base2_string(scan.best) << "  error " << scan.best_err
            << "\n";
  std::cout << "scan            " << scan.feasible << " feasible of " << scan.evaluated
            << " candidates\n";
  return 0;
}

struct KeygenArgs {
  std::size_t n = 8192;
  std::size_t q_bits = 62, q_count = 4, t_bits = 49, instances = 2;
  std::uint64_t seed = 1;
  std::string out;
};

int run_keygen(const KeygenArgs& a) {
  Stopwatch timer;
  fs::create_directories(a.out);
  ParamsConfig config;
  config.n = a.n;
  config.q_prime_bits = a.q_bits;
  config.q_prime_count = a.q_count;
  config.t_bits = a.t_bits;
  config.instances = a.instances;
  const EncryptionParams params = EncryptionParams::create(config);
  const KeySet keys = keygen(params, a.seed);

  const std::string params_path = (fs::path(a.out) / "params.bin").string();
  const std::string sk_path = (fs::path(a.out) / "secret.bin").string();
  const std::string pk_path = (fs::path(a.out) / "public.bin").string();
  const std::string rk_path = (fs::path(a.out) / "relin.bin").string();
  {
    std::ofstream out(params_path, std::ios::binary);
    params.save(out);
  }
  {
    std::ofstream out(sk_path, std::ios::binary);
    keys.sk.save(out);
  }
  {
    std::ofstream out(pk_path, std::ios::binary);
    keys.pk.save(out);
  }
  {
    std::ofstream out(rk_path, std::ios::binary);
    keys.rk.save(out);
  }
  std::cout << "keygen: n=" << params.n() << ", " << a.q_count << "x" << a.q_bits
            << "-bit q primes, " << a.instances << "x" << a.t_bits
            << "-bit plaintext primes, digest " << params.digest() << "\n";

  Manifest m;
  m.subcommand = "keygen";
  m.config = {{"n", a.n},           {"q_bits", a.q_bits},       {"q_count", a.q_count},
              {"t_bits", a.t_bits}, {"instances", a.instances}, {"seed", a.seed}};
  m.outputs = {params_path, sk_path, pk_path, rk_path};
  m.extra = {{"params_digest", params.digest()}};
  m.write(manifest_path_for_dir(a.out), timer.seconds());
  return 0;
}

struct EncryptModelArgs {
  std::string model, keys, out;
  int scale_bits = 15;
};

int run_encrypt_model(const EncryptModelArgs& a) {
  Stopwatch timer;
  const EncryptionParams params = load_params(a.keys);
  const MlpModel model = MlpModel::load(a.model);
  const EncryptedModel em = quantize_model(model, params, a.scale_bits);
  {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    em.save(out);
  }
  const CapacityReport report = model_capacity(em, params);
  std::cout << "encrypt-model: " << em.d << "x" << em.hidden << " "
            << activation_name(em.activation) << " model at scale 2^" << em.scale_bits
            << ", output scale 2^" << em.schedule().out << ", capacity ok\n";

  Manifest m;
  m.subcommand = "encrypt-model";
  m.config = {{"model", a.model}, {"keys", a.keys}, {"scale_bits", a.scale_bits}};
  m.inputs = {a.model};
  m.outputs = {a.out};
  json stages = json::array();
  for (const StageBound& s : report.stages) {
    stages.push_back({{"stage", s.name},
                      {"coeff_bits", boost::multiprecision::msb(s.bound.coeff) + 1},
                      {"degree", s.bound.degree}});
  }
  m.extra = {{"params_digest", params.digest()}, {"capacity_stages", stages}};
  m.write(manifest_path_for_file(a.out), timer.seconds());
  return 0;
}

struct EncryptInputArgs {
  std::string row, keys, out;
  int scale_bits = 15;
  std::uint64_t seed = 1;
};

int run_encrypt_input(const EncryptInputArgs& a) {
  Stopwatch timer;
  const EncryptionParams params = load_params(a.keys);
  const PublicKey pk = load_key<PublicKey>(a.keys, "public.bin", params);
  const std::vector<double> row = read_row_file(a.row);
  Eigen::VectorXd x(static_cast<Eigen::Index>(row.size()));
  for (std::size_t i = 0; i < row.size(); ++i) x(static_cast<Eigen::Index>(i)) = row[i];
  const std::vector<std::int64_t> fixed = fixed_point_input(x, a.scale_bits);
  SeededRng rng(derive_seed(a.seed, "encrypt-input"));
  const std::vector<Ciphertext> cts = encrypt_features(fixed, a.scale_bits, pk, params, rng);
  save_ct_vector(a.out, cts);
  std::cout << "encrypt-input: " << cts.size() << " feature ciphertexts at scale 2^"
            << a.scale_bits << "\n";

  Manifest m;
  m.subcommand = "encrypt-input";
  m.config = {{"row", a.row}, {"keys", a.keys}, {"scale_bits", a.scale_bits}, {"seed", a.seed}};
  m.inputs = {a.row};
  m.outputs = {a.out};
  m.extra = {{"features", cts.size()}, {"params_digest", params.digest()}};
  m.write(manifest_path_for_file(a.out), timer.seconds());
  return 0;
}

struct ExportRowArgs {
  std::string data, split = "test", out;
  std::size_t index = 0;
};

int run_export_row(const ExportRowArgs& a) {
  const Dataset data = load_split(a.data, a.split);
  if (a.index >= data.size()) {
    throw std::runtime_error("row index " + std::to_string(a.index) + " out of range (split has " +
                             std::to_string(data.size()) + " rows)");
  }
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
    out << (j ? " " : "") << data.features(static_cast<Eigen::Index>(a.index), j);
  }
  out << "\n";
  std::cout << "export-row: " << a.split << "[" << a.index << "], label "
            << data.labels[a.index] << "\n";
  return 0;
}

struct InferArgs {
  std::string emodel, input, keys, out, path = "shift";
};

int run_infer(const InferArgs& a) {
  Stopwatch timer;
  const EncryptionParams params = load_params(a.keys);
  const EncryptedModel em = load_emodel(a.emodel, &params);
  const std::vector<Ciphertext> cts = load_ct_vector(a.input, params);
  const RelinKey rk = load_key<RelinKey>(a.keys, "relin.bin", params);
  PlainMulPath path;
  if (a.path == "shift") {
    path = PlainMulPath::shift;
  } else if (a.path == "generic") {
    path = PlainMulPath::generic;
  } else {
    throw std::runtime_error("--path must be 'shift' or 'generic'");
  }

  const EncryptedForwardResult result = encrypted_forward(em, cts, rk, params, path);
  {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    result.score.save(out);
  }
  std::cout << "infer: ct_mul=" << result.ops.ct_mul << " plain_mul=" << result.ops.plain_mul
            << " add=" << result.ops.add << " (activation path: " << a.path << ")\n";

  Manifest m;
  m.subcommand = "infer";
  m.config = {{"emodel", a.emodel}, {"input", a.input}, {"keys", a.keys}, {"path", a.path}};
  m.inputs = {a.emodel, a.input};
  m.outputs = {a.out};
  m.extra = {{"op_counters", counters_json(result.ops)}, {"params_digest", params.digest()}};
  m.write(manifest_path_for_file(a.out), timer.seconds());
  return 0;
}

struct DecryptArgs {
  std::string keys, in, out;
};

int run_decrypt(const DecryptArgs& a) {
  const EncryptionParams params = load_params(a.keys);
  const SecretKey sk = load_key<SecretKey>(a.keys, "secret.bin", params);
  const Ciphertext ct = load_ct(a.in, params);
  const Plaintext pt = decrypt(ct, sk, params);
  const double score = decode_fixed(pt, params);
  std::cout << std::setprecision(17) << score << "\n";
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
    out << std::setprecision(17) << score << "\n";
  }
  return 0;
}

struct EvaluateArgs {
  std::string model, data, split = "test", emodel, scores;
  double threshold = 0.5, w_pos = 8.0;
};

int run_evaluate(const EvaluateArgs& a) {
  const MlpModel model = MlpModel::load(a.model);
  const Dataset data = load_split(a.data, a.split);
  const std::vector<double> scores = predict_scores(model, data);
  const double auc = auc_score(scores, data.labels);
  const ClassificationReport report = classification_report(scores, data.labels, a.threshold);

  std::vector<double> norms;
  norms.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    norms.push_back(example_gradient(model, data.features.row(static_cast<Eigen::Index>(i))
                                                .transpose(),
                                     data.labels[i], a.w_pos)
                        .norm());
  }
  const double grad_median = quartiles(norms).median;

  std::vector<double> quant;
  double max_drift = 0.0;
  if (!a.emodel.empty()) {
    const EncryptedModel em = load_emodel(a.emodel, nullptr);
    quant.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double q = quantized_score(
          em, data.features.row(static_cast<Eigen::Index>(i)).transpose());
      quant.push_back(q);
      max_drift = std::max(max_drift, std::abs(q - scores[i]));
    }
  }

  std::cout << std::left << std::setw(26) << "split" << a.split << "\n"
            << std::setw(26) << "rows" << data.size() << "\n"
            << std::setw(26) << "positives" << (report.tp + report.fn) << "\n"
            << std::setprecision(6) << std::fixed;
  std::cout << std::setw(26) << "auc" << auc << "\n";
  std::cout << std::setw(26) << "accuracy" << report.accuracy << "\n";
  std::cout << std::setw(26) << "recall";
  if (report.recall_defined) {
    std::cout << report.recall << "\n";
  } else {
    std::cout << "undefined (no positives)" << "\n";
  }
  std::cout << std::setw(26) << "median gradient norm" << grad_median << "\n";
  if (!a.emodel.empty()) {
    std::cout << std::setw(26) << "max quantization drift" << std::scientific << max_drift
              << std::fixed << "\n";
  }
  std::cout << "RESULT auc=" << auc << " accuracy=" << report.accuracy
            << " recall=" << (report.recall_defined ? report.recall : -1.0)
            << " grad_norm_median=" << grad_median << " n=" << data.size() << "\n";

  if (!a.scores.empty()) {
    std::ofstream out(a.scores);
    if (!out) throw std::runtime_error("cannot write '" + a.scores + "'");
    out << std::setprecision(17);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out << i << " " << scores[i];
      if (!quant.empty()) out << " " << quant[i];
      out << "\n";
    }
  }
  return 0;
}

struct BenchArgs {
  std::string emodel, keys;
  std::size_t trials = 3;
  std::uint64_t seed = 1;
};

int run_bench(const BenchArgs& a) {
  Stopwatch timer;
  const EncryptionParams params = load_params(a.keys);
  const EncryptedModel em = load_emodel(a.emodel, &params);
  if (em.activation != ActivationKind::swish_quant) {
    throw std::runtime_error("bench expects a swish-quant encrypted model; the square variant "
                             "is derived from its weights");
  }
  const PublicKey pk = load_key<PublicKey>(a.keys, "public.bin", params);
  const RelinKey rk = load_key<RelinKey>(a.keys, "relin.bin", params);

  // Same quantized weights, square activation realization.
  EncryptedModel square = em;
  square.activation = ActivationKind::square;

  SeededRng rng(derive_seed(a.seed, "bench"));
  std::vector<std::int64_t> fixed(em.d);
  for (auto& v : fixed) {
    v = static_cast<std::int64_t>(rng.uniform_below(std::uint64_t{1} << em.scale_bits));
  }
  const std::vector<Ciphertext> cts = encrypt_features(fixed, em.scale_bits, pk, params, rng);

  struct Variant {
    const char* name;
    const EncryptedModel* model;
    PlainMulPath path;
  };
  const Variant variants[] = {
      {"square", &square, PlainMulPath::shift},
      {"swish-generic", &em, PlainMulPath::generic},
      {"swish-shift", &em, PlainMulPath::shift},
  };

  std::cout << std::left << std::setw(16) << "variant" << std::setw(14) << "wallclock_s"
            << std::setw(10) << "ct_mul" << std::setw(11) << "plain_mul" << std::setw(11)
            << "mul_total" << "add" << "\n";
  json rows = json::array();
  for (const Variant& v : variants) {
    std::vector<double> times;
    OpCounters ops;
    for (std::size_t t = 0; t < a.trials; ++t) {
      Stopwatch trial;
      const EncryptedForwardResult result =
          encrypted_forward(*v.model, cts, rk, params, v.path);
      times.push_back(trial.seconds());
      ops = result.ops;
    }
    const double median = quartiles(times).median;
    std::cout << std::setw(16) << v.name << std::setw(14) << std::setprecision(4) << std::fixed
              << median << std::setw(10) << ops.ct_mul << std::setw(11) << ops.plain_mul
              << std::setw(11) << (ops.ct_mul + ops.plain_mul) << ops.add << "\n";
    std::cout.unsetf(std::ios::fixed);
    json row = counters_json(ops);
    row["variant"] = v.name;
    row["wallclock_median_s"] = median;
    rows.push_back(row);
  }

  Manifest m;
  m.subcommand = "bench";
  m.config = {{"emodel", a.emodel}, {"keys", a.keys}, {"trials", a.trials}, {"seed", a.seed}};
  m.inputs = {a.emodel};
  m.extra = {{"variants", rows}, {"params_digest", params.digest()}};
  m.write(a.emodel + ".bench.json", timer.seconds());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privml: DP training and encrypted inference pipeline"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* cmd_pre = app.add_subcommand("preprocess", "Fit and apply preprocessing to a CSV");
  cmd_pre->add_option("--input", pre.input, "input CSV")->required();
  cmd_pre->add_option("--out", pre.out, "output dataset directory")->required();
  cmd_pre->add_option("--seed", pre.seed, "split seed");
  cmd_pre->add_option("--train-fraction", pre.train_fraction, "train split fraction");
  cmd_pre->add_flag("--group-secondary-diagnoses", pre.group_secondary,
                    "one-hot diag_2/diag_3 groups as well");
  cmd_pre->add_flag("--age-ordinal", pre.age_ordinal, "age bracket midpoint as numeric");

  SynthArgs synth_args;
  auto* cmd_synth = app.add_subcommand("synth", "Generate a planted-signal synthetic dataset");
  cmd_synth->add_option("--n", synth_args.n, "rows");
  cmd_synth->add_option("--d", synth_args.d, "features");
  cmd_synth->add_option("--pos-rate", synth_args.pos_rate, "positive rate");
  cmd_synth->add_option("--signal", synth_args.signal, "signal strength");
  cmd_synth->add_option("--seed", synth_args.seed, "seed");
  cmd_synth->add_option("--train-fraction", synth_args.train_fraction, "train split fraction");
  cmd_synth->add_option("--out", synth_args.out, "output dataset directory")->required();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train the MLP (optionally under DP)");
  cmd_train->add_option("--data", tr.data, "dataset directory")->required();
  cmd_train->add_option("--epochs", tr.epochs, "epochs");
  cmd_train->add_option("--batch", tr.batch, "batch / lot size");
  cmd_train->add_option("--activation", tr.activation,
                        "square|swish-poly|swish-quant|relu-sigmoid");
  cmd_train->add_option("--hidden", tr.hidden, "hidden width");
  cmd_train->add_option("--w-pos", tr.w_pos, "positive-class loss weight");
  cmd_train->add_option("--lr", tr.lr, "learning rate");
  cmd_train->add_option("--seed", tr.seed, "seed");
  cmd_train->add_flag("--dp", tr.dp, "train with DP-SGD");
  cmd_train->add_option("--sigma", tr.sigma, "DP noise scale");
  cmd_train->add_option("--clip", tr.clip, "DP clip bound");
  cmd_train->add_option("--delta", tr.delta, "DP target delta");
  cmd_train->add_option("--eps-budget", tr.eps_budget, "DP epsilon budget");
  cmd_train->add_option("--log", tr.log, "write per-step log lines to this file");
  cmd_train->add_option("--out", tr.out, "output model file")->required();

  ApproxArgs ap;
  auto* cmd_approx = app.add_subcommand("approx", "Fit and scan the swish approximation");
  cmd_approx->add_option("--degree", ap.degree, "polynomial degree");
  cmd_approx->add_option("--interval-a", ap.interval_a, "interval half-width a");
  cmd_approx->add_option("--bound", ap.bound, "scan constraint band half-width K");
  cmd_approx->add_option("--radius", ap.radius, "exponent scan radius");
  cmd_approx->add_option("--calibrate-c2", ap.calibrate_c2,
                         "recover the interval from this quadratic coefficient");

  KeygenArgs kg;
  auto* cmd_keygen = app.add_subcommand("keygen", "Generate encryption parameters and keys");
  cmd_keygen->add_option("--n", kg.n, "ring dimension");
  cmd_keygen->add_option("--q-bits", kg.q_bits, "bits per q prime");
  cmd_keygen->add_option("--q-count", kg.q_count, "number of q primes");
  cmd_keygen->add_option("--t-bits", kg.t_bits, "bits per plaintext prime");
  cmd_keygen->add_option("--instances", kg.instances, "plaintext-CRT instances");
  cmd_keygen->add_option("--seed", kg.seed, "key seed");
  cmd_keygen->add_option("--out", kg.out, "output keys directory")->required();

  EncryptModelArgs emargs;
  auto* cmd_emodel = app.add_subcommand("encrypt-model", "Quantize a model for encrypted use");
  cmd_emodel->add_option("--model", emargs.model, "trained model file")->required();
  cmd_emodel->add_option("--keys", emargs.keys, "keys directory")->required();
  cmd_emodel->add_option("--scale-bits", emargs.scale_bits, "fixed-point scale bits");
  cmd_emodel->add_option("--out", emargs.out, "output encrypted-model file")->required();

  EncryptInputArgs ei;
  auto* cmd_einput = app.add_subcommand("encrypt-input", "Encrypt one feature row");
  cmd_einput->add_option("--row", ei.row, "text file of feature values")->required();
  cmd_einput->add_option("--keys", ei.keys, "keys directory")->required();
  cmd_einput->add_option("--scale-bits", ei.scale_bits, "fixed-point scale bits");
  cmd_einput->add_option("--seed", ei.seed, "encryption randomness seed");
  cmd_einput->add_option("--out", ei.out, "output ciphertext-vector file")->required();

  ExportRowArgs er;
  auto* cmd_export = app.add_subcommand("export-row", "Write one dataset row as a text file");
  cmd_export->add_option("--data", er.data, "dataset directory")->required();
  cmd_export->add_option("--split", er.split, "train|test");
  cmd_export->add_option("--index", er.index, "row index");
  cmd_export->add_option("--out", er.out, "output row file")->required();

  InferArgs inf;
  auto* cmd_infer = app.add_subcommand("infer", "Run the encrypted forward pass");
  cmd_infer->add_option("--emodel", inf.emodel, "encrypted model file")->required();
  cmd_infer->add_option("--input", inf.input, "ciphertext-vector file")->required();
  cmd_infer->add_option("--keys", inf.keys, "keys directory (relin key)")->required();
  cmd_infer->add_option("--path", inf.path, "activation plain-mul path: shift|generic");
  cmd_infer->add_option("--out", inf.out, "output score ciphertext")->required();

  DecryptArgs dec;
  auto* cmd_decrypt = app.add_subcommand("decrypt", "Decrypt and decode a score ciphertext");
  cmd_decrypt->add_option("--keys", dec.keys, "keys directory")->required();
  cmd_decrypt->add_option("--in", dec.in, "score ciphertext")->required();
  cmd_decrypt->add_option("--out", dec.out, "also write the score to this file");

  EvaluateArgs ev;
  auto* cmd_eval = app.add_subcommand("evaluate", "Score a model on a dataset split");
  cmd_eval->add_option("--model", ev.model, "trained model file")->required();
  cmd_eval->add_option("--data", ev.data, "dataset directory")->required();
  cmd_eval->add_option("--split", ev.split, "train|test");
  cmd_eval->add_option("--emodel", ev.emodel, "also report quantized-score drift");
  cmd_eval->add_option("--scores", ev.scores, "write per-row scores to this file");
  cmd_eval->add_option("--threshold", ev.threshold, "classification threshold");
  cmd_eval->add_option("--w-pos", ev.w_pos, "loss weight for the gradient-norm column");

  BenchArgs bench_args;
  auto* cmd_bench = app.add_subcommand("bench", "Benchmark encrypted inference variants");
  cmd_bench->add_option("--emodel", bench_args.emodel, "swish-quant encrypted model")->required();
  cmd_bench->add_option("--keys", bench_args.keys, "keys directory")->required();
  cmd_bench->add_option("--trials", bench_args.trials, "trials per variant");
  cmd_bench->add_option("--seed", bench_args.seed, "input seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_pre->parsed()) return run_preprocess(pre);
    if (cmd_synth->parsed()) return run_synth(synth_args);
    if (cmd_train->parsed()) return run_train(tr);
    if (cmd_approx->parsed()) return run_approx(ap);
    if (cmd_keygen->parsed()) return run_keygen(kg);
    if (cmd_emodel->parsed()) return run_encrypt_model(emargs);
    if (cmd_einput->parsed()) return run_encrypt_input(ei);
    if (cmd_export->parsed()) return run_export_row(er);
    if (cmd_infer->parsed()) return run_infer(inf);
    if (cmd_decrypt->parsed()) return run_decrypt(dec);
    if (cmd_eval->parsed()) return run_evaluate(ev);
    if (cmd_bench->parsed()) return run_bench(bench_args);
  } catch (const std::exception& e) {
    std::cerr << "privml: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
