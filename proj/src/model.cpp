#include "privml/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "privml/metrics.hpp"

namespace privml {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

BigInt pow2(int k) { return BigInt(1) << k; }

std::size_t bit_length_i64(std::int64_t v) {
  std::uint64_t mag = v < 0 ? static_cast<std::uint64_t>(-v) : static_cast<std::uint64_t>(v);
  std::size_t bits = 0;
  while (mag != 0) {
    ++bits;
    mag >>= 1;
  }
  return bits == 0 ? 1 : bits;
}

std::size_t max_bit_length(const std::vector<std::int64_t>& values) {
  std::size_t bits = 1;
  for (std::int64_t v : values) bits = std::max(bits, bit_length_i64(v));
  return bits;
}

void check_scale(const Ciphertext& ct, int expected, const char* stage) {
  if (ct.scale_bits != expected) {
    throw ModelError(std::string("internal: scale misalignment at stage ") + stage +
                     " (have " + std::to_string(ct.scale_bits) + ", want " +
                     std::to_string(expected) + ")");
  }
}

}  // namespace

ActivationKind activation_from_name(const std::string& name) {
  if (name == "square") return ActivationKind::square;
  if (name == "swish-poly") return ActivationKind::swish_poly;
  if (name == "swish-quant") return ActivationKind::swish_quant;
  if (name == "relu-sigmoid") return ActivationKind::relu_sigmoid;
  throw ModelError("unknown activation '" + name + "'");
}

const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::square: return "square";
    case ActivationKind::swish_poly: return "swish-poly";
    case ActivationKind::swish_quant: return "swish-quant";
    case ActivationKind::relu_sigmoid: return "relu-sigmoid";
  }
  return "unknown";
}

Base2Poly quantized_swish() {
  Base2Poly p;
  p.terms.resize(3);
  p.terms[0] = {false, -4, +1};
  p.terms[1] = {false, -1, +1};
  p.terms[2] = {false, -3, +1};
  return p;
}

double activation_value(ActivationKind kind, bool output_layer, double x) {
  switch (kind) {
    case ActivationKind::square:
      return x * x;
    case ActivationKind::swish_poly:
      return (kSwishFitC2 * x + kSwishFitC1) * x + kSwishFitC0;
    case ActivationKind::swish_quant:
      return (0.125 * x + 0.5) * x + 0.0625;
    case ActivationKind::relu_sigmoid:
      return output_layer ? sigmoid(x) : std::max(0.0, x);
  }
  throw ModelError("unhandled activation");
}

double activation_derivative(ActivationKind kind, bool output_layer, double x) {
  switch (kind) {
    case ActivationKind::square:
      return 2.0 * x;
    case ActivationKind::swish_poly:
      return 2.0 * kSwishFitC2 * x + kSwishFitC1;
    case ActivationKind::swish_quant:
      return 0.25 * x + 0.5;
    case ActivationKind::relu_sigmoid: {
      if (!output_layer) return x > 0.0 ? 1.0 : 0.0;
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  throw ModelError("unhandled activation");
}

MlpModel MlpModel::init(std::size_t input_dim, std::size_t hidden_dim, ActivationKind kind,
                        std::uint64_t seed, bool use_bias) {
  if (input_dim == 0 || hidden_dim == 0) throw ModelError("init: zero dimension");
  MlpModel m;
  m.activation = kind;
  m.use_bias = use_bias;
  m.seed = seed;
  m.w1.resize(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(hidden_dim));
  m.b1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(hidden_dim));
  m.w2.resize(static_cast<Eigen::Index>(hidden_dim));
  m.b2 = 0.0;
  SeededRng rng(seed);
  const double limit1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
  for (Eigen::Index r = 0; r < m.w1.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.w1.cols(); ++c) {
      m.w1(r, c) = (2.0 * rng.uniform01() - 1.0) * limit1;
    }
  }
  const double limit2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + 1));
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) {
    m.w2(i) = (2.0 * rng.uniform01() - 1.0) * limit2;
  }
  return m;
}

double forward(const MlpModel& model, const Eigen::VectorXd& x, ForwardCache* cache) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim()) {
    throw ModelError("forward: input has " + std::to_string(x.size()) + " features, model wants " +
                     std::to_string(model.input_dim()));
  }
  Eigen::VectorXd z1 = model.w1.transpose() * x + model.b1;
  Eigen::VectorXd a1(z1.size());
  for (Eigen::Index i = 0; i < z1.size(); ++i) {
    a1(i) = activation_value(model.activation, false, z1(i));
  }
  const double z2 = model.w2.dot(a1) + model.b2;
  const double score = activation_value(model.activation, true, z2);
  if (cache != nullptr) {
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->z2 = z2;
    cache->score = score;
  }
  return score;
}

double weighted_mse(double score, int label, double w_pos) {
  if (label != 0 && label != 1) throw ModelError("weighted_mse: label must be 0 or 1");
  const double diff = score - static_cast<double>(label);
  return (label == 1 ? w_pos : 1.0) * diff * diff;
}

std::size_t parameter_count(const MlpModel& model) {
  return model.input_dim() * model.hidden_dim() + 2 * model.hidden_dim() + 1;
}

Eigen::VectorXd pack_parameters(const MlpModel& model) {
  const std::size_t d = model.input_dim(), h = model.hidden_dim();
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count(model)));
  p.segment(0, static_cast<Eigen::Index>(d * h)) =
      Eigen::Map<const Eigen::VectorXd>(model.w1.data(), static_cast<Eigen::Index>(d * h));
  p.segment(static_cast<Eigen::Index>(d * h), static_cast<Eigen::Index>(h)) = model.b1;
  p.segment(static_cast<Eigen::Index>(d * h + h), static_cast<Eigen::Index>(h)) = model.w2;
  p(p.size() - 1) = model.b2;
  return p;
}

void unpack_parameters(const Eigen::VectorXd& params, MlpModel& model) {
  const std::size_t d = model.input_dim(), h = model.hidden_dim();
  if (static_cast<std::size_t>(params.size()) != parameter_count(model)) {
    throw ModelError("unpack: parameter vector size mismatch");
  }
  Eigen::Map<Eigen::VectorXd>(model.w1.data(), static_cast<Eigen::Index>(d * h)) =
      params.segment(0, static_cast<Eigen::Index>(d * h));
  model.b1 = params.segment(static_cast<Eigen::Index>(d * h), static_cast<Eigen::Index>(h));
  model.w2 = params.segment(static_cast<Eigen::Index>(d * h + h), static_cast<Eigen::Index>(h));
  model.b2 = params(params.size() - 1);
}

Eigen::VectorXd example_gradient(const MlpModel& model, const Eigen::VectorXd& x, int label,
                                 double w_pos, double* loss_out) {
  ForwardCache cache;
  const double score = forward(model, x, &cache);
  if (loss_out != nullptr) *loss_out = weighted_mse(score, label, w_pos);

  const double weight = (label == 1 ? w_pos : 1.0);
  const double dscore = 2.0 * weight * (score - static_cast<double>(label));
  const double dz2 = dscore * activation_derivative(model.activation, true, cache.z2);
  const Eigen::VectorXd dw2 = dz2 * cache.a1;
  const double db2 = model.use_bias ? dz2 : 0.0;
  Eigen::VectorXd dz1 = dz2 * model.w2;
  for (Eigen::Index i = 0; i < dz1.size(); ++i) {
    dz1(i) *= activation_derivative(model.activation, false, cache.z1(i));
  }

  const std::size_t d = model.input_dim(), h = model.hidden_dim();
  Eigen::VectorXd g(static_cast<Eigen::Index>(parameter_count(model)));
  Eigen::Map<Eigen::MatrixXd> dw1(g.data(), static_cast<Eigen::Index>(d),
                                  static_cast<Eigen::Index>(h));
  dw1 = x * dz1.transpose();
  g.segment(static_cast<Eigen::Index>(d * h), static_cast<Eigen::Index>(h)) =
      model.use_bias ? dz1 : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h));
  g.segment(static_cast<Eigen::Index>(d * h + h), static_cast<Eigen::Index>(h)) = dw2;
  g(g.size() - 1) = db2;
  return g;
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
  const std::size_t n = data.size();
  if (n == 0) throw ModelError("train: empty dataset");
  if (config.batch == 0 || config.batch > n) {
    throw ModelError("train: batch size must lie in [1, N]");
  }
  MlpModel model = MlpModel::init(data.dim(), config.hidden, config.activation,
                                  derive_seed(config.seed, "model-init"), config.use_bias);
  model.seed = config.seed;

  TrainResult result;
  Eigen::VectorXd params = pack_parameters(model);
  AdamState adam;
  SeededRng rng(derive_seed(config.seed, "train"));

  auto record_or_abort = [&](std::size_t step, double loss, double epsilon,
                             std::vector<double>& norms) {
    if (!std::isfinite(loss)) {
      throw ModelError("training diverged: non-finite loss at step " + std::to_string(step));
    }
    result.history.push_back(
        {step, loss, epsilon, norms.empty() ? 0.0 : quartiles(norms).median});
  };

  if (!config.dp.has_value()) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_below(i)]);
      }
      for (std::size_t start = 0; start < n; start += config.batch) {
        const std::size_t end = std::min(start + config.batch, n);
        unpack_parameters(params, model);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
        double loss = 0.0;
        std::vector<double> norms;
        norms.reserve(end - start);
        for (std::size_t k = start; k < end; ++k) {
          const std::size_t i = order[k];
          const Eigen::VectorXd x = data.features.row(static_cast<Eigen::Index>(i)).transpose();
          double example_loss = 0.0;
          const Eigen::VectorXd g =
              example_gradient(model, x, data.labels[i], config.w_pos, &example_loss);
          grad += g;
          loss += example_loss;
          norms.push_back(g.norm());
        }
        const double count = static_cast<double>(end - start);
        grad /= count;
        loss /= count;
        record_or_abort(step, loss, 0.0, norms);
        adam.step(params, grad, config.learning_rate);
        ++step;
      }
    }
  } else {
    DpConfig dp = *config.dp;
    dp.lot_size = config.batch;
    dp.dataset_size = n;
    dp.learning_rate = config.learning_rate;
    PrivacyAccountant accountant;
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, n / dp.lot_size);
    const std::size_t total_steps = config.epochs * steps_per_epoch;
    for (std::size_t step = 0; step < total_steps; ++step) {
      unpack_parameters(params, model);
      double loss_sum = 0.0;
      std::size_t seen = 0;
      std::vector<double> norms;
      auto per_example = [&](std::size_t i) {
        const Eigen::VectorXd x = data.features.row(static_cast<Eigen::Index>(i)).transpose();
        double example_loss = 0.0;
        Eigen::VectorXd g =
            example_gradient(model, x, data.labels[i], config.w_pos, &example_loss);
        loss_sum += example_loss;
        ++seen;
        norms.push_back(g.norm());
        return g;
      };
      const StepStatus status = private_step(params, per_example, dp, accountant, adam, rng);
      if (status == StepStatus::budget_exhausted) {
        result.budget_exhausted = true;
        break;
      }
      const double loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
      record_or_abort(step, loss, accountant.epsilon(dp.delta), norms);
    }
    result.final_epsilon = accountant.steps() > 0 ? accountant.epsilon(dp.delta) : 0.0;
  }

  unpack_parameters(params, model);
  result.model = std::move(model);
  return result;
}

std::vector<double> predict_scores(const MlpModel& model, const Dataset& data) {
  std::vector<double> scores;
  scores.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    scores.push_back(forward(model, data.features.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  return scores;
}

void MlpModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ModelError("model: cannot open '" + path + "' for writing");
  out << "privml-model 1\n";
  out << "activation " << activation_name(activation) << '\n';
  out << "input_dim " << input_dim() << '\n';
  out << "hidden_dim " << hidden_dim() << '\n';
  out << "use_bias " << (use_bias ? 1 : 0) << '\n';
  out << "seed " << seed << '\n';
  out << "preprocess_digest " << preprocess_digest << '\n';
  out << std::setprecision(17);
  out << "w1";
  for (Eigen::Index c = 0; c < w1.cols(); ++c) {
    for (Eigen::Index r = 0; r < w1.rows(); ++r) out << ' ' << w1(r, c);
  }
  out << "\nb1";
  for (Eigen::Index i = 0; i < b1.size(); ++i) out << ' ' << b1(i);
  out << "\nw2";
  for (Eigen::Index i = 0; i < w2.size(); ++i) out << ' ' << w2(i);
  out << "\nb2 " << b2 << '\n';
  if (!out) throw ModelError("model: write to '" + path + "' failed");
}

MlpModel MlpModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("model: cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "privml-model" || version != 1) {
    throw ModelError("model: '" + path + "' is not a model file");
  }
  MlpModel m;
  std::size_t d = 0, h = 0;
  bool have_dims = false;
  std::string key;
  while (in >> key) {
    if (key == "activation") {
      std::string name;
      in >> name;
      m.activation = activation_from_name(name);
    } else if (key == "input_dim") {
      in >> d;
    } else if (key == "hidden_dim") {
      in >> h;
    } else if (key == "use_bias") {
      int flag = 0;
      in >> flag;
      m.use_bias = flag != 0;
    } else if (key == "seed") {
      in >> m.seed;
    } else if (key == "preprocess_digest") {
      in >> m.preprocess_digest;
    } else if (key == "w1" || key == "b1" || key == "w2" || key == "b2") {
      if (d == 0 || h == 0) throw ModelError("model: dimensions must precede weights");
      if (!have_dims) {
        m.w1.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(h));
        m.b1.resize(static_cast<Eigen::Index>(h));
        m.w2.resize(static_cast<Eigen::Index>(h));
        have_dims = true;
      }
      if (key == "w1") {
        for (Eigen::Index c = 0; c < m.w1.cols(); ++c) {
          for (Eigen::Index r = 0; r < m.w1.rows(); ++r) in >> m.w1(r, c);
        }
      } else if (key == "b1") {
        for (Eigen::Index i = 0; i < m.b1.size(); ++i) in >> m.b1(i);
      } else if (key == "w2") {
        for (Eigen::Index i = 0; i < m.w2.size(); ++i) in >> m.w2(i);
      } else {
        in >> m.b2;
      }
    } else {
      throw ModelError("model: unknown key '" + key + "' in '" + path + "'");
    }
  }
  if (!have_dims) throw ModelError("model: '" + path + "' has no weights");
  return m;
}

// --- fixed-point side -------------------------------------------------------

ScaleSchedule schedule_for(ActivationKind kind, int scale_bits) {
  if (scale_bits <= 0 || scale_bits > 30) throw ModelError("schedule: bad scale_bits");
  ScaleSchedule s;
  s.input = s.weight = scale_bits;
  s.z1 = 2 * scale_bits;
  if (kind == ActivationKind::square) {
    s.a1 = 2 * s.z1;
    s.z2 = s.a1 + s.weight;
    s.out = 2 * s.z2;
    s.has_affine_terms = false;
    return s;
  }
  if (kind != ActivationKind::swish_quant) {
    throw ModelError(std::string("activation '") + activation_name(kind) +
                     "' has no encrypted circuit");
  }
  const Base2Poly p = quantized_swish();
  const int e0 = p.terms[0].exponent, e1 = p.terms[1].exponent, e2 = p.terms[2].exponent;
  auto stage = [&](int in_scale, int* out_scale, int* sq, int* lin, int* cst) {
    // Smallest output scale S making every term an integer shift:
    // S + e2 - 2 in >= 0, S + e1 - in >= 0, S + e0 >= 0.
    *out_scale = std::max({2 * in_scale - e2, in_scale - e1, -e0});
    *sq = *out_scale + e2 - 2 * in_scale;
    *lin = *out_scale + e1 - in_scale;
    *cst = *out_scale + e0;
  };
  s.has_affine_terms = true;
  stage(s.z1, &s.a1, &s.hidden_sq_shift, &s.hidden_lin_shift, &s.hidden_const_digit);
  s.z2 = s.a1 + s.weight;
  stage(s.z2, &s.out, &s.out_sq_shift, &s.out_lin_shift, &s.out_const_digit);
  return s;
}

EncryptedModel quantize_model(const MlpModel& model, const EncryptionParams& params,
                              int scale_bits) {
  EncryptedModel em;
  em.activation = model.activation;
  em.use_bias = model.use_bias;
  em.scale_bits = scale_bits;
  em.d = model.input_dim();
  em.hidden = model.hidden_dim();
  em.params_digest = params.digest();
  em.schedule();  // validates the activation before doing any work

  const double scale = std::ldexp(1.0, scale_bits);
  em.w1q.resize(em.d * em.hidden);
  for (std::size_t c = 0; c < em.hidden; ++c) {
    for (std::size_t r = 0; r < em.d; ++r) {
      em.w1q[c * em.d + r] = std::llround(
          model.w1(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * scale);
    }
  }
  em.b1q.resize(em.hidden);
  em.w2q.resize(em.hidden);
  for (std::size_t i = 0; i < em.hidden; ++i) {
    em.b1q[i] = std::llround(model.b1(static_cast<Eigen::Index>(i)) * scale);
    em.w2q[i] = std::llround(model.w2(static_cast<Eigen::Index>(i)) * scale);
  }
  em.b2q = std::llround(model.b2 * scale);

  const CapacityReport report = model_capacity(em, params);
  if (!report.ok) {
    throw ModelError("quantize: capacity check failed at stage '" + report.failed_stage +
                     "' (coefficient or degree envelope exceeds the plaintext space)");
  }
  return em;
}

CapacityReport model_capacity(const EncryptedModel& model, const EncryptionParams& params) {
  const ScaleSchedule sched = model.schedule();
  std::vector<StageBound> stages;

  const IntPolyBound x_b = IntPolyBound::of_encoded(static_cast<std::size_t>(sched.input) + 1);
  const IntPolyBound w1_b = IntPolyBound::of_encoded(max_bit_length(model.w1q));
  stages.push_back({"x", x_b});
  stages.push_back({"w1", w1_b});

  auto accumulate = [](const IntPolyBound& term, std::size_t count) {
    IntPolyBound acc = term;
    for (std::size_t i = 1; i < count; ++i) acc = acc + term;
    return acc;
  };
  IntPolyBound z1_b = accumulate(x_b * w1_b, model.d);
  if (model.use_bias) {
    z1_b = z1_b + IntPolyBound::of_encoded(max_bit_length(model.b1q) +
                                           static_cast<std::size_t>(sched.z1 - sched.weight));
  }
  stages.push_back({"z1", z1_b});

  auto activated = [&](const IntPolyBound& z, int sq, int lin, int cst) {
    IntPolyBound a = (z * z).shifted(static_cast<std::size_t>(sq));
    if (sched.has_affine_terms) {
      a = a + z.shifted(static_cast<std::size_t>(lin));
      a = a + IntPolyBound::of_encoded(static_cast<std::size_t>(cst) + 1);
    }
    return a;
  };
  const IntPolyBound a1_b =
      activated(z1_b, sched.hidden_sq_shift, sched.hidden_lin_shift, sched.hidden_const_digit);
  stages.push_back({"a1", a1_b});

  const IntPolyBound w2_b = IntPolyBound::of_encoded(max_bit_length(model.w2q));
  IntPolyBound z2_b = accumulate(a1_b * w2_b, model.hidden);
  if (model.use_bias) {
    z2_b = z2_b + IntPolyBound::of_encoded(bit_length_i64(model.b2q) +
                                           static_cast<std::size_t>(sched.z2 - sched.weight));
  }
  stages.push_back({"z2", z2_b});

  const IntPolyBound out_b =
      activated(z2_b, sched.out_sq_shift, sched.out_lin_shift, sched.out_const_digit);
  stages.push_back({"out", out_b});

  return check_capacity(std::move(stages), params.t_product(), params.n());
}

std::vector<std::int64_t> fixed_point_input(const Eigen::VectorXd& x, int scale_bits) {
  const double scale = std::ldexp(1.0, scale_bits);
  std::vector<std::int64_t> fixed(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    fixed[static_cast<std::size_t>(i)] = std::llround(x(i) * scale);
  }
  return fixed;
}

BigInt quantized_forward_integer(const EncryptedModel& model,
                                 const std::vector<std::int64_t>& x_fixed) {
  if (x_fixed.size() != model.d) throw ModelError("quantized forward: input size mismatch");
  const ScaleSchedule sched = model.schedule();

  auto activated = [&](const BigInt& z, int sq, int lin, int cst) {
    BigInt a = z * z * pow2(sq);
    if (sched.has_affine_terms) {
      a += z * pow2(lin);
      a += pow2(cst);
    }
    return a;
  };

  std::vector<BigInt> a1(model.hidden);
  for (std::size_t i = 0; i < model.hidden; ++i) {
    BigInt z1 = 0;
    for (std::size_t j = 0; j < model.d; ++j) {
      z1 += BigInt(model.w1q[i * model.d + j]) * x_fixed[j];
    }
    if (model.use_bias) z1 += BigInt(model.b1q[i]) * pow2(sched.z1 - sched.weight);
    a1[i] = activated(z1, sched.hidden_sq_shift, sched.hidden_lin_shift, sched.hidden_const_digit);
  }
  BigInt z2 = 0;
  for (std::size_t i = 0; i < model.hidden; ++i) z2 += BigInt(model.w2q[i]) * a1[i];
  if (model.use_bias) z2 += BigInt(model.b2q) * pow2(sched.z2 - sched.weight);
  return activated(z2, sched.out_sq_shift, sched.out_lin_shift, sched.out_const_digit);
}

double quantized_score(const EncryptedModel& model, const Eigen::VectorXd& x) {
  const BigInt out = quantized_forward_integer(model, fixed_point_input(x, model.scale_bits));
  return std::ldexp(out.convert_to<double>(), -model.schedule().out);
}

std::vector<Ciphertext> encrypt_features(const std::vector<std::int64_t>& x_fixed, int scale_bits,
                                         const PublicKey& pk, const EncryptionParams& params,
                                         SeededRng& rng) {
  std::vector<Ciphertext> cts;
  cts.reserve(x_fixed.size());
  for (std::int64_t v : x_fixed) {
    cts.push_back(encrypt(encode_int(BigInt(v), params, scale_bits), pk, params, rng));
  }
  return cts;
}

EncryptedForwardResult encrypted_forward(const EncryptedModel& model,
                                         const std::vector<Ciphertext>& inputs,
                                         const RelinKey& rk, const EncryptionParams& params,
                                         PlainMulPath activation_path) {
  if (inputs.size() != model.d) {
    throw ModelError("encrypted forward: expected " + std::to_string(model.d) +
                     " feature ciphertexts, got " + std::to_string(inputs.size()));
  }
  if (model.params_digest != params.digest()) {
    throw ModelError("encrypted forward: model was quantized under different parameters");
  }
  const ScaleSchedule sched = model.schedule();
  for (const Ciphertext& ct : inputs) {
    check_scale(ct, sched.input, "input");
    if (ct.params_digest != params.digest()) {
      throw ModelError("encrypted forward: input ciphertext parameter mismatch");
    }
  }

  OpCounters tally;

  // Activation: one ct-ct square, then the power-of-two coefficients applied
  // as counted plain multiplications (x^k monomials when shifting is needed).
  auto activated = [&](const Ciphertext& z, int out_scale, int in_scale, int sq, int lin,
                       int cst, const char* stage) {
    Ciphertext square = mul_ct(z, z, rk, params);
    ++tally.ct_mul;
    if (!sched.has_affine_terms) {
      check_scale(square, out_scale, stage);
      return square;
    }
    Ciphertext sq_term =
        mul_plain(square, encode_int(pow2(sq), params, out_scale - 2 * in_scale), params,
                  activation_path);
    ++tally.plain_mul;
    Ciphertext lin_term =
        mul_plain(z, encode_int(pow2(lin), params, out_scale - in_scale), params,
                  activation_path);
    ++tally.plain_mul;
    Ciphertext a = add_ct(sq_term, lin_term);
    ++tally.add;
    a = add_plain(a, encode_int(pow2(cst), params, out_scale), params);
    ++tally.add;
    check_scale(a, out_scale, stage);
    return a;
  };

  // Weighted sum over input ciphertexts (generic-path multiplications:
  // weights are arbitrary integers) plus the bias at the aligned scale.
  auto weighted_sum = [&](const std::vector<Ciphertext>& terms_in,
                          const std::int64_t* weights, std::int64_t bias, int out_scale,
                          const char* stage) {
    Ciphertext acc;
    for (std::size_t j = 0; j < terms_in.size(); ++j) {
      Ciphertext term = mul_plain(terms_in[j], encode_int(BigInt(weights[j]), params, sched.weight),
                                  params, PlainMulPath::generic);
      ++tally.plain_mul;
      if (j == 0) {
        acc = std::move(term);
      } else {
        acc = add_ct(acc, term);
        ++tally.add;
      }
    }
    if (model.use_bias) {
      acc = add_plain(
          acc, encode_int(BigInt(bias) * pow2(out_scale - sched.weight), params, out_scale),
          params);
      ++tally.add;
    }
    check_scale(acc, out_scale, stage);
    return acc;
  };

  std::vector<Ciphertext> a1;
  a1.reserve(model.hidden);
  for (std::size_t i = 0; i < model.hidden; ++i) {
    const Ciphertext z1 =
        weighted_sum(inputs, &model.w1q[i * model.d], model.b1q[i], sched.z1, "z1");
    a1.push_back(activated(z1, sched.a1, sched.z1, sched.hidden_sq_shift, sched.hidden_lin_shift,
                           sched.hidden_const_digit, "a1"));
  }
  const Ciphertext z2 = weighted_sum(a1, model.w2q.data(), model.b2q, sched.z2, "z2");
  Ciphertext out = activated(z2, sched.out, sched.z2, sched.out_sq_shift, sched.out_lin_shift,
                             sched.out_const_digit, "out");
  // The per-ciphertext lineage merge overcounts shared subterms (z1 feeds both
  // the square and linear activation paths), so the score carries the tally.
  out.ops = tally;
  return {std::move(out), tally};
}

void EncryptedModel::save(std::ostream& os) const {
  os.write("PMEM", 4);
  write_u64(os, 1);  // version
  write_u64(os, static_cast<std::uint64_t>(activation));
  write_u64(os, use_bias ? 1 : 0);
  write_i64(os, scale_bits);
  write_u64(os, d);
  write_u64(os, hidden);
  for (std::int64_t v : w1q) write_i64(os, v);
  for (std::int64_t v : b1q) write_i64(os, v);
  for (std::int64_t v : w2q) write_i64(os, v);
  write_i64(os, b2q);
  write_u64(os, params_digest);
}

EncryptedModel EncryptedModel::load(std::istream& is, const EncryptionParams* expect) {
  expect_magic(is, "PMEM");
  const std::uint64_t version = read_u64(is);
  if (version != 1) throw ModelError("encrypted model: unsupported version");
  EncryptedModel em;
  em.activation = static_cast<ActivationKind>(read_u64(is));
  em.use_bias = read_u64(is) != 0;
  em.scale_bits = static_cast<int>(read_i64(is));
  em.d = read_u64(is);
  em.hidden = read_u64(is);
  em.w1q.resize(em.d * em.hidden);
  for (auto& v : em.w1q) v = read_i64(is);
  em.b1q.resize(em.hidden);
  for (auto& v : em.b1q) v = read_i64(is);
  em.w2q.resize(em.hidden);
  for (auto& v : em.w2q) v = read_i64(is);
  em.b2q = read_i64(is);
  em.params_digest = read_u64(is);
  if (!is) throw ModelError("encrypted model: truncated stream");
  if (expect != nullptr && em.params_digest != expect->digest()) {
    throw ModelError("encrypted model: file was created under different parameters");
  }
  return em;
}

}  // namespace privml
