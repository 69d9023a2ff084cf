#pragma once

// The d -> hidden -> 1 network: float training (plain or DP) with the
// activation variants under study, fixed-point quantization onto the 15-bit
// grid, and the encrypted inference circuit.
//
// The encrypted circuit evaluates the exact integer arithmetic of the
// quantized model: inputs at scale 2^15, weights at 2^15, activations applied
// as one ct-ct square plus power-of-two coefficient multiplications whose
// scale alignment rides on x^k monomial shifts (value times 2^k, coefficients
// untouched). quantized_forward_integer is the plaintext integer twin of that
// circuit and must agree with decrypt+decode bit for bit.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "privml/data.hpp"
#include "privml/dpsgd.hpp"
#include "privml/encoding.hpp"
#include "privml/fvrns.hpp"
#include "privml/polyapprox.hpp"

namespace privml {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Model-level activation configuration: square and the two swish
// approximations apply to both layers; relu_sigmoid is the unencryptable
// baseline (relu hidden, sigmoid output).
enum class ActivationKind { square, swish_poly, swish_quant, relu_sigmoid };

ActivationKind activation_from_name(const std::string& name);
const char* activation_name(ActivationKind kind);

// Degree-2 minimax fit of swish on [-4, 4] (ascending: c0 + c1 x + c2 x^2).
inline constexpr double kSwishFitC0 = 0.15361373;
inline constexpr double kSwishFitC1 = 0.5;
inline constexpr double kSwishFitC2 = 0.12050345;

// Power-of-two rounding shipped in the encrypted circuit:
// 2^-3 x^2 + 2^-1 x + 2^-4.
Base2Poly quantized_swish();

double activation_value(ActivationKind kind, bool output_layer, double x);
double activation_derivative(ActivationKind kind, bool output_layer, double x);

struct MlpModel {
  ActivationKind activation = ActivationKind::swish_quant;
  bool use_bias = true;
  Eigen::MatrixXd w1;  // d x hidden
  Eigen::VectorXd b1;  // hidden
  Eigen::VectorXd w2;  // hidden
  double b2 = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t preprocess_digest = 0;

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.cols()); }

  // Glorot-uniform weights, zero biases, seeded.
  static MlpModel init(std::size_t input_dim, std::size_t hidden_dim, ActivationKind kind,
                       std::uint64_t seed, bool use_bias = true);

  void save(const std::string& path) const;  // key-value text format
  static MlpModel load(const std::string& path);
};

struct ForwardCache {
  Eigen::VectorXd z1, a1;
  double z2 = 0.0, score = 0.0;
};

double forward(const MlpModel& model, const Eigen::VectorXd& x, ForwardCache* cache = nullptr);

// w(label) * (score - label)^2 with w(1) = w_pos, w(0) = 1.
double weighted_mse(double score, int label, double w_pos);

// Flat parameter order: w1 (column-major), b1, w2, b2.
std::size_t parameter_count(const MlpModel& model);
Eigen::VectorXd pack_parameters(const MlpModel& model);
void unpack_parameters(const Eigen::VectorXd& params, MlpModel& model);

// Analytic gradient of the weighted MSE for one example, in pack order;
// optionally reports the example's loss from the same forward pass.
Eigen::VectorXd example_gradient(const MlpModel& model, const Eigen::VectorXd& x, int label,
                                 double w_pos, double* loss_out = nullptr);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 256;
  double w_pos = 8.0;
  double learning_rate = 1e-3;
  std::size_t hidden = 32;
  ActivationKind activation = ActivationKind::swish_quant;
  bool use_bias = true;
  std::uint64_t seed = 1;
  std::optional<DpConfig> dp;  // lot size / learning rate are taken from above
};

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double epsilon = 0.0;           // spend so far (0 on the non-private path)
  double grad_norm_median = 0.0;  // unclipped per-example L2 norms
};

struct TrainResult {
  MlpModel model;
  std::vector<TrainRecord> history;
  double final_epsilon = 0.0;
  bool budget_exhausted = false;
};

TrainResult train(const Dataset& data, const TrainConfig& config);

std::vector<double> predict_scores(const MlpModel& model, const Dataset& data);

// --- fixed-point side -------------------------------------------------------

// Scale exponents of every stage plus the x^k value shifts that align the
// activation terms. `*_const_digit` is the bit position of the constant term
// at the stage scale.
struct ScaleSchedule {
  int input = 15, weight = 15;
  int z1 = 30, a1 = 0, z2 = 0, out = 0;
  bool has_affine_terms = false;  // false for the pure square activation
  int hidden_sq_shift = 0, hidden_lin_shift = 0, hidden_const_digit = 0;
  int out_sq_shift = 0, out_lin_shift = 0, out_const_digit = 0;
};

ScaleSchedule schedule_for(ActivationKind kind, int scale_bits = 15);

struct EncryptedModel {
  ActivationKind activation = ActivationKind::swish_quant;
  bool use_bias = true;
  int scale_bits = 15;
  std::size_t d = 0, hidden = 0;
  // All integers at scale 2^scale_bits; the circuit shifts biases up to the
  // aligned stage scales.
  std::vector<std::int64_t> w1q;  // column-major d x hidden
  std::vector<std::int64_t> b1q;
  std::vector<std::int64_t> w2q;
  std::int64_t b2q = 0;
  std::uint64_t params_digest = 0;

  ScaleSchedule schedule() const { return schedule_for(activation, scale_bits); }
  void save(std::ostream& os) const;
  static EncryptedModel load(std::istream& is, const EncryptionParams* expect = nullptr);
};

// Worst-case coefficient/degree envelope of the circuit per stage, checked
// against the plaintext capacity.
CapacityReport model_capacity(const EncryptedModel& model, const EncryptionParams& params);

// Rounds weights onto the scale grid and runs the capacity check; throws
// ModelError naming the violating stage on failure. Only square and
// swish_quant have encrypted circuits.
EncryptedModel quantize_model(const MlpModel& model, const EncryptionParams& params,
                              int scale_bits = 15);

// round(x_j * 2^scale_bits) per feature.
std::vector<std::int64_t> fixed_point_input(const Eigen::VectorXd& x, int scale_bits);

// Integer twin of the encrypted circuit; exact.
BigInt quantized_forward_integer(const EncryptedModel& model,
                                 const std::vector<std::int64_t>& x_fixed);
// The twin's output as a float score (value / 2^out_scale).
double quantized_score(const EncryptedModel& model, const Eigen::VectorXd& x);

std::vector<Ciphertext> encrypt_features(const std::vector<std::int64_t>& x_fixed, int scale_bits,
                                         const PublicKey& pk, const EncryptionParams& params,
                                         SeededRng& rng);

struct EncryptedForwardResult {
  Ciphertext score;  // ops field holds the same tally as `ops` below
  OpCounters ops;    // exact circuit tally (per-ciphertext lineage counters
                     // overcount shared subterms)
};

EncryptedForwardResult encrypted_forward(const EncryptedModel& model,
                                         const std::vector<Ciphertext>& inputs,
                                         const RelinKey& rk, const EncryptionParams& params,
                                         PlainMulPath activation_path = PlainMulPath::shift);

}  // namespace privml
