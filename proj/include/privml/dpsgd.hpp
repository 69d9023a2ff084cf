#pragma once

// Differentially private gradient machinery: per-example clipping, the
// noised lot average, a log-moment (Renyi) accountant for the subsampled
// Gaussian mechanism, and the optimizer step that ties them together.
//
// Accounting convention: for sampling probability q and noise multiplier
// sigma, the per-step log-moment at order a is log E_{z~N(0,s^2)}[(mu/mu0)^a]
// with mu = (1-q) mu0 + q mu1 the subsampled mixture. Moments add over steps
// and convert to (eps, delta) via eps = min_a (moment + log(1/delta))/(a-1).

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "privml/common.hpp"

namespace privml {

class DpError : public std::runtime_error {
 public:
  explicit DpError(const std::string& what) : std::runtime_error(what) {}
};

struct DpConfig {
  double clip = 1.0;          // gradient L2 bound C
  double sigma = 1.0;         // noise multiplier (std of the noise is sigma*C)
  std::size_t lot_size = 256; // L
  std::size_t dataset_size = 0;  // N
  double delta = 1e-5;
  double epsilon_budget = std::numeric_limits<double>::infinity();
  double learning_rate = 1e-3;
  bool poisson_sampling = false;  // fixed-size lots by default
};

// g / max(1, |g|_2 / C); never increases the norm, passes short gradients
// through unchanged.
Eigen::VectorXd clip_gradient(const Eigen::VectorXd& gradient, double clip);

// (sum of pre-clipped gradients + one N(0, (sigma*C)^2) draw per coordinate)
// divided by the nominal lot size.
Eigen::VectorXd sanitize(const std::vector<Eigen::VectorXd>& clipped, double sigma, double clip,
                         std::size_t lot_size, SeededRng& rng);

// Single-step log-moment of the subsampled Gaussian at one Renyi order;
// +infinity when the moment overflows (such orders never win the epsilon
// minimization). q = 1 uses the closed Gaussian form a(a-1)/(2 sigma^2).
double log_moment_single(double q, double sigma, double order);

class PrivacyAccountant {
 public:
  explicit PrivacyAccountant(std::vector<double> orders = default_orders());

  // Accumulates `steps` steps of the mechanism at (q, sigma). sigma = 0 makes
  // every moment infinite.
  void update(double q, double sigma, std::uint64_t steps = 1);

  // 0 before any update; +infinity when no finite order remains.
  double epsilon(double delta) const;

  std::uint64_t steps() const { return steps_; }
  const std::vector<double>& orders() const { return orders_; }
  const std::vector<double>& log_moments() const { return log_moments_; }

  static std::vector<double> default_orders();

 private:
  std::vector<double> orders_;
  std::vector<double> log_moments_;
  std::uint64_t steps_ = 0;
  // Single-step moments are cached for the last (q, sigma) pair; training
  // loops call update once per step with fixed parameters.
  double cached_q_ = -1.0, cached_sigma_ = -1.0;
  std::vector<double> cached_single_;
};

// Smallest sigma on [0.3, 64] whose epsilon after `steps` steps stays within
// `target_epsilon` (bisection on the accountant; epsilon is decreasing in
// sigma). Returns 64 when even that is too loud.
double solve_noise_scale(double target_epsilon, double delta, double q, std::uint64_t steps,
                         const std::vector<double>& orders = PrivacyAccountant::default_orders());

// Sorted lot of indices: fixed size L without replacement (Floyd's
// algorithm), or per-example inclusion with probability L/N when poisson.
std::vector<std::size_t> sample_lot(std::size_t dataset_size, std::size_t lot_size, bool poisson,
                                    SeededRng& rng);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m, v;
  std::uint64_t t = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient, double learning_rate);
};

enum class StepStatus { ok, budget_exhausted };

// One DP training step over a flat parameter vector: budget check, lot
// sampling, per-example clip, sanitize, Adam. `example_gradient(i)` must
// return the gradient at the current params for example i. Returns
// budget_exhausted (leaving params and the accountant untouched) when adding
// this step would push epsilon(delta) past the budget.
StepStatus private_step(Eigen::VectorXd& params,
                        const std::function<Eigen::VectorXd(std::size_t)>& example_gradient,
                        const DpConfig& config, PrivacyAccountant& accountant, AdamState& adam,
                        SeededRng& rng);

}  // namespace privml
