#include "privml/dpsgd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace privml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// log of the mixture likelihood ratio mu(z)/mu0(z) = 1 + q (e^s - 1) with
// s = (2z - 1)/(2 sigma^2); stable for very negative and very positive s.
double log_ratio(double z, double q, double sigma) {
  const double s = (2.0 * z - 1.0) / (2.0 * sigma * sigma);
  if (s > 690.0) {
    // expm1 would overflow; q e^s dominates the 1.
    return std::log(q) + s;
  }
  return std::log1p(q * std::expm1(s));
}

struct MomentIntegrand {
  double q, sigma, order, log_norm;

  // (mu/mu0)^a - 1 times the N(0, sigma^2) density. The -1 keeps the small-q
  // cancellation exact; the large-exponent branch folds the density into a
  // single exp so overflow yields +inf rather than inf * 0.
  double operator()(double z) const {
    const double log_phi = -z * z / (2.0 * sigma * sigma) - log_norm;
    const double al = order * log_ratio(z, q, sigma);
    if (al < 50.0) return std::expm1(al) * std::exp(log_phi);
    return std::exp(al + log_phi);
  }
};

double simpson(const MomentIntegrand& f, double a, double fa, double b, double fb, double* fm) {
  const double m = 0.5 * (a + b);
  *fm = f(m);
  return (b - a) / 6.0 * (fa + 4.0 * *fm + fb);
}

double adaptive_simpson(const MomentIntegrand& f, double a, double fa, double b, double fb,
                        double m, double fm, double whole, double eps, int depth) {
  double flm = 0.0, frm = 0.0;
  const double left = simpson(f, a, fa, m, fm, &flm);
  const double right = simpson(f, m, fm, b, fb, &frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps) {
    return left + right + delta / 15.0;
  }
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  return adaptive_simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
         adaptive_simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}

double integrate(const MomentIntegrand& f, double a, double b, double eps) {
  const double fa = f(a), fb = f(b);
  double fm = 0.0;
  const double whole = simpson(f, a, fa, b, fb, &fm);
  return adaptive_simpson(f, a, fa, b, fb, 0.5 * (a + b), fm, whole, eps, 40);
}

}  // namespace

double log_moment_single(double q, double sigma, double order) {
  if (!(q > 0.0 && q <= 1.0)) throw DpError("log_moment_single: q must lie in (0,1]");
  if (!(order > 1.0)) throw DpError("log_moment_single: order must exceed 1");
  if (!(sigma > 0.0)) return kInf;
  if (q == 1.0) {
    // Plain Gaussian mechanism: log E[(mu1/mu0)^a] = a(a-1)/(2 sigma^2).
    return order * (order - 1.0) / (2.0 * sigma * sigma);
  }

  const double lo = -12.0 * sigma - 2.0;
  const double hi = order + 12.0 * sigma + 2.0;
  const MomentIntegrand f{q, sigma, order, std::log(sigma * std::sqrt(2.0 * std::numbers::pi))};

  // Coarse scan: bail to +inf if the integrand itself overflows anywhere, and
  // size the absolute tolerance off a first trapezoid estimate.
  const int scan = 1024;
  double coarse = 0.0;
  double prev = f(lo);
  for (int i = 1; i <= scan; ++i) {
    const double z = lo + (hi - lo) * static_cast<double>(i) / scan;
    const double log_phi = -z * z / (2.0 * sigma * sigma) - f.log_norm;
    if (f.order * log_ratio(z, q, sigma) + log_phi > 690.0) return kInf;
    const double cur = f(z);
    coarse += 0.5 * (prev + cur) * (hi - lo) / scan;
    prev = cur;
  }
  const double eps = 1e-12 * std::max(std::abs(coarse), 1e-12);

  // The integrand changes regime near z = 1/2 and peaks again near z = a;
  // split there so the adaptive rule starts from sensible panels.
  std::vector<double> cuts{lo, 0.0, 1.0, std::max(2.0, order), hi};
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    total += integrate(f, cuts[i], cuts[i + 1], eps);
  }
  // E[(mu/mu0)^a] >= 1 by Jensen, so the integral is nonnegative up to
  // rounding; clamp the dust before log1p.
  if (total < 0.0) total = 0.0;
  if (std::isinf(total)) return kInf;
  return std::log1p(total);
}

PrivacyAccountant::PrivacyAccountant(std::vector<double> orders) : orders_(std::move(orders)) {
  if (orders_.empty()) throw DpError("accountant: empty order grid");
  for (double a : orders_) {
    if (!(a > 1.0)) throw DpError("accountant: orders must exceed 1");
  }
  log_moments_.assign(orders_.size(), 0.0);
}

std::vector<double> PrivacyAccountant::default_orders() {
  return {1.25, 1.5,  1.75, 2.0,  2.25, 2.5,  3.0,  3.5,  4.0,  4.5,  5.0,  6.0,  7.0,
          8.0,  10.0, 12.0, 14.0, 16.0, 20.0, 24.0, 28.0, 32.0, 40.0, 48.0, 56.0, 64.0};
}

void PrivacyAccountant::update(double q, double sigma, std::uint64_t steps) {
  if (steps == 0) return;
  if (q != cached_q_ || sigma != cached_sigma_) {
    cached_single_.resize(orders_.size());
    for (std::size_t i = 0; i < orders_.size(); ++i) {
      cached_single_[i] = log_moment_single(q, sigma, orders_[i]);
    }
    cached_q_ = q;
    cached_sigma_ = sigma;
  }
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    log_moments_[i] += static_cast<double>(steps) * cached_single_[i];
  }
  steps_ += steps;
}

double PrivacyAccountant::epsilon(double delta) const {
  if (!(delta > 0.0 && delta < 1.0)) throw DpError("epsilon: delta must lie in (0,1)");
  if (steps_ == 0) return 0.0;
  double best = kInf;
  const double log_inv_delta = -std::log(delta);
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    if (std::isinf(log_moments_[i])) continue;
    best = std::min(best, (log_moments_[i] + log_inv_delta) / (orders_[i] - 1.0));
  }
  return best;
}

double solve_noise_scale(double target_epsilon, double delta, double q, std::uint64_t steps,
                         const std::vector<double>& orders) {
  if (!(target_epsilon > 0.0)) throw DpError("solve_noise_scale: target must be positive");
  auto epsilon_at = [&](double sigma) {
    PrivacyAccountant acct(orders);
    acct.update(q, sigma, steps);
    return acct.epsilon(delta);
  };
  double lo = 0.3, hi = 64.0;
  if (epsilon_at(hi) > target_epsilon) return hi;
  if (epsilon_at(lo) <= target_epsilon) return lo;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (epsilon_at(mid) > target_epsilon ? lo : hi) = mid;
  }
  return hi;  // feasible side of the bracket
}

Eigen::VectorXd clip_gradient(const Eigen::VectorXd& gradient, double clip) {
  if (!(clip > 0.0)) throw DpError("clip_gradient: bound must be positive");
  const double norm = gradient.norm();
  if (norm <= clip) return gradient;
  return gradient * (clip / norm);
}

Eigen::VectorXd sanitize(const std::vector<Eigen::VectorXd>& clipped, double sigma, double clip,
                         std::size_t lot_size, SeededRng& rng) {
  if (clipped.empty()) throw DpError("sanitize: empty gradient list");
  if (lot_size == 0) throw DpError("sanitize: lot size must be positive");
  Eigen::VectorXd sum = clipped[0];
  for (std::size_t i = 1; i < clipped.size(); ++i) {
    if (clipped[i].size() != sum.size()) throw DpError("sanitize: gradient size mismatch");
    sum += clipped[i];
  }
  for (Eigen::Index j = 0; j < sum.size(); ++j) {
    sum(j) += rng.gaussian(0.0, sigma * clip);
  }
  return sum / static_cast<double>(lot_size);
}

std::vector<std::size_t> sample_lot(std::size_t dataset_size, std::size_t lot_size, bool poisson,
                                    SeededRng& rng) {
  if (dataset_size == 0) throw DpError("sample_lot: empty dataset");
  if (poisson) {
    const double p = std::min(1.0, static_cast<double>(lot_size) / static_cast<double>(dataset_size));
    std::vector<std::size_t> lot;
    for (std::size_t i = 0; i < dataset_size; ++i) {
      if (rng.bernoulli(p)) lot.push_back(i);
    }
    return lot;
  }
  if (lot_size > dataset_size) throw DpError("sample_lot: lot larger than dataset");
  // Floyd's algorithm: L uniques in O(L) draws; std::set keeps them sorted.
  std::set<std::size_t> chosen;
  for (std::size_t j = dataset_size - lot_size; j < dataset_size; ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_below(j + 1));
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

void AdamState::step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient,
                     double learning_rate) {
  if (m.size() == 0) {
    m = Eigen::VectorXd::Zero(gradient.size());
    v = Eigen::VectorXd::Zero(gradient.size());
  }
  if (gradient.size() != m.size() || params.size() != m.size()) {
    throw DpError("adam: dimension mismatch");
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * gradient;
  v = beta2 * v.array() + (1.0 - beta2) * gradient.array().square();
  const double mc = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= learning_rate * (m.array() / mc) / ((v.array() / vc).sqrt() + eps);
}

StepStatus private_step(Eigen::VectorXd& params,
                        const std::function<Eigen::VectorXd(std::size_t)>& example_gradient,
                        const DpConfig& config, PrivacyAccountant& accountant, AdamState& adam,
                        SeededRng& rng) {
  if (config.dataset_size == 0) throw DpError("private_step: dataset size not set");
  const double q = std::min(1.0, static_cast<double>(config.lot_size) /
                                     static_cast<double>(config.dataset_size));

  // Spend is checked before the data is touched: if this step would overrun
  // the budget, nothing happens.
  PrivacyAccountant trial = accountant;
  trial.update(q, config.sigma, 1);
  if (trial.epsilon(config.delta) > config.epsilon_budget) {
    return StepStatus::budget_exhausted;
  }

  const auto lot = sample_lot(config.dataset_size, config.lot_size, config.poisson_sampling, rng);
  std::vector<Eigen::VectorXd> clipped;
  clipped.reserve(lot.size() + 1);
  for (std::size_t index : lot) {
    clipped.push_back(clip_gradient(example_gradient(index), config.clip));
  }
  if (clipped.empty()) {
    // A Poisson lot can come up empty; the mechanism still adds noise.
    clipped.push_back(Eigen::VectorXd::Zero(params.size()));
  }
  const Eigen::VectorXd sanitized =
      sanitize(clipped, config.sigma, config.clip, config.lot_size, rng);
  adam.step(params, sanitized, config.learning_rate);
  accountant = std::move(trial);
  return StepStatus::ok;
}

}  // namespace privml
