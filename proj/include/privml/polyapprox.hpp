#pragma once

// Minimax polynomial machinery for activation approximation: Remez exchange
// fits on a symmetric interval, sup-norm error measurement on a dense grid
// with local refinement, rounding of coefficients to signed powers of two,
// and a constrained exhaustive scan over power-of-two exponent tuples.

#include <cstdint>
#include <functional>
#include <vector>

namespace privml {

using RealFn = std::function<double(double)>;

double swish(double x);  // x * sigmoid(x)

struct RealPoly {
  std::vector<double> c;  // ascending degree
  double operator()(double x) const {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
    return acc;
  }
  int degree() const { return static_cast<int>(c.size()) - 1; }
};

struct RemezOptions {
  std::size_t grid = 32769;  // residual scan resolution per iteration
  int max_iterations = 64;
  double tolerance = 1e-10;  // relative equioscillation gap at convergence
};

struct RemezResult {
  RealPoly poly;
  double max_err = 0.0;
  std::vector<double> reference;  // final n+2 equioscillation abscissae
  int iterations = 0;
  bool converged = false;
};

// Best degree-`degree` sup-norm approximation of f on [-half_width, half_width]
// via Remez exchange (linear solves through Eigen).
RemezResult minimax_fit(const RealFn& f, int degree, double half_width,
                        const RemezOptions& options = {});

// sup |f - g| on the interval: dense grid plus parabolic refinement around
// every local maximum of the difference.
double max_error(const RealFn& f, const RealFn& g, double half_width,
                 std::size_t grid = 100001);

// Bisects the interval half-width until the fitted quadratic coefficient hits
// `target_c2` (the coefficient is monotone decreasing in the half-width for
// swish-like functions). Used to recover the evaluation interval from
// published coefficients.
double calibrate_half_width(const RealFn& f, double target_c2, double lo, double hi,
                            double tol = 1e-9);

// --- signed power-of-two polynomials ---------------------------------------

struct Base2Term {
  bool zero = true;
  int exponent = 0;
  int sign = 1;  // +1 / -1
};

struct Base2Poly {
  std::vector<Base2Term> terms;  // ascending degree
  double coeff(std::size_t i) const;
  double operator()(double x) const;
};

// Each coefficient to the nearest signed power of two (by value distance);
// exact zeros pass through flagged as zero terms.
Base2Poly base2_round(const RealPoly& p);

// Feasibility region for the scan: candidate q must satisfy
// lo_i <= q(x_i) <= hi_i at each abscissa.
struct ScanConstraints {
  std::vector<double> x, lo, hi;
  bool admits(const Base2Poly& q) const;
};

// Default constraints: a band of half-width K around the minimax polynomial's
// values at its equioscillation abscissae.
ScanConstraints equioscillation_constraints(const RemezResult& fit, double K);

struct ScanConfig {
  int radius = 3;       // exponent search radius around the rounded seed
  double K = -1.0;      // constraint band half-width; < 0 means 3 * fit error
  std::size_t grid = 100001;
};

struct ScanResult {
  RemezResult fit;      // underlying minimax fit
  Base2Poly rounded;    // base2_round(fit.poly)
  double rounded_err = 0.0;
  Base2Poly best;       // feasible tuple with minimal sup error
  double best_err = 0.0;
  std::size_t feasible = 0, evaluated = 0;
};

// Exhaustive scan over exponent tuples within +-radius of the rounded seed
// (signs and zero-pattern inherited from the seed), restricted to the
// constraint region. Ties break toward smaller total |exponent|, then
// lexicographically.
ScanResult base2_scan(const RealFn& f, int degree, double half_width,
                      const ScanConfig& config = {});

}  // namespace privml
