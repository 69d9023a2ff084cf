#include "privml/polyapprox.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include <Eigen/Dense>

namespace privml {

double swish(double x) { return x / (1.0 + std::exp(-x)); }

double Base2Poly::coeff(std::size_t i) const {
  if (i >= terms.size() || terms[i].zero) return 0.0;
  return terms[i].sign * std::ldexp(1.0, terms[i].exponent);
}

double Base2Poly::operator()(double x) const {
  double acc = 0.0;
  for (std::size_t i = terms.size(); i-- > 0;) acc = acc * x + coeff(i);
  return acc;
}

namespace {

struct Extremum {
  double x;
  double r;
};

// Residual local extrema on a dense grid, refined by the parabola through the
// three neighboring samples. Endpoints are always candidates.
std::vector<Extremum> find_extrema(const RealFn& residual, double a, std::size_t grid) {
  const double step = 2.0 * a / static_cast<double>(grid - 1);
  std::vector<double> r(grid);
  for (std::size_t k = 0; k < grid; ++k) r[k] = residual(-a + step * static_cast<double>(k));
  std::vector<Extremum> out;
  out.push_back({-a, r.front()});
  for (std::size_t k = 1; k + 1 < grid; ++k) {
    if (std::abs(r[k]) >= std::abs(r[k - 1]) && std::abs(r[k]) >= std::abs(r[k + 1])) {
      double x = -a + step * static_cast<double>(k);
      const double denom = r[k + 1] - 2.0 * r[k] + r[k - 1];
      if (std::abs(denom) > 1e-300) {
        const double shift = 0.5 * step * (r[k - 1] - r[k + 1]) / denom;
        if (std::abs(shift) <= step) x += shift;
      }
      x = std::clamp(x, -a, a);
      out.push_back({x, residual(x)});
      // skip the plateau partner of an exact grid tie
      while (k + 1 < grid && r[k + 1] == r[k]) ++k;
    }
  }
  out.push_back({a, r.back()});
  std::sort(out.begin(), out.end(), [](const Extremum& p, const Extremum& q) { return p.x < q.x; });
  return out;
}

// Reduce candidates to an alternating-sign chain: the strongest point of each
// same-sign run, then trim the weaker ends until exactly `want` remain.
std::vector<Extremum> alternating_chain(const std::vector<Extremum>& cand, std::size_t want) {
  std::deque<Extremum> chain;
  for (const auto& e : cand) {
    if (e.r == 0.0) continue;
    if (!chain.empty() && ((chain.back().r > 0) == (e.r > 0))) {
      if (std::abs(e.r) > std::abs(chain.back().r)) chain.back() = e;
    } else {
      chain.push_back(e);
    }
  }
  while (chain.size() > want) {
    if (std::abs(chain.front().r) <= std::abs(chain.back().r))
      chain.pop_front();
    else
      chain.pop_back();
  }
  return {chain.begin(), chain.end()};
}

}  // namespace

RemezResult minimax_fit(const RealFn& f, int degree, double half_width,
                        const RemezOptions& options) {
  if (degree < 0 || half_width <= 0.0) throw std::invalid_argument("minimax_fit: bad arguments");
  const int m = degree + 2;  // reference size
  RemezResult res;
  // Chebyshev extrema as the initial reference.
  std::vector<double> ref(m);
  for (int i = 0; i < m; ++i)
    ref[i] = -half_width * std::cos(M_PI * static_cast<double>(i) / static_cast<double>(m - 1));

  double fscale = 0.0;
  for (int i = 0; i < m; ++i) fscale = std::max(fscale, std::abs(f(ref[i])));

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    res.iterations = iter;
    // Solve p(x_i) + (-1)^i E = f(x_i).
    Eigen::MatrixXd A(m, m);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      double pw = 1.0;
      for (int j = 0; j <= degree; ++j) {
        A(i, j) = pw;
        pw *= ref[i];
      }
      A(i, degree + 1) = (i % 2 == 0) ? 1.0 : -1.0;
      b(i) = f(ref[i]);
    }
    Eigen::VectorXd sol = A.fullPivLu().solve(b);
    res.poly.c.assign(degree + 1, 0.0);
    for (int j = 0; j <= degree; ++j) res.poly.c[j] = sol(j);
    const double e_level = std::abs(sol(degree + 1));

    const RealPoly& p = res.poly;
    auto residual = [&](double x) { return f(x) - p(x); };
    auto cand = find_extrema(residual, half_width, options.grid);
    double e_max = 0.0;
    for (const auto& c : cand) e_max = std::max(e_max, std::abs(c.r));
    res.max_err = e_max;
    res.reference = ref;

    // Exact-fit degenerate case (f is itself a polynomial of this degree).
    if (e_max <= 1e-13 * std::max(1.0, fscale)) {
      res.converged = true;
      res.max_err = e_max;
      return res;
    }
    if (e_max - e_level <= options.tolerance * e_max) {
      res.converged = true;
      return res;
    }
    auto chain = alternating_chain(cand, static_cast<std::size_t>(m));
    if (chain.size() < static_cast<std::size_t>(m)) {
      // Degenerate iteration (e.g. a symmetric reference on an even residual
      // solves to E = 0 with fewer than m alternations). Refill the reference
      // with the strongest unused candidates and keep iterating.
      const double min_sep = 4.0 * half_width / static_cast<double>(options.grid);
      std::vector<Extremum> pool = cand;
      std::sort(pool.begin(), pool.end(),
                [](const Extremum& p, const Extremum& q) { return std::abs(p.r) > std::abs(q.r); });
      for (const auto& e : pool) {
        if (chain.size() == static_cast<std::size_t>(m)) break;
        bool clash = false;
        for (const auto& c : chain) clash = clash || std::abs(c.x - e.x) < min_sep;
        if (!clash) chain.push_back(e);
      }
      if (chain.size() < static_cast<std::size_t>(m)) break;  // cannot happen on real grids
      std::sort(chain.begin(), chain.end(),
                [](const Extremum& p, const Extremum& q) { return p.x < q.x; });
    }
    for (int i = 0; i < m; ++i) ref[i] = chain[i].x;
  }
  return res;
}

double max_error(const RealFn& f, const RealFn& g, double half_width, std::size_t grid) {
  auto diff = [&](double x) { return f(x) - g(x); };
  auto cand = find_extrema(diff, half_width, grid);
  double best = 0.0;
  for (const auto& c : cand) best = std::max(best, std::abs(c.r));
  return best;
}

double calibrate_half_width(const RealFn& f, double target_c2, double lo, double hi, double tol) {
  auto c2_of = [&](double a) { return minimax_fit(f, 2, a).poly.c[2]; };
  double c_lo = c2_of(lo), c_hi = c2_of(hi);
  if ((c_lo - target_c2) * (c_hi - target_c2) > 0.0)
    throw std::invalid_argument("calibrate_half_width: target not bracketed");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double c_mid = c2_of(mid);
    if ((c_mid - target_c2) * (c_lo - target_c2) > 0.0) {
      lo = mid;
      c_lo = c_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Base2Poly base2_round(const RealPoly& p) {
  Base2Poly out;
  out.terms.resize(p.c.size());
  for (std::size_t i = 0; i < p.c.size(); ++i) {
    const double c = p.c[i];
    if (c == 0.0) continue;  // exact zeros stay flagged as zero
    Base2Term t;
    t.zero = false;
    t.sign = c < 0.0 ? -1 : 1;
    const double mag = std::abs(c);
    const int e_floor = static_cast<int>(std::floor(std::log2(mag)));
    // nearest by value distance among the two enclosing powers
    const double lo = std::ldexp(1.0, e_floor);
    const double hi = std::ldexp(1.0, e_floor + 1);
    t.exponent = (mag - lo <= hi - mag) ? e_floor : e_floor + 1;
    out.terms[i] = t;
  }
  return out;
}

bool ScanConstraints::admits(const Base2Poly& q) const {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = q(x[i]);
    if (v < lo[i] || v > hi[i]) return false;
  }
  return true;
}

ScanConstraints equioscillation_constraints(const RemezResult& fit, double K) {
  ScanConstraints sc;
  for (double xi : fit.reference) {
    sc.x.push_back(xi);
    const double v = fit.poly(xi);
    sc.lo.push_back(v - K);
    sc.hi.push_back(v + K);
  }
  return sc;
}

ScanResult base2_scan(const RealFn& f, int degree, double half_width, const ScanConfig& config) {
  ScanResult res;
  res.fit = minimax_fit(f, degree, half_width);
  res.rounded = base2_round(res.fit.poly);
  const double K = config.K >= 0.0 ? config.K : 3.0 * res.fit.max_err;
  const ScanConstraints constraints = equioscillation_constraints(res.fit, K);

  // Pre-tabulate f so each candidate's sup error is one pass over the grid.
  const double step = 2.0 * half_width / static_cast<double>(config.grid - 1);
  std::vector<double> xs(config.grid), fs(config.grid);
  for (std::size_t k = 0; k < config.grid; ++k) {
    xs[k] = -half_width + step * static_cast<double>(k);
    fs[k] = f(xs[k]);
  }
  auto sup_err = [&](const Base2Poly& q) {
    double m = 0.0;
    for (std::size_t k = 0; k < config.grid; ++k)
      m = std::max(m, std::abs(fs[k] - q(xs[k])));
    return m;
  };
  res.rounded_err = max_error(f, [&](double x) { return res.rounded(x); }, half_width, config.grid);

  std::vector<std::size_t> live;  // indices of nonzero terms
  for (std::size_t i = 0; i < res.rounded.terms.size(); ++i)
    if (!res.rounded.terms[i].zero) live.push_back(i);

  Base2Poly cand = res.rounded;
  bool have_best = false;
  long best_abs_sum = 0;
  std::vector<int> best_tuple, tuple(live.size());

  const int span = 2 * config.radius + 1;
  std::size_t total = 1;
  for (std::size_t i = 0; i < live.size(); ++i) total *= static_cast<std::size_t>(span);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    long abs_sum = 0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const int offset = static_cast<int>(rem % span) - config.radius;
      rem /= span;
      const int e = res.rounded.terms[live[i]].exponent + offset;
      cand.terms[live[i]].exponent = e;
      tuple[i] = e;
      abs_sum += std::labs(e);
    }
    ++res.evaluated;
    if (!constraints.admits(cand)) continue;
    ++res.feasible;
    const double err = sup_err(cand);
    const bool better =
        !have_best || err < res.best_err ||
        (err == res.best_err &&
         (abs_sum < best_abs_sum || (abs_sum == best_abs_sum && tuple < best_tuple)));
    if (better) {
      have_best = true;
      res.best = cand;
      res.best_err = err;
      best_abs_sum = abs_sum;
      best_tuple = tuple;
    }
  }
  if (!have_best) {
    // Constraint region empty (radius too small): fall back to the seed.
    res.best = res.rounded;
    res.best_err = res.rounded_err;
  } else {
    // Polish the winner's error with endpoint refinement.
    res.best_err = max_error(f, [&](double x) { return res.best(x); }, half_width, config.grid);
  }
  return res;
}

}  // namespace privml
