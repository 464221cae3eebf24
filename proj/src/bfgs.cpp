#include "estgcn/bfgs.hpp"

#include <cmath>
#include <limits>

#include "estgcn/errors.hpp"

namespace estgcn::optim {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

struct LineSearchResult {
  bool ok = false;
  double step = 0.0;
  double value = 0.0;
  std::vector<double> x;
  std::vector<double> grad;
};

// Bisection/expansion search for a step satisfying the weak Wolfe conditions.
LineSearchResult wolfe_search(const Objective& f, const std::vector<double>& x, double f0,
                              const std::vector<double>& d, double slope0, const BfgsOptions& opt) {
  const std::size_t n = x.size();
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double step = 1.0;
  LineSearchResult armijo_only;
  std::vector<double> trial(n), g(n);
  for (int k = 0; k < 80; ++k) {
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + step * d[i];
    const double ft = f(trial, &g);
    if (!std::isfinite(ft) || ft > f0 + opt.armijo_c1 * step * slope0) {
      hi = step;
    } else {
      if (!armijo_only.ok || ft < armijo_only.value) armijo_only = {true, step, ft, trial, g};
      const double slope = dot(g, d);
      if (slope >= opt.wolfe_c2 * slope0) return {true, step, ft, trial, g};
      lo = step;
    }
    step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * lo;
    if (std::isfinite(hi) && hi - lo < 1e-16 * std::max(1.0, hi)) break;
  }
  return armijo_only;
}

}  // namespace

BfgsResult minimize_bfgs(const Objective& f, std::vector<double> x0, const BfgsOptions& options) {
  const std::size_t n = x0.size();
  if (n == 0) throw InputError("BFGS needs at least one parameter");

  BfgsResult res;
  res.x = std::move(x0);
  res.gradient.assign(n, 0.0);
  res.value = f(res.x, &res.gradient);
  if (!std::isfinite(res.value)) {
    res.message = "objective is not finite at the starting point";
    return res;
  }

  // Inverse Hessian approximation, row-major.
  std::vector<double> h(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) h[i * n + i] = 1.0;
  bool scaled = false;

  std::vector<double> d(n), s(n), y(n), hy(n);
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    if (norm(res.gradient) <= options.gradient_tol) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc -= h[i * n + j] * res.gradient[j];
      d[i] = acc;
    }
    double slope0 = dot(d, res.gradient);
    if (!(slope0 < 0.0)) {
      // Lost descent; restart from steepest descent.
      std::fill(h.begin(), h.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        h[i * n + i] = 1.0;
        d[i] = -res.gradient[i];
      }
      slope0 = dot(d, res.gradient);
    }

    auto ls = wolfe_search(f, res.x, res.value, d, slope0, options);
    if (!ls.ok) {
      res.message = "line search failed to find a decreasing step";
      return res;
    }
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = ls.x[i] - res.x[i];
      y[i] = ls.grad[i] - res.gradient[i];
    }
    res.x = std::move(ls.x);
    res.gradient = std::move(ls.grad);
    res.value = ls.value;

    const double sy = dot(s, y);
    if (sy <= 1e-300) continue;
    if (!scaled) {
      const double gamma = sy / dot(y, y);
      for (std::size_t i = 0; i < n; ++i) h[i * n + i] = gamma;
      scaled = true;
    }
    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
    const double rho = 1.0 / sy;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * y[j];
      hy[i] = acc;
    }
    const double yhy = dot(y, hy);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
      }
    }
  }
  if (norm(res.gradient) <= options.gradient_tol) {
    res.converged = true;
    res.message = "gradient tolerance reached";
  } else {
    res.message = "iteration limit reached";
  }
  return res;
}

}  // namespace estgcn::optim
