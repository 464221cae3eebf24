#pragma once

// Independent reference computations for the tests. These deliberately avoid
// the library's own helpers: scalar loops, textbook formulas, and different
// numerical routes than the implementation takes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Spherical law of cosines; the library uses the haversine form.
inline double great_circle_km(double lat1, double lon1, double lat2, double lon2, double radius) {
  const double d2r = std::numbers::pi / 180.0;
  const double p1 = lat1 * d2r, p2 = lat2 * d2r, dl = (lon2 - lon1) * d2r;
  double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  c = std::clamp(c, -1.0, 1.0);
  return radius * std::acos(c);
}

// Inverse-CDF draw from GP(scale, shape).
inline double gp_draw(double u, double scale, double shape) {
  if (shape == 0.0) return -scale * std::log1p(-u);
  return scale / shape * (std::pow(1.0 - u, -shape) - 1.0);
}

inline std::vector<double> gp_sample(std::size_t n, double scale, double shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& x : out) x = gp_draw(unif(rng), scale, shape);
  return out;
}

inline double gp_loglik(double scale, double shape, const std::vector<double>& z) {
  double ll = 0.0;
  for (double x : z) {
    if (shape == 0.0) {
      ll += -std::log(scale) - x / scale;
    } else {
      const double t = 1.0 + shape * x / scale;
      if (t <= 0.0) return -INFINITY;
      ll += -std::log(scale) - (1.0 + 1.0 / shape) * std::log(t);
    }
  }
  return ll;
}

// Scalar-loop metrics.
inline double mae(const std::vector<double>& y, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - f[i]);
  return s / static_cast<double>(y.size());
}

inline double rmse(const std::vector<double>& y, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

// MASE with denominator (q / (T - 1)) * sum |x_t - x_{t-1}|, numerator sum of
// absolute errors.
inline double mase(const std::vector<double>& y, const std::vector<double>& f, const std::vector<double>& train) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) num += std::fabs(y[i] - f[i]);
  for (std::size_t t = 1; t < train.size(); ++t) den += std::fabs(train[t] - train[t - 1]);
  den *= static_cast<double>(y.size()) / static_cast<double>(train.size() - 1);
  return num / den;
}

inline double smape(const std::vector<double>& y, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::fabs(y[i]) + std::fabs(f[i]);
    if (den > 0.0) s += 2.0 * std::fabs(f[i] - y[i]) / den;
  }
  return 100.0 * s / static_cast<double>(y.size());
}

inline double pinball(const std::vector<double>& y, const std::vector<double>& f, double rho) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - f[i];
    s += d >= 0.0 ? rho * d : (rho - 1.0) * d;
  }
  return s / static_cast<double>(y.size());
}

// O(S^2) CRPS: mean |X - y| - 1/2 mean |X - X'|.
inline double crps_double_sum(const std::vector<double>& xs, double y) {
  const double s = static_cast<double>(xs.size());
  double a = 0.0, b = 0.0;
  for (double x : xs) a += std::fabs(x - y);
  for (double x : xs)
    for (double x2 : xs) b += std::fabs(x - x2);
  return a / s - 0.5 * b / (s * s);
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(range of k standard normals <= q) by composite Simpson on a fixed grid.
inline double range_cdf(double q, int k) {
  const double lo = -12.0, hi = 12.0;
  const int n = 8000;  // even
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = lo + i * h;
    const double v = normal_pdf(z) * std::pow(normal_cdf(z + q) - normal_cdf(z), k - 1);
    s += v * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return k * s * h / 3.0;
}

inline double range_quantile(double p, int k) {
  double a = 0.0, b = 20.0;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    (range_cdf(m, k) < p ? a : b) = m;
  }
  return 0.5 * (a + b);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Symmetric-matrix eigenvalues by cyclic Jacobi rotations (row-major n x n).
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

// Least-squares slope of y on x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace oracle
