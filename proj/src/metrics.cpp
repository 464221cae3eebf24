#include "estgcn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "estgcn/errors.hpp"

namespace estgcn {

namespace {

void check_pair(std::span<const double> a, std::span<const double> f) {
  if (a.size() != f.size()) {
    throw InputError("length mismatch: " + std::to_string(a.size()) + " actuals vs " + std::to_string(f.size()) +
                     " forecasts");
  }
  if (a.empty()) throw InputError("metrics need at least one value");
}

}  // namespace

double mae(std::span<const double> actual, std::span<const double> forecast) {
  check_pair(actual, forecast);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - forecast[i]);
  return s / static_cast<double>(actual.size());
}

double rmse(std::span<const double> actual, std::span<const double> forecast) {
  check_pair(actual, forecast);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += (actual[i] - forecast[i]) * (actual[i] - forecast[i]);
  return std::sqrt(s / static_cast<double>(actual.size()));
}

std::optional<double> mase(std::span<const double> actual, std::span<const double> forecast,
                           std::span<const double> train_series) {
  check_pair(actual, forecast);
  if (train_series.size() < 2) throw InputError("MASE needs a training series of length >= 2");
  double diff = 0.0;
  for (std::size_t t = 1; t < train_series.size(); ++t) diff += std::abs(train_series[t] - train_series[t - 1]);
  const double q = static_cast<double>(actual.size());
  const double denom = q / static_cast<double>(train_series.size() - 1) * diff;
  if (!(denom > 0.0)) return std::nullopt;
  double num = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) num += std::abs(actual[i] - forecast[i]);
  return num / denom;
}

double smape(std::span<const double> actual, std::span<const double> forecast) {
  check_pair(actual, forecast);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double den = std::abs(forecast[i]) + std::abs(actual[i]);
    if (den > 0.0) s += 2.0 * std::abs(forecast[i] - actual[i]) / den;
  }
  return 100.0 * s / static_cast<double>(actual.size());
}

double pinball(std::span<const double> actual, std::span<const double> forecast, double rho) {
  check_pair(actual, forecast);
  if (!(rho > 0.0 && rho < 1.0)) throw InputError("pinball quantile must lie in (0, 1)");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - forecast[i];
    s += std::max(rho * d, (rho - 1.0) * d);
  }
  return s / static_cast<double>(actual.size());
}

double crps_samples(std::vector<double> x, double y) {
  const std::size_t s = x.size();
  if (s < 2) throw InputError("CRPS needs at least 2 ensemble members");
  std::sort(x.begin(), x.end());
  double abs_err = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    abs_err += std::abs(x[i] - y);
    // Sum over ordered pairs of |x_i - x_j| via the sorted weights.
    spread += x[i] * (2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(s));
  }
  const double sd = static_cast<double>(s);
  return abs_err / sd - spread / (sd * sd);
}

double crps_ensemble(std::span<const double> actual, const std::vector<std::vector<double>>& ensemble) {
  if (ensemble.size() != actual.size()) throw InputError("CRPS: one ensemble per actual value is required");
  if (actual.empty()) throw InputError("metrics need at least one value");
  double s = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) s += crps_samples(ensemble[t], actual[t]);
  return s / static_cast<double>(actual.size());
}

MetricReport evaluate_forecast(std::span<const double> actual, std::span<const double> forecast,
                               std::span<const double> train_series,
                               const std::vector<std::vector<double>>* ensemble, double rho) {
  MetricReport r;
  r.mae = mae(actual, forecast);
  r.mase = mase(actual, forecast, train_series);
  r.rmse = rmse(actual, forecast);
  r.smape = smape(actual, forecast);
  r.pinball = pinball(actual, forecast, rho);
  if (ensemble) r.crps = crps_ensemble(actual, *ensemble);
  r.quantile_rho = rho;
  r.horizon = actual.size();
  r.train_len = train_series.size();
  return r;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

DmResult dm_test(std::span<const double> actual, std::span<const double> fc_a, std::span<const double> fc_b) {
  check_pair(actual, fc_a);
  check_pair(actual, fc_b);
  const std::size_t q = actual.size();
  if (q < 2) throw InputError("DM test needs at least 2 observations");
  std::vector<double> lam(q);
  double scale = 0.0;
  for (std::size_t t = 0; t < q; ++t) {
    lam[t] = std::abs(actual[t] - fc_a[t]) - std::abs(actual[t] - fc_b[t]);
    scale = std::max({scale, std::abs(actual[t] - fc_a[t]), std::abs(actual[t] - fc_b[t])});
  }
  DmResult r;
  r.mean_diff = std::accumulate(lam.begin(), lam.end(), 0.0) / static_cast<double>(q);
  double ss = 0.0;
  for (double l : lam) ss += (l - r.mean_diff) * (l - r.mean_diff);
  r.sd_diff = std::sqrt(ss / static_cast<double>(q - 1));
  // Spread at rounding level counts as zero (a constant differential).
  if (!(r.sd_diff > 1e-12 * std::max(1.0, scale))) return r;
  const double stat = std::sqrt(static_cast<double>(q)) * r.mean_diff / r.sd_diff;
  r.statistic = stat;
  r.p_value = 1.0 - normal_cdf(stat);
  return r;
}

double studentized_range_cdf(double q, std::size_t k) {
  if (k < 2) throw InputError("studentized range needs k >= 2");
  if (!(q > 0.0)) return 0.0;
  const double kd = static_cast<double>(k);
  auto integrand = [q, kd](double z) {
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double inner = normal_cdf(z) - normal_cdf(z - q);
    return phi * std::pow(inner, kd - 1.0);
  };
  // The integrand is negligible outside |z| < 9 + q.
  double total = 0.0;
  const double lo = -9.0, hi = 9.0 + q;
  const int pieces = 16;
  for (int i = 0; i < pieces; ++i) {
    const double a = lo + (hi - lo) * i / pieces;
    const double b = lo + (hi - lo) * (i + 1) / pieces;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 8, 1e-13);
  }
  return std::clamp(kd * total, 0.0, 1.0);
}

double studentized_range_quantile(double p, std::size_t k) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("studentized range quantile needs p in (0, 1)");
  static std::mutex mu;
  static std::map<std::pair<std::size_t, double>, double> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find({k, p});
    if (it != cache.end()) return it->second;
  }
  auto f = [p, k](double q) { return studentized_range_cdf(q, k) - p; };
  double lo = 1e-6, hi = 1.0;
  while (f(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e3) throw NumericError("studentized range quantile did not bracket");
  }
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(a - b) < 1e-12; };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
  const double q = 0.5 * (a + b);
  std::lock_guard<std::mutex> lock(mu);
  cache[{k, p}] = q;
  return q;
}

std::vector<double> average_ranks(std::span<const double> losses) {
  const std::size_t f = losses.size();
  std::vector<std::size_t> order(f);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  std::vector<double> ranks(f);
  std::size_t i = 0;
  while (i < f) {
    std::size_t j = i;
    while (j + 1 < f && losses[order[j + 1]] == losses[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

McbResult mcb_test(const std::vector<std::vector<double>>& losses, double theta) {
  const std::size_t d = losses.size();
  if (d < 2) throw InputError("MCB needs at least 2 datasets");
  const std::size_t f = losses.front().size();
  if (f < 2) throw InputError("MCB needs at least 2 models");
  if (!(theta > 0.0 && theta < 1.0)) throw InputError("MCB significance level must lie in (0, 1)");
  McbResult r;
  r.theta = theta;
  r.mean_ranks.assign(f, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    if (losses[k].size() != f) throw InputError("MCB loss rows must all have the same model count");
    for (double x : losses[k]) {
      if (std::isnan(x)) throw InputError("MCB losses contain NaN (dataset " + std::to_string(k) + ")");
    }
    const auto ranks = average_ranks(losses[k]);
    for (std::size_t m = 0; m < f; ++m) r.mean_ranks[m] += ranks[m];
  }
  for (double& x : r.mean_ranks) x /= static_cast<double>(d);
  r.delta = studentized_range_quantile(1.0 - theta, f);
  const double fd = static_cast<double>(f);
  r.critical_distance = r.delta * std::sqrt(fd * (fd + 1.0) / (6.0 * static_cast<double>(d)));
  r.best = static_cast<std::size_t>(std::min_element(r.mean_ranks.begin(), r.mean_ranks.end()) - r.mean_ranks.begin());
  r.reference_low = r.mean_ranks[r.best] - r.critical_distance;
  r.reference_high = r.mean_ranks[r.best] + r.critical_distance;
  for (double m : r.mean_ranks) r.in_reference.push_back(m - r.critical_distance <= r.reference_high);
  return r;
}

}  // namespace estgcn
