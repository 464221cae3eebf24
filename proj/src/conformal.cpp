#include "estgcn/conformal.hpp"

#include <algorithm>
#include <cmath>

#include "estgcn/errors.hpp"

namespace estgcn {

UncertaintyMode parse_uncertainty_mode(const std::string& name) {
  if (name == "constant") return UncertaintyMode::constant;
  if (name == "residual_scale" || name == "residual-scale") return UncertaintyMode::residual_scale;
  throw ConfigError("unknown uncertainty mode '" + name + "'");
}

std::string to_string(UncertaintyMode m) {
  return m == UncertaintyMode::constant ? "constant" : "residual_scale";
}

void ConformalConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("conformal rho must lie in (0, 1)");
  if (window < 1) throw ConfigError("conformal window must be >= 1");
}

double conformal_score(double actual, double forecast, double u) {
  if (!(u > 0.0)) throw InputError("uncertainty scale must be > 0");
  return std::abs(actual - forecast) / u;
}

double conformal_quantile(std::span<const double> scores, const ConformalConfig& cfg) {
  cfg.validate();
  if (scores.empty()) throw InputError("conformal quantile of an empty window");
  const std::size_t n = std::min(cfg.window, scores.size());
  std::vector<double> w(scores.end() - static_cast<std::ptrdiff_t>(n), scores.end());
  // Guard against (1 - rho) n landing a hair above an integer.
  auto k = static_cast<std::size_t>(std::ceil((1.0 - cfg.rho) * static_cast<double>(n) - 1e-12));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k - 1), w.end());
  return w[k - 1];
}

IntervalForecast conformal_interval(double point, double kappa, double u) {
  if (!(u > 0.0)) throw InputError("uncertainty scale must be > 0");
  if (!(kappa >= 0.0)) throw InputError("kappa must be >= 0");
  return {point, point - kappa * u, point + kappa * u, kappa};
}

double uncertainty_scale(std::span<const double> residuals, const ConformalConfig& cfg) {
  if (cfg.mode == UncertaintyMode::constant || residuals.empty()) return 1.0;
  const std::size_t n = std::min(cfg.window, residuals.size());
  std::vector<double> a;
  a.reserve(n);
  for (auto it = residuals.end() - static_cast<std::ptrdiff_t>(n); it != residuals.end(); ++it) a.push_back(std::abs(*it));
  std::sort(a.begin(), a.end());
  const double med = n % 2 ? a[n / 2] : 0.5 * (a[n / 2 - 1] + a[n / 2]);
  return med > 0.0 ? med : 1.0;
}

ConformalStream::ConformalStream(ConformalConfig cfg) : cfg_(cfg) { cfg_.validate(); }

double ConformalStream::current_scale() const {
  const std::vector<double> r(residuals_.begin(), residuals_.end());
  return uncertainty_scale(r, cfg_);
}

IntervalForecast ConformalStream::interval(double point) const {
  const std::vector<double> s(scores_.begin(), scores_.end());
  return conformal_interval(point, conformal_quantile(s, cfg_), current_scale());
}

void ConformalStream::observe(double actual, double forecast) {
  scores_.push_back(conformal_score(actual, forecast, current_scale()));
  residuals_.push_back(actual - forecast);
  while (scores_.size() > cfg_.window) scores_.pop_front();
  while (residuals_.size() > cfg_.window) residuals_.pop_front();
}

}  // namespace estgcn
