#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

namespace estgcn {

enum class UncertaintyMode { constant, residual_scale };

UncertaintyMode parse_uncertainty_mode(const std::string& name);
std::string to_string(UncertaintyMode m);

struct ConformalConfig {
  double rho = 0.2;          // miscoverage level
  std::size_t window = 100;  // most recent scores used for the quantile
  UncertaintyMode mode = UncertaintyMode::residual_scale;

  void validate() const;
};

struct IntervalForecast {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double kappa = 0.0;
};

double conformal_score(double actual, double forecast, double u);

// Order statistic ceil((1 - rho) n) of the last min(window, n) scores.
double conformal_quantile(std::span<const double> scores, const ConformalConfig& cfg);

IntervalForecast conformal_interval(double point, double kappa, double u);

// Uncertainty scale from past residuals: 1 in constant mode, otherwise the
// median absolute residual over the last `window` values (1 when that is 0).
double uncertainty_scale(std::span<const double> residuals, const ConformalConfig& cfg);

// Sequential calibration for one stream: interval() uses only what was
// observed before it; observe() then appends the realised outcome.
class ConformalStream {
 public:
  explicit ConformalStream(ConformalConfig cfg);

  std::size_t observed() const { return scores_.size(); }
  double current_scale() const;
  IntervalForecast interval(double point) const;
  void observe(double actual, double forecast);

 private:
  ConformalConfig cfg_;
  std::deque<double> residuals_;
  std::deque<double> scores_;
};

}  // namespace estgcn
