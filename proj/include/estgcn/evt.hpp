#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "estgcn/errors.hpp"

namespace estgcn {

// Shape values with |xi| below this use the exponential (xi = 0) limit.
inline constexpr double kShapeZeroTol = 1e-9;

struct GpdFit {
  double threshold = 0.0;
  double scale = 1.0;
  double shape = 0.0;
  std::size_t n_exceed = 0;
  double loglik = 0.0;
};

// Generalised extreme value parameters. Housed for block-maxima analyses; no
// estimator is provided.
struct GevParams {
  double location = 0.0;
  double scale = 1.0;
  double shape = 0.0;

  void validate() const;
};

struct Exceedances {
  std::vector<double> values;  // x - threshold, source order
  double threshold = 0.0;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
};

struct BlockMaxima {
  std::vector<double> maxima;
  bool warning = false;  // block longer than the series
};

struct MeanExcessCurve {
  std::vector<double> grid;
  std::vector<std::optional<double>> me;
  std::vector<std::optional<double>> ci_half_width;  // 95% normal approximation
  std::vector<std::size_t> counts;

  std::size_t defined_points() const;
};

struct MepOptions {
  double r2_threshold = 0.98;
  std::size_t min_tail_points = 5;
  std::size_t min_defined_points = 10;
};

struct MepSuggestion {
  bool found = false;
  double threshold = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t tail_points = 0;
};

struct GpdFitOptions {
  std::size_t min_exceedances = 20;
  double gradient_tol = 1e-6;
  std::size_t max_iterations = 500;
};

class GpdFitError : public InputError {
 public:
  using InputError::InputError;
};

BlockMaxima block_maxima(std::span<const double> series, std::size_t block_len);

// Values strictly above the threshold, shifted by it.
Exceedances extract_exceedances(std::span<const double> series, double threshold);

double gpd_cdf(double z, double scale, double shape);

// Inverse CDF; p in [0, 1).
double gpd_quantile(double p, double scale, double shape);

// Log-likelihood of GP(scale, shape) for the exceedances. -inf outside the support.
double gpd_loglik(double scale, double shape, const Exceedances& exc);

// Maximum-likelihood fit by BFGS over (log scale, shape), started from a
// moment-based scale and shape 0.1.
GpdFit fit_gpd(const Exceedances& exc, const GpdFitOptions& options = {});

MeanExcessCurve mean_excess_curve(std::span<const double> series, std::span<const double> grid);

// Smallest grid threshold from which a count-weighted linear fit over the
// remaining defined points reaches the R^2 target.
MepSuggestion suggest_mep_threshold(const MeanExcessCurve& curve, const MepOptions& options = {});

// Lag-1 Durbin-Watson statistic of the mean-centred exceedances. Empty when
// fewer than 3 values or zero variance.
std::optional<double> durbin_watson(const Exceedances& exc);

// Negative single-observation GP log-density used as the tail penalty. The
// argument is pred - threshold, or pred itself when `raw_argument` is set.
// Predictions beyond a negative-shape support continue linearly from the
// point where 1 + shape * e / scale reaches kPotSupportFloor.
inline constexpr double kPotSupportFloor = 1e-6;
double pot_loss(double pred, const GpdFit& fit, bool raw_argument = false);
double pot_loss_derivative(double pred, const GpdFit& fit, bool raw_argument = false);

}  // namespace estgcn
