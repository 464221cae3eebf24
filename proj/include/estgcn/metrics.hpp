#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace estgcn {

double mae(std::span<const double> actual, std::span<const double> forecast);
double rmse(std::span<const double> actual, std::span<const double> forecast);
// Mean absolute error over the mean absolute one-step change of the training
// series. Empty when the training series is constant.
std::optional<double> mase(std::span<const double> actual, std::span<const double> forecast,
                           std::span<const double> train_series);
// Percent; a term with |forecast| + |actual| = 0 contributes 0.
double smape(std::span<const double> actual, std::span<const double> forecast);
// Mean quantile loss max(rho d, (rho - 1) d) with d = actual - forecast.
double pinball(std::span<const double> actual, std::span<const double> forecast, double rho);
// ensemble[t] holds the samples for actual[t]; each needs >= 2 samples.
double crps_ensemble(std::span<const double> actual, const std::vector<std::vector<double>>& ensemble);
// CRPS of one empirical distribution against one observation.
double crps_samples(std::vector<double> samples, double y);

struct MetricReport {
  double mae = 0.0;
  std::optional<double> mase;
  double rmse = 0.0;
  double smape = 0.0;
  double pinball = 0.0;
  std::optional<double> crps;
  double quantile_rho = 0.8;
  std::size_t horizon = 0;
  std::size_t train_len = 0;
};

MetricReport evaluate_forecast(std::span<const double> actual, std::span<const double> forecast,
                               std::span<const double> train_series,
                               const std::vector<std::vector<double>>* ensemble, double rho = 0.8);

struct DmResult {
  std::optional<double> statistic;  // empty when the loss differential has no spread
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  std::optional<double> p_value;    // upper-tail normal
  bool defined() const { return statistic.has_value(); }
};

// Loss differential |y - a| - |y - b|; positive statistics favour model b.
DmResult dm_test(std::span<const double> actual, std::span<const double> fc_a, std::span<const double> fc_b);

// Standard normal CDF.
double normal_cdf(double x);

// Distribution of the range of k iid standard normals (infinite degrees of
// freedom).
double studentized_range_cdf(double q, std::size_t k);
double studentized_range_quantile(double p, std::size_t k);

struct McbResult {
  std::vector<double> mean_ranks;
  double critical_distance = 0.0;
  double delta = 0.0;  // studentized-range critical value
  std::size_t best = 0;
  double reference_low = 0.0, reference_high = 0.0;
  std::vector<bool> in_reference;  // interval overlaps the best model's interval
  double theta = 0.05;
};

// Ranks within a row (1 = smallest), ties share their average rank.
std::vector<double> average_ranks(std::span<const double> losses);

// losses[d][f]: loss of model f on dataset d.
McbResult mcb_test(const std::vector<std::vector<double>>& losses, double theta = 0.05);

}  // namespace estgcn
