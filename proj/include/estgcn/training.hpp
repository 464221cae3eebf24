#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "estgcn/autodiff.hpp"
#include "estgcn/evt.hpp"
#include "estgcn/model.hpp"
#include "estgcn/panel.hpp"

namespace estgcn {

struct LossConfig {
  double beta1 = 1.0;
  double beta2 = 0.0;
  std::vector<double> thresholds;               // per station, data units
  std::vector<std::optional<GpdFit>> gpd_fits;  // per station
  // Per-station multiplier on beta2 (empty = 1 everywhere). The pipeline sets
  // 0 for stations with too few exceedances to fit.
  std::vector<double> station_beta2_scale;
  bool potl_raw_argument = false;

  void validate(std::size_t n_stations) const;
  double beta2_for(std::size_t station) const;
};

// Piecewise loss for a single prediction in data units.
double hybrid_loss(double pred, double target, double threshold, double beta1, double beta2,
                   const GpdFit* fit, bool potl_raw_argument = false);
double hybrid_loss(double pred, double target, std::size_t station, const LossConfig& cfg);
// d hybrid_loss / d pred.
double hybrid_loss_derivative(double pred, double target, std::size_t station, const LossConfig& cfg);

// Mean hybrid loss over a rows x q block of normalised model outputs. Row r
// belongs to station row_station[r]; predictions are de-normalised with
// `norm` before gating against the threshold. Targets are in data units.
ad::Variable panel_loss(ad::Variable normalized_out, const ad::Tensor& targets,
                        const std::vector<std::size_t>& row_station, const NormStats& norm,
                        const LossConfig& cfg);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::size_t batch = 32;
  // Recompute normalisation statistics from the training range before
  // training. Disabled for warm starts that keep the previous scaling.
  bool fit_normalization = true;

  void validate() const;
};

struct IndexRange {
  std::size_t begin = 0, end = 0;  // half-open row indices
  std::size_t size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct WindowSplit {
  IndexRange train, val, test;
  friend bool operator==(const WindowSplit&, const WindowSplit&) = default;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch, mean over samples
  std::vector<double> val_loss;    // per epoch, hybrid loss on the validation block
  std::vector<double> wall_ms;     // per epoch, cumulative
  double val_rmse = 0.0;           // after the last epoch
};

NormStats fit_norm_stats(const SeriesPanel& panel, IndexRange range);

// Normalised history block for forecast origins (N x samples*history_len).
ad::Tensor build_inputs(const EstgcnModel& model, const SeriesPanel& panel, const std::vector<std::size_t>& origins);

// Forecast in data units for the given origin, q x N.
std::vector<std::vector<double>> forecast_at(const EstgcnModel& model, const SeriesPanel& panel, std::size_t origin);

TrainResult train(EstgcnModel& model, const SeriesPanel& panel, const WindowSplit& split,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg);

struct BetaCandidate {
  double beta1 = 1.0;
  double beta2 = 0.0;
};

struct BetaRow {
  double beta1 = 0.0, beta2 = 0.0;
  std::optional<double> val_rmse;
  std::string status;  // "ok" or "failed: <reason>"
};

struct BetaSelection {
  double beta1 = 0.0, beta2 = 0.0;
  std::vector<BetaRow> table;
  EstgcnModel model;  // the trained model of the selected grid point
  TrainResult history;
  std::vector<std::optional<EstgcnModel>> models;  // per grid point, empty when failed
};

std::vector<BetaCandidate> default_beta_grid();

// Trains one model per grid point and keeps the lowest validation RMSE; ties
// go to the larger beta2, then the larger beta1.
BetaSelection select_betas(const std::vector<BetaCandidate>& grid, const std::function<EstgcnModel()>& factory,
                           const SeriesPanel& panel, const WindowSplit& split, const LossConfig& base_loss,
                           const TrainConfig& train_cfg);

enum class Scheme { short_term, medium_term, long_term };

Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme s);
std::size_t scheme_window_len(Scheme s);    // 30, 60, 90 days
std::size_t scheme_window_count(Scheme s);  // 12, 6, 4

struct WindowOptions {
  std::size_t history_len = 7;  // rows the model reads before an origin
  std::optional<std::size_t> val_len;  // defaults to the window length
  std::optional<std::size_t> train_len;  // expanding from row 0 when unset
  std::size_t min_train_samples = 1;
};

// Consecutive test windows of the scheme's length starting at `anchor`; each
// window's validation block immediately precedes its test block and its
// training range precedes the validation block.
std::vector<WindowSplit> rolling_windows(std::size_t total_days, Scheme scheme, std::size_t anchor,
                                         const WindowOptions& options = {});

}  // namespace estgcn
