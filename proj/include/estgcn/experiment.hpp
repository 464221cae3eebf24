#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "estgcn/config.hpp"
#include "estgcn/conformal.hpp"
#include "estgcn/evt.hpp"
#include "estgcn/metrics.hpp"
#include "estgcn/panel.hpp"
#include "estgcn/training.hpp"

namespace estgcn {

struct StationFit {
  std::optional<GpdFit> fit;
  std::optional<double> dw_statistic;
  std::size_t n_exceed = 0;
  std::string status;  // ok | too_few_exceedances | fit_failed: ...
};

struct WindowOutcome {
  std::size_t window_id = 0;  // 1-based
  WindowSplit split;
  bool ok = false;
  std::string error;

  double beta1 = 0.0, beta2 = 0.0;
  std::vector<BetaRow> beta_table;
  std::vector<StationFit> fits;
  TrainResult history;

  // [step][station], data units
  std::vector<std::vector<double>> actual, forecast, ablation;
  std::vector<MetricReport> metrics;           // per station, selected model
  std::vector<MetricReport> ablation_metrics;  // per station, beta = (1, 0)
  std::vector<std::vector<IntervalForecast>> intervals;  // [step][station]
  // Per-station RMSE of the naive comparators used in the rank test.
  std::vector<double> persistence_rmse, climatology_rmse;
};

struct DmRow {
  std::string station_id;
  DmResult result;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<StationMeta> roster;
  SeriesPanel panel;
  CleaningReport cleaning;
  bool synthetic = false;
  double threshold = 0.0;
  std::vector<WindowOutcome> windows;
  std::vector<DmRow> dm;  // ablation (A) against the selected model (B), per station
  std::optional<McbResult> mcb;
  std::vector<std::string> mcb_models;

  std::size_t failed_windows() const;
};

RunResult run_experiment(const ExperimentConfig& config);

// Per-window reuse: the stages of one rolling window.
std::vector<StationFit> fit_station_gpds(const SeriesPanel& panel, IndexRange train, double threshold,
                                         const GpdFitOptions& options);
LossConfig make_loss_config(const std::vector<StationFit>& fits, double threshold, std::size_t n, bool raw_argument);

// Writes manifest.json, gpd_fits.json, beta_selection.csv, forecasts.csv,
// metrics.csv, metrics_ablation.csv, intervals.csv, dm.csv, mcb.csv, the
// panel and roster under data/, and per-window training logs under logs/.
// Everything outside logs/ is a deterministic function of the config.
void write_bundle(const RunResult& result, const std::filesystem::path& out_dir);

// Plot-ready CSVs under out_dir/plots from a written bundle: forecast vs
// actual with intervals, mean-excess curves, and MCB ranks. Missing inputs
// give header-only files.
void emit_plot_data(const std::filesystem::path& bundle_dir, const std::filesystem::path& out_dir);

// Tail pinball loss over test points whose actual exceeds the threshold,
// for the selected model and the ablation. Empty when no such points.
struct TailPinball {
  std::optional<double> selected, ablation;
  std::size_t points = 0;
};
TailPinball tail_pinball(const RunResult& result, double rho);

// Training allocates and frees many mid-sized buffers per step. With glibc's
// default thresholds those go back to the kernel on every free, which costs
// more than the arithmetic; this raises the thresholds. No-op elsewhere.
void retain_heap_memory();

}  // namespace estgcn
