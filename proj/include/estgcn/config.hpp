#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "estgcn/conformal.hpp"
#include "estgcn/evt.hpp"
#include "estgcn/geo_graph.hpp"
#include "estgcn/model.hpp"
#include "estgcn/panel.hpp"
#include "estgcn/synthetic.hpp"
#include "estgcn/training.hpp"
#include "json.hpp"

namespace estgcn {

// Regulatory daily thresholds: PM2.5 60, PM10 100, NO2 80 (ug/m3).
double naaqs_threshold(const std::string& pollutant);

struct ExperimentConfig {
  std::string pollutant = "PM2.5";
  std::optional<double> threshold;  // overrides the regulatory value
  std::string scheme = "short";
  std::uint64_t seed = 42;

  // Data source: both paths set, or neither for a synthetic panel.
  std::string panel_path;
  std::string roster_path;
  SyntheticConfig synthetic;
  CleaningOptions cleaning;

  AdjacencyConfig adjacency;
  LaplacianOptions laplacian;
  ModelConfig model;  // horizon is overwritten by the scheme's window length
  TrainConfig train;
  std::vector<BetaCandidate> beta_grid = default_beta_grid();
  bool potl_raw_argument = false;
  GpdFitOptions gpd;
  ConformalConfig conformal;
  double pinball_rho = 0.8;
  std::size_t crps_samples = 200;
  double mcb_theta = 0.05;

  std::size_t test_days = 365;  // test period at the end of the panel
  std::optional<std::size_t> val_len;
  std::optional<std::size_t> train_len;
  bool warm_start = false;
  std::size_t workers = 1;

  double resolved_threshold() const;
  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json synthetic_config_to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ExperimentConfig& c);
// Unknown keys are rejected so typos do not silently fall back to defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

}  // namespace estgcn
