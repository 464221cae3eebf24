#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "estgcn/geo_graph.hpp"
#include "estgcn/panel.hpp"

namespace estgcn {

struct SyntheticConfig {
  std::size_t n_stations = 10;
  std::size_t days = 800;
  std::string start_date = "2020-01-01";
  double center_lat = 28.61;
  double center_lon = 77.21;
  double spread_deg = 0.15;  // stations uniform in center +/- spread

  double base_mean = 40.0;
  double seasonal_amp = 12.0;  // annual cosine, peak in mid January
  double ar_phi = 0.7;
  double noise_sd = 8.0;          // stationary sd of the AR(1) part
  double corr_length_km = 10.0;   // spatial correlation exp(-d / length)

  double threshold = 60.0;
  // Regional pollution episodes: a two-state Markov regime shared by all
  // stations. On episode days every station exceeds the threshold by a GP draw.
  double shock_rate = 0.3;         // long-run share of episode days
  double shock_persistence = 0.7;  // P(episode tomorrow | episode today)
  double gp_scale = 20.0;
  double gp_shape = 0.1;

  void validate() const;
};

struct SyntheticPanel {
  SeriesPanel panel;
  std::vector<StationMeta> roster;
  std::vector<bool> episode;  // per day
  std::uint64_t seed = 0;
  double exceedance_rate = 0.0;  // realised share of values above the threshold
};

SyntheticPanel generate_synthetic_panel(const SyntheticConfig& config, std::uint64_t seed);

// JSON text describing the generator settings and realised statistics.
std::string synthetic_metadata_json(const SyntheticConfig& config, const SyntheticPanel& result);

}  // namespace estgcn
