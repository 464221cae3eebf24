#include "estgcn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "estgcn/config.hpp"
#include "estgcn/errors.hpp"
#include "estgcn/evt.hpp"
#include "json.hpp"

namespace estgcn {

void SyntheticConfig::validate() const {
  if (n_stations < 2) throw ConfigError("synthetic panel needs at least 2 stations");
  if (days < 2) throw ConfigError("synthetic panel needs at least 2 days");
  if (!(spread_deg >= 0.0)) throw ConfigError("spread_deg must be >= 0");
  if (!(ar_phi > -1.0 && ar_phi < 1.0)) throw ConfigError("ar_phi must lie in (-1, 1)");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
  if (!(corr_length_km > 0.0)) throw ConfigError("corr_length_km must be > 0");
  if (!(shock_rate >= 0.0 && shock_rate < 1.0)) throw ConfigError("shock_rate must lie in [0, 1)");
  if (!(shock_persistence >= 0.0 && shock_persistence < 1.0)) {
    throw ConfigError("shock_persistence must lie in [0, 1)");
  }
  if (shock_rate > 0.0 && (1.0 - shock_persistence) * shock_rate / (1.0 - shock_rate) > 1.0) {
    throw ConfigError("shock_rate is unreachable with this persistence");
  }
  if (!(gp_scale > 0.0)) throw ConfigError("gp_scale must be > 0");
  if (!(gp_shape > -1.0)) throw ConfigError("gp_shape must be > -1");
  parse_iso_date(start_date);
}

SyntheticPanel generate_synthetic_panel(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = cfg.n_stations;

  SyntheticPanel out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "S%02zu", i + 1);
    out.roster.push_back({id, cfg.center_lat + cfg.spread_deg * (2.0 * unit(rng) - 1.0),
                          cfg.center_lon + cfg.spread_deg * (2.0 * unit(rng) - 1.0)});
  }

  Eigen::MatrixXd corr(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = haversine_distance(out.roster[i], out.roster[j], 6371.0);
      corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-d / cfg.corr_length_km);
    }
  corr.diagonal().array() += 1e-9;
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) throw NumericError("spatial correlation matrix is not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();

  const double innov_sd = cfg.noise_sd * std::sqrt(1.0 - cfg.ar_phi * cfg.ar_phi);
  const double enter = cfg.shock_rate > 0.0 ? (1.0 - cfg.shock_persistence) * cfg.shock_rate / (1.0 - cfg.shock_rate)
                                            : 0.0;
  const long day0 = parse_iso_date(cfg.start_date);

  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::VectorXd w(nn);
  for (Eigen::Index i = 0; i < nn; ++i) w(i) = normal(rng);
  Eigen::VectorXd ar = cfg.noise_sd * (chol * w);
  bool episode = cfg.shock_rate > 0.0 && unit(rng) < cfg.shock_rate;
  std::size_t above = 0;
  out.panel.station_ids.reserve(n);
  for (const auto& s : out.roster) out.panel.station_ids.push_back(s.id);
  for (std::size_t t = 0; t < cfg.days; ++t) {
    if (t > 0) {
      for (Eigen::Index i = 0; i < nn; ++i) w(i) = normal(rng);
      ar = cfg.ar_phi * ar + innov_sd * (chol * w);
      const double u = unit(rng);
      episode = cfg.shock_rate > 0.0 && (episode ? u < cfg.shock_persistence : u < enter);
    }
    const long day = day0 + static_cast<long>(t);
    const double season =
        cfg.seasonal_amp * std::cos(2.0 * std::numbers::pi * static_cast<double>(day - days_from_civil(1970, 1, 15)) / 365.25);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (episode) {
        row[i] = cfg.threshold + gpd_quantile(unit(rng), cfg.gp_scale, cfg.gp_shape);
        if (row[i] > cfg.threshold) ++above;
      } else {
        row[i] = std::clamp(cfg.base_mean + season + ar(static_cast<Eigen::Index>(i)), 0.0, cfg.threshold);
      }
    }
    out.panel.dates.push_back(format_iso_date(day));
    out.panel.values.push_back(std::move(row));
    out.episode.push_back(episode);
  }
  out.exceedance_rate = static_cast<double>(above) / static_cast<double>(n * cfg.days);
  return out;
}

std::string synthetic_metadata_json(const SyntheticConfig& cfg, const SyntheticPanel& result) {
  nlohmann::json j;
  j["seed"] = result.seed;
  j["generator"] = synthetic_config_to_json(cfg);
  j["true_gp"] = {{"threshold", cfg.threshold}, {"scale", cfg.gp_scale}, {"shape", cfg.gp_shape}};
  j["realised_exceedance_rate"] = result.exceedance_rate;
  j["episode_days"] = std::count(result.episode.begin(), result.episode.end(), true);
  nlohmann::json stations = nlohmann::json::array();
  for (const auto& s : result.roster) stations.push_back({{"station_id", s.id}, {"lat", s.lat}, {"lon", s.lon}});
  j["stations"] = stations;
  return j.dump(2);
}

}  // namespace estgcn
