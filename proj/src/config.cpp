#include "estgcn/config.hpp"

#include <fstream>
#include <set>

#include "estgcn/csv.hpp"
#include "estgcn/errors.hpp"

namespace estgcn {

using json = nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any it did not consume.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key " + name_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  const json* sub(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError("unknown config key " + name_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

double naaqs_threshold(const std::string& pollutant) {
  if (pollutant == "PM2.5" || pollutant == "pm2.5" || pollutant == "PM25") return 60.0;
  if (pollutant == "PM10" || pollutant == "pm10") return 100.0;
  if (pollutant == "NO2" || pollutant == "no2") return 80.0;
  throw ConfigError("no regulatory threshold known for pollutant '" + pollutant +
                    "'; set 'threshold' explicitly");
}

double ExperimentConfig::resolved_threshold() const {
  return threshold ? *threshold : naaqs_threshold(pollutant);
}

void ExperimentConfig::validate() const {
  parse_scheme(scheme);
  if (panel_path.empty() != roster_path.empty()) {
    throw ConfigError("panel_path and roster_path must be given together");
  }
  if (panel_path.empty()) synthetic.validate();
  adjacency.validate();
  model.validate();
  train.validate();
  conformal.validate();
  if (beta_grid.empty()) throw ConfigError("beta grid is empty");
  for (const auto& b : beta_grid) {
    if (!(b.beta1 >= 0.0 && b.beta2 >= 0.0 && b.beta1 + b.beta2 > 0.0)) {
      throw ConfigError("beta grid entries need beta1, beta2 >= 0 with a positive sum");
    }
  }
  if (!(pinball_rho > 0.0 && pinball_rho < 1.0)) throw ConfigError("pinball_rho must lie in (0, 1)");
  if (crps_samples < 2) throw ConfigError("crps_samples must be >= 2");
  if (!(mcb_theta > 0.0 && mcb_theta < 1.0)) throw ConfigError("mcb_theta must lie in (0, 1)");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (gpd.min_exceedances < 1) throw ConfigError("min_exceedances must be >= 1");
  resolved_threshold();
}

json model_config_to_json(const ModelConfig& c) {
  return json{{"k_layers", c.k_layers},
              {"spatial_hidden", c.spatial_hidden},
              {"activation", to_string(c.activation)},
              {"chebyshev_prefilter", c.chebyshev_prefilter},
              {"lag", c.lag},
              {"hidden", c.hidden},
              {"horizon", c.horizon},
              {"unroll_steps", c.unroll_steps},
              {"zero_init", c.zero_init}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  Section s(j, "model");
  s.get("k_layers", c.k_layers);
  s.get("spatial_hidden", c.spatial_hidden);
  std::string act = to_string(c.activation);
  s.get("activation", act);
  c.activation = parse_activation(act);
  s.get("chebyshev_prefilter", c.chebyshev_prefilter);
  s.get("lag", c.lag);
  s.get("hidden", c.hidden);
  s.get("horizon", c.horizon);
  s.get("unroll_steps", c.unroll_steps);
  s.get("zero_init", c.zero_init);
  s.finish();
  return c;
}

json synthetic_config_to_json(const SyntheticConfig& c) {
  return json{{"n_stations", c.n_stations},
              {"days", c.days},
              {"start_date", c.start_date},
              {"center_lat", c.center_lat},
              {"center_lon", c.center_lon},
              {"spread_deg", c.spread_deg},
              {"base_mean", c.base_mean},
              {"seasonal_amp", c.seasonal_amp},
              {"ar_phi", c.ar_phi},
              {"noise_sd", c.noise_sd},
              {"corr_length_km", c.corr_length_km},
              {"threshold", c.threshold},
              {"shock_rate", c.shock_rate},
              {"shock_persistence", c.shock_persistence},
              {"gp_scale", c.gp_scale},
              {"gp_shape", c.gp_shape}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
  SyntheticConfig c;
  Section s(j, "synthetic");
  s.get("n_stations", c.n_stations);
  s.get("days", c.days);
  s.get("start_date", c.start_date);
  s.get("center_lat", c.center_lat);
  s.get("center_lon", c.center_lon);
  s.get("spread_deg", c.spread_deg);
  s.get("base_mean", c.base_mean);
  s.get("seasonal_amp", c.seasonal_amp);
  s.get("ar_phi", c.ar_phi);
  s.get("noise_sd", c.noise_sd);
  s.get("corr_length_km", c.corr_length_km);
  s.get("threshold", c.threshold);
  s.get("shock_rate", c.shock_rate);
  s.get("shock_persistence", c.shock_persistence);
  s.get("gp_scale", c.gp_scale);
  s.get("gp_shape", c.gp_shape);
  s.finish();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json grid = json::array();
  for (const auto& b : c.beta_grid) grid.push_back({b.beta1, b.beta2});
  return json{
      {"pollutant", c.pollutant},
      {"threshold", optional_json(c.threshold)},
      {"scheme", c.scheme},
      {"seed", c.seed},
      {"workers", c.workers},
      {"data",
       {{"panel_path", c.panel_path},
        {"roster_path", c.roster_path},
        {"max_gap", c.cleaning.max_gap},
        {"missing_frac", c.cleaning.missing_frac}}},
      {"synthetic", synthetic_config_to_json(c.synthetic)},
      {"graph",
       {{"sigma_sq", c.adjacency.sigma_sq},
        {"epsilon", c.adjacency.epsilon},
        {"earth_radius", c.adjacency.earth_radius},
        {"power_tol", c.laplacian.tol},
        {"power_max_iterations", c.laplacian.max_iterations},
        {"fix_zeta_two", c.laplacian.fix_zeta_two}}},
      {"model", model_config_to_json(c.model)},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"epochs", c.train.epochs},
        {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2},
        {"adam_epsilon", c.train.adam_epsilon},
        {"clip_norm", c.train.clip_norm},
        {"batch", c.train.batch}}},
      {"loss", {{"beta_grid", grid}, {"potl_raw_argument", c.potl_raw_argument}}},
      {"evt",
       {{"min_exceedances", c.gpd.min_exceedances},
        {"gradient_tol", c.gpd.gradient_tol},
        {"max_iterations", c.gpd.max_iterations}}},
      {"conformal",
       {{"rho", c.conformal.rho},
        {"window", c.conformal.window},
        {"uncertainty_mode", to_string(c.conformal.mode)}}},
      {"evaluation",
       {{"pinball_rho", c.pinball_rho},
        {"crps_samples", c.crps_samples},
        {"mcb_theta", c.mcb_theta},
        {"test_days", c.test_days},
        {"val_len", optional_json(c.val_len)},
        {"train_len", optional_json(c.train_len)},
        {"warm_start", c.warm_start}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section top(j, "config");
  top.get("pollutant", c.pollutant);
  top.get_optional("threshold", c.threshold);
  top.get("scheme", c.scheme);
  top.get("seed", c.seed);
  top.get("workers", c.workers);
  if (const json* d = top.sub("data")) {
    Section s(*d, "data");
    s.get("panel_path", c.panel_path);
    s.get("roster_path", c.roster_path);
    s.get("max_gap", c.cleaning.max_gap);
    s.get("missing_frac", c.cleaning.missing_frac);
    s.finish();
  }
  if (const json* d = top.sub("synthetic")) c.synthetic = synthetic_config_from_json(*d);
  if (const json* d = top.sub("graph")) {
    Section s(*d, "graph");
    s.get("sigma_sq", c.adjacency.sigma_sq);
    s.get("epsilon", c.adjacency.epsilon);
    s.get("earth_radius", c.adjacency.earth_radius);
    s.get("power_tol", c.laplacian.tol);
    s.get("power_max_iterations", c.laplacian.max_iterations);
    s.get("fix_zeta_two", c.laplacian.fix_zeta_two);
    s.finish();
  }
  if (const json* d = top.sub("model")) c.model = model_config_from_json(*d);
  if (const json* d = top.sub("train")) {
    Section s(*d, "train");
    s.get("learning_rate", c.train.learning_rate);
    s.get("epochs", c.train.epochs);
    s.get("adam_beta1", c.train.adam_beta1);
    s.get("adam_beta2", c.train.adam_beta2);
    s.get("adam_epsilon", c.train.adam_epsilon);
    s.get("clip_norm", c.train.clip_norm);
    s.get("batch", c.train.batch);
    s.finish();
  }
  if (const json* d = top.sub("loss")) {
    Section s(*d, "loss");
    std::vector<std::vector<double>> grid;
    s.get("beta_grid", grid);
    if (d->contains("beta_grid")) {
      c.beta_grid.clear();
      for (const auto& pair : grid) {
        if (pair.size() != 2) throw ConfigError("beta_grid entries must be [beta1, beta2] pairs");
        c.beta_grid.push_back({pair[0], pair[1]});
      }
    }
    s.get("potl_raw_argument", c.potl_raw_argument);
    s.finish();
  }
  if (const json* d = top.sub("evt")) {
    Section s(*d, "evt");
    s.get("min_exceedances", c.gpd.min_exceedances);
    s.get("gradient_tol", c.gpd.gradient_tol);
    s.get("max_iterations", c.gpd.max_iterations);
    s.finish();
  }
  if (const json* d = top.sub("conformal")) {
    Section s(*d, "conformal");
    s.get("rho", c.conformal.rho);
    s.get("window", c.conformal.window);
    std::string mode = to_string(c.conformal.mode);
    s.get("uncertainty_mode", mode);
    c.conformal.mode = parse_uncertainty_mode(mode);
    s.finish();
  }
  if (const json* d = top.sub("evaluation")) {
    Section s(*d, "evaluation");
    s.get("pinball_rho", c.pinball_rho);
    s.get("crps_samples", c.crps_samples);
    s.get("mcb_theta", c.mcb_theta);
    s.get("test_days", c.test_days);
    s.get_optional("val_len", c.val_len);
    s.get_optional("train_len", c.train_len);
    s.get("warm_start", c.warm_start);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  // A run manifest embeds its config snapshot under "config".
  if (j.contains("manifest_version") && j.contains("config")) return config_from_json(j.at("config"));
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  auto out = csv::open_for_write(path);
  out << config_to_json(c).dump(2) << '\n';
}

}  // namespace estgcn
