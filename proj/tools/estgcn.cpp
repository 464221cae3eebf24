// Command-line front end. Every subcommand reads an optional JSON config
// (--config) and applies --seed/--pollutant/--scheme overrides on top.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "estgcn/config.hpp"
#include "estgcn/conformal.hpp"
#include "estgcn/csv.hpp"
#include "estgcn/errors.hpp"
#include "estgcn/evt.hpp"
#include "estgcn/experiment.hpp"
#include "estgcn/geo_graph.hpp"
#include "estgcn/metrics.hpp"
#include "estgcn/model.hpp"
#include "estgcn/panel.hpp"
#include "estgcn/synthetic.hpp"
#include "estgcn/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace estgcn;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> pollutant;
  std::optional<std::string> scheme;
  std::string out = "out";
  // data inputs shared by several subcommands
  std::string panel;
  std::string roster;
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.pollutant) cfg.pollutant = *c.pollutant;
  if (c.scheme) cfg.scheme = *c.scheme;
  if (!c.panel.empty()) cfg.panel_path = c.panel;
  if (!c.roster.empty()) cfg.roster_path = c.roster;
  cfg.validate();
  return cfg;
}

// Panel and roster from files, or the synthetic generator when none given.
struct Data {
  SeriesPanel panel;
  std::vector<StationMeta> roster;
  CleaningReport cleaning;
};

Data load_data(const ExperimentConfig& cfg) {
  Data d;
  if (cfg.panel_path.empty()) {
    auto s = generate_synthetic_panel(cfg.synthetic, cfg.seed);
    d.panel = std::move(s.panel);
    d.roster = std::move(s.roster);
    return d;
  }
  auto roster = load_roster_csv(cfg.roster_path);
  std::vector<std::string> ids;
  for (const auto& s : roster) ids.push_back(s.id);
  d.panel = load_panel_csv(cfg.panel_path, ids, cfg.cleaning, &d.cleaning);
  for (const auto& s : roster) {
    if (std::find(d.panel.station_ids.begin(), d.panel.station_ids.end(), s.id) != d.panel.station_ids.end())
      d.roster.push_back(s);
  }
  return d;
}

json cleaning_json(const CleaningReport& r) {
  return {{"dropped", r.dropped},
          {"dropped_missing_frac", r.dropped_missing_frac},
          {"forward_filled", r.forward_filled},
          {"interpolated", r.interpolated}};
}

void write_json(const fs::path& p, const json& j) {
  auto f = csv::open_for_write(p);
  f << j.dump(2) << '\n';
}

// The split of one rolling window, 1-based.
WindowSplit window_split(const ExperimentConfig& cfg, const SeriesPanel& panel, std::size_t window_id,
                         ModelConfig& mc) {
  const Scheme scheme = parse_scheme(cfg.scheme);
  mc = cfg.model;
  mc.horizon = scheme_window_len(scheme);
  if (cfg.test_days > panel.t()) throw InputError("test_days exceeds the panel length");
  WindowOptions wo;
  wo.history_len = mc.history_len();
  wo.val_len = cfg.val_len;
  wo.train_len = cfg.train_len;
  const auto splits = rolling_windows(panel.t(), scheme, panel.t() - cfg.test_days, wo);
  if (window_id < 1 || window_id > splits.size()) {
    throw InputError("window " + std::to_string(window_id) + " out of range 1.." + std::to_string(splits.size()));
  }
  return splits[window_id - 1];
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

Table read_table(const fs::path& p) {
  const auto lines = csv::read_lines(p);
  if (lines.empty()) throw InputError(p.string() + ": empty file");
  Table t;
  t.header = csv::split(lines[0]);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    auto r = csv::split(lines[k]);
    if (r.size() != t.header.size()) throw InputError(p.string() + ":" + std::to_string(k + 1) + ": wrong field count");
    t.rows.push_back(std::move(r));
  }
  return t;
}

// Forecast rows grouped per series key (window_id/station_id), in file order.
struct Series {
  std::vector<double> actual, forecast, other;
};

std::map<std::string, Series> group_forecasts(const Table& t, const std::string& fc_col, const std::string& other_col) {
  std::map<std::string, Series> out;
  const bool has_window = std::find(t.header.begin(), t.header.end(), "window_id") != t.header.end();
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    const std::string ctx = "row " + std::to_string(k + 2);
    std::string key = r[t.col("station_id")];
    if (has_window) key = r[t.col("window_id")] + "/" + key;
    auto& s = out[key];
    s.actual.push_back(csv::parse_double(r[t.col("actual")], ctx));
    s.forecast.push_back(csv::parse_double(r[t.col(fc_col)], ctx));
    if (!other_col.empty()) s.other.push_back(csv::parse_double(r[t.col(other_col)], ctx));
  }
  return out;
}

int cmd_ingest(const Common& c) {
  if (c.panel.empty() || c.roster.empty()) throw InputError("ingest needs --panel and --roster");
  const auto cfg = resolve_config(c);
  const Data d = load_data(cfg);
  write_panel_csv(fs::path(c.out) / "panel.csv", d.panel);
  write_roster_csv(fs::path(c.out) / "roster.csv", d.roster);
  write_json(fs::path(c.out) / "cleaning_report.json", cleaning_json(d.cleaning));
  for (const auto& id : d.cleaning.dropped) std::cerr << "warning: dropped station " << id << " (missing data)\n";
  std::cout << d.panel.t() << " days x " << d.panel.n() << " stations\n";
  return 0;
}

int cmd_synth(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto s = generate_synthetic_panel(cfg.synthetic, cfg.seed);
  write_panel_csv(fs::path(c.out) / "panel.csv", s.panel);
  write_roster_csv(fs::path(c.out) / "roster.csv", s.roster);
  auto f = csv::open_for_write(fs::path(c.out) / "metadata.json");
  f << synthetic_metadata_json(cfg.synthetic, s) << '\n';
  std::cout << "exceedance rate " << csv::format_double(s.exceedance_rate) << '\n';
  return 0;
}

int cmd_fit_gpd(const Common& c, std::optional<double> threshold) {
  auto cfg = resolve_config(c);
  if (threshold) cfg.threshold = threshold;
  const Data d = load_data(cfg);
  const double tau = cfg.resolved_threshold();
  const auto fits = fit_station_gpds(d.panel, {0, d.panel.t()}, tau, cfg.gpd);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    rows.push_back({d.panel.station_ids[i], csv::format_double(tau), std::to_string(f.n_exceed),
                    f.fit ? csv::format_double(f.fit->scale) : "NA", f.fit ? csv::format_double(f.fit->shape) : "NA",
                    f.fit ? csv::format_double(f.fit->loglik) : "NA", csv::format_optional(f.dw_statistic), f.status});
  }
  csv::write_table(fs::path(c.out) / "gpd_fits.csv", "station_id,threshold,n_exceed,scale,shape,loglik,dw,status",
                   rows);
  return 0;
}

int cmd_graph(const Common& c) {
  const auto cfg = resolve_config(c);
  std::vector<StationMeta> roster;
  if (!c.roster.empty()) {
    roster = load_roster_csv(c.roster);
  } else {
    roster = generate_synthetic_panel(cfg.synthetic, cfg.seed).roster;
  }
  const auto graph = build_adjacency(roster, cfg.adjacency);
  const auto bundle = laplacian_bundle(graph, cfg.laplacian);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < roster.size(); ++i)
    for (std::size_t j = 0; j < roster.size(); ++j) {
      if (i == j || graph.adjacency(i, j) == 0.0) continue;
      rows.push_back({roster[i].id, roster[j].id, csv::format_double(haversine_distance(roster[i], roster[j], cfg.adjacency.earth_radius)),
                      csv::format_double(graph.adjacency(i, j))});
    }
  csv::write_table(fs::path(c.out) / "edges.csv", "from,to,distance_km,weight", rows);
  write_json(fs::path(c.out) / "graph.json", {{"stations", roster.size()},
                                             {"edges", rows.size() / 2},
                                             {"edge_radius_km", edge_radius(cfg.adjacency)},
                                             {"zeta_max", bundle.zeta_max},
                                             {"power_iterations", bundle.power_iterations},
                                             {"isolated_warning", graph.isolated_warning}});
  if (graph.isolated_warning) std::cerr << "warning: graph has isolated stations\n";
  return 0;
}

int cmd_train(const Common& c, std::size_t window_id) {
  const auto cfg = resolve_config(c);
  const Data d = load_data(cfg);
  ModelConfig mc;
  const WindowSplit split = window_split(cfg, d.panel, window_id, mc);
  const auto graph = build_adjacency(d.roster, cfg.adjacency);
  const auto bundle = laplacian_bundle(graph, cfg.laplacian);
  const double tau = cfg.resolved_threshold();
  const auto fits = fit_station_gpds(d.panel, split.train, tau, cfg.gpd);
  const auto loss = make_loss_config(fits, tau, d.panel.n(), cfg.potl_raw_argument);
  auto factory = [&]() { return make_model(mc, graph, bundle, cfg.seed); };
  const auto sel = select_betas(cfg.beta_grid, factory, d.panel, split, loss, cfg.train);

  const fs::path out(c.out);
  save_checkpoint(out / "checkpoint.json", sel.model);
  std::vector<std::vector<std::string>> rows;
  for (const auto& b : sel.table)
    rows.push_back({csv::format_double(b.beta1), csv::format_double(b.beta2), csv::format_optional(b.val_rmse), b.status});
  csv::write_table(out / "beta_selection.csv", "beta1,beta2,val_rmse,status", rows);
  rows.clear();
  for (std::size_t e = 0; e < sel.history.train_loss.size(); ++e) {
    rows.push_back({std::to_string(e + 1), csv::format_double(sel.history.train_loss[e]),
                    csv::format_double(sel.history.val_loss[e]), csv::format_double(sel.history.wall_ms[e])});
  }
  csv::write_table(out / "training_log.csv", "epoch,train_loss,val_loss,wall_ms", rows);
  std::cout << "selected beta1=" << sel.beta1 << " beta2=" << sel.beta2 << '\n';
  return 0;
}

int cmd_forecast(const Common& c, const std::string& checkpoint, const std::string& origin_date) {
  if (checkpoint.empty()) throw InputError("forecast needs --checkpoint");
  const auto cfg = resolve_config(c);
  const Data d = load_data(cfg);
  const EstgcnModel model = load_checkpoint(checkpoint);
  std::size_t origin = d.panel.t();
  if (!origin_date.empty()) {
    auto it = std::find(d.panel.dates.begin(), d.panel.dates.end(), origin_date);
    if (it == d.panel.dates.end()) throw InputError("origin date " + origin_date + " not in panel");
    origin = static_cast<std::size_t>(it - d.panel.dates.begin());
  }
  if (model.station_ids != d.panel.station_ids) throw InputError("checkpoint stations do not match the panel");
  if (origin < model.config.history_len()) throw InputError("not enough history before the origin");
  std::vector<std::vector<double>> history(d.panel.values.begin() + static_cast<std::ptrdiff_t>(origin - model.config.history_len()),
                                           d.panel.values.begin() + static_cast<std::ptrdiff_t>(origin));
  const auto fc = forecast(model, history);
  const long base = parse_iso_date(d.panel.dates[origin - 1]);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < d.panel.n(); ++i)
    for (std::size_t s = 0; s < fc.size(); ++s) {
      const std::size_t row = origin + s;
      rows.push_back({d.panel.station_ids[i], std::to_string(s + 1), format_iso_date(base + static_cast<long>(s) + 1),
                      row < d.panel.t() ? csv::format_double(d.panel.values[row][i]) : "NA",
                      csv::format_double(fc[s][i])});
    }
  csv::write_table(fs::path(c.out) / "forecast.csv", "station_id,step,date,actual,forecast", rows);
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& forecasts, double rho) {
  if (forecasts.empty()) throw InputError("evaluate needs --forecasts");
  const auto groups = group_forecasts(read_table(forecasts), "forecast", "");
  std::optional<SeriesPanel> panel;
  if (!c.panel.empty()) panel = read_panel_csv(c.panel);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, s] : groups) {
    std::vector<double> train;
    if (panel) {
      // in-sample series: the panel column of this station
      const std::string station = key.substr(key.find('/') == std::string::npos ? 0 : key.find('/') + 1);
      train = panel->column(panel->station_index(station));
    }
    const auto m = evaluate_forecast(s.actual, s.forecast, train, nullptr, rho);
    rows.push_back({key, csv::format_double(m.mae), csv::format_optional(m.mase), csv::format_double(m.rmse),
                    csv::format_double(m.smape), csv::format_double(m.pinball)});
  }
  csv::write_table(fs::path(c.out) / "metrics.csv", "series,mae,mase,rmse,smape,pinball", rows);
  return 0;
}

int cmd_conformal(const Common& c, const std::string& forecasts, double rho, std::size_t window,
                  const std::string& mode) {
  if (forecasts.empty()) throw InputError("conformal needs --forecasts");
  ConformalConfig cc;
  cc.rho = rho;
  cc.window = window;
  cc.mode = parse_uncertainty_mode(mode);
  const auto groups = group_forecasts(read_table(forecasts), "forecast", "");
  std::vector<std::vector<std::string>> rows;
  std::size_t covered = 0, total = 0;
  for (const auto& [key, s] : groups) {
    ConformalStream stream(cc);
    for (std::size_t k = 0; k < s.actual.size(); ++k) {
      const auto iv = stream.interval(s.forecast[k]);
      stream.observe(s.actual[k], s.forecast[k]);
      if (k == 0) continue;  // no calibration yet
      ++total;
      if (s.actual[k] >= iv.lower && s.actual[k] <= iv.upper) ++covered;
      rows.push_back({key, std::to_string(k + 1), csv::format_double(iv.point), csv::format_double(iv.lower),
                      csv::format_double(iv.upper), csv::format_double(iv.kappa)});
    }
  }
  csv::write_table(fs::path(c.out) / "intervals.csv", "series,index,point,lower,upper,kappa", rows);
  if (total) std::cout << "coverage " << csv::format_double(static_cast<double>(covered) / total) << '\n';
  return 0;
}

int cmd_compare_dm(const Common& c, const std::string& forecasts, const std::string& col_a, const std::string& col_b) {
  if (forecasts.empty()) throw InputError("compare-dm needs --forecasts");
  const Table t = read_table(forecasts);
  // Pool windows per station.
  std::map<std::string, Series> per_station;
  for (const auto& [key, s] : group_forecasts(t, col_b, col_a)) {
    const std::string station = key.substr(key.find('/') == std::string::npos ? 0 : key.find('/') + 1);
    auto& dst = per_station[station];
    dst.actual.insert(dst.actual.end(), s.actual.begin(), s.actual.end());
    dst.forecast.insert(dst.forecast.end(), s.forecast.begin(), s.forecast.end());
    dst.other.insert(dst.other.end(), s.other.begin(), s.other.end());
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& [station, s] : per_station) {
    const auto r = dm_test(s.actual, s.other, s.forecast);
    rows.push_back({station, csv::format_optional(r.statistic), csv::format_optional(r.p_value),
                    r.defined() ? "true" : "false"});
  }
  csv::write_table(fs::path(c.out) / "dm.csv", "station_id,statistic,p_value,defined", rows);
  return 0;
}

int cmd_compare_mcb(const Common& c, const std::string& losses_path, double theta) {
  if (losses_path.empty()) throw InputError("compare-mcb needs --losses");
  const Table t = read_table(losses_path);
  // First column labels the dataset; the rest are models.
  if (t.header.size() < 3) throw InputError("compare-mcb needs a label column and at least two model columns");
  std::vector<std::vector<double>> losses;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    std::vector<double> row;
    for (std::size_t j = 1; j < t.header.size(); ++j) row.push_back(csv::parse_double(t.rows[k][j], "row " + std::to_string(k + 2)));
    losses.push_back(std::move(row));
  }
  const auto r = mcb_test(losses, theta);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t m = 0; m + 1 < t.header.size(); ++m) {
    rows.push_back({t.header[m + 1], csv::format_double(r.mean_ranks[m]), csv::format_double(r.critical_distance),
                    r.in_reference[m] ? "true" : "false"});
  }
  csv::write_table(fs::path(c.out) / "mcb.csv", "model,mean_rank,cd,in_reference", rows);
  return 0;
}

int cmd_run(const Common& c) {
  const auto cfg = resolve_config(c);
  const RunResult r = run_experiment(cfg);
  write_bundle(r, c.out);
  for (const auto& w : r.windows) {
    if (!w.ok) std::cerr << "window " << w.window_id << " failed: " << w.error << '\n';
  }
  std::cout << r.windows.size() - r.failed_windows() << " of " << r.windows.size() << " windows completed\n";
  return r.failed_windows() ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  retain_heap_memory();
  CLI::App app{"Extreme-value-aware spatiotemporal forecasting"};
  app.require_subcommand(1);
  Common c;
  std::uint64_t seed = 0;
  std::string pollutant, scheme;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "JSON config or run manifest");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--pollutant", pollutant, "PM2.5, PM10 or NO2");
    sub->add_option("--scheme", scheme, "short, medium or long")->check(CLI::IsMember({"short", "medium", "long"}));
    sub->add_option("--out", c.out, "output directory");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--panel", c.panel, "long-format panel CSV (date,station_id,value)");
    sub->add_option("--roster", c.roster, "station roster CSV (station_id,lat,lon)");
  };

  auto* ingest = app.add_subcommand("ingest", "load and clean a panel");
  auto* synth = app.add_subcommand("synth", "generate a synthetic panel");
  auto* fitgpd = app.add_subcommand("fit-gpd", "fit a GP tail per station");
  auto* graph = app.add_subcommand("graph", "build the station graph");
  auto* trainc = app.add_subcommand("train", "select betas and train for one window");
  auto* fcst = app.add_subcommand("forecast", "forecast from a checkpoint");
  auto* eval = app.add_subcommand("evaluate", "point metrics from a forecast CSV");
  auto* conf = app.add_subcommand("conformal", "online conformal intervals from a forecast CSV");
  auto* dm = app.add_subcommand("compare-dm", "Diebold-Mariano test between two forecast columns");
  auto* mcb = app.add_subcommand("compare-mcb", "multiple comparison with the best from a loss table");
  auto* run = app.add_subcommand("run", "full rolling-window pipeline");
  auto* plots = app.add_subcommand("emit-plots", "plot-ready CSVs from a result bundle");
  for (auto* sub : {ingest, synth, fitgpd, graph, trainc, fcst, eval, conf, dm, mcb, run, plots}) add_common(sub);
  for (auto* sub : {ingest, fitgpd, graph, trainc, fcst, eval, run}) add_data(sub);

  std::optional<double> threshold;
  fitgpd->add_option("--threshold", threshold, "override the pollutant threshold");
  std::size_t window_id = 1;
  trainc->add_option("--window", window_id, "1-based rolling window");
  std::string checkpoint, origin;
  fcst->add_option("--checkpoint", checkpoint, "checkpoint JSON from train");
  fcst->add_option("--origin", origin, "first forecast date (default: day after the panel)");
  std::string forecasts;
  double rho = 0.8;
  for (auto* sub : {eval, conf, dm}) sub->add_option("--forecasts", forecasts, "CSV with actual and forecast columns");
  eval->add_option("--rho", rho, "pinball quantile level");
  double conf_rho = 0.2;
  std::size_t conf_window = 100;
  std::string conf_mode = "residual_scale";
  conf->add_option("--rho", conf_rho, "miscoverage level");
  conf->add_option("--window", conf_window, "calibration window");
  conf->add_option("--mode", conf_mode, "constant or residual_scale");
  std::string col_a = "ablation", col_b = "forecast";
  dm->add_option("--a", col_a, "column of forecaster A");
  dm->add_option("--b", col_b, "column of forecaster B");
  std::string losses;
  double theta = 0.05;
  mcb->add_option("--losses", losses, "CSV: dataset label then one loss column per model");
  mcb->add_option("--theta", theta, "significance level");
  std::string bundle;
  plots->add_option("--bundle", bundle, "result bundle directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) c.seed = seed;
    if (sub->count("--pollutant")) c.pollutant = pollutant;
    if (sub->count("--scheme")) c.scheme = scheme;
  }

  try {
    if (*ingest) return cmd_ingest(c);
    if (*synth) return cmd_synth(c);
    if (*fitgpd) return cmd_fit_gpd(c, threshold);
    if (*graph) return cmd_graph(c);
    if (*trainc) return cmd_train(c, window_id);
    if (*fcst) return cmd_forecast(c, checkpoint, origin);
    if (*eval) return cmd_evaluate(c, forecasts, rho);
    if (*conf) return cmd_conformal(c, forecasts, conf_rho, conf_window, conf_mode);
    if (*dm) return cmd_compare_dm(c, forecasts, col_a, col_b);
    if (*mcb) return cmd_compare_mcb(c, losses, theta);
    if (*run) return cmd_run(c);
    if (*plots) {
      emit_plot_data(bundle, c.out);
      return 0;
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
