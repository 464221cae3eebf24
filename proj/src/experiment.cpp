#include "estgcn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "estgcn/csv.hpp"
#include "estgcn/errors.hpp"
#include "estgcn/geo_graph.hpp"
#include "estgcn/synthetic.hpp"
#include "json.hpp"

namespace estgcn {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string fmt(double v) { return csv::format_double(v); }
std::string fmt(const std::optional<double>& v) { return csv::format_optional(v); }

// Per-station residuals (actual - forecast) over a block, stepping one
// horizon per origin.
std::vector<std::vector<double>> block_residuals(const EstgcnModel& model, const SeriesPanel& panel,
                                                 IndexRange block, std::vector<std::vector<double>>* forecasts) {
  const std::size_t n = panel.n();
  const std::size_t q = model.config.horizon;
  std::vector<std::vector<double>> res(n);
  for (std::size_t o = block.begin; o < block.end; o += q) {
    const auto fc = forecast_at(model, panel, o);
    for (std::size_t s = 0; s < q && o + s < block.end; ++s) {
      for (std::size_t i = 0; i < n; ++i) res[i].push_back(panel.values[o + s][i] - fc[s][i]);
      if (forecasts) forecasts->push_back(fc[s]);
    }
  }
  return res;
}

std::vector<std::vector<double>> bootstrap_ensemble(const std::vector<double>& point, const std::vector<double>& residuals,
                                                    std::size_t samples, std::mt19937_64& rng) {
  std::vector<std::vector<double>> ens(point.size(), std::vector<double>(samples));
  std::uniform_int_distribution<std::size_t> pick(0, residuals.size() - 1);
  for (std::size_t s = 0; s < point.size(); ++s)
    for (std::size_t k = 0; k < samples; ++k) ens[s][k] = point[s] + residuals[pick(rng)];
  return ens;
}

std::vector<double> station_series(const std::vector<std::vector<double>>& rows, std::size_t i) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r[i]);
  return out;
}

struct Shared {
  const ExperimentConfig& cfg;
  const SeriesPanel& panel;
  const StationGraph& graph;
  const LaplacianBundle& bundle;
  double threshold;
  ModelConfig model_cfg;
};

void run_window(const Shared& sh, WindowOutcome& w, const EstgcnModel* warm, std::optional<EstgcnModel>* selected) {
  const auto& cfg = sh.cfg;
  const auto& panel = sh.panel;
  const std::size_t n = panel.n();
  const std::uint64_t seed = mix_seed(cfg.seed, w.window_id);

  w.fits = fit_station_gpds(panel, w.split.train, sh.threshold, cfg.gpd);
  const LossConfig base = make_loss_config(w.fits, sh.threshold, n, cfg.potl_raw_argument);

  auto factory = [&]() {
    EstgcnModel m = make_model(sh.model_cfg, sh.graph, sh.bundle, seed);
    if (warm) {
      auto dst = m.parameters();
      auto src = warm->parameters();
      for (std::size_t k = 0; k < dst.size(); ++k) *dst[k].second = *src[k].second;
    }
    return m;
  };
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(seed, 1);

  BetaSelection sel = select_betas(cfg.beta_grid, factory, panel, w.split, base, tc);
  w.beta1 = sel.beta1;
  w.beta2 = sel.beta2;
  w.beta_table = sel.table;
  w.history = sel.history;

  // Ablation: plain squared error (beta = (1, 0)) under the same seeds.
  std::optional<EstgcnModel> ablation;
  for (std::size_t k = 0; k < cfg.beta_grid.size(); ++k) {
    if (cfg.beta_grid[k].beta1 == 1.0 && cfg.beta_grid[k].beta2 == 0.0 && sel.models[k]) ablation = sel.models[k];
  }
  if (!ablation) {
    LossConfig lc = base;
    lc.beta1 = 1.0;
    lc.beta2 = 0.0;
    EstgcnModel m = factory();
    train(m, panel, w.split, lc, tc);
    ablation = std::move(m);
  }

  const auto& test = w.split.test;
  const std::size_t q = sh.model_cfg.horizon;
  w.forecast = forecast_at(sel.model, panel, test.begin);
  w.ablation = forecast_at(*ablation, panel, test.begin);
  w.actual.assign(panel.values.begin() + static_cast<std::ptrdiff_t>(test.begin),
                  panel.values.begin() + static_cast<std::ptrdiff_t>(test.begin + q));

  std::vector<std::vector<double>> val_fc;
  const auto val_res = block_residuals(sel.model, panel, w.split.val, &val_fc);
  const auto val_res_ab = block_residuals(*ablation, panel, w.split.val, nullptr);

  std::mt19937_64 rng(mix_seed(seed, 2));
  w.intervals.assign(q, std::vector<IntervalForecast>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = station_series(w.actual, i);
    const auto f = station_series(w.forecast, i);
    const auto a = station_series(w.ablation, i);
    const auto tr = panel.column(i, w.split.train.begin, w.split.train.end);
    const auto ens = bootstrap_ensemble(f, val_res[i], cfg.crps_samples, rng);
    const auto ens_ab = bootstrap_ensemble(a, val_res_ab[i], cfg.crps_samples, rng);
    w.metrics.push_back(evaluate_forecast(y, f, tr, &ens, cfg.pinball_rho));
    w.ablation_metrics.push_back(evaluate_forecast(y, a, tr, &ens_ab, cfg.pinball_rho));

    // Calibrate on the validation block, then walk through the test block,
    // revealing each actual only after its interval is issued.
    ConformalStream stream(cfg.conformal);
    for (std::size_t k = 0; k < val_fc.size(); ++k) {
      stream.observe(panel.values[w.split.val.begin + k][i], val_fc[k][i]);
    }
    for (std::size_t s = 0; s < q; ++s) {
      w.intervals[s][i] = stream.interval(f[s]);
      stream.observe(y[s], f[s]);
    }

    const double last = panel.values[test.begin - 1][i];
    const double clim = std::accumulate(tr.begin(), tr.end(), 0.0) / static_cast<double>(tr.size());
    w.persistence_rmse.push_back(rmse(y, std::vector<double>(q, last)));
    w.climatology_rmse.push_back(rmse(y, std::vector<double>(q, clim)));
  }
  if (selected) *selected = std::move(sel.model);
  w.ok = true;
}

}  // namespace

std::size_t RunResult::failed_windows() const {
  return static_cast<std::size_t>(std::count_if(windows.begin(), windows.end(), [](const auto& w) { return !w.ok; }));
}

std::vector<StationFit> fit_station_gpds(const SeriesPanel& panel, IndexRange train, double threshold,
                                         const GpdFitOptions& options) {
  std::vector<StationFit> fits;
  for (std::size_t i = 0; i < panel.n(); ++i) {
    StationFit sf;
    const auto exc = extract_exceedances(panel.column(i, train.begin, train.end), threshold);
    sf.n_exceed = exc.size();
    sf.dw_statistic = durbin_watson(exc);
    if (exc.size() < options.min_exceedances) {
      sf.status = "too_few_exceedances";
    } else {
      try {
        sf.fit = fit_gpd(exc, options);
        sf.status = "ok";
      } catch (const std::exception& e) {
        sf.status = std::string("fit_failed: ") + e.what();
      }
    }
    fits.push_back(std::move(sf));
  }
  return fits;
}

LossConfig make_loss_config(const std::vector<StationFit>& fits, double threshold, std::size_t n, bool raw_argument) {
  LossConfig lc;
  lc.thresholds.assign(n, threshold);
  lc.potl_raw_argument = raw_argument;
  for (std::size_t i = 0; i < n; ++i) {
    lc.gpd_fits.push_back(i < fits.size() ? fits[i].fit : std::nullopt);
    lc.station_beta2_scale.push_back(lc.gpd_fits.back() ? 1.0 : 0.0);
  }
  return lc;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult result;
  result.config = cfg;
  result.threshold = cfg.resolved_threshold();

  if (cfg.panel_path.empty()) {
    SyntheticConfig sc = cfg.synthetic;
    auto synth = generate_synthetic_panel(sc, cfg.seed);
    result.roster = std::move(synth.roster);
    result.panel = std::move(synth.panel);
    result.cleaning = clean_panel(result.panel, cfg.cleaning);
    result.synthetic = true;
  } else {
    auto roster = load_roster_csv(cfg.roster_path);
    std::vector<std::string> ids;
    for (const auto& s : roster) ids.push_back(s.id);
    result.panel = load_panel_csv(cfg.panel_path, ids, cfg.cleaning, &result.cleaning);
    for (const auto& s : roster) {
      if (std::find(result.panel.station_ids.begin(), result.panel.station_ids.end(), s.id) !=
          result.panel.station_ids.end()) {
        result.roster.push_back(s);
      }
    }
  }
  const SeriesPanel& panel = result.panel;
  const StationGraph graph = build_adjacency(result.roster, cfg.adjacency);
  const LaplacianBundle bundle = laplacian_bundle(graph, cfg.laplacian);

  const Scheme scheme = parse_scheme(cfg.scheme);
  ModelConfig mc = cfg.model;
  mc.horizon = scheme_window_len(scheme);
  if (cfg.test_days > panel.t()) {
    throw InputError("test_days " + std::to_string(cfg.test_days) + " exceeds the " + std::to_string(panel.t()) +
                     "-day panel");
  }
  WindowOptions wo;
  wo.history_len = mc.history_len();
  wo.val_len = cfg.val_len;
  wo.train_len = cfg.train_len;
  const auto splits = rolling_windows(panel.t(), scheme, panel.t() - cfg.test_days, wo);

  result.windows.resize(splits.size());
  for (std::size_t k = 0; k < splits.size(); ++k) {
    result.windows[k].window_id = k + 1;
    result.windows[k].split = splits[k];
  }
  Shared sh{cfg, panel, graph, bundle, result.threshold, mc};

  auto guarded = [&](WindowOutcome& w, const EstgcnModel* warm, std::optional<EstgcnModel>* selected) {
    try {
      run_window(sh, w, warm, selected);
    } catch (const std::exception& e) {
      w.ok = false;
      w.error = e.what();
    }
  };

  if (cfg.warm_start) {
    // Each window starts from the previous window's selected weights, so
    // windows run in order.
    std::optional<EstgcnModel> prev;
    for (auto& w : result.windows) {
      std::optional<EstgcnModel> selected;
      guarded(w, prev ? &*prev : nullptr, &selected);
      if (selected) prev = std::move(selected);
    }
  } else if (cfg.workers <= 1) {
    for (auto& w : result.windows) guarded(w, nullptr, nullptr);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t count = std::min(cfg.workers, result.windows.size());
    for (std::size_t t = 0; t < count; ++t) {
      pool.emplace_back([&]() {
        for (std::size_t k = next++; k < result.windows.size(); k = next++) guarded(result.windows[k], nullptr, nullptr);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Comparisons across windows.
  const std::size_t n = panel.n();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> y, a, b;
    for (const auto& w : result.windows) {
      if (!w.ok) continue;
      for (std::size_t s = 0; s < w.actual.size(); ++s) {
        y.push_back(w.actual[s][i]);
        a.push_back(w.ablation[s][i]);
        b.push_back(w.forecast[s][i]);
      }
    }
    DmRow row{panel.station_ids[i], {}};
    if (y.size() >= 2) row.result = dm_test(y, a, b);
    result.dm.push_back(row);
  }
  std::vector<std::vector<double>> losses;
  for (const auto& w : result.windows) {
    if (!w.ok) continue;
    for (std::size_t i = 0; i < n; ++i) {
      losses.push_back({w.metrics[i].rmse, w.ablation_metrics[i].rmse, w.persistence_rmse[i], w.climatology_rmse[i]});
    }
  }
  result.mcb_models = {"E-STGCN", "ablation_mse", "persistence", "climatology"};
  if (losses.size() >= 2) result.mcb = mcb_test(losses, cfg.mcb_theta);
  return result;
}

void write_bundle(const RunResult& r, const fs::path& out) {
  fs::create_directories(out);
  const auto& panel = r.panel;
  const std::size_t n = panel.n();

  write_panel_csv(out / "data" / "panel.csv", panel);
  write_roster_csv(out / "data" / "roster.csv", r.roster);

  std::vector<std::vector<std::string>> beta_rows, fc_rows, metric_rows, ab_rows, int_rows;
  json fits = json::array();
  for (const auto& w : r.windows) {
    const std::string wid = std::to_string(w.window_id);
    for (const auto& b : w.beta_table) beta_rows.push_back({wid, fmt(b.beta1), fmt(b.beta2), fmt(b.val_rmse), b.status});
    for (std::size_t i = 0; i < w.fits.size(); ++i) {
      const auto& f = w.fits[i];
      json rec{{"window_id", w.window_id},
               {"station_id", panel.station_ids[i]},
               {"threshold", r.threshold},
               {"n_exceed", f.n_exceed},
               {"status", f.status}};
      rec["scale"] = f.fit ? json(f.fit->scale) : json(nullptr);
      rec["shape"] = f.fit ? json(f.fit->shape) : json(nullptr);
      rec["loglik"] = f.fit ? json(f.fit->loglik) : json(nullptr);
      rec["dw_statistic"] = f.dw_statistic ? json(*f.dw_statistic) : json(nullptr);
      fits.push_back(rec);
    }
    if (!w.ok) continue;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < w.actual.size(); ++s) {
        const std::string step = std::to_string(s + 1);
        fc_rows.push_back({wid, panel.station_ids[i], step, panel.dates[w.split.test.begin + s], fmt(w.actual[s][i]),
                           fmt(w.forecast[s][i]), fmt(w.ablation[s][i])});
        const auto& iv = w.intervals[s][i];
        int_rows.push_back({wid, panel.station_ids[i], step, fmt(iv.point), fmt(iv.lower), fmt(iv.upper), fmt(iv.kappa)});
      }
      auto metric_row = [&](const MetricReport& m) {
        return std::vector<std::string>{wid,          panel.station_ids[i], fmt(m.mae),     fmt(m.mase),
                                        fmt(m.rmse),  fmt(m.smape),         fmt(m.pinball), fmt(m.crps)};
      };
      metric_rows.push_back(metric_row(w.metrics[i]));
      ab_rows.push_back(metric_row(w.ablation_metrics[i]));
    }
    std::vector<std::vector<std::string>> log_rows;
    for (std::size_t e = 0; e < w.history.train_loss.size(); ++e) {
      log_rows.push_back({std::to_string(e + 1), fmt(w.history.train_loss[e]), fmt(w.history.val_loss[e]),
                          fmt(w.history.wall_ms[e])});
    }
    char name[64];
    std::snprintf(name, sizeof name, "window_%02zu_training.csv", w.window_id);
    csv::write_table(out / "logs" / name, "epoch,train_loss,val_loss,wall_ms", log_rows);
  }
  csv::write_table(out / "beta_selection.csv", "window_id,beta1,beta2,val_rmse,status", beta_rows);
  csv::write_table(out / "forecasts.csv", "window_id,station_id,step,date,actual,forecast,ablation", fc_rows);
  const std::string metric_header = "window_id,station_id,mae,mase,rmse,smape,pinball,crps";
  csv::write_table(out / "metrics.csv", metric_header, metric_rows);
  csv::write_table(out / "metrics_ablation.csv", metric_header, ab_rows);
  csv::write_table(out / "intervals.csv", "window_id,station_id,step,point,lower,upper,kappa", int_rows);
  {
    auto f = csv::open_for_write(out / "gpd_fits.json");
    f << fits.dump(1) << '\n';
  }

  std::vector<std::vector<std::string>> dm_rows;
  for (const auto& d : r.dm) {
    dm_rows.push_back({d.station_id, fmt(d.result.statistic), fmt(d.result.p_value), d.result.defined() ? "true" : "false"});
  }
  csv::write_table(out / "dm.csv", "station_id,statistic,p_value,defined", dm_rows);
  std::vector<std::vector<std::string>> mcb_rows;
  if (r.mcb) {
    for (std::size_t m = 0; m < r.mcb_models.size(); ++m) {
      mcb_rows.push_back({r.mcb_models[m], fmt(r.mcb->mean_ranks[m]), fmt(r.mcb->critical_distance),
                          r.mcb->in_reference[m] ? "true" : "false"});
    }
  }
  csv::write_table(out / "mcb.csv", "model,mean_rank,cd,in_reference", mcb_rows);

  json manifest;
  manifest["manifest_version"] = 1;
  manifest["config"] = config_to_json(r.config);
  manifest["seed"] = r.config.seed;
  manifest["pollutant"] = r.config.pollutant;
  manifest["scheme"] = r.config.scheme;
  manifest["data_source"] = r.synthetic ? "synthetic" : "files";
  json thresholds = json::object();
  for (const auto& id : panel.station_ids) thresholds[id] = r.threshold;
  manifest["thresholds"] = thresholds;
  manifest["beta_selection_scope"] = "per window: validation RMSE over the grid, selected model reused for the test forecast";
  manifest["ablation"] = "beta1 = 1, beta2 = 0 under the same seeds";
  manifest["dm_orientation"] = "A = ablation, B = selected model; positive favours B";
  json windows = json::array();
  for (const auto& w : r.windows) {
    const auto& s = w.split;
    json jw{{"window_id", w.window_id},
            {"train", {s.train.begin, s.train.end}},
            {"val", {s.val.begin, s.val.end}},
            {"test", {s.test.begin, s.test.end}},
            {"test_dates", {panel.dates[s.test.begin], panel.dates[s.test.end - 1]}},
            {"status", w.ok ? "ok" : "failed"}};
    if (w.ok) {
      jw["beta1"] = w.beta1;
      jw["beta2"] = w.beta2;
    } else {
      jw["error"] = w.error;
    }
    windows.push_back(jw);
  }
  manifest["windows"] = windows;
  manifest["cleaning"] = {{"dropped", r.cleaning.dropped},
                          {"dropped_missing_frac", r.cleaning.dropped_missing_frac},
                          {"forward_filled", r.cleaning.forward_filled},
                          {"interpolated", r.cleaning.interpolated}};
  manifest["artifacts"] = {"manifest.json",  "gpd_fits.json", "beta_selection.csv", "forecasts.csv",
                           "metrics.csv",    "metrics_ablation.csv", "intervals.csv", "dm.csv",
                           "mcb.csv",        "data/panel.csv", "data/roster.csv", "logs/"};
  auto mf = csv::open_for_write(out / "manifest.json");
  mf << manifest.dump(2) << '\n';
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t col(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::optional<CsvTable> read_table(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  const auto lines = csv::read_lines(p);
  if (lines.empty()) return std::nullopt;
  CsvTable t;
  t.header = csv::split(lines[0]);
  for (std::size_t k = 1; k < lines.size(); ++k) t.rows.push_back(csv::split(lines[k]));
  return t;
}

}  // namespace

void emit_plot_data(const fs::path& bundle, const fs::path& out_dir) {
  const fs::path plots = out_dir / "plots";
  {
    std::vector<std::vector<std::string>> rows;
    auto fc = read_table(bundle / "forecasts.csv");
    auto iv = read_table(bundle / "intervals.csv");
    if (fc) {
      std::map<std::tuple<std::string, std::string, std::string>, std::vector<std::string>> bounds;
      if (iv) {
        for (const auto& r : iv->rows) {
          bounds[{r[iv->col("window_id")], r[iv->col("station_id")], r[iv->col("step")]}] = {r[iv->col("lower")],
                                                                                              r[iv->col("upper")]};
        }
      }
      for (const auto& r : fc->rows) {
        const std::tuple<std::string, std::string, std::string> key{r[fc->col("window_id")], r[fc->col("station_id")],
                                                                    r[fc->col("step")]};
        auto it = bounds.find(key);
        rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), r[fc->col("date")],
                        r[fc->col("actual")], r[fc->col("forecast")], it != bounds.end() ? it->second[0] : "NA",
                        it != bounds.end() ? it->second[1] : "NA"});
      }
    }
    csv::write_table(plots / "forecast_vs_actual.csv", "window_id,station_id,step,date,actual,forecast,lower,upper",
                     rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    if (fs::exists(bundle / "data" / "panel.csv")) {
      const SeriesPanel panel = read_panel_csv(bundle / "data" / "panel.csv");
      for (std::size_t i = 0; i < panel.n(); ++i) {
        auto col = panel.column(i);
        col.erase(std::remove_if(col.begin(), col.end(), [](double x) { return std::isnan(x); }), col.end());
        if (col.size() < 3) continue;
        std::vector<double> sorted = col;
        std::sort(sorted.begin(), sorted.end());
        const double lo = sorted.front();
        const double hi = sorted[static_cast<std::size_t>(0.98 * static_cast<double>(sorted.size() - 1))];
        if (!(hi > lo)) continue;
        std::vector<double> grid;
        const int points = 40;
        for (int g = 0; g < points; ++g) grid.push_back(lo + (hi - lo) * g / points);
        const auto me = mean_excess_curve(col, grid);
        for (std::size_t g = 0; g < grid.size(); ++g) {
          rows.push_back({panel.station_ids[i], fmt(grid[g]), fmt(me.me[g]), fmt(me.ci_half_width[g]),
                          std::to_string(me.counts[g])});
        }
      }
    }
    csv::write_table(plots / "mean_excess.csv", "station_id,threshold,mean_excess,ci_half_width,count", rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    if (auto mcb = read_table(bundle / "mcb.csv")) {
      for (const auto& r : mcb->rows) {
        const double rank = csv::parse_double(r[mcb->col("mean_rank")], "mcb.csv");
        const double cd = csv::parse_double(r[mcb->col("cd")], "mcb.csv");
        rows.push_back({r[mcb->col("model")], fmt(rank), fmt(rank - cd), fmt(rank + cd), r[mcb->col("in_reference")]});
      }
    }
    csv::write_table(plots / "mcb_ranks.csv", "model,mean_rank,lower,upper,in_reference", rows);
  }
}

TailPinball tail_pinball(const RunResult& r, double rho) {
  std::vector<double> y, f, a;
  for (const auto& w : r.windows) {
    if (!w.ok) continue;
    for (std::size_t s = 0; s < w.actual.size(); ++s)
      for (std::size_t i = 0; i < w.actual[s].size(); ++i) {
        if (w.actual[s][i] > r.threshold) {
          y.push_back(w.actual[s][i]);
          f.push_back(w.forecast[s][i]);
          a.push_back(w.ablation[s][i]);
        }
      }
  }
  TailPinball t;
  t.points = y.size();
  if (!y.empty()) {
    t.selected = pinball(y, f, rho);
    t.ablation = pinball(y, a, rho);
  }
  return t;
}

void retain_heap_memory() {
#if defined(__GLIBC__)
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TOP_PAD, 16 << 20);
#endif
}

}  // namespace estgcn
