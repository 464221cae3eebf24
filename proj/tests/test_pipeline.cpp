#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "estgcn/config.hpp"
#include "estgcn/errors.hpp"
#include "estgcn/experiment.hpp"
#include "estgcn/panel.hpp"
#include "estgcn/synthetic.hpp"

using namespace estgcn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("estgcn_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.scheme = "long";
  c.synthetic.n_stations = 3;
  c.synthetic.days = 600;
  c.test_days = 360;
  c.model.k_layers = 1;
  c.model.spatial_hidden = 2;
  c.model.lag = 3;
  c.model.hidden = 3;
  c.train.epochs = 1;
  c.beta_grid = {{1.0, 0.0}, {1.0, 0.5}};
  c.crps_samples = 10;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("iso dates") {
  CHECK(parse_iso_date("1970-01-01") == 0);
  CHECK(format_iso_date(parse_iso_date("2024-02-29")) == "2024-02-29");
  CHECK(parse_iso_date("2021-03-01") - parse_iso_date("2021-02-28") == 1);
  CHECK_THROWS_AS(parse_iso_date("2021-02-30"), InputError);
  CHECK_THROWS_AS(parse_iso_date("21-2-3"), InputError);
}

TEST_CASE("panel csv pivots, fills the date range, and round-trips") {
  TempDir dir("panel");
  write_text(dir.path / "p.csv",
             "date,station_id,value\n"
             "2021-01-01,a,1.5\n"
             "2021-01-01,b,2\n"
             "2021-01-03,a,3\n"
             "2021-01-03,b,NA\n");
  auto panel = read_panel_csv(dir.path / "p.csv");
  REQUIRE(panel.t() == 3);
  CHECK(panel.station_ids == std::vector<std::string>{"a", "b"});
  CHECK(std::isnan(panel.values[1][0]));
  CHECK(std::isnan(panel.values[2][1]));
  CHECK(panel.values[2][0] == 3.0);

  write_panel_csv(dir.path / "q.csv", panel);
  const auto back = read_panel_csv(dir.path / "q.csv", {"a", "b"});
  CHECK(back.dates == panel.dates);
  CHECK(back.values[0] == panel.values[0]);

  write_text(dir.path / "dup.csv", "date,station_id,value\n2021-01-01,a,1\n2021-01-01,a,2\n");
  CHECK_THROWS_AS(read_panel_csv(dir.path / "dup.csv"), InputError);
  write_text(dir.path / "hdr.csv", "day,id,v\n2021-01-01,a,1\n");
  CHECK_THROWS_AS(read_panel_csv(dir.path / "hdr.csv"), InputError);
  write_text(dir.path / "extra.csv", "date,station_id,value\n2021-01-01,zz,1\n");
  CHECK_THROWS_AS(read_panel_csv(dir.path / "extra.csv", {"a"}), InputError);
}

TEST_CASE("cleaning fills short gaps, interpolates long ones, drops sparse stations") {
  SeriesPanel p;
  for (int d = 0; d < 10; ++d) p.dates.push_back(format_iso_date(18000 + d));
  p.station_ids = {"full", "gappy", "sparse"};
  const double m = kMissing;
  const std::vector<double> full{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> gappy{m, 2, m, 4, m, m, m, m, 9, 10};
  const std::vector<double> sparse{1, m, m, m, m, m, m, m, 9, 10};
  for (int d = 0; d < 10; ++d) p.values.push_back({full[d], gappy[d], sparse[d]});
  CleaningOptions opt;
  opt.max_gap = 1;
  opt.missing_frac = 0.65;
  const auto rep = clean_panel(p, opt);
  REQUIRE(rep.dropped == std::vector<std::string>{"sparse"});
  CHECK(rep.dropped_missing_frac[0] == doctest::Approx(0.7));
  REQUIRE(p.n() == 2);
  CHECK(p.values[0][1] == 2.0);  // leading gap takes the first observation
  CHECK(p.values[2][1] == 2.0);  // one-day gap carried forward
  // Four-day gap between 4 and 9 filled linearly.
  CHECK(p.values[4][1] == doctest::Approx(5.0));
  CHECK(p.values[7][1] == doctest::Approx(8.0));
  CHECK(rep.forward_filled == 1);
  CHECK(rep.interpolated == 5);
  for (const auto& row : p.values)
    for (double v : row) CHECK(std::isfinite(v));
}

TEST_CASE("synthetic generator") {
  SyntheticConfig sc;
  sc.n_stations = 5;
  sc.days = 400;
  const auto a = generate_synthetic_panel(sc, 9), b = generate_synthetic_panel(sc, 9);
  CHECK(a.panel.values == b.panel.values);
  CHECK(a.panel.t() == 400);
  CHECK(a.roster.size() == 5);
  CHECK(a.exceedance_rate == doctest::Approx(0.3).epsilon(0.35));
  const auto c = generate_synthetic_panel(sc, 10);
  CHECK(c.panel.values != a.panel.values);

  sc.shock_rate = 0.0;
  sc.base_mean = 10.0;
  const auto calm = generate_synthetic_panel(sc, 9);
  for (bool e : calm.episode) CHECK_FALSE(e);
  sc.n_stations = 1;
  CHECK_THROWS_AS(generate_synthetic_panel(sc, 1), ConfigError);
}

TEST_CASE("config json round trip and unknown keys") {
  ExperimentConfig c = tiny_experiment();
  c.threshold = 55.0;
  c.val_len = 20;
  const auto j = config_to_json(c);
  const auto back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.resolved_threshold() == 55.0);
  CHECK(ExperimentConfig{}.resolved_threshold() == 60.0);

  auto bad = j;
  bad["train"]["learnign_rate"] = 0.1;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["extra"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["pollutant"] = "SO2";
  bad.erase("threshold");
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  CHECK(naaqs_threshold("PM10") == 100.0);
  CHECK(naaqs_threshold("NO2") == 80.0);
}

TEST_CASE("plot data from an empty bundle gives header-only files") {
  TempDir dir("plots_empty");
  emit_plot_data(dir.path, dir.path / "out");
  for (const char* f : {"forecast_vs_actual.csv", "mean_excess.csv", "mcb_ranks.csv"}) {
    REQUIRE(fs::exists(dir.path / "out" / "plots" / f));
    CHECK(count_lines(dir.path / "out" / "plots" / f) == 1);
  }
}

TEST_CASE("small end-to-end run") {
  const auto cfg = tiny_experiment();
  const auto r = run_experiment(cfg);
  REQUIRE(r.windows.size() == 4);
  CHECK(r.failed_windows() == 0);
  CHECK(r.synthetic);
  for (const auto& w : r.windows) {
    REQUIRE(w.ok);
    CHECK(w.forecast.size() == 90);
    CHECK(w.metrics.size() == 3);
    for (const auto& step : w.intervals)
      for (const auto& iv : step) {
        CHECK(iv.lower <= iv.point);
        CHECK(iv.point <= iv.upper);
      }
    // Test blocks follow each other with no overlap.
    if (w.window_id > 1) CHECK(w.split.test.begin == r.windows[w.window_id - 2].split.test.end);
    CHECK(w.split.test.end <= r.panel.t());
  }
  CHECK(r.dm.size() == 3);
  REQUIRE(r.mcb);
  CHECK(r.mcb_models.size() == r.mcb->mean_ranks.size());

  TempDir dir("bundle");
  write_bundle(r, dir.path);
  CHECK(count_lines(dir.path / "forecasts.csv") == 1 + 4 * 90 * 3);
  CHECK(count_lines(dir.path / "intervals.csv") == 1 + 4 * 90 * 3);
  CHECK(count_lines(dir.path / "metrics.csv") == 1 + 4 * 3);
  CHECK(count_lines(dir.path / "beta_selection.csv") == 1 + 4 * 2);
  CHECK(fs::exists(dir.path / "manifest.json"));
  CHECK(fs::exists(dir.path / "logs" / "window_01_training.csv"));

  // The manifest's config reproduces the run.
  std::ifstream in(dir.path / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  CHECK(config_from_json(manifest["config"]).seed == cfg.seed);

  emit_plot_data(dir.path, dir.path);
  CHECK(count_lines(dir.path / "plots" / "forecast_vs_actual.csv") == 1 + 4 * 90 * 3);
  CHECK(count_lines(dir.path / "plots" / "mcb_ranks.csv") == 1 + r.mcb_models.size());
}

TEST_CASE("run rejects a test period longer than the panel") {
  auto cfg = tiny_experiment();
  cfg.test_days = 700;
  CHECK_THROWS_AS(run_experiment(cfg), InputError);
}
