#include "estgcn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "estgcn/errors.hpp"

namespace estgcn {

using ad::Tensor;
using ad::Variable;

void LossConfig::validate(std::size_t n_stations) const {
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0) || !(beta1 + beta2 > 0.0)) {
    throw ConfigError("loss weights need beta1 >= 0, beta2 >= 0 and beta1 + beta2 > 0");
  }
  if (thresholds.size() != n_stations) {
    throw ConfigError("loss config has " + std::to_string(thresholds.size()) + " thresholds for " +
                      std::to_string(n_stations) + " stations");
  }
  if (!station_beta2_scale.empty() && station_beta2_scale.size() != n_stations) {
    throw ConfigError("station_beta2_scale length does not match the station count");
  }
  for (std::size_t i = 0; i < n_stations; ++i) {
    if (beta2_for(i) > 0.0 && (i >= gpd_fits.size() || !gpd_fits[i])) {
      throw ConfigError("beta2 > 0 but station " + std::to_string(i) + " has no GP fit");
    }
  }
}

double LossConfig::beta2_for(std::size_t station) const {
  if (station_beta2_scale.empty()) return beta2;
  return beta2 * station_beta2_scale.at(station);
}

double hybrid_loss(double pred, double target, double threshold, double beta1, double beta2,
                   const GpdFit* fit, bool potl_raw_argument) {
  const double se = (pred - target) * (pred - target);
  if (pred <= threshold) return se;
  double loss = beta1 * se;
  if (beta2 > 0.0) {
    if (!fit) throw ConfigError("hybrid loss needs a GP fit when beta2 > 0");
    GpdFit f = *fit;
    f.threshold = threshold;
    loss += beta2 * pot_loss(pred, f, potl_raw_argument);
  }
  return loss;
}

namespace {

const GpdFit* fit_for(std::size_t station, const LossConfig& cfg) {
  if (station < cfg.gpd_fits.size() && cfg.gpd_fits[station]) return &*cfg.gpd_fits[station];
  return nullptr;
}

double hybrid_derivative(double pred, double target, double threshold, double beta1, double beta2,
                         const GpdFit* fit, bool raw) {
  const double dse = 2.0 * (pred - target);
  if (pred <= threshold) return dse;
  double d = beta1 * dse;
  if (beta2 > 0.0) {
    if (!fit) throw ConfigError("hybrid loss needs a GP fit when beta2 > 0");
    GpdFit f = *fit;
    f.threshold = threshold;
    d += beta2 * pot_loss_derivative(pred, f, raw);
  }
  return d;
}

double rmse_of(const std::vector<double>& err) {
  double s = 0.0;
  for (double e : err) s += e * e;
  return std::sqrt(s / static_cast<double>(err.size()));
}

void check_range(const SeriesPanel& panel, IndexRange r, const char* name) {
  if (r.begin > r.end || r.end > panel.t()) {
    throw InputError(std::string(name) + " range [" + std::to_string(r.begin) + ", " + std::to_string(r.end) +
                     ") is outside the panel of " + std::to_string(panel.t()) + " rows");
  }
}

// Validation origins step through the block one horizon at a time.
struct EvalBlock {
  std::vector<std::size_t> origins;
  std::vector<std::size_t> steps;
};

EvalBlock eval_block(IndexRange val, std::size_t q) {
  EvalBlock b;
  for (std::size_t o = val.begin; o < val.end; o += q) {
    b.origins.push_back(o);
    b.steps.push_back(std::min(q, val.end - o));
  }
  return b;
}

struct ValScore {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
};

ValScore validate_model(const EstgcnModel& model, const SeriesPanel& panel, IndexRange val, const LossConfig& cfg) {
  ValScore score;
  if (val.size() == 0) return score;
  const std::size_t n = model.n();
  const auto block = eval_block(val, model.config.horizon);
  std::vector<double> err;
  double loss = 0.0;
  for (std::size_t b = 0; b < block.origins.size(); ++b) {
    const auto fc = forecast_at(model, panel, block.origins[b]);
    for (std::size_t s = 0; s < block.steps[b]; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        const double y = panel.values[block.origins[b] + s][i];
        err.push_back(fc[s][i] - y);
        loss += hybrid_loss(fc[s][i], y, i, cfg);
      }
    }
  }
  score.loss = loss / static_cast<double>(err.size());
  score.rmse = rmse_of(err);
  return score;
}

}  // namespace

double hybrid_loss(double pred, double target, std::size_t station, const LossConfig& cfg) {
  if (station >= cfg.thresholds.size()) throw ConfigError("no threshold for station " + std::to_string(station));
  return hybrid_loss(pred, target, cfg.thresholds[station], cfg.beta1, cfg.beta2_for(station),
                     fit_for(station, cfg), cfg.potl_raw_argument);
}

double hybrid_loss_derivative(double pred, double target, std::size_t station, const LossConfig& cfg) {
  if (station >= cfg.thresholds.size()) throw ConfigError("no threshold for station " + std::to_string(station));
  return hybrid_derivative(pred, target, cfg.thresholds[station], cfg.beta1, cfg.beta2_for(station),
                           fit_for(station, cfg), cfg.potl_raw_argument);
}

Variable panel_loss(Variable normalized_out, const Tensor& targets, const std::vector<std::size_t>& row_station,
                    const NormStats& norm, const LossConfig& cfg) {
  const Tensor& out = normalized_out.value();
  if (out.rank() != 2 || targets.shape() != out.shape() || row_station.size() != out.rows()) {
    throw InputError("panel loss shape mismatch: outputs " + out.shape_string() + ", targets " +
                     targets.shape_string());
  }
  const std::size_t rows = out.rows(), q = out.cols();
  const double inv = 1.0 / static_cast<double>(rows * q);
  std::vector<double> dloss(rows * q);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t st = row_station[r];
    const double sd = norm.std.at(st), mu = norm.mean.at(st);
    for (std::size_t c = 0; c < q; ++c) {
      const double pred = out.at(r, c) * sd + mu;
      const double y = targets.at(r, c);
      const double v = hybrid_loss(pred, y, st, cfg);
      const double d = hybrid_loss_derivative(pred, y, st, cfg);
      if (!std::isfinite(v) || !std::isfinite(d)) {
        std::ostringstream msg;
        msg << "non-finite loss at station index " << st << " (prediction " << pred << ", target " << y << ")";
        throw NumericError(msg.str());
      }
      total += v;
      dloss[r * q + c] = d * sd * inv;
    }
  }
  return normalized_out.tape()->record(
      Tensor::scalar(total * inv), {normalized_out},
      [dloss = std::move(dloss)](const ad::BackwardArgs& args) {
        if (auto* g = args.in_grads[0]) {
          const double go = args.out_grad[0];
          for (std::size_t k = 0; k < dloss.size(); ++k) (*g)[k] += go * dloss[k];
        }
      },
      "panel_loss");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam decay rates must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
}

NormStats fit_norm_stats(const SeriesPanel& panel, IndexRange range) {
  check_range(panel, range, "normalisation");
  if (range.size() < 2) throw InputError("normalisation needs at least 2 training rows");
  NormStats s;
  for (std::size_t i = 0; i < panel.n(); ++i) {
    const auto col = panel.column(i, range.begin, range.end);
    const double k = static_cast<double>(col.size());
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / k;
    double ss = 0.0;
    for (double x : col) ss += (x - mean) * (x - mean);
    double sd = std::sqrt(ss / (k - 1.0));
    if (!std::isfinite(mean) || !std::isfinite(sd)) {
      throw InputError("missing values in the training range of station " + panel.station_ids[i]);
    }
    // A flat training series would divide by zero; scale by 1 instead.
    if (!(sd > 1e-12)) sd = 1.0;
    s.mean.push_back(mean);
    s.std.push_back(sd);
  }
  return s;
}

Tensor build_inputs(const EstgcnModel& model, const SeriesPanel& panel, const std::vector<std::size_t>& origins) {
  const std::size_t n = model.n();
  const std::size_t w = model.config.history_len();
  if (panel.n() != n) throw InputError("panel station count does not match the model");
  Tensor x({n, origins.size() * w}, 0.0);
  for (std::size_t s = 0; s < origins.size(); ++s) {
    const std::size_t o = origins[s];
    if (o < w || o > panel.t()) throw InputError("forecast origin " + std::to_string(o) + " lacks history");
    for (std::size_t k = 0; k < w; ++k) {
      const auto& row = panel.values[o - w + k];
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(row[i])) {
          throw InputError("missing value for station " + panel.station_ids[i] + " on " + panel.dates[o - w + k]);
        }
        x.at(i, s * w + k) = (row[i] - model.norm.mean[i]) / model.norm.std[i];
      }
    }
  }
  return x;
}

std::vector<std::vector<double>> forecast_at(const EstgcnModel& model, const SeriesPanel& panel,
                                             std::size_t origin) {
  const std::size_t w = model.config.history_len();
  if (origin < w || origin > panel.t()) {
    throw InputError("forecast origin " + std::to_string(origin) + " needs " + std::to_string(w) +
                     " rows of history");
  }
  std::vector<std::vector<double>> history(panel.values.begin() + static_cast<std::ptrdiff_t>(origin - w),
                                           panel.values.begin() + static_cast<std::ptrdiff_t>(origin));
  return forecast(model, history);
}

TrainResult train(EstgcnModel& model, const SeriesPanel& panel, const WindowSplit& split,
                  const LossConfig& loss_cfg, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = model.n();
  if (panel.n() != n) throw InputError("panel station count does not match the model");
  loss_cfg.validate(n);
  check_range(panel, split.train, "train");
  check_range(panel, split.val, "validation");
  if (cfg.fit_normalization) model.norm = fit_norm_stats(panel, split.train);

  const std::size_t w = model.config.history_len();
  const std::size_t q = model.config.horizon;
  std::vector<std::size_t> origins;
  for (std::size_t o = split.train.begin + w; o + q <= split.train.end; ++o) origins.push_back(o);
  if (origins.empty()) {
    throw InputError("training range of " + std::to_string(split.train.size()) + " rows is too short for history " +
                     std::to_string(w) + " and horizon " + std::to_string(q));
  }

  auto params = model.parameters();
  std::vector<std::vector<double>> m1(params.size()), m2(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    m1[k].assign(params[k].second->size(), 0.0);
    m2[k].assign(params[k].second->size(), 0.0);
  }
  std::mt19937_64 rng(cfg.seed);
  std::size_t step = 0;
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(origins.begin(), origins.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0, batch_no = 0; b0 < origins.size(); b0 += cfg.batch, ++batch_no) {
      const std::vector<std::size_t> batch(origins.begin() + static_cast<std::ptrdiff_t>(b0),
                                           origins.begin() + static_cast<std::ptrdiff_t>(std::min(b0 + cfg.batch, origins.size())));
      const std::size_t s_count = batch.size();
      std::vector<std::vector<double>> grads;
      double batch_loss = 0.0;
      try {
        ad::Tape tape;
        BoundModel p = bind(tape, model, true);
        Variable x = tape.constant(build_inputs(model, panel, batch));
        Variable out = forward(model, p, x, s_count);
        Tensor targets({n * s_count, q}, 0.0);
        std::vector<std::size_t> row_station(n * s_count);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t s = 0; s < s_count; ++s) {
            row_station[i * s_count + s] = i;
            for (std::size_t h = 0; h < q; ++h) targets.at(i * s_count + s, h) = panel.values[batch[s] + h][i];
          }
        }
        Variable loss = panel_loss(out, targets, row_station, model.norm, loss_cfg);
        batch_loss = loss.value().item();
        tape.backward(loss);
        for (const auto& v : p.all) grads.push_back(v.grad().storage());
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no + 1) + ": " + e.what());
      }

      double norm2 = 0.0;
      for (const auto& g : grads)
        for (double x : g) norm2 += x * x;
      if (!std::isfinite(norm2)) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no + 1));
      }
      const double gnorm = std::sqrt(norm2);
      const double clip = (cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm) ? cfg.clip_norm / gnorm : 1.0;

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& theta = params[k].second->storage();
        for (std::size_t j = 0; j < theta.size(); ++j) {
          const double g = grads[k][j] * clip;
          m1[k][j] = cfg.adam_beta1 * m1[k][j] + (1.0 - cfg.adam_beta1) * g;
          m2[k][j] = cfg.adam_beta2 * m2[k][j] + (1.0 - cfg.adam_beta2) * g * g;
          const double mhat = m1[k][j] / bc1;
          const double vhat = m2[k][j] / bc2;
          theta[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
        }
      }
      epoch_loss += batch_loss * static_cast<double>(s_count);
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(origins.size()));
    const ValScore vs = validate_model(model, panel, split.val, loss_cfg);
    result.val_loss.push_back(vs.loss);
    result.val_rmse = vs.rmse;
    result.wall_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  return result;
}

std::vector<BetaCandidate> default_beta_grid() {
  std::vector<BetaCandidate> grid;
  for (double b1 : {0.5, 1.0})
    for (double b2 : {0.0, 0.1, 0.5, 1.0}) grid.push_back({b1, b2});
  return grid;
}

BetaSelection select_betas(const std::vector<BetaCandidate>& grid, const std::function<EstgcnModel()>& factory,
                           const SeriesPanel& panel, const WindowSplit& split, const LossConfig& base_loss,
                           const TrainConfig& train_cfg) {
  if (grid.empty()) throw ConfigError("beta grid is empty");
  if (split.val.size() == 0) throw InputError("beta selection needs a validation range");
  BetaSelection sel;
  bool have = false;
  double best = 0.0;
  std::string failures;
  for (const auto& cand : grid) {
    BetaRow row{cand.beta1, cand.beta2, std::nullopt, "ok"};
    try {
      LossConfig lc = base_loss;
      lc.beta1 = cand.beta1;
      lc.beta2 = cand.beta2;
      EstgcnModel m = factory();
      TrainResult tr = train(m, panel, split, lc, train_cfg);
      if (!std::isfinite(tr.val_rmse)) throw NumericError("validation RMSE is not finite");
      row.val_rmse = tr.val_rmse;
      sel.models.emplace_back(m);
      const bool better = !have || tr.val_rmse < best ||
                          (tr.val_rmse == best &&
                           (cand.beta2 > sel.beta2 || (cand.beta2 == sel.beta2 && cand.beta1 > sel.beta1)));
      if (better) {
        have = true;
        best = tr.val_rmse;
        sel.beta1 = cand.beta1;
        sel.beta2 = cand.beta2;
        sel.model = std::move(m);
        sel.history = std::move(tr);
      }
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      if (sel.models.size() < sel.table.size() + 1) sel.models.emplace_back(std::nullopt);
      failures += "\n  (" + std::to_string(cand.beta1) + ", " + std::to_string(cand.beta2) + "): " + e.what();
    }
    sel.table.push_back(std::move(row));
  }
  if (!have) throw NumericError("every beta grid point failed:" + failures);
  return sel;
}

Scheme parse_scheme(const std::string& name) {
  if (name == "short") return Scheme::short_term;
  if (name == "medium") return Scheme::medium_term;
  if (name == "long") return Scheme::long_term;
  throw ConfigError("unknown scheme '" + name + "' (expected short, medium or long)");
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::short_term: return "short";
    case Scheme::medium_term: return "medium";
    case Scheme::long_term: return "long";
  }
  return "short";
}

std::size_t scheme_window_len(Scheme s) {
  switch (s) {
    case Scheme::short_term: return 30;
    case Scheme::medium_term: return 60;
    case Scheme::long_term: return 90;
  }
  return 30;
}

std::size_t scheme_window_count(Scheme s) {
  switch (s) {
    case Scheme::short_term: return 12;
    case Scheme::medium_term: return 6;
    case Scheme::long_term: return 4;
  }
  return 12;
}

std::vector<WindowSplit> rolling_windows(std::size_t total_days, Scheme scheme, std::size_t anchor,
                                         const WindowOptions& options) {
  const std::size_t len = scheme_window_len(scheme);
  const std::size_t count = scheme_window_count(scheme);
  const std::size_t val_len = options.val_len.value_or(len);
  if (options.min_train_samples < 1) throw ConfigError("min_train_samples must be >= 1");
  std::vector<WindowSplit> out;
  for (std::size_t w = 0; w < count; ++w) {
    const std::string label = "window " + std::to_string(w + 1) + " of " + std::to_string(count) + " (" +
                              to_string(scheme) + " scheme, days " + std::to_string(anchor + w * len) + ".." +
                              std::to_string(anchor + (w + 1) * len) + ")";
    WindowSplit s;
    s.test = {anchor + w * len, anchor + (w + 1) * len};
    if (s.test.end > total_days) {
      throw InputError(label + " extends past the " + std::to_string(total_days) + " available days");
    }
    if (s.test.begin < val_len) throw InputError(label + " leaves no room for a validation block");
    s.val = {s.test.begin - val_len, s.test.begin};
    const std::size_t train_begin =
        options.train_len ? (s.val.begin > *options.train_len ? s.val.begin - *options.train_len : 0) : 0;
    s.train = {train_begin, s.val.begin};
    const std::size_t need = options.history_len + len + options.min_train_samples - 1;
    if (s.train.size() < need) {
      throw InputError(label + " has " + std::to_string(s.train.size()) + " training days; at least " +
                       std::to_string(need) + " are needed");
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace estgcn
