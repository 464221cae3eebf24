#include "estgcn/evt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "estgcn/bfgs.hpp"

namespace estgcn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-observation negative log-likelihood over theta = (log scale, shape),
// with gradient. The shape derivative switches to a series expansion near 0
// where the closed form cancels catastrophically.
double mean_nll(const std::vector<double>& x, const std::vector<double>& theta,
                std::vector<double>* grad) {
  const double sigma = std::exp(theta[0]);
  const double xi = theta[1];
  // Below -1 the likelihood is unbounded near the sample maximum.
  if (!std::isfinite(sigma) || sigma <= 0.0 || xi <= -1.0) return kInf;
  const double k = static_cast<double>(x.size());
  const bool zero_shape = std::abs(xi) < kShapeZeroTol;

  double sum_term = 0.0;
  double sum_dlog_sigma = 0.0;
  double sum_dxi = 0.0;
  for (double xm : x) {
    const double u = xm / sigma;
    const double s = 1.0 + xi * u;
    if (!(s > 0.0)) return kInf;
    if (zero_shape) {
      sum_term += u;
    } else {
      const double l = std::log1p(xi * u);
      sum_term += l + l / xi;
    }
    if (grad) {
      sum_dlog_sigma += u * (1.0 + xi) / s;
      if (std::abs(xi) < 1e-5) {
        const double u2 = u * u, u3 = u2 * u, u4 = u3 * u;
        sum_dxi += (u - u2 / 2.0) + 2.0 * xi * (u3 / 3.0 - u2 / 2.0) + 3.0 * xi * xi * (u3 / 3.0 - u4 / 4.0);
      } else {
        sum_dxi += -std::log1p(xi * u) / (xi * xi) + (1.0 + 1.0 / xi) * u / s;
      }
    }
  }
  if (grad) {
    grad->assign(2, 0.0);
    (*grad)[0] = 1.0 - sum_dlog_sigma / k;
    (*grad)[1] = sum_dxi / k;
  }
  return std::log(sigma) + sum_term / k;
}

double potl_argument(double pred, const GpdFit& fit, bool raw_argument) {
  if (!(pred > fit.threshold)) {
    throw InputError("pot_loss requires a prediction above the threshold");
  }
  return raw_argument ? pred : pred - fit.threshold;
}

}  // namespace

void GevParams::validate() const {
  if (!(scale > 0.0)) throw InputError("GEV scale must be > 0");
}

std::size_t MeanExcessCurve::defined_points() const {
  return static_cast<std::size_t>(std::count_if(me.begin(), me.end(), [](const auto& v) { return v.has_value(); }));
}

BlockMaxima block_maxima(std::span<const double> series, std::size_t block_len) {
  if (block_len == 0) throw InputError("block length must be >= 1");
  if (series.empty()) throw InputError("block maxima of an empty series");
  BlockMaxima out;
  if (block_len > series.size()) {
    out.warning = true;
    return out;
  }
  const std::size_t blocks = series.size() / block_len;
  out.maxima.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto first = series.begin() + static_cast<std::ptrdiff_t>(b * block_len);
    out.maxima.push_back(*std::max_element(first, first + static_cast<std::ptrdiff_t>(block_len)));
  }
  return out;
}

Exceedances extract_exceedances(std::span<const double> series, double threshold) {
  if (series.empty()) throw InputError("exceedances of an empty series");
  Exceedances exc;
  exc.threshold = threshold;
  for (double x : series) {
    if (x > threshold) exc.values.push_back(x - threshold);
  }
  return exc;
}

double gpd_cdf(double z, double scale, double shape) {
  if (!(scale > 0.0)) throw InputError("GP scale must be > 0");
  if (!(z >= 0.0)) throw InputError("GP argument below the support");
  if (std::abs(shape) < kShapeZeroTol) return -std::expm1(-z / scale);
  const double s = 1.0 + shape * z / scale;
  if (shape < 0.0) {
    if (z > -scale / shape) throw InputError("GP argument beyond the upper support end");
    if (s <= 0.0) return 1.0;
  }
  return -std::expm1(-std::log(s) / shape);
}

double gpd_quantile(double p, double scale, double shape) {
  if (!(scale > 0.0)) throw InputError("GP scale must be > 0");
  if (!(p >= 0.0 && p < 1.0)) throw InputError("GP quantile needs p in [0, 1)");
  if (std::abs(shape) < kShapeZeroTol) return -scale * std::log1p(-p);
  return scale / shape * std::expm1(-shape * std::log1p(-p));
}

double gpd_loglik(double scale, double shape, const Exceedances& exc) {
  if (exc.empty()) throw InputError("GP log-likelihood of no exceedances");
  if (!(scale > 0.0)) return -kInf;
  const double k = static_cast<double>(exc.size());
  double acc = 0.0;
  if (std::abs(shape) < kShapeZeroTol) {
    for (double x : exc.values) acc += x / scale;
    return -k * std::log(scale) - acc;
  }
  for (double x : exc.values) {
    const double s = 1.0 + shape * x / scale;
    if (!(s > 0.0)) return -kInf;
    acc += std::log1p(shape * x / scale);
  }
  return -k * std::log(scale) - (1.0 + 1.0 / shape) * acc;
}

GpdFit fit_gpd(const Exceedances& exc, const GpdFitOptions& options) {
  if (exc.size() < options.min_exceedances) {
    throw GpdFitError("GP fit needs at least " + std::to_string(options.min_exceedances) +
                      " exceedances, got " + std::to_string(exc.size()));
  }
  if (exc.empty()) throw GpdFitError("GP fit needs at least one exceedance");
  for (double x : exc.values) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InputError("exceedances must be finite and >= 0");
  }

  const double k = static_cast<double>(exc.size());
  const double mean = std::accumulate(exc.values.begin(), exc.values.end(), 0.0) / k;
  double var = 0.0;
  for (double x : exc.values) var += (x - mean) * (x - mean);
  var = exc.size() > 1 ? var / (k - 1.0) : 0.0;
  double sigma0 = var > 0.0 ? 0.5 * mean * (mean * mean / var + 1.0) : mean;
  if (!(sigma0 > 0.0)) sigma0 = 1.0;
  const double xi0 = 0.1;

  const std::vector<double>& x = exc.values;
  optim::Objective objective = [&x](const std::vector<double>& theta, std::vector<double>* grad) {
    return mean_nll(x, theta, grad);
  };
  optim::BfgsOptions bopts;
  bopts.gradient_tol = options.gradient_tol;
  bopts.max_iterations = options.max_iterations;
  const auto res = optim::minimize_bfgs(objective, {std::log(sigma0), xi0}, bopts);
  if (!res.converged) {
    std::ostringstream msg;
    msg << "GP fit did not converge (" << res.message << "); last iterate scale="
        << std::exp(res.x[0]) << " shape=" << res.x[1];
    throw NumericError(msg.str());
  }

  GpdFit fit;
  fit.threshold = exc.threshold;
  fit.scale = std::exp(res.x[0]);
  fit.shape = res.x[1];
  fit.n_exceed = exc.size();
  fit.loglik = gpd_loglik(fit.scale, fit.shape, exc);
  return fit;
}

MeanExcessCurve mean_excess_curve(std::span<const double> series, std::span<const double> grid) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InputError("mean excess grid must be strictly ascending");
  }
  MeanExcessCurve curve;
  curve.grid.assign(grid.begin(), grid.end());
  curve.me.resize(grid.size());
  curve.ci_half_width.resize(grid.size());
  curve.counts.assign(grid.size(), 0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double tau = grid[g];
    double sum = 0.0;
    std::size_t n = 0;
    for (double z : series) {
      if (z > tau) {
        sum += z - tau;
        ++n;
      }
    }
    curve.counts[g] = n;
    if (n < 2) continue;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double z : series) {
      if (z > tau) ss += (z - tau - mean) * (z - tau - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    curve.me[g] = mean;
    curve.ci_half_width[g] = 1.959963984540054 * sd / std::sqrt(static_cast<double>(n));
  }
  return curve;
}

MepSuggestion suggest_mep_threshold(const MeanExcessCurve& curve, const MepOptions& options) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < curve.me.size(); ++i) {
    if (curve.me[i]) idx.push_back(i);
  }
  if (idx.size() < options.min_defined_points) {
    throw InputError("MEP threshold search needs at least " +
                     std::to_string(options.min_defined_points) + " defined points, got " +
                     std::to_string(idx.size()));
  }
  const std::size_t min_tail = std::max<std::size_t>(options.min_tail_points, 3);
  for (std::size_t start = 0; start + min_tail <= idx.size(); ++start) {
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t j = start; j < idx.size(); ++j) {
      const double w = static_cast<double>(std::max<std::size_t>(curve.counts[idx[j]], 1));
      sw += w;
      sx += w * curve.grid[idx[j]];
      sy += w * *curve.me[idx[j]];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t j = start; j < idx.size(); ++j) {
      const double w = static_cast<double>(std::max<std::size_t>(curve.counts[idx[j]], 1));
      const double dx = curve.grid[idx[j]] - mx;
      const double dy = *curve.me[idx[j]] - my;
      sxx += w * dx * dx;
      sxy += w * dx * dy;
      syy += w * dy * dy;
    }
    if (sxx <= 0.0) continue;
    const double slope = sxy / sxx;
    // A flat tail is perfectly linear.
    const double r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    if (r2 >= options.r2_threshold) {
      return {true, curve.grid[idx[start]], slope, my - slope * mx, r2, idx.size() - start};
    }
  }
  return {};
}

std::optional<double> durbin_watson(const Exceedances& exc) {
  const auto& e = exc.values;
  if (e.size() < 3) return std::nullopt;
  const double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  double den = 0.0, num = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) {
    const double c = e[t] - mean;
    den += c * c;
    if (t > 0) {
      const double d = c - (e[t - 1] - mean);
      num += d * d;
    }
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

double pot_loss(double pred, const GpdFit& fit, bool raw_argument) {
  const double e = potl_argument(pred, fit, raw_argument);
  const double sigma = fit.scale;
  const double xi = fit.shape;
  if (!(sigma > 0.0)) throw InputError("GP scale must be > 0");
  if (std::abs(xi) < kShapeZeroTol) return std::log(sigma) + e / sigma;
  const double s = 1.0 + xi * e / sigma;
  if (s >= kPotSupportFloor) return std::log(sigma) + (1.0 + 1.0 / xi) * std::log(s);
  // Only reachable with xi < 0: continue linearly past the support floor.
  const double e_floor = (kPotSupportFloor - 1.0) * sigma / xi;
  const double at_floor = std::log(sigma) + (1.0 + 1.0 / xi) * std::log(kPotSupportFloor);
  const double slope = std::abs((1.0 + xi) / (sigma * kPotSupportFloor));
  return at_floor + slope * (e - e_floor);
}

double pot_loss_derivative(double pred, const GpdFit& fit, bool raw_argument) {
  const double e = potl_argument(pred, fit, raw_argument);
  const double sigma = fit.scale;
  const double xi = fit.shape;
  if (std::abs(xi) < kShapeZeroTol) return 1.0 / sigma;
  const double s = 1.0 + xi * e / sigma;
  if (s >= kPotSupportFloor) return (1.0 + xi) / (sigma * s);
  return std::abs((1.0 + xi) / (sigma * kPotSupportFloor));
}

}  // namespace estgcn
