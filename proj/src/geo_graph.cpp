#include "estgcn/geo_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include <Eigen/Eigenvalues>

#include "estgcn/csv.hpp"
#include "estgcn/errors.hpp"

namespace estgcn {

namespace {

double to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void AdjacencyConfig::validate() const {
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) throw InputError("sigma_sq must be > 0");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InputError("epsilon must lie in (0, 1]");
  if (!(earth_radius > 0.0) || !std::isfinite(earth_radius)) {
    throw InputError("earth_radius must be > 0");
  }
}

std::vector<double> SquareMatrix::multiply(const std::vector<double>& x) const {
  if (x.size() != n_) throw InputError("matrix-vector size mismatch");
  std::vector<double> y(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n_; ++j) acc += data_[i * n_ + j] * x[j];
    y[i] = acc;
  }
  return y;
}

std::vector<std::size_t> StationGraph::neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n(); ++j) {
    if (adjacency(i, j) > 0.0) out.push_back(j);
  }
  return out;
}

void validate_station(const StationMeta& s) {
  if (!(s.lat >= -90.0 && s.lat <= 90.0)) {
    throw InputError("station " + s.id + ": latitude out of range");
  }
  if (!(s.lon > -180.0 && s.lon <= 180.0)) {
    throw InputError("station " + s.id + ": longitude out of range");
  }
}

double haversine_distance(const StationMeta& a, const StationMeta& b, double radius) {
  validate_station(a);
  validate_station(b);
  if (!(radius > 0.0)) throw InputError("radius must be > 0");
  const double phi_a = to_radians(a.lat);
  const double phi_b = to_radians(b.lat);
  const double dphi = phi_a - phi_b;
  const double dlambda = to_radians(a.lon - b.lon);
  const double s_phi = std::sin(dphi / 2.0);
  const double s_lambda = std::sin(dlambda / 2.0);
  double h = s_phi * s_phi + std::cos(phi_a) * std::cos(phi_b) * s_lambda * s_lambda;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * radius * std::asin(std::sqrt(h));
}

double edge_radius(const AdjacencyConfig& config) {
  config.validate();
  return std::sqrt(-config.sigma_sq * std::log(config.epsilon));
}

StationGraph build_adjacency(const std::vector<StationMeta>& stations,
                             const AdjacencyConfig& config) {
  config.validate();
  if (stations.size() < 2) throw InputError("adjacency needs at least 2 stations");
  std::unordered_set<std::string> seen;
  for (const auto& s : stations) {
    validate_station(s);
    if (!seen.insert(s.id).second) throw InputError("duplicate station id: " + s.id);
  }

  StationGraph graph;
  graph.stations = stations;
  const std::size_t n = stations.size();
  graph.adjacency = SquareMatrix(n);
  bool any_edge = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = haversine_distance(stations[i], stations[j], config.earth_radius);
      const double w = std::exp(-(d * d) / config.sigma_sq);
      if (w >= config.epsilon) {
        graph.adjacency(i, j) = w;
        graph.adjacency(j, i) = w;
        any_edge = true;
      }
    }
  }
  graph.isolated_warning = !any_edge;
  return graph;
}

LaplacianBundle laplacian_bundle(const StationGraph& graph, const LaplacianOptions& options) {
  const std::size_t n = graph.n();
  if (graph.adjacency.size() != n || n == 0) throw InputError("graph adjacency does not match roster");
  if (!(options.tol > 0.0)) throw InputError("power iteration tolerance must be > 0");

  LaplacianBundle bundle;
  bundle.degree.assign(n, 0.0);
  bundle.laplacian = SquareMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) {
        d += graph.adjacency(i, j);
        bundle.laplacian(i, j) = -graph.adjacency(i, j);
      }
    }
    bundle.degree[i] = d;
    bundle.laplacian(i, i) = d;
  }

  if (options.fix_zeta_two) {
    bundle.zeta_max = 2.0;
  } else {
    // Lanczos on the power sequence L^k v: plain power iteration stalls when
    // the top two eigenvalues are within a fraction of a percent, which random
    // station layouts produce often. Full reorthogonalisation; N is small.
    // Deterministic start vector with no special alignment to the constant null vector.
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    const double nv = norm2(v);
    for (double& x : v) x /= nv;

    std::vector<std::vector<double>> basis{v};
    std::vector<double> alpha, beta;
    double ritz = 0.0;
    bool converged = false;
    const std::size_t cap = std::min(options.max_iterations, n);
    for (std::size_t it = 1; it <= cap; ++it) {
      std::vector<double> w = bundle.laplacian.multiply(basis.back());
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += basis.back()[i] * w[i];
      alpha.push_back(a);
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) {
          double c = 0.0;
          for (std::size_t i = 0; i < n; ++i) c += q[i] * w[i];
          for (std::size_t i = 0; i < n; ++i) w[i] -= c * q[i];
        }
      }
      const double b = norm2(w);
      bundle.power_iterations = it;

      const auto k = static_cast<Eigen::Index>(alpha.size());
      Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), k);
      Eigen::VectorXd sub = k > 1 ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(beta.data(), k - 1))
                                  : Eigen::VectorXd(0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
      tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      ritz = tri.eigenvalues()(k - 1);
      // |b * last component of the top Ritz vector| bounds ||L y - ritz y||.
      const double residual = std::abs(b * tri.eigenvectors()(k - 1, k - 1));
      // A vanishing next vector means the Krylov space is invariant and the
      // Ritz value is exact.
      if (b <= 1e-14 * std::max(std::abs(ritz), 1.0) || it == n || residual <= options.tol * std::abs(ritz)) {
        converged = true;
        break;
      }
      beta.push_back(b);
      for (double& x : w) x /= b;
      basis.push_back(std::move(w));
    }
    if (!converged) {
      throw NumericError("Lanczos iteration for the largest Laplacian eigenvalue did not converge in " +
                         std::to_string(options.max_iterations) + " iterations");
    }
    bundle.zeta_max = ritz;
  }

  bundle.normalized = SquareMatrix(n);
  const double scale = bundle.zeta_max > 0.0 ? 2.0 / bundle.zeta_max : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      bundle.normalized(i, j) = scale * bundle.laplacian(i, j) - (i == j ? 1.0 : 0.0);
    }
  }
  return bundle;
}

std::vector<StationMeta> load_roster_csv(const std::filesystem::path& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw InputError(path.string() + ": empty roster");
  const auto header = csv::split(lines.front());
  if (header != std::vector<std::string>{"station_id", "lat", "lon"}) {
    throw InputError(path.string() + ": roster header must be station_id,lat,lon");
  }
  std::vector<StationMeta> out;
  std::unordered_set<std::string> seen;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (csv::trim(lines[ln]).empty()) continue;
    const auto fields = csv::split(lines[ln]);
    const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
    if (fields.size() != 3) throw InputError(ctx + ": expected 3 fields");
    StationMeta s{fields[0], csv::parse_double(fields[1], ctx), csv::parse_double(fields[2], ctx)};
    validate_station(s);
    if (!seen.insert(s.id).second) throw InputError(ctx + ": duplicate station id " + s.id);
    out.push_back(std::move(s));
  }
  return out;
}

void write_roster_csv(const std::filesystem::path& path, const std::vector<StationMeta>& stations) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : stations) {
    rows.push_back({s.id, csv::format_double(s.lat), csv::format_double(s.lon)});
  }
  csv::write_table(path, "station_id,lat,lon", rows);
}

}  // namespace estgcn
