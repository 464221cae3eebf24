#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace estgcn {

struct StationMeta {
  std::string id;
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, (-180, 180]
};

struct AdjacencyConfig {
  double sigma_sq = 100.0;       // kernel bandwidth, km^2
  double epsilon = 0.1;          // sparsity cutoff in (0, 1]
  double earth_radius = 6371.0;  // km

  void validate() const;
};

// Dense row-major square matrix. Small N (tens of stations) keeps this cheap.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  const std::vector<double>& data() const { return data_; }

  std::vector<double> multiply(const std::vector<double>& x) const;

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct StationGraph {
  std::vector<StationMeta> stations;
  SquareMatrix adjacency;
  // Set when no station has any neighbour under the cutoff.
  bool isolated_warning = false;

  std::size_t n() const { return stations.size(); }
  // Indices j with a_ij > 0, ascending.
  std::vector<std::size_t> neighbors(std::size_t i) const;
};

struct LaplacianBundle {
  SquareMatrix laplacian;   // L = D - A
  std::vector<double> degree;  // diagonal of D
  double zeta_max = 0.0;    // largest eigenvalue of L
  SquareMatrix normalized;  // 2L / zeta_max - I
  std::size_t power_iterations = 0;  // Lanczos steps taken
};

struct LaplacianOptions {
  double tol = 1e-8;
  std::size_t max_iterations = 1000;
  // Use zeta_max = 2 instead of estimating it (common first-order GCN shortcut).
  bool fix_zeta_two = false;
};

void validate_station(const StationMeta& s);

// Great-circle distance in the units of `radius`.
double haversine_distance(const StationMeta& a, const StationMeta& b, double radius);

// Distance below which an edge survives the cutoff: sqrt(-sigma_sq * ln(epsilon)).
double edge_radius(const AdjacencyConfig& config);

StationGraph build_adjacency(const std::vector<StationMeta>& stations, const AdjacencyConfig& config);

LaplacianBundle laplacian_bundle(const StationGraph& graph, const LaplacianOptions& options = {});

std::vector<StationMeta> load_roster_csv(const std::filesystem::path& path);
void write_roster_csv(const std::filesystem::path& path, const std::vector<StationMeta>& stations);

}  // namespace estgcn
