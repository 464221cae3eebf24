#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "estgcn/autodiff.hpp"
#include "estgcn/geo_graph.hpp"

namespace estgcn {

enum class Activation { tanh, sigmoid, identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct ModelConfig {
  std::size_t k_layers = 2;        // K
  std::size_t spatial_hidden = 8;  // width of h^(k) for k >= 1
  Activation activation = Activation::tanh;
  bool chebyshev_prefilter = false;
  std::size_t lag = 7;      // p
  std::size_t hidden = 32;  // m
  std::size_t horizon = 1;  // q
  // LSTM steps per forecast; each step consumes p lagged embeddings, so the
  // model reads lag + unroll_steps - 1 timestamps of history.
  std::size_t unroll_steps = 1;
  bool zero_init = false;

  void validate() const;
  std::size_t history_len() const { return lag + unroll_steps - 1; }
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
};

struct SpatialBlock {
  Activation activation = Activation::tanh;
  std::vector<ad::Tensor> neighbor_weights;  // W^(k): d_{k-1} x d_k
  std::vector<ad::Tensor> self_weights;      // B^(k): d_{k-1} x d_k
  bool use_chebyshev = false;
  ad::Tensor cheb;     // (2 x 1): w0, w1
  ad::Tensor dense_w;  // d_K x 1
  ad::Tensor dense_b;  // (1)
};

struct TemporalBlock {
  std::size_t lag = 0, hidden = 0, horizon = 0;
  ad::Tensor u_zf, u_hf, b_f;
  ad::Tensor u_zi, u_hi, b_i;
  ad::Tensor u_zm, u_hm, b_m;
  ad::Tensor u_zo, u_ho, b_o;
  ad::Tensor head_w;  // q x m
  ad::Tensor head_b;  // (q)
};

struct EstgcnModel {
  ModelConfig config;
  std::vector<std::string> station_ids;
  ad::Tensor neighbor_mean;  // N x N, row i averages over N(i); zero row if isolated
  ad::Tensor normalized_laplacian;
  SpatialBlock spatial;
  TemporalBlock temporal;
  NormStats norm;

  std::size_t n() const { return station_ids.size(); }

  std::vector<std::pair<std::string, ad::Tensor*>> parameters();
  std::vector<std::pair<std::string, const ad::Tensor*>> parameters() const;
  std::size_t parameter_count() const;
};

// Fresh model over `graph`. Weights are Glorot-uniform from `seed` (or all
// zero with config.zero_init); biases start at zero; the Chebyshev weights at
// (1, 0). Normalisation defaults to mean 0, std 1 until set.
EstgcnModel make_model(const ModelConfig& config, const StationGraph& graph,
                       const LaplacianBundle& bundle, std::uint64_t seed);

// Row-normalised neighbour-mean operator of a graph.
ad::Tensor neighbor_mean_matrix(const StationGraph& graph);

// Parameters bound to a tape in parameters() order.
struct BoundModel {
  std::vector<ad::Variable> all;
  std::vector<ad::Variable> neighbor_weights, self_weights;
  ad::Variable cheb, dense_w, dense_b;
  ad::Variable u_zf, u_hf, b_f, u_zi, u_hi, b_i, u_zm, u_hm, b_m, u_zo, u_ho, b_o;
  ad::Variable head_w, head_b;
  ad::Variable neighbor_mean;
  ad::Variable normalized_laplacian;
};

// Trainable parameters become tape variables; otherwise constants.
BoundModel bind(ad::Tape& tape, const EstgcnModel& model, bool trainable);

// Spatial block on normalised input laid out N x C (one column per
// timestamp). Returns N x C embeddings.
ad::Variable spatial_embed(const EstgcnModel& model, const BoundModel& p, ad::Variable x);

struct LstmState {
  ad::Variable h, c;
  // Set for the zero initial state; the hidden-to-gate products and the
  // forget path are then skipped since they contribute exactly nothing.
  bool at_start = false;
};

// One LSTM step for a batch of rows: z is rows x p, state rows x m.
LstmState lstm_step(const BoundModel& p, ad::Variable z, const LstmState& prev);

// Full forward pass. `inputs` holds normalised history laid out
// N x (samples * history_len), sample-major within each station row.
// Returns normalised forecasts with one row per (station, sample), row index
// station * samples + sample, and q columns.
ad::Variable forward(const EstgcnModel& model, const BoundModel& p, ad::Variable inputs,
                     std::size_t samples);

// Non-tape helpers mirroring the individual stages.
std::vector<double> spatial_forward(const EstgcnModel& model, const std::vector<double>& x_t);
std::vector<double> chebyshev_first_order(const std::vector<double>& x, const ad::Tensor& normalized_laplacian,
                                          double w0, double w1);

// history: rows are timestamps (oldest first), columns stations, original
// units; the last history_len() rows are used. Returns q x N in original units.
std::vector<std::vector<double>> forecast(const EstgcnModel& model,
                                          const std::vector<std::vector<double>>& history);

void save_checkpoint(const std::filesystem::path& path, const EstgcnModel& model);
EstgcnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace estgcn
