#include "estgcn/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "estgcn/config.hpp"
#include "estgcn/csv.hpp"
#include "estgcn/errors.hpp"
#include "json.hpp"

namespace estgcn {

using ad::Tensor;
using ad::Variable;
using json = nlohmann::json;

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng, bool zero) {
  Tensor t({rows, cols}, 0.0);
  if (zero) return t;
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& x : t.storage()) x = dist(rng);
  return t;
}

Variable activate(Variable v, Activation a) {
  switch (a) {
    case Activation::tanh: return ad::tanh(v);
    case Activation::sigmoid: return ad::sigmoid(v);
    case Activation::identity: return v;
  }
  return v;
}

Variable gate(Variable z, Variable h, Variable u_z, Variable u_h, Variable b) {
  return ad::add(ad::add(ad::matmul(z, ad::transpose(u_z)), ad::matmul(h, ad::transpose(u_h))), b);
}

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.storage()}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "tanh";
}

void ModelConfig::validate() const {
  if (k_layers < 1) throw ConfigError("k_layers must be >= 1");
  if (spatial_hidden < 1) throw ConfigError("spatial_hidden must be >= 1");
  if (lag < 1) throw ConfigError("lag must be >= 1");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (unroll_steps < 1) throw ConfigError("unroll_steps must be >= 1");
}

std::vector<std::pair<std::string, Tensor*>> EstgcnModel::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t k = 0; k < spatial.neighbor_weights.size(); ++k) {
    out.emplace_back("spatial.W" + std::to_string(k + 1), &spatial.neighbor_weights[k]);
    out.emplace_back("spatial.B" + std::to_string(k + 1), &spatial.self_weights[k]);
  }
  if (spatial.use_chebyshev) out.emplace_back("spatial.cheb", &spatial.cheb);
  out.emplace_back("spatial.dense_w", &spatial.dense_w);
  out.emplace_back("spatial.dense_b", &spatial.dense_b);
  auto& t = temporal;
  out.emplace_back("lstm.U_ZF", &t.u_zf);
  out.emplace_back("lstm.U_HF", &t.u_hf);
  out.emplace_back("lstm.B_F", &t.b_f);
  out.emplace_back("lstm.U_ZI", &t.u_zi);
  out.emplace_back("lstm.U_HI", &t.u_hi);
  out.emplace_back("lstm.B_I", &t.b_i);
  out.emplace_back("lstm.U_ZM", &t.u_zm);
  out.emplace_back("lstm.U_HM", &t.u_hm);
  out.emplace_back("lstm.B_M", &t.b_m);
  out.emplace_back("lstm.U_ZO", &t.u_zo);
  out.emplace_back("lstm.U_HO", &t.u_ho);
  out.emplace_back("lstm.B_O", &t.b_o);
  out.emplace_back("head.W", &t.head_w);
  out.emplace_back("head.b", &t.head_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> EstgcnModel::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, ptr] : const_cast<EstgcnModel*>(this)->parameters()) out.emplace_back(name, ptr);
  return out;
}

std::size_t EstgcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t->size();
  return n;
}

Tensor neighbor_mean_matrix(const StationGraph& graph) {
  const std::size_t n = graph.n();
  Tensor m({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = graph.neighbors(i);
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    for (std::size_t j : nb) m.at(i, j) = w;
  }
  return m;
}

EstgcnModel make_model(const ModelConfig& config, const StationGraph& graph,
                       const LaplacianBundle& bundle, std::uint64_t seed) {
  config.validate();
  const std::size_t n = graph.n();
  if (bundle.normalized.size() != n) throw InputError("Laplacian bundle does not match the graph");
  EstgcnModel m;
  m.config = config;
  for (const auto& s : graph.stations) m.station_ids.push_back(s.id);
  m.neighbor_mean = neighbor_mean_matrix(graph);
  m.normalized_laplacian = Tensor({n, n}, bundle.normalized.data());
  m.norm.mean.assign(n, 0.0);
  m.norm.std.assign(n, 1.0);

  std::mt19937_64 rng(seed);
  const bool zero = config.zero_init;
  auto& sp = m.spatial;
  sp.activation = config.activation;
  sp.use_chebyshev = config.chebyshev_prefilter;
  sp.cheb = Tensor::matrix(2, 1, {1.0, 0.0});
  std::size_t d_in = 1;
  for (std::size_t k = 0; k < config.k_layers; ++k) {
    sp.neighbor_weights.push_back(glorot(d_in, config.spatial_hidden, rng, zero));
    sp.self_weights.push_back(glorot(d_in, config.spatial_hidden, rng, zero));
    d_in = config.spatial_hidden;
  }
  sp.dense_w = glorot(d_in, 1, rng, zero);
  sp.dense_b = Tensor({1}, 0.0);

  auto& t = m.temporal;
  t.lag = config.lag;
  t.hidden = config.hidden;
  t.horizon = config.horizon;
  const std::size_t p = config.lag, h = config.hidden;
  for (auto* gate_params : {&t.u_zf, &t.u_zi, &t.u_zm, &t.u_zo}) *gate_params = glorot(h, p, rng, zero);
  for (auto* gate_params : {&t.u_hf, &t.u_hi, &t.u_hm, &t.u_ho}) *gate_params = glorot(h, h, rng, zero);
  for (auto* b : {&t.b_f, &t.b_i, &t.b_m, &t.b_o}) *b = Tensor({h}, 0.0);
  t.head_w = glorot(config.horizon, h, rng, zero);
  t.head_b = Tensor({config.horizon}, 0.0);
  return m;
}

BoundModel bind(ad::Tape& tape, const EstgcnModel& model, bool trainable) {
  BoundModel b;
  auto make = [&](const Tensor& t) {
    Variable v = trainable ? tape.variable(t) : tape.constant(t);
    b.all.push_back(v);
    return v;
  };
  const auto& sp = model.spatial;
  for (std::size_t k = 0; k < sp.neighbor_weights.size(); ++k) {
    b.neighbor_weights.push_back(make(sp.neighbor_weights[k]));
    b.self_weights.push_back(make(sp.self_weights[k]));
  }
  if (sp.use_chebyshev) b.cheb = make(sp.cheb);
  b.dense_w = make(sp.dense_w);
  b.dense_b = make(sp.dense_b);
  const auto& t = model.temporal;
  b.u_zf = make(t.u_zf);
  b.u_hf = make(t.u_hf);
  b.b_f = make(t.b_f);
  b.u_zi = make(t.u_zi);
  b.u_hi = make(t.u_hi);
  b.b_i = make(t.b_i);
  b.u_zm = make(t.u_zm);
  b.u_hm = make(t.u_hm);
  b.b_m = make(t.b_m);
  b.u_zo = make(t.u_zo);
  b.u_ho = make(t.u_ho);
  b.b_o = make(t.b_o);
  b.head_w = make(t.head_w);
  b.head_b = make(t.head_b);
  b.neighbor_mean = tape.constant(model.neighbor_mean);
  if (sp.use_chebyshev) b.normalized_laplacian = tape.constant(model.normalized_laplacian);
  return b;
}

Variable spatial_embed(const EstgcnModel& model, const BoundModel& p, Variable x) {
  const std::size_t n = model.n();
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() != n) {
    throw InputError("spatial input must have one row per station, got " + xv.shape_string());
  }
  const std::size_t c = xv.cols();
  Variable h = x;
  if (model.spatial.use_chebyshev) {
    Variable lx = ad::matmul(p.normalized_laplacian, x);
    Variable stacked = ad::concat({ad::reshape(x, {n * c, 1}), ad::reshape(lx, {n * c, 1})}, 1);
    h = ad::reshape(ad::matmul(stacked, p.cheb), {n, c});
  }
  std::size_t d_in = 1;
  for (std::size_t k = 0; k < p.neighbor_weights.size(); ++k) {
    const std::size_t d_out = p.neighbor_weights[k].value().cols();
    Variable agg = ad::matmul(p.neighbor_mean, h);
    Variable pre = ad::add(ad::matmul(ad::reshape(agg, {n * c, d_in}), p.neighbor_weights[k]),
                           ad::matmul(ad::reshape(h, {n * c, d_in}), p.self_weights[k]));
    h = ad::reshape(activate(pre, model.spatial.activation), {n, c * d_out});
    d_in = d_out;
  }
  Variable z = ad::add(ad::matmul(ad::reshape(h, {n * c, d_in}), p.dense_w), p.dense_b);
  return ad::reshape(z, {n, c});
}

LstmState lstm_step(const BoundModel& p, Variable z, const LstmState& prev) {
  if (prev.at_start) {
    auto input_gate = [&](Variable u_z, Variable b) { return ad::add(ad::matmul(z, ad::transpose(u_z)), b); };
    Variable i = ad::sigmoid(input_gate(p.u_zi, p.b_i));
    Variable m = ad::tanh(input_gate(p.u_zm, p.b_m));
    Variable o = ad::sigmoid(input_gate(p.u_zo, p.b_o));
    Variable c = ad::mul(i, m);
    return {ad::mul(o, ad::tanh(c)), c};
  }
  Variable f = ad::sigmoid(gate(z, prev.h, p.u_zf, p.u_hf, p.b_f));
  Variable i = ad::sigmoid(gate(z, prev.h, p.u_zi, p.u_hi, p.b_i));
  Variable m = ad::tanh(gate(z, prev.h, p.u_zm, p.u_hm, p.b_m));
  Variable o = ad::sigmoid(gate(z, prev.h, p.u_zo, p.u_ho, p.b_o));
  Variable c = ad::add(ad::mul(f, prev.c), ad::mul(i, m));
  Variable h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

Variable forward(const EstgcnModel& model, const BoundModel& p, Variable inputs, std::size_t samples) {
  const std::size_t n = model.n();
  const std::size_t w = model.config.history_len();
  const std::size_t lag = model.config.lag;
  const std::size_t m = model.config.hidden;
  if (samples == 0) throw InputError("forward needs at least one sample");
  if (inputs.value().rank() != 2 || inputs.value().rows() != n || inputs.value().cols() != samples * w) {
    throw InputError("forward input shape " + inputs.value().shape_string() + " does not match " +
                     std::to_string(n) + " stations x " + std::to_string(samples) + " samples x " +
                     std::to_string(w) + " timestamps");
  }
  Variable z = ad::reshape(spatial_embed(model, p, inputs), {n * samples, w});
  ad::Tape& tape = *inputs.tape();
  LstmState state{tape.constant(Tensor({n * samples, m}, 0.0)), tape.constant(Tensor({n * samples, m}, 0.0)), true};
  for (std::size_t u = 0; u < model.config.unroll_steps; ++u) {
    Variable lags = w == lag ? z : ad::slice(z, 1, u, u + lag);
    state = lstm_step(p, lags, state);
  }
  return ad::add(ad::matmul(state.h, ad::transpose(p.head_w)), p.head_b);
}

std::vector<double> spatial_forward(const EstgcnModel& model, const std::vector<double>& x_t) {
  if (x_t.size() != model.n()) {
    throw InputError("spatial_forward input has " + std::to_string(x_t.size()) + " values for " +
                     std::to_string(model.n()) + " stations");
  }
  ad::Tape tape;
  BoundModel p = bind(tape, model, false);
  Variable x = tape.constant(Tensor::matrix(model.n(), 1, x_t));
  return spatial_embed(model, p, x).value().storage();
}

std::vector<double> chebyshev_first_order(const std::vector<double>& x, const Tensor& normalized_laplacian,
                                          double w0, double w1) {
  const std::size_t n = x.size();
  if (normalized_laplacian.rank() != 2 || normalized_laplacian.rows() != n || normalized_laplacian.cols() != n) {
    throw InputError("Chebyshev filter: Laplacian shape does not match the input");
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lx = 0.0;
    for (std::size_t j = 0; j < n; ++j) lx += normalized_laplacian.at(i, j) * x[j];
    out[i] = w0 * x[i] + w1 * lx;
  }
  return out;
}

std::vector<std::vector<double>> forecast(const EstgcnModel& model,
                                          const std::vector<std::vector<double>>& history) {
  const std::size_t n = model.n();
  const std::size_t w = model.config.history_len();
  if (history.size() < w) {
    throw InputError("forecast needs " + std::to_string(w) + " history rows, got " +
                     std::to_string(history.size()));
  }
  Tensor x({n, w}, 0.0);
  const std::size_t first = history.size() - w;
  for (std::size_t r = 0; r < w; ++r) {
    const auto& row = history[first + r];
    if (row.size() != n) throw InputError("history row " + std::to_string(first + r) + " has wrong width");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(row[i])) {
        throw InputError("missing value in history for station " + model.station_ids[i] + " at row " +
                         std::to_string(first + r));
      }
      x.at(i, r) = (row[i] - model.norm.mean[i]) / model.norm.std[i];
    }
  }
  ad::Tape tape;
  BoundModel p = bind(tape, model, false);
  const Tensor& out = forward(model, p, tape.constant(std::move(x)), 1).value();
  const std::size_t q = model.config.horizon;
  std::vector<std::vector<double>> result(q, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < q; ++s) result[s][i] = out.at(i, s) * model.norm.std[i] + model.norm.mean[i];
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const EstgcnModel& model) {
  json j;
  j["format"] = "estgcn-checkpoint";
  j["version"] = 1;
  j["config"] = model_config_to_json(model.config);
  j["station_ids"] = model.station_ids;
  j["neighbor_mean"] = tensor_to_json(model.neighbor_mean);
  j["normalized_laplacian"] = tensor_to_json(model.normalized_laplacian);
  j["norm"] = {{"mean", model.norm.mean}, {"std", model.norm.std}};
  json params = json::object();
  for (const auto& [name, t] : model.parameters()) params[name] = tensor_to_json(*t);
  j["parameters"] = params;
  auto out = csv::open_for_write(path);
  out << j.dump(1) << '\n';
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

EstgcnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
    if (j.value("format", "") != "estgcn-checkpoint") throw InputError("not a checkpoint file: " + path.string());
    EstgcnModel m;
    m.config = model_config_from_json(j.at("config"));
    m.config.validate();
    m.station_ids = j.at("station_ids").get<std::vector<std::string>>();
    m.neighbor_mean = tensor_from_json(j.at("neighbor_mean"));
    m.normalized_laplacian = tensor_from_json(j.at("normalized_laplacian"));
    m.norm.mean = j.at("norm").at("mean").get<std::vector<double>>();
    m.norm.std = j.at("norm").at("std").get<std::vector<double>>();
    // Rebuild the structure, then overwrite every tensor from the file.
    auto& sp = m.spatial;
    sp.activation = m.config.activation;
    sp.use_chebyshev = m.config.chebyshev_prefilter;
    sp.neighbor_weights.resize(m.config.k_layers);
    sp.self_weights.resize(m.config.k_layers);
    m.temporal.lag = m.config.lag;
    m.temporal.hidden = m.config.hidden;
    m.temporal.horizon = m.config.horizon;
    if (!sp.use_chebyshev) sp.cheb = Tensor::matrix(2, 1, {1.0, 0.0});
    const auto& params = j.at("parameters");
    for (auto& [name, t] : m.parameters()) {
      if (!params.contains(name)) throw InputError("checkpoint is missing parameter " + name);
      *t = tensor_from_json(params.at(name));
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace estgcn
