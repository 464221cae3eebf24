#include "estgcn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "estgcn/errors.hpp"

namespace estgcn::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}


Tape& tape_of(std::initializer_list<Variable> vars) {
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw InputError("operation on an unbound variable");
    if (t == nullptr) t = v.tape();
    if (t != v.tape()) throw InputError("variables belong to different tapes");
  }
  return *t;
}

// Accumulating products for matmul and its backward pass, on row-major maps.
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<RowMajor> view(Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) { view(c).noalias() += view(a) * view(b); }

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) { view(c).noalias() += view(a) * view(b).transpose(); }

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) { view(c).noalias() += view(a).transpose() * view(b); }

template <typename Fwd, typename Deriv>
Variable unary(Variable a, const char* name, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of({a});
  Tensor out = a.value();
  for (double& x : out.storage()) x = fwd(x);
  return t.record(std::move(out), {a},
                  [deriv](const BackwardArgs& args) {
                    if (!args.in_grads[0]) return;
                    Tensor& g = *args.in_grads[0];
                    const Tensor& x = *args.in_values[0];
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      g[i] += args.out_grad[i] * deriv(x[i], args.out_value[i]);
                    }
                  },
                  name);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {
  if (rank() > 2) throw InputError("tensors of rank > 2 are not supported");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (rank() > 2) throw InputError("tensors of rank > 2 are not supported");
  if (data_.size() != product(shape_)) throw InputError("tensor data length does not match shape");
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

double Tensor::item() const {
  if (size() != 1) throw InputError("item() on a tensor with " + std::to_string(size()) + " elements");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// Variable / Tape

const Tensor& Variable::value() const { return tape_->value(*this); }
const Tensor& Variable::grad() const { return tape_->grad(*this); }

std::size_t Tape::check(Variable v) const {
  if (!(v.tape() == this && v.tape_id() < nodes_.size())) throw InputError("variable does not belong to this tape");
  return v.tape_id();
}

Variable Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in a leaf variable");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Variable Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Variable Tape::record(Tensor value, std::vector<Variable> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    const std::size_t id = check(in);
    n.inputs.push_back(id);
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Variable v) const { return nodes_[check(v)].value; }
const Tensor& Tape::grad(Variable v) const {
  const Node& n = nodes_[check(v)];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}
bool Tape::requires_grad(Variable v) const { return nodes_[check(v)].requires_grad; }

void Tape::backward(Variable root) {
  const std::size_t r = check(root);
  if (nodes_[r].value.size() != 1) throw InputError("backward needs a scalar root, got shape " +
                                           nodes_[r].value.shape_string());
  // Fresh adjoints per call so repeated calls add exactly one more copy.
  std::vector<Tensor> adj(r + 1);
  adj[r] = Tensor(nodes_[r].value.shape(), 1.0);
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t k = r + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (adj[k].size() == 0 && node.value.size() != 0) continue;
    if (!node.requires_grad) continue;
    if (node.backward) {
      in_values.clear();
      in_grads.clear();
      for (std::size_t in : node.inputs) {
        in_values.push_back(&nodes_[in].value);
        if (nodes_[in].requires_grad) {
          if (adj[in].size() == 0) adj[in] = Tensor(nodes_[in].value.shape(), 0.0);
          in_grads.push_back(&adj[in]);
        } else {
          in_grads.push_back(nullptr);
        }
      }
      node.backward(BackwardArgs{node.value, adj[k], in_values, in_grads});
    }
  }
  for (std::size_t k = 0; k <= r; ++k) {
    if (adj[k].size() == 0 || !nodes_[k].requires_grad) continue;
    if (nodes_[k].grad.size() != adj[k].size()) {
      nodes_[k].grad = std::move(adj[k]);
      continue;
    }
    auto& g = nodes_[k].grad.storage();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += adj[k][i];
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// Operations

Variable matmul(Variable a, Variable b) {
  Tape& t = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows())) throw InputError("matmul shape mismatch " + av.shape_string() + " * " + bv.shape_string());
  Tensor out({av.rows(), bv.cols()}, 0.0);
  gemm_nn(av, bv, out);
  return t.record(std::move(out), {a, b},
                  [](const BackwardArgs& args) {
                    if (args.in_grads[0]) gemm_nt(args.out_grad, *args.in_values[1], *args.in_grads[0]);
                    if (args.in_grads[1]) gemm_tn(*args.in_values[0], args.out_grad, *args.in_grads[1]);
                  },
                  "matmul");
}

Variable add(Variable a, Variable b) {
  Tape& t = tape_of({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return t.record(std::move(out), {a, b},
                    [](const BackwardArgs& args) {
                      for (auto* g : args.in_grads) {
                        if (!g) continue;
                        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.out_grad[i];
                      }
                    },
                    "add");
  }
  if (!(av.rank() == 2 && bv.rank() == 1 && bv.size() == av.cols())) throw InputError("add shape mismatch " + av.shape_string() + " + " + bv.shape_string());
  Tensor out = av;
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  return t.record(std::move(out), {a, b},
                  [rows, cols](const BackwardArgs& args) {
                    if (args.in_grads[0]) {
                      for (std::size_t i = 0; i < rows * cols; ++i) (*args.in_grads[0])[i] += args.out_grad[i];
                    }
                    if (args.in_grads[1]) {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) (*args.in_grads[1])[c] += args.out_grad[r * cols + c];
                    }
                  },
                  "add");
}

Variable sub(Variable a, Variable b) {
  Tape& t = tape_of({a, b});
  if (a.value().shape() != b.value().shape()) throw InputError("sub shape mismatch " + a.value().shape_string() + " - " + b.value().shape_string());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return t.record(std::move(out), {a, b},
                  [](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0])
                      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.out_grad[i];
                    if (auto* g = args.in_grads[1])
                      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= args.out_grad[i];
                  },
                  "sub");
}

Variable mul(Variable a, Variable b) {
  Tape& t = tape_of({a, b});
  if (a.value().shape() != b.value().shape()) throw InputError("mul shape mismatch " + a.value().shape_string() + " * " + b.value().shape_string());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.record(std::move(out), {a, b},
                  [](const BackwardArgs& args) {
                    const Tensor& x = *args.in_values[0];
                    const Tensor& y = *args.in_values[1];
                    if (auto* g = args.in_grads[0])
                      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.out_grad[i] * y[i];
                    if (auto* g = args.in_grads[1])
                      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.out_grad[i] * x[i];
                  },
                  "mul");
}

Variable scale(Variable a, double factor) {
  return unary(a, "scale", [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Variable sigmoid(Variable a) {
  return unary(a, "sigmoid", [](double x) { return sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Variable tanh(Variable a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Variable log(Variable a) {
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Variable sum(Variable a) {
  Tape& t = tape_of({a});
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return t.record(Tensor::scalar(s), {a},
                  [](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0]) {
                      const double go = args.out_grad[0];
                      for (double& x : g->storage()) x += go;
                    }
                  },
                  "sum");
}

Variable mean(Variable a) {
  Tape& t = tape_of({a});
  const std::size_t n = a.value().size();
  if (n == 0) throw InputError("mean of an empty tensor");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const double inv = 1.0 / static_cast<double>(n);
  return t.record(Tensor::scalar(s * inv), {a},
                  [inv](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0]) {
                      const double go = args.out_grad[0] * inv;
                      for (double& x : g->storage()) x += go;
                    }
                  },
                  "mean");
}

Variable concat(const std::vector<Variable>& parts, std::size_t axis) {
  if (parts.empty()) throw InputError("concat of no tensors");
  Tape& t = *parts.front().tape();
  for (const auto& p : parts) if (p.tape() != &t) throw InputError("variables belong to different tapes");
  const Tensor& first = parts.front().value();
  if (first.rank() == 0) throw InputError("concat of scalars");

  if (first.rank() == 1) {
    if (axis != 0) throw InputError("rank-1 concat only supports axis 0");
    std::vector<double> data;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
      if (p.value().rank() != 1) throw InputError("concat rank mismatch");
      offsets.push_back(data.size());
      data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    }
    return t.record(Tensor::vector(std::move(data)), parts,
                    [offsets](const BackwardArgs& args) {
                      for (std::size_t k = 0; k < args.in_grads.size(); ++k) {
                        if (auto* g = args.in_grads[k])
                          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.out_grad[offsets[k] + i];
                      }
                    },
                    "concat");
  }

  if (axis > 1) throw InputError("concat axis must be 0 or 1");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != 2) throw InputError("concat rank mismatch");
    if (axis == 0) {
      if (v.cols() != first.cols()) throw InputError("concat column mismatch " + v.shape_string());
      total += v.rows();
    } else {
      if (v.rows() != first.rows()) throw InputError("concat row mismatch " + v.shape_string());
      total += v.cols();
    }
  }
  const std::size_t rows = axis == 0 ? total : first.rows();
  const std::size_t cols = axis == 0 ? first.cols() : total;
  Tensor out({rows, cols}, 0.0);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    offsets.push_back(off);
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out.at(off + r, c) = v.at(r, c);
        else out.at(r, off + c) = v.at(r, c);
      }
    off += axis == 0 ? v.rows() : v.cols();
  }
  return t.record(std::move(out), parts,
                  [offsets, axis, cols](const BackwardArgs& args) {
                    for (std::size_t k = 0; k < args.in_grads.size(); ++k) {
                      Tensor* g = args.in_grads[k];
                      if (!g) continue;
                      const std::size_t gr = g->rows(), gc = g->cols();
                      for (std::size_t r = 0; r < gr; ++r)
                        for (std::size_t c = 0; c < gc; ++c) {
                          const std::size_t src = axis == 0 ? (offsets[k] + r) * cols + c : r * cols + offsets[k] + c;
                          (*g)[r * gc + c] += args.out_grad[src];
                        }
                    }
                  },
                  "concat");
}

Variable slice(Variable a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = tape_of({a});
  const Tensor& v = a.value();
  if (v.rank() == 0) throw InputError("slice of a scalar");
  if (axis >= v.rank()) throw InputError("slice axis out of range");
  if (!(begin < end && end <= v.shape()[axis])) throw InputError("slice range out of bounds");
  if (v.rank() == 1) {
    std::vector<double> data(v.data().begin() + static_cast<std::ptrdiff_t>(begin),
                             v.data().begin() + static_cast<std::ptrdiff_t>(end));
    return t.record(Tensor::vector(std::move(data)), {a},
                    [begin](const BackwardArgs& args) {
                      if (auto* g = args.in_grads[0])
                        for (std::size_t i = 0; i < args.out_grad.size(); ++i) (*g)[begin + i] += args.out_grad[i];
                    },
                    "slice");
  }
  const std::size_t rows = axis == 0 ? end - begin : v.rows();
  const std::size_t cols = axis == 1 ? end - begin : v.cols();
  const std::size_t src_cols = v.cols();
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  Tensor out({rows, cols}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = v.at(r0 + r, c0 + c);
  return t.record(std::move(out), {a},
                  [rows, cols, src_cols, r0, c0](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0])
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c)
                          (*g)[(r0 + r) * src_cols + c0 + c] += args.out_grad[r * cols + c];
                  },
                  "slice");
}

Variable transpose(Variable a) {
  Tape& t = tape_of({a});
  const Tensor& v = a.value();
  if (v.rank() != 2) throw InputError("transpose needs a matrix");
  const std::size_t rows = v.rows(), cols = v.cols();
  Tensor out({cols, rows}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = v[r * cols + c];
  return t.record(std::move(out), {a},
                  [rows, cols](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0])
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += args.out_grad[c * rows + r];
                  },
                  "transpose");
}

Variable reshape(Variable a, std::vector<std::size_t> shape) {
  Tape& t = tape_of({a});
  if (product(shape) != a.value().size()) throw InputError("reshape changes the element count");
  Tensor out(std::move(shape), a.value().storage());
  return t.record(std::move(out), {a},
                  [](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0])
                      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += args.out_grad[i];
                  },
                  "reshape");
}

Variable gather(Variable a, std::vector<std::size_t> indices, std::vector<std::size_t> shape) {
  Tape& t = tape_of({a});
  if (product(shape) != indices.size()) throw InputError("gather shape does not match index count");
  const Tensor& v = a.value();
  std::vector<double> data(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= v.size()) throw InputError("gather index out of range");
    data[k] = v[indices[k]];
  }
  return t.record(Tensor(std::move(shape), std::move(data)), {a},
                  [idx = std::move(indices)](const BackwardArgs& args) {
                    if (auto* g = args.in_grads[0])
                      for (std::size_t k = 0; k < idx.size(); ++k) (*g)[idx[k]] += args.out_grad[k];
                  },
                  "gather");
}

double grad_check(const ScalarFunction& f, const Tensor& point, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InputError("grad_check step must be > 0");
  std::vector<double> analytic;
  {
    Tape tape;
    Variable x = tape.variable(point);
    Variable y = f(tape, x);
    if (y.value().size() != 1) throw InputError("grad_check needs a scalar-valued function");
    tape.backward(y);
    analytic = x.grad().storage();
  }
  auto eval = [&](const Tensor& p) {
    Tape tape;
    Variable x = tape.variable(p);
    const double v = f(tape, x).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: function not finite at a perturbed point");
    return v;
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double fp = eval(probe);
    probe[i] = point[i] - h;
    const double fm = eval(probe);
    probe[i] = point[i];
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace estgcn::ad
