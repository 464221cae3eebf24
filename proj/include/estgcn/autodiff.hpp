#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace estgcn::ad {

// Dense row-major float64 array of rank 0, 1 or 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  // Rank-2 extents; a rank-1 tensor reads as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double item() const;
  bool all_finite() const;
  void fill(double v);
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Variable {
 public:
  Variable() = default;
  Variable(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t tape_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Arguments handed to a node's backward rule. `in_grads[i]` is null when the
// i-th input does not need a gradient; otherwise the rule accumulates into it.
struct BackwardArgs {
  const Tensor& out_value;
  const Tensor& out_grad;
  std::span<const Tensor* const> in_values;
  std::span<Tensor* const> in_grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

// Records forward operations in creation order, which is a topological order.
// Single-threaded; distinct tapes are independent.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Variable variable(Tensor value);
  Variable constant(Tensor value);
  // Appends a derived node. Throws NumericError if `value` is not finite.
  Variable record(Tensor value, std::vector<Variable> inputs, BackwardFn backward, const char* op);

  const Tensor& value(Variable v) const;
  const Tensor& grad(Variable v) const;
  bool requires_grad(Variable v) const;
  std::size_t size() const { return nodes_.size(); }

  // Adds d(root)/d(node) into every reachable node's gradient. Calling it
  // again without zero_grad() accumulates a second copy.
  void backward(Variable root);
  void zero_grad();

 private:
  struct Node {
    Tensor value;
    mutable Tensor grad;  // allocated on first use
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::size_t check(Variable v) const;

  std::vector<Node> nodes_;
};

Variable matmul(Variable a, Variable b);
// Same-shape addition, or a matrix plus a row vector broadcast to every row.
Variable add(Variable a, Variable b);
Variable sub(Variable a, Variable b);
Variable mul(Variable a, Variable b);
Variable scale(Variable a, double factor);
Variable sigmoid(Variable a);
Variable tanh(Variable a);
Variable log(Variable a);
Variable mean(Variable a);
Variable sum(Variable a);
// Rank-2 concatenation along axis 0 (stack rows) or 1 (append columns);
// rank-1 inputs concatenate end to end.
Variable concat(const std::vector<Variable>& parts, std::size_t axis);
Variable slice(Variable a, std::size_t axis, std::size_t begin, std::size_t end);
Variable transpose(Variable a);
Variable reshape(Variable a, std::vector<std::size_t> shape);
// out.flat[k] = a.flat[indices[k]]; backward scatter-adds.
Variable gather(Variable a, std::vector<std::size_t> indices, std::vector<std::size_t> shape);

double sigmoid(double x);

using ScalarFunction = std::function<Variable(Tape&, Variable)>;

// Largest |analytic - central difference| / max(1, |central difference|)
// over all coordinates of `point`.
double grad_check(const ScalarFunction& f, const Tensor& point, double h);

}  // namespace estgcn::ad
