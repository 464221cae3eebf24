#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace estgcn::optim {

// Returns f(x); when `grad` is non-null it must be filled with the gradient.
// Returning +inf marks x as infeasible, which the line search backs away from.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>* grad)>;

struct BfgsOptions {
  double gradient_tol = 1e-6;
  std::size_t max_iterations = 500;
  double armijo_c1 = 1e-4;
  double wolfe_c2 = 0.9;
};

struct BfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<double> gradient;
  std::size_t iterations = 0;
  bool converged = false;
  std::string message;
};

// Quasi-Newton minimisation with a dense inverse-Hessian approximation and a
// bracketing Wolfe line search. Does not throw on non-convergence; callers
// inspect `converged`.
BfgsResult minimize_bfgs(const Objective& f, std::vector<double> x0, const BfgsOptions& options = {});

}  // namespace estgcn::optim
