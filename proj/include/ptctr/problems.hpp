#pragma once

#include "ptctr/constraints.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ptctr {

using ObjectiveFn = std::function<double(const VectorXd&)>;
using GradientFn = std::function<VectorXd(const VectorXd&)>;
using HessianFn = std::function<MatrixXd(const VectorXd&)>;
/// f(x) - f(x_trial), evaluated without the cancellation of two large values.
using ChangeFn = std::function<double(const VectorXd& x, const VectorXd& x_trial)>;

/// A published optimal value together with where it was printed.
struct ReferenceValue {
  double value = 0.0;
  std::string source;
};

/// min f(x) subject to A x = b.
struct ObjectiveProblem {
  std::string name;
  Index dimension = 0;
  ObjectiveFn objective;
  GradientFn gradient;
  HessianFn hessian;  // optional; empty when no analytic Hessian exists
  ChangeFn objective_change;  // optional; used for the actual reduction in rho
  RawConstraints constraints;
  std::optional<VectorXd> x0;
  std::optional<ReferenceValue> known_f_star;

  /// Throws InvalidInput when callables are missing or sizes disagree.
  void validate() const;
};

namespace problems {

inline constexpr int kExampleCount = 10;

/// Dimension presets of the published benchmark runs ("paper1000", "paper5000").
enum class Scale { Paper1000, Paper5000 };

/// Per-example dimension of a preset. Example 2 uses 1200 / 4800, the sizes
/// that reproduce its published values.
Index paper_dimension(int id, Scale scale);

/// Smallest admissible dimension step for an example (2, 3 or 6).
Index block_multiple(int id);

/// Published optimal value and the number of printed significant digits.
struct TableEntry {
  double f_star;
  int significant_digits;
  int accepted_steps;  // reported accepted steps of the continuation solver
  bool pfm_close;      // penalty method marked "(close)" at the paper1000 scale
  std::string text;
};
TableEntry table_entry(int id, Scale scale);

/// Constraint rows per example at dimension n (n/2, n/3 or 2n/3).
Index constraint_rows(int id, Index n);

/// Builds benchmark example `id` (1..10) at dimension n with its stated
/// initial point. Throws InvalidInput for an unknown id or indivisible n.
ObjectiveProblem make_example(int id, Index n);

/// "ex1".."ex10" -> 1..10; throws InvalidInput otherwise.
int parse_example_id(const std::string& name);
std::string example_name(int id);

/// Closed-form block minimiser of the purely quadratic examples.
struct BlockOracle {
  VectorXd block_minimizer;
  double block_value = 0.0;
  Index block_count = 0;

  double f_star() const { return block_value * static_cast<double>(block_count); }
  VectorXd x_star() const;
};

/// Per-block KKT solution for Examples 1 and 3; throws for other ids.
BlockOracle analytic_oracle(int id, Index n);

}  // namespace problems
}  // namespace ptctr
