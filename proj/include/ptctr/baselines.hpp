#pragma once

#include "ptctr/ptctr.hpp"

#include <optional>
#include <vector>

namespace ptctr::baselines {

/// Sequential penalty method: minimise f(x) + sigma ||A x - b||^2 for growing sigma.
struct PenaltyConfig {
  double sigma0 = 1.0;
  double growth = 10.0;
  double inner_tol = 1e-8;  // ||grad P_sigma||_inf
  double kkt_tol = 1e-6;
  int max_outer = 12;
  int inner_max_iterations = 400;  // per subproblem
  double feasibility_base = 1e-6;

  // Armijo backtracking.
  double initial_step = 1.0;
  double backtrack = 0.5;
  double sufficient_decrease = 1e-4;

  void validate() const;
};

/// One completed subproblem.
struct PenaltyOuter {
  double sigma = 0.0;
  double f = 0.0;
  double penalty_value = 0.0;
  double gradient_norm = 0.0;  // ||grad P_sigma||_inf at the subproblem solution
  double kkt = 0.0;
  double feasibility = 0.0;
  int inner_iterations = 0;
  bool inner_converged = false;
};

/**
 * Penalty function method. Each subproblem is solved by inverse BFGS with
 * Armijo backtracking, warm-started from the previous solution. Stops when
 * the KKT and feasibility residuals pass or after max_outer subproblems.
 * report.close is set when feasibility passes but the KKT residual does not.
 */
SolveReport penalty_solve(const ObjectiveProblem& problem, const PenaltyConfig& config = {},
                          std::vector<PenaltyOuter>* trace = nullptr);

struct ConditionSample {
  double sigma = 0.0;
  double condition = 0.0;  // +inf for a singular Hessian
};

/// 2-norm condition number of H_sigma = hess f(x) + 2 sigma A^T A.
/// With no probe point the Hessian is taken at each penalty minimiser, the
/// subproblems being chained through sigma_list in the given order.
std::vector<ConditionSample> penalty_conditioning(const ObjectiveProblem& problem,
                                                  const std::vector<double>& sigma_list,
                                                  const std::optional<VectorXd>& probe = {});

/// Symmetric 2-norm condition number max|lambda| / min|lambda|; +inf when singular.
double symmetric_condition(const MatrixXd& H);

/// Analytic Hessian when available, otherwise central differences of the gradient.
MatrixXd objective_hessian(const ObjectiveProblem& problem, const VectorXd& x);

struct FlowConfig {
  double rtol = 1e-6;
  double atol = 1e-6;
  double tolerance = 1e-6;  // stop at ||P grad f||_inf <= tolerance
  int max_steps = 100000;   // attempted steps
  double feasibility_base = 1e-6;

  void validate() const;
};

/**
 * Integrates the projected gradient flow dx/dt = -P grad f(x) with the
 * Bogacki-Shampine 3(2) pair. Steps are accepted only when the local error
 * passes and f does not increase; every accepted point is re-projected.
 */
SolveReport gradient_flow_solve(const ObjectiveProblem& problem, const FlowConfig& config = {});

}  // namespace ptctr::baselines
