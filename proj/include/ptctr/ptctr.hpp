#pragma once

#include "ptctr/constraints.hpp"
#include "ptctr/problems.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ptctr {

/// Raised when the solver state becomes unusable (non-finite values, broken factorization).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Status { Converged, IterationLimit, NumericalFailure };

std::string_view to_string(Status status);

struct SolverConfig {
  double epsilon = 1e-6;  // tolerance on ||p_g||_inf
  double eta_a = 1e-6;    // acceptance floor for rho
  double eta_1 = 0.25;
  double gamma_1 = 2.0;
  double eta_2 = 0.75;
  double gamma_2 = 0.5;
  double dt0_cap = 1e-2;
  int max_iterations = 500;
  double max_dt = 1e8;

  double curvature_floor = 1e-10;  // skip BFGS when y's <= floor * |y| |s|
  double model_floor = 1e-300;     // predicted reductions below this give rho = -1
  double feasibility_base = 1e-6;  // feasibility tolerance is base * (1 + ||b||_inf)
  RankPolicy rank_policy;

  /// Replaces B_0 = I. Must be symmetric and n x n.
  std::optional<MatrixXd> initial_hessian;
  /// Replaces the min(dt0_cap, 1/||p_g0||) rule.
  std::optional<double> initial_dt;

  bool record_history = true;

  /// Throws InvalidInput when the ordering 0 < eta_a < eta_1 < eta_2 < 1 or
  /// gamma_1 > 1 > gamma_2 > 0 is violated.
  void validate() const;
};

struct SolverState {
  VectorXd x;
  double f = 0.0;
  VectorXd g;
  VectorXd p_g;
  MatrixXd B;
  double dt = 0.0;
  int k = 0;
};

struct IterateRecord {
  int k = 0;
  double f = 0.0;
  double p_g_norm = 0.0;
  double dt = 0.0;
  double rho = -1.0;  // -1 after a failed PD check or a degenerate model
  bool pd_passed = false;
  bool accepted = false;
  double predicted_reduction = 0.0;
  double actual_reduction = 0.0;
};

struct SolveReport {
  Status status = Status::NumericalFailure;
  VectorXd x_star;
  double f_star = 0.0;
  double kkt_residual = 0.0;          // ||g + A^T lambda||_inf with least-squares lambda
  double feasibility_residual = 0.0;  // ||A x - b||_inf
  /// ||A (x - x_part)||_inf; differs from feasibility_residual only for inconsistent A x = b.
  double relaxed_feasibility_residual = 0.0;
  double feasibility_tolerance = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
  int rejected_steps = 0;
  int skipped_updates = 0;
  int gradient_evals = 0;
  int function_evals = 0;
  double elapsed_seconds = 0.0;
  Index rank = 0;
  bool consistent = true;
  bool close = false;  // KKT unmet while feasible (penalty method)
  std::string note;
  std::vector<IterateRecord> history;

  bool converged() const { return status == Status::Converged; }
};

/// Incremental cache of C = B V_r, G = V_r^T B V_r and E = C^T P C.
///
/// (tau I + B - P B P) is positive definite iff the r x r matrix
/// tau I + G - E / tau is, so the second definiteness test of each iteration
/// costs O(r^3) instead of an n x n factorization. BFGS rank-two updates are
/// folded in with O(n r) work.
class ProjectedCurvature {
 public:
  ProjectedCurvature() = default;
  ProjectedCurvature(const MatrixXd& B, const ReducedConstraints& rc);

  /// Cache for B = I without forming B V.
  static ProjectedCurvature identity(const ReducedConstraints& rc);

  /// Applies B' = B - u u^T / alpha + y y^T / beta with u = B s.
  void update(const VectorXd& u, double alpha, const VectorXd& y, double beta,
              const ReducedConstraints& rc);

  /// Cholesky test of tau I + G - E / tau.
  bool reduced_positive(double tau) const;

  const MatrixXd& bv() const { return C_; }
  const MatrixXd& g() const { return G_; }
  const MatrixXd& e() const { return E_; }

 private:
  MatrixXd C_;
  MatrixXd G_;
  MatrixXd E_;
};

/// min(dt0_cap, 1/||p_g0||_2); returns dt0_cap for a zero gradient.
double initial_time_step(const VectorXd& p_g0, const SolverConfig& config = {});

/// True iff (1/dt) I + B and (1/dt) I + B - P B P are both positive definite.
bool pd_check(double dt, const MatrixXd& B, const ReducedConstraints& rc);

struct PredictorStep {
  VectorXd d;     // solution of (1/dt I + B) d = -p_g
  VectorXd step;  // P d
  VectorXd x_trial;
};

/// Solves the shifted system with a fresh factorization and pulls the step back
/// onto the constraint plane. Throws NumericalError if pd_check fails.
PredictorStep predictor_step(const SolverState& state, const ReducedConstraints& rc);

/// q(x_k) - q(x_k + s) = -(p_g^T s + s^T B s / 2).
double model_reduction(const VectorXd& p_g, const MatrixXd& B, const VectorXd& s);

/// (f_k - f_trial) / predicted, or -1 for a non-finite trial value or a
/// predicted reduction at or below config.model_floor.
double trust_ratio(double f_k, double f_trial, double predicted, const SolverConfig& config = {});

/// Ratio from an already computed actual reduction f_k - f_trial.
double trust_ratio(double actual, double predicted, const SolverConfig& config);

/// Grows, keeps or shrinks dt according to |1 - rho|, clamped to max_dt.
double adjust_time_step(double dt, double rho, const SolverConfig& config = {});

enum class UpdateOutcome { Applied, Skipped, Corrupted };

struct BfgsUpdate {
  UpdateOutcome outcome = UpdateOutcome::Skipped;
  VectorXd u;  // B_k s
  double alpha = 0.0;  // s^T B_k s
  double beta = 0.0;   // y^T s
};

/// In-place BFGS update of B. B stays exactly symmetric. Corrupted means
/// s^T B s <= 0 and leaves B untouched.
BfgsUpdate bfgs_update(MatrixXd& B, const VectorXd& s, const VectorXd& y,
                       double curvature_floor = 1e-10);

/// Data exposed to observers for every iteration that passed the PD check.
struct IterationView {
  const SolverState& state;  // B is still B_k here
  const ReducedConstraints& rc;
  const VectorXd& d;
  const VectorXd& step;
  double predicted_reduction;
  double rho;
};

struct SolveObserver {
  std::function<void(const IterationView&)> on_iteration;
  /// Called with B_{k+1} after every applied BFGS update.
  std::function<void(const MatrixXd&)> on_update;
};

/// KKT and feasibility residuals of x for the original data A x = b.
struct Residuals {
  double kkt = 0.0;
  double feasibility = 0.0;
  double relaxed_feasibility = 0.0;
};
Residuals residuals(const RawConstraints& raw, const ReducedConstraints& rc, const VectorXd& x,
                    const VectorXd& gradient);

/**
 * Continuation method with trust-region time-stepping.
 *
 * Each iteration solves (1/dt I + B) d = -P g, moves along P d, accepts the
 * trial point when rho > eta_a, updates B by BFGS on projected-gradient
 * differences and adapts dt from rho. Iterates stay on the reduced constraint
 * plane. Throws InvalidInput for malformed problems or configuration.
 */
SolveReport solve(const ObjectiveProblem& problem, const SolverConfig& config = {},
                  const SolveObserver& observer = {});

/// Same as solve() with a precomputed reduction of problem.constraints.
SolveReport solve(const ObjectiveProblem& problem, const ReducedConstraints& rc,
                  const SolverConfig& config, const SolveObserver& observer = {});

}  // namespace ptctr
