#include "ptctr/baselines.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <fmt/core.h>

namespace ptctr::baselines {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Counters {
  int function_evals = 0;
  int gradient_evals = 0;
};

struct InnerResult {
  VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Symmetric inverse BFGS update H+ = (I - r s y^T) H (I - r y s^T) + r s s^T.
void inverse_bfgs_update(MatrixXd& H, const VectorXd& s, const VectorXd& y, double sy) {
  const VectorXd Hy = H * y;
  const double r = 1.0 / sy;
  const double coeff = r * r * y.dot(Hy) + r;
  const Index n = H.rows();
  for (Index j = 0; j < n; ++j) {
    double* col = H.col(j).data();
    for (Index i = 0; i < n; ++i) {
      col[i] += coeff * (s[i] * s[j]) - r * (Hy[i] * s[j] + s[i] * Hy[j]);
    }
  }
}

// Unconstrained BFGS minimisation of f(x) + sigma ||A x - b||^2.
InnerResult minimize_penalty(const ObjectiveProblem& problem, double sigma, VectorXd x,
                             const PenaltyConfig& config, Counters& counters) {
  const MatrixXd& A = problem.constraints.A;
  const VectorXd& b = problem.constraints.b;
  const Index n = problem.dimension;

  auto evaluate = [&](const VectorXd& z, VectorXd& grad) {
    ++counters.function_evals;
    ++counters.gradient_evals;
    const VectorXd r = A * z - b;
    grad = problem.gradient(z);
    grad.noalias() += (2.0 * sigma) * (A.transpose() * r);
    return problem.objective(z) + sigma * r.squaredNorm();
  };

  InnerResult out;
  VectorXd grad;
  double value = evaluate(x, grad);
  MatrixXd H = MatrixXd::Identity(n, n);
  bool identity = true;
  VectorXd grad_new;

  while (true) {
    out.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(value) || !std::isfinite(out.gradient_norm)) break;
    if (out.gradient_norm <= config.inner_tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= config.inner_max_iterations) break;

    VectorXd dir = -(H * grad);
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      H.setIdentity();
      identity = true;
      dir = -grad;
      slope = grad.dot(dir);
    }

    double step = config.initial_step;
    VectorXd x_new;
    double value_new = 0.0;
    bool found = false;
    while (step > 1e-20) {
      x_new = x + step * dir;
      value_new = evaluate(x_new, grad_new);
      if (std::isfinite(value_new) && value_new <= value + config.sufficient_decrease * step * slope) {
        found = true;
        break;
      }
      step *= config.backtrack;
    }
    if (!found) {
      if (identity) break;  // stagnation along steepest descent
      H.setIdentity();
      identity = true;
      continue;
    }

    const VectorXd s = x_new - x;
    const VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity) H *= sy / y.squaredNorm();
      inverse_bfgs_update(H, s, y, sy);
      identity = false;
    }
    x = std::move(x_new);
    grad.swap(grad_new);
    value = value_new;
    ++out.iterations;
  }
  out.x = std::move(x);
  out.value = value;
  return out;
}

bool feasible(const Residuals& res, const ReducedConstraints& rc, double tolerance) {
  return (rc.consistent() ? res.feasibility : res.relaxed_feasibility) <= tolerance;
}

}  // namespace

void PenaltyConfig::validate() const {
  if (!(growth > 1.0)) throw InvalidInput("penalty growth must exceed 1");
  if (!(sigma0 > 0.0)) throw InvalidInput("initial penalty must be positive");
  if (!(inner_tol > 0.0) || !(kkt_tol > 0.0) || !(feasibility_base > 0.0)) {
    throw InvalidInput("penalty tolerances must be positive");
  }
  if (max_outer < 1 || inner_max_iterations < 1) {
    throw InvalidInput("penalty iteration limits must be positive");
  }
  if (!(backtrack > 0.0 && backtrack < 1.0) ||
      !(sufficient_decrease > 0.0 && sufficient_decrease < 1.0) || !(initial_step > 0.0)) {
    throw InvalidInput("invalid line-search parameters");
  }
}

SolveReport penalty_solve(const ObjectiveProblem& problem, const PenaltyConfig& config,
                          std::vector<PenaltyOuter>* trace) {
  problem.validate();
  config.validate();
  const auto started = Clock::now();
  const ReducedConstraints rc = reduce(problem.constraints);
  const Index n = problem.dimension;

  SolveReport report;
  report.rank = rc.rank();
  report.consistent = rc.consistent();
  report.feasibility_tolerance =
      feasibility_tolerance(problem.constraints.b, config.feasibility_base);

  Counters counters;
  VectorXd x = problem.x0.value_or(VectorXd::Zero(n));
  double sigma = config.sigma0;
  bool converged = false;
  bool broken = false;
  int outer = 0;
  Residuals res;
  double f = 0.0;

  for (; outer < config.max_outer; ++outer) {
    InnerResult inner = minimize_penalty(problem, sigma, std::move(x), config, counters);
    x = std::move(inner.x);
    report.iterations += inner.iterations;
    f = problem.objective(x);
    const VectorXd g = problem.gradient(x);
    ++counters.function_evals;
    ++counters.gradient_evals;
    if (!std::isfinite(f) || !g.allFinite()) {
      broken = true;
      break;
    }
    res = residuals(problem.constraints, rc, x, g);
    if (trace) {
      trace->push_back({sigma, f, inner.value, inner.gradient_norm, res.kkt, res.feasibility,
                        inner.iterations, inner.converged});
    }
    if (res.kkt <= config.kkt_tol && feasible(res, rc, report.feasibility_tolerance)) {
      converged = true;
      ++outer;
      break;
    }
    sigma *= config.growth;
  }

  report.x_star = x;
  report.f_star = f;
  report.kkt_residual = res.kkt;
  report.feasibility_residual = res.feasibility;
  report.relaxed_feasibility_residual = res.relaxed_feasibility;
  report.accepted_steps = report.iterations;
  report.function_evals = counters.function_evals;
  report.gradient_evals = counters.gradient_evals;
  if (broken) {
    report.status = Status::NumericalFailure;
    report.note = "non-finite objective or gradient";
  } else if (converged) {
    report.status = Status::Converged;
  } else {
    report.status = Status::IterationLimit;
    report.close = feasible(res, rc, report.feasibility_tolerance);
  }
  if (report.note.empty()) {
    report.note = fmt::format("{} subproblems, final sigma {:.0e}", outer, sigma);
  }
  report.elapsed_seconds = seconds_since(started);
  return report;
}

double symmetric_condition(const MatrixXd& H) {
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H, Eigen::EigenvaluesOnly);
  const VectorXd magnitudes = eig.eigenvalues().cwiseAbs();
  const double largest = magnitudes.maxCoeff();
  const double smallest = magnitudes.minCoeff();
  const double floor = std::numeric_limits<double>::epsilon() * static_cast<double>(H.rows());
  if (!(largest > 0.0) || smallest <= floor * largest) {
    return std::numeric_limits<double>::infinity();
  }
  return largest / smallest;
}

MatrixXd objective_hessian(const ObjectiveProblem& problem, const VectorXd& x) {
  if (problem.hessian) return problem.hessian(x);
  const Index n = x.size();
  MatrixXd H(n, n);
  VectorXd probe = x;
  for (Index j = 0; j < n; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(x(j)));
    probe(j) = x(j) + h;
    const VectorXd plus = problem.gradient(probe);
    probe(j) = x(j) - h;
    const VectorXd minus = problem.gradient(probe);
    probe(j) = x(j);
    H.col(j) = (plus - minus) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

std::vector<ConditionSample> penalty_conditioning(const ObjectiveProblem& problem,
                                                  const std::vector<double>& sigma_list,
                                                  const std::optional<VectorXd>& probe) {
  problem.validate();
  if (probe && probe->size() != problem.dimension) {
    throw InvalidInput("probe point has the wrong dimension");
  }
  const MatrixXd& A = problem.constraints.A;
  const MatrixXd AtA = A.transpose() * A;
  PenaltyConfig inner_config;
  Counters counters;
  VectorXd x = problem.x0.value_or(VectorXd::Zero(problem.dimension));

  std::vector<ConditionSample> out;
  out.reserve(sigma_list.size());
  for (double sigma : sigma_list) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw InvalidInput(fmt::format("penalty parameter must be finite and non-negative, got {}", sigma));
    }
    VectorXd at;
    if (probe) {
      at = *probe;
    } else {
      x = minimize_penalty(problem, sigma, x, inner_config, counters).x;
      at = x;
    }
    const MatrixXd H = objective_hessian(problem, at) + (2.0 * sigma) * AtA;
    out.push_back({sigma, symmetric_condition(H)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projected gradient flow

void FlowConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0) || !(tolerance > 0.0) || !(feasibility_base > 0.0)) {
    throw InvalidInput("flow tolerances must be positive");
  }
  if (max_steps < 1) throw InvalidInput("flow step budget must be positive");
}

SolveReport gradient_flow_solve(const ObjectiveProblem& problem, const FlowConfig& config) {
  problem.validate();
  config.validate();
  const auto started = Clock::now();
  const ReducedConstraints rc = reduce(problem.constraints);
  const Index n = problem.dimension;

  SolveReport report;
  report.rank = rc.rank();
  report.consistent = rc.consistent();
  report.feasibility_tolerance =
      feasibility_tolerance(problem.constraints.b, config.feasibility_base);

  auto field = [&](const VectorXd& z, VectorXd& g) {
    ++report.gradient_evals;
    g = problem.gradient(z);
    return VectorXd(-rc.apply_projector(g));
  };

  VectorXd x = rc.project_point(problem.x0.value_or(VectorXd::Zero(n)));
  VectorXd g;
  VectorXd k1 = field(x, g);
  double f = problem.objective(x);
  ++report.function_evals;
  double h = initial_time_step(k1);
  bool failed = !std::isfinite(f) || !k1.allFinite();
  bool done = false;

  VectorXd scratch;
  int attempts = 0;
  while (!failed) {
    if (k1.lpNorm<Eigen::Infinity>() <= config.tolerance) {
      done = true;
      break;
    }
    if (attempts >= config.max_steps) break;
    ++attempts;

    const VectorXd k2 = field(x + 0.5 * h * k1, scratch);
    const VectorXd k3 = field(x + 0.75 * h * k2, scratch);
    VectorXd x_new = x + h * ((2.0 / 9.0) * k1 + (1.0 / 3.0) * k2 + (4.0 / 9.0) * k3);
    const VectorXd k4 = field(x_new, scratch);
    const VectorXd error = h * ((-5.0 / 72.0) * k1 + (1.0 / 12.0) * k2 + (1.0 / 9.0) * k3 -
                                (1.0 / 8.0) * k4);
    const VectorXd scale =
        (config.atol + config.rtol * x.cwiseAbs().cwiseMax(x_new.cwiseAbs()).array()).matrix();
    const double err = error.cwiseQuotient(scale).lpNorm<Eigen::Infinity>();

    bool accept = std::isfinite(err) && err <= 1.0;
    double f_new = f;
    if (accept) {
      x_new = rc.project_point(x_new);
      f_new = problem.objective(x_new);
      ++report.function_evals;
      accept = std::isfinite(f_new) && f_new <= f;
    }
    const double factor =
        std::isfinite(err) && err > 0.0 ? 0.9 * std::pow(err, -1.0 / 3.0) : 5.0;
    if (accept) {
      x = std::move(x_new);
      f = f_new;
      k1 = field(x, g);
      failed = !k1.allFinite();
      ++report.accepted_steps;
      h *= std::clamp(factor, 0.2, 5.0);
    } else {
      ++report.rejected_steps;
      h *= std::clamp(factor, 0.1, 0.5);
      if (!(h > 0.0)) failed = true;
    }
  }

  report.iterations = attempts;
  report.x_star = x;
  report.f_star = f;
  if (g.size() == n && g.allFinite()) {
    const Residuals res = residuals(problem.constraints, rc, x, g);
    report.kkt_residual = res.kkt;
    report.feasibility_residual = res.feasibility;
    report.relaxed_feasibility_residual = res.relaxed_feasibility;
  }
  const double feasibility =
      rc.consistent() ? report.feasibility_residual : report.relaxed_feasibility_residual;
  if (failed) {
    report.status = Status::NumericalFailure;
    report.note = "non-finite flow or step-size underflow";
  } else if (done && report.kkt_residual <= config.tolerance &&
             feasibility <= report.feasibility_tolerance) {
    report.status = Status::Converged;
  } else {
    report.status = Status::IterationLimit;
  }
  report.note += report.note.empty() ? "" : "; ";
  report.note += "explicit Bogacki-Shampine 3(2) integrator";
  report.elapsed_seconds = seconds_since(started);
  return report;
}

}  // namespace ptctr::baselines
