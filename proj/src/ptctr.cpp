#include "ptctr/ptctr.hpp"

#include <chrono>
#include <cmath>

#include <fmt/core.h>

namespace ptctr {

std::string_view to_string(Status status) {
  switch (status) {
    case Status::Converged:
      return "Converged";
    case Status::IterationLimit:
      return "IterationLimit";
    case Status::NumericalFailure:
      return "NumericalFailure";
  }
  return "Unknown";
}

void SolverConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (!(0.0 < eta_a && eta_a < eta_1 && eta_1 < eta_2 && eta_2 < 1.0)) {
    throw InvalidInput(fmt::format(
        "trust-region constants must satisfy 0 < eta_a < eta_1 < eta_2 < 1, got {}, {}, {}", eta_a,
        eta_1, eta_2));
  }
  if (!(gamma_1 > 1.0 && gamma_2 > 0.0 && gamma_2 < 1.0)) {
    throw InvalidInput(
        fmt::format("need gamma_1 > 1 > gamma_2 > 0, got {} and {}", gamma_1, gamma_2));
  }
  if (!(dt0_cap > 0.0) || !(max_dt > 0.0)) throw InvalidInput("time-step bounds must be positive");
  if (max_iterations < 1) throw InvalidInput("max_iterations must be positive");
  if (!(curvature_floor >= 0.0) || !(feasibility_base > 0.0)) {
    throw InvalidInput("curvature floor and feasibility base must be non-negative");
  }
  if (initial_dt && !(*initial_dt > 0.0)) throw InvalidInput("initial_dt must be positive");
  rank_policy.validate();
}

// ---------------------------------------------------------------------------
// ProjectedCurvature

ProjectedCurvature::ProjectedCurvature(const MatrixXd& B, const ReducedConstraints& rc) {
  const MatrixXd& V = rc.basis();
  C_.noalias() = B * V;
  G_.noalias() = V.transpose() * C_;
  MatrixXd PC = C_;
  PC.noalias() -= V * G_;
  E_.noalias() = PC.transpose() * PC;
}

ProjectedCurvature ProjectedCurvature::identity(const ReducedConstraints& rc) {
  ProjectedCurvature pc;
  const Index r = rc.rank();
  pc.C_ = rc.basis();
  pc.G_ = MatrixXd::Identity(r, r);
  pc.E_ = MatrixXd::Zero(r, r);
  return pc;
}

void ProjectedCurvature::update(const VectorXd& u, double alpha, const VectorXd& y, double beta,
                                const ReducedConstraints& rc) {
  const Index r = rc.rank();
  if (r == 0) return;
  const MatrixXd& V = rc.basis();
  const Index n = V.rows();

  // B' V = C + W Z^T with W = [u, y], Z = [-V^T u / alpha, V^T y / beta].
  MatrixXd W(n, 2);
  W.col(0) = u;
  W.col(1) = y;
  const MatrixXd VtW = V.transpose() * W;
  MatrixXd Z(r, 2);
  Z.col(0) = -VtW.col(0) / alpha;
  Z.col(1) = VtW.col(1) / beta;

  MatrixXd Wp = W;
  Wp.noalias() -= V * VtW;
  const MatrixXd CtWp = C_.transpose() * Wp;
  const Eigen::Matrix2d WptWp = Wp.transpose() * Wp;

  const MatrixXd F = CtWp * Z.transpose();
  E_ += F + F.transpose();
  E_.noalias() += Z * WptWp * Z.transpose();
  G_.noalias() += VtW * Z.transpose();
  C_.noalias() += W * Z.transpose();
}

bool ProjectedCurvature::reduced_positive(double tau) const {
  const Index r = G_.rows();
  if (r == 0) return true;
  MatrixXd M = G_ - E_ / tau;
  M.diagonal().array() += tau;
  Eigen::LLT<MatrixXd> llt(M);
  return llt.info() == Eigen::Success;
}

// ---------------------------------------------------------------------------
// Single-step operations

double initial_time_step(const VectorXd& p_g0, const SolverConfig& config) {
  const double norm = p_g0.norm();
  if (!(norm > 0.0)) return config.dt0_cap;
  return std::min(config.dt0_cap, 1.0 / norm);
}

bool pd_check(double dt, const MatrixXd& B, const ReducedConstraints& rc) {
  const double tau = 1.0 / dt;
  MatrixXd shifted = B;
  shifted.diagonal().array() += tau;
  Eigen::LLT<MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  return ProjectedCurvature(B, rc).reduced_positive(tau);
}

PredictorStep predictor_step(const SolverState& state, const ReducedConstraints& rc) {
  if (!pd_check(state.dt, state.B, rc)) {
    throw NumericalError("predictor requires a positive definite shifted system");
  }
  MatrixXd shifted = state.B;
  shifted.diagonal().array() += 1.0 / state.dt;
  Eigen::LLT<MatrixXd> llt(shifted);
  PredictorStep p;
  p.d = -llt.solve(state.p_g);
  p.step = rc.apply_projector(p.d);
  p.x_trial = state.x + p.step;
  return p;
}

double model_reduction(const VectorXd& p_g, const MatrixXd& B, const VectorXd& s) {
  const VectorXd Bs = B * s;
  return -(p_g.dot(s) + 0.5 * s.dot(Bs));
}

double trust_ratio(double f_k, double f_trial, double predicted, const SolverConfig& config) {
  if (!std::isfinite(f_trial)) return -1.0;
  return trust_ratio(f_k - f_trial, predicted, config);
}

double trust_ratio(double actual, double predicted, const SolverConfig& config) {
  if (!std::isfinite(actual) || !std::isfinite(predicted)) return -1.0;
  if (!(predicted > config.model_floor)) return -1.0;
  return actual / predicted;
}

double adjust_time_step(double dt, double rho, const SolverConfig& config) {
  const double deviation = std::abs(1.0 - rho);
  double next = dt;
  if (deviation <= config.eta_1) {
    next = config.gamma_1 * dt;
  } else if (deviation >= config.eta_2) {
    next = config.gamma_2 * dt;
  }
  return std::min(next, config.max_dt);
}

BfgsUpdate bfgs_update(MatrixXd& B, const VectorXd& s, const VectorXd& y, double curvature_floor) {
  BfgsUpdate out;
  out.u = B * s;
  out.alpha = s.dot(out.u);
  out.beta = y.dot(s);
  if (!(out.alpha > 0.0)) {
    out.outcome = UpdateOutcome::Corrupted;
    return out;
  }
  if (!(out.beta > curvature_floor * y.norm() * s.norm())) {
    out.outcome = UpdateOutcome::Skipped;
    return out;
  }
  const Index n = B.rows();
  const double inv_alpha = 1.0 / out.alpha;
  const double inv_beta = 1.0 / out.beta;
  const double* u = out.u.data();
  const double* yv = y.data();
  // Element-wise products commute, so B(i, j) and B(j, i) receive identical increments.
  for (Index j = 0; j < n; ++j) {
    double* col = B.col(j).data();
    const double uj = u[j];
    const double yj = yv[j];
    for (Index i = 0; i < n; ++i) col[i] += (yv[i] * yj) * inv_beta - (u[i] * uj) * inv_alpha;
  }
  out.outcome = UpdateOutcome::Applied;
  return out;
}

Residuals residuals(const RawConstraints& raw, const ReducedConstraints& rc, const VectorXd& x,
                    const VectorXd& gradient) {
  Residuals res;
  // Iterative refinement on the least-squares multiplier.
  VectorXd lambda = rc.multiplier(gradient);
  VectorXd r = gradient + raw.A.transpose() * lambda;
  res.kkt = r.lpNorm<Eigen::Infinity>();
  for (int pass = 0; pass < 3; ++pass) {
    lambda += rc.multiplier(r);
    r = gradient + raw.A.transpose() * lambda;
    res.kkt = std::min(res.kkt, r.lpNorm<Eigen::Infinity>());
  }
  const VectorXd Ax = raw.A * x;
  res.feasibility = (Ax - raw.b).lpNorm<Eigen::Infinity>();
  res.relaxed_feasibility = (Ax - raw.A * rc.particular_solution()).lpNorm<Eigen::Infinity>();
  return res;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

bool symmetric(const MatrixXd& M) {
  return (M - M.transpose()).norm() <= 1e-12 * (1.0 + M.norm());
}

}  // namespace

SolveReport solve(const ObjectiveProblem& problem, const SolverConfig& config,
                  const SolveObserver& observer) {
  problem.validate();
  const ReducedConstraints rc = reduce(problem.constraints, config.rank_policy);
  return solve(problem, rc, config, observer);
}

SolveReport solve(const ObjectiveProblem& problem, const ReducedConstraints& rc,
                  const SolverConfig& config, const SolveObserver& observer) {
  problem.validate();
  config.validate();
  const Index n = problem.dimension;
  if (rc.dimension() != n) {
    throw InvalidInput(
        fmt::format("reduced constraints act on {} variables, problem has {}", rc.dimension(), n));
  }
  if (config.initial_hessian) {
    const MatrixXd& B0 = *config.initial_hessian;
    if (B0.rows() != n || B0.cols() != n || !symmetric(B0)) {
      throw InvalidInput("initial_hessian must be a symmetric n x n matrix");
    }
  }

  const auto started = std::chrono::steady_clock::now();
  SolveReport report;
  report.rank = rc.rank();
  report.consistent = rc.consistent();
  report.feasibility_tolerance =
      feasibility_tolerance(problem.constraints.b, config.feasibility_base);

  auto eval_f = [&](const VectorXd& x) {
    ++report.function_evals;
    return problem.objective(x);
  };
  auto eval_g = [&](const VectorXd& x) {
    ++report.gradient_evals;
    return problem.gradient(x);
  };

  SolverState st;
  st.x = rc.project_point(problem.x0.value_or(VectorXd::Zero(n)));
  st.f = eval_f(st.x);
  st.g = eval_g(st.x);
  bool failed = false;
  bool hit_limit = false;
  if (!std::isfinite(st.f) || !st.g.allFinite()) {
    failed = true;
    report.note = "non-finite objective or gradient at the initial point";
  }

  ProjectedCurvature curvature;
  MatrixXd shifted;
  VectorXd d;
  if (!failed) {
    st.p_g = rc.apply_projector(st.g);
    if (config.initial_hessian) {
      st.B = *config.initial_hessian;
      curvature = ProjectedCurvature(st.B, rc);
    } else {
      st.B = MatrixXd::Identity(n, n);
      curvature = ProjectedCurvature::identity(rc);
    }
    st.dt = config.initial_dt.value_or(initial_time_step(st.p_g, config));
    shifted.resize(n, n);
  }

  while (!failed) {
    const double p_norm = st.p_g.lpNorm<Eigen::Infinity>();
    if (p_norm <= config.epsilon) break;
    if (st.k >= config.max_iterations) {
      hit_limit = true;
      break;
    }
    const double tau = 1.0 / st.dt;
    if (!std::isfinite(tau)) {
      failed = true;
      report.note = "time step underflow";
      break;
    }

    IterateRecord rec;
    rec.k = st.k;
    rec.f = st.f;
    rec.p_g_norm = p_norm;
    rec.dt = st.dt;

    shifted = st.B;
    shifted.diagonal().array() += tau;
    Eigen::LLT<Eigen::Ref<MatrixXd>> llt(shifted);
    rec.pd_passed = llt.info() == Eigen::Success && curvature.reduced_positive(tau);

    if (rec.pd_passed) {
      d = -llt.solve(st.p_g);
      const VectorXd step = rc.apply_projector(d);
      const VectorXd x_trial = st.x + step;
      rec.predicted_reduction = model_reduction(st.p_g, st.B, step);
      const double f_trial = eval_f(x_trial);
      rec.actual_reduction = problem.objective_change && std::isfinite(f_trial)
                                 ? problem.objective_change(st.x, x_trial)
                                 : st.f - f_trial;
      rec.rho = std::isfinite(f_trial)
                    ? trust_ratio(rec.actual_reduction, rec.predicted_reduction, config)
                    : -1.0;

      if (observer.on_iteration) {
        observer.on_iteration(IterationView{st, rc, d, step, rec.predicted_reduction, rec.rho});
      }

      if (rec.rho > config.eta_a) {
        VectorXd g_new = eval_g(x_trial);
        if (!g_new.allFinite()) {
          failed = true;
          report.note = "non-finite gradient at an accepted point";
          break;
        }
        VectorXd p_new = rc.apply_projector(g_new);
        const VectorXd y = p_new - st.p_g;
        const BfgsUpdate upd = bfgs_update(st.B, step, y, config.curvature_floor);
        if (upd.outcome == UpdateOutcome::Corrupted) {
          failed = true;
          report.note = "quasi-Newton matrix lost positive curvature (s^T B s <= 0)";
          break;
        }
        if (upd.outcome == UpdateOutcome::Applied) {
          curvature.update(upd.u, upd.alpha, y, upd.beta, rc);
          if (observer.on_update) observer.on_update(st.B);
        } else {
          ++report.skipped_updates;
        }
        st.x = x_trial;
        st.f = f_trial;
        st.g = std::move(g_new);
        st.p_g = std::move(p_new);
        rec.accepted = true;
      }
    }

    if (rec.accepted) {
      ++report.accepted_steps;
    } else {
      ++report.rejected_steps;
    }
    if (config.record_history) report.history.push_back(rec);
    st.dt = adjust_time_step(st.dt, rec.rho, config);
    ++st.k;
  }

  report.iterations = st.k;
  report.x_star = st.x;
  report.f_star = st.f;
  if (st.g.size() == n && st.g.allFinite()) {
    const Residuals res = residuals(problem.constraints, rc, st.x, st.g);
    report.kkt_residual = res.kkt;
    report.feasibility_residual = res.feasibility;
    report.relaxed_feasibility_residual = res.relaxed_feasibility;
  } else {
    report.kkt_residual = report.feasibility_residual = report.relaxed_feasibility_residual =
        std::numeric_limits<double>::infinity();
  }

  const double feasibility =
      rc.consistent() ? report.feasibility_residual : report.relaxed_feasibility_residual;
  const bool feasible = feasibility <= report.feasibility_tolerance;
  if (failed) {
    report.status = Status::NumericalFailure;
  } else if (feasible && (report.kkt_residual <= config.epsilon || rc.rank() == n)) {
    // With rank(A) = n every gradient lies in range(A^T), so stationarity
    // holds identically and the residual only measures roundoff.
    report.status = Status::Converged;
    if (report.kkt_residual > config.epsilon && report.note.empty()) {
      report.note = fmt::format("feasible point fixed by rank-{} constraints (kkt roundoff {:.3e})",
                                n, report.kkt_residual);
    }
  } else if (hit_limit) {
    report.status = Status::IterationLimit;
  } else {
    report.status = Status::NumericalFailure;
    report.note = fmt::format("stationary on the reduced plane but kkt {:.3e}, feasibility {:.3e}",
                              report.kkt_residual, feasibility);
  }
  if (!rc.consistent() && report.note.empty()) {
    report.note = fmt::format("inconsistent constraints relaxed to least squares (misfit {:.3e})",
                              rc.inconsistency());
  }

  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace ptctr
