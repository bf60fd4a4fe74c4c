#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ptctr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised for malformed inputs: dimension mismatches, invalid ids, degenerate data.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear equality constraints A x = b as supplied by the caller. The data may
/// be noisy, rank deficient or inconsistent.
struct RawConstraints {
  MatrixXd A;
  VectorXd b;

  Index rows() const { return A.rows(); }
  Index cols() const { return A.cols(); }

  /// Throws InvalidInput unless m >= 1, n >= 1 and b has m entries.
  void validate() const;
};

/// Singular values at or below relative_threshold * sigma_1 are treated as zero.
struct RankPolicy {
  double relative_threshold = 1e-10;

  void validate() const;
};

/**
 * Orthonormal reduction V_r^T x = b_r of a linear system A x = b.
 *
 * V_r holds the leading r right singular vectors of A, b_r = (U^T b)(1:r) ./ sigma(1:r).
 * When A x = b is inconsistent the reduced system is its least-squares relaxation;
 * inconsistency() records how far the particular solution V_r b_r misses b.
 *
 * The projector P = I - V_r V_r^T is never formed in the solver path; use
 * apply_projector() which costs O(n r).
 */
class ReducedConstraints {
 public:
  ReducedConstraints() = default;

  /// No constraints at all: r = 0 and P = I.
  static ReducedConstraints unconstrained(Index n);

  Index dimension() const { return basis_.rows(); }
  Index rank() const { return basis_.cols(); }
  Index source_rows() const { return left_basis_.rows(); }

  /// V_r, n x r with orthonormal columns.
  const MatrixXd& basis() const { return basis_; }
  /// U_r restricted to the retained singular triplets, m x r.
  const MatrixXd& left_basis() const { return left_basis_; }
  const VectorXd& rhs() const { return rhs_; }
  /// Retained singular values, non-increasing and strictly positive.
  const VectorXd& singular_values() const { return singular_values_; }
  /// Largest singular value of A including discarded ones (sigma_1).
  double largest_singular_value() const { return sigma_max_; }

  /// ||A x_part - b||_inf for the minimum-norm point x_part = V_r b_r.
  double inconsistency() const { return inconsistency_; }
  bool consistent() const { return consistent_; }

  /// Minimum-norm point of the reduced system.
  VectorXd particular_solution() const;

  /// x0 + V_r (b_r - V_r^T x0): the closest feasible point to x0.
  VectorXd project_point(const VectorXd& x0) const;

  /// v - V_r (V_r^T v).
  VectorXd apply_projector(const VectorXd& v) const;

  /// Least-squares multiplier lambda = -(A^T)^+ g = -U_r diag(1/sigma) V_r^T g.
  VectorXd multiplier(const VectorXd& gradient) const;

  /// ||V_r^T x - b_r||_inf.
  double reduced_residual(const VectorXd& x) const;

  /// Dense n x n projector. Diagnostics and tests only.
  MatrixXd projector_matrix() const;

 private:
  friend ReducedConstraints reduce(const RawConstraints& raw, const RankPolicy& policy);

  MatrixXd basis_;
  MatrixXd left_basis_;
  VectorXd rhs_;
  VectorXd singular_values_;
  double sigma_max_ = 0.0;
  double inconsistency_ = 0.0;
  bool consistent_ = true;
};

/**
 * SVD-based reduction of A x = b.
 *
 * A is first split into independent blocks (connected components of its
 * row/column sparsity graph); each block is decomposed separately and the
 * singular triplets are merged and sorted, which yields an SVD of A itself.
 * Throws InvalidInput for dimension mismatch or an all-zero A ("degenerate constraints").
 */
ReducedConstraints reduce(const RawConstraints& raw, const RankPolicy& policy = {});

/// Infinity-norm feasibility tolerance used for termination: 1e-6 * (1 + ||b||_inf).
double feasibility_tolerance(const VectorXd& b, double base = 1e-6);

}  // namespace ptctr
