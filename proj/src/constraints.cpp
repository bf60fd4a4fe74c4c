#include "ptctr/constraints.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include <fmt/core.h>

namespace ptctr {

namespace {

// Disjoint-set forest over the m row nodes followed by the n column nodes.
class DisjointSets {
 public:
  explicit DisjointSets(Index size) : parent_(static_cast<std::size_t>(size)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }

  Index find(Index v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<Index> parent_;
};

struct Block {
  std::vector<Index> rows;
  std::vector<Index> cols;
};

std::vector<Block> independent_blocks(const MatrixXd& A) {
  const Index m = A.rows();
  const Index n = A.cols();
  DisjointSets sets(m + n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) {
      if (A(i, j) != 0.0) sets.unite(i, m + j);
    }
  }

  std::vector<Index> block_of(static_cast<std::size_t>(m + n), -1);
  std::vector<Block> blocks;
  auto slot = [&](Index node) -> Block& {
    const Index root = sets.find(node);
    if (block_of[root] < 0) {
      block_of[root] = static_cast<Index>(blocks.size());
      blocks.emplace_back();
    }
    return blocks[block_of[root]];
  };
  for (Index i = 0; i < m; ++i) slot(i).rows.push_back(i);
  for (Index j = 0; j < n; ++j) slot(m + j).cols.push_back(j);

  // Rows without any nonzero and unused columns carry no singular values.
  std::erase_if(blocks, [](const Block& b) { return b.rows.empty() || b.cols.empty(); });
  return blocks;
}

struct Triplet {
  double sigma;
  std::size_t block;
  Index index;
};

}  // namespace

void RawConstraints::validate() const {
  if (A.rows() < 1 || A.cols() < 1) {
    throw InvalidInput(fmt::format("constraint matrix must be at least 1x1, got {}x{}", A.rows(),
                                   A.cols()));
  }
  if (b.size() != A.rows()) {
    throw InvalidInput(fmt::format("dimension mismatch: A has {} rows but b has {} entries",
                                   A.rows(), b.size()));
  }
  if (!A.allFinite() || !b.allFinite()) throw InvalidInput("constraint data must be finite");
}

void RankPolicy::validate() const {
  if (!(relative_threshold > 0.0 && relative_threshold < 1.0)) {
    throw InvalidInput(
        fmt::format("rank threshold must lie in (0, 1), got {}", relative_threshold));
  }
}

ReducedConstraints ReducedConstraints::unconstrained(Index n) {
  ReducedConstraints rc;
  rc.basis_.resize(n, 0);
  rc.left_basis_.resize(0, 0);
  rc.rhs_.resize(0);
  rc.singular_values_.resize(0);
  return rc;
}

ReducedConstraints reduce(const RawConstraints& raw, const RankPolicy& policy) {
  raw.validate();
  policy.validate();

  const Index m = raw.rows();
  const Index n = raw.cols();
  const std::vector<Block> blocks = independent_blocks(raw.A);

  struct BlockSvd {
    MatrixXd U;
    MatrixXd V;
    VectorXd sigma;
    VectorXd projected_rhs;  // U^T b restricted to the block rows
  };
  std::vector<BlockSvd> factors;
  factors.reserve(blocks.size());
  std::vector<Triplet> triplets;

  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const Block& blk = blocks[k];
    MatrixXd sub(static_cast<Index>(blk.rows.size()), static_cast<Index>(blk.cols.size()));
    VectorXd sub_b(sub.rows());
    for (Index i = 0; i < sub.rows(); ++i) {
      sub_b(i) = raw.b(blk.rows[i]);
      for (Index j = 0; j < sub.cols(); ++j) sub(i, j) = raw.A(blk.rows[i], blk.cols[j]);
    }
    Eigen::BDCSVD<MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    BlockSvd f{svd.matrixU(), svd.matrixV(), svd.singularValues(), VectorXd()};
    f.projected_rhs = f.U.transpose() * sub_b;
    for (Index i = 0; i < f.sigma.size(); ++i) triplets.push_back({f.sigma(i), k, i});
    factors.push_back(std::move(f));
  }

  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const Triplet& a, const Triplet& b) { return a.sigma > b.sigma; });

  const double sigma_max = triplets.empty() ? 0.0 : triplets.front().sigma;
  if (!(sigma_max > 0.0)) throw InvalidInput("degenerate constraints: A is identically zero");

  const double cutoff = policy.relative_threshold * sigma_max;
  Index r = 0;
  while (r < static_cast<Index>(triplets.size()) && triplets[r].sigma > cutoff) ++r;

  ReducedConstraints rc;
  rc.sigma_max_ = sigma_max;
  rc.basis_ = MatrixXd::Zero(n, r);
  rc.left_basis_ = MatrixXd::Zero(m, r);
  rc.rhs_.resize(r);
  rc.singular_values_.resize(r);
  for (Index c = 0; c < r; ++c) {
    const Triplet& t = triplets[c];
    const Block& blk = blocks[t.block];
    const BlockSvd& f = factors[t.block];
    for (std::size_t j = 0; j < blk.cols.size(); ++j) {
      rc.basis_(blk.cols[j], c) = f.V(static_cast<Index>(j), t.index);
    }
    for (std::size_t i = 0; i < blk.rows.size(); ++i) {
      rc.left_basis_(blk.rows[i], c) = f.U(static_cast<Index>(i), t.index);
    }
    rc.singular_values_(c) = t.sigma;
    rc.rhs_(c) = f.projected_rhs(t.index) / t.sigma;
  }

  const VectorXd residual = raw.A * rc.particular_solution() - raw.b;
  rc.inconsistency_ = residual.lpNorm<Eigen::Infinity>();
  rc.consistent_ = rc.inconsistency_ <= 1e-8 * (1.0 + raw.b.lpNorm<Eigen::Infinity>());
  return rc;
}

VectorXd ReducedConstraints::particular_solution() const { return basis_ * rhs_; }

VectorXd ReducedConstraints::project_point(const VectorXd& x0) const {
  if (x0.size() != dimension()) {
    throw InvalidInput(
        fmt::format("point has {} entries, constraints act on {}", x0.size(), dimension()));
  }
  if (rank() == 0) return x0;
  const VectorXd correction = rhs_ - basis_.transpose() * x0;
  return x0 + basis_ * correction;
}

VectorXd ReducedConstraints::apply_projector(const VectorXd& v) const {
  if (v.size() != dimension()) {
    throw InvalidInput(
        fmt::format("vector has {} entries, constraints act on {}", v.size(), dimension()));
  }
  if (rank() == 0) return v;
  const VectorXd coefficients = basis_.transpose() * v;
  return v - basis_ * coefficients;
}

VectorXd ReducedConstraints::multiplier(const VectorXd& gradient) const {
  if (rank() == 0) return VectorXd::Zero(source_rows());
  const VectorXd scaled = (basis_.transpose() * gradient).cwiseQuotient(singular_values_);
  return -(left_basis_ * scaled);
}

double ReducedConstraints::reduced_residual(const VectorXd& x) const {
  if (rank() == 0) return 0.0;
  return (basis_.transpose() * x - rhs_).lpNorm<Eigen::Infinity>();
}

MatrixXd ReducedConstraints::projector_matrix() const {
  const Index n = dimension();
  MatrixXd P = MatrixXd::Identity(n, n);
  if (rank() > 0) P.noalias() -= basis_ * basis_.transpose();
  return P;
}

double feasibility_tolerance(const VectorXd& b, double base) {
  return base * (1.0 + (b.size() > 0 ? b.lpNorm<Eigen::Infinity>() : 0.0));
}

}  // namespace ptctr
