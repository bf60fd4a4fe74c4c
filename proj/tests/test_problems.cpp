#include "ptctr/ptctr.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using namespace ptctr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Direct transcriptions of the ten objectives, 1-based as printed.
double reference_objective(int id, const VectorXd& v) {
  const auto x = [&](Index i) { return v(i - 1); };
  const Index n = v.size();
  double f = 0.0;
  switch (id) {
    case 1:
      for (Index k = 1; k <= n / 2; ++k) f += x(2 * k - 1) * x(2 * k - 1) + 10 * x(2 * k) * x(2 * k);
      return f;
    case 2:
      for (Index k = 1; k <= n / 2; ++k)
        f += std::pow(x(2 * k - 1) - 2, 2) + 2 * std::pow(x(2 * k) - 1, 4);
      return f - 5;
    case 3:
      return v.squaredNorm();
    case 4:
      for (Index k = 1; k <= n / 2; ++k) f += std::pow(x(2 * k - 1), 2) + std::pow(x(2 * k), 6);
      return f - 1;
    case 5:
      for (Index k = 1; k <= n / 2; ++k)
        f += std::pow(x(2 * k - 1) - 2, 4) + 2 * std::pow(x(2 * k) - 1, 6);
      return f - 5;
    case 6:
      for (Index k = 1; k <= n / 3; ++k)
        f += std::pow(x(3 * k - 2), 2) + std::pow(x(3 * k - 1), 4) + std::pow(x(3 * k), 6);
      return f;
    case 7:
      for (Index k = 1; k <= n / 2; ++k) f += std::pow(x(2 * k - 1), 4) + 3 * std::pow(x(2 * k), 2);
      return f;
    case 8:
      for (Index k = 1; k <= n / 3; ++k) {
        const double a = x(3 * k - 2), b = x(3 * k - 1), c = x(3 * k);
        f += a * a + a * a * c * c + 2 * a * b + std::pow(b, 4) + 8 * b;
      }
      return f;
    case 9:
      for (Index k = 1; k <= n / 2; ++k) f += std::pow(x(2 * k - 1), 4) + 10 * std::pow(x(2 * k), 6);
      return f;
    case 10:
      for (Index k = 1; k <= n / 3; ++k)
        f += std::pow(x(3 * k - 2), 8) + std::pow(x(3 * k - 1), 6) + std::pow(x(3 * k), 2);
      return f;
    default:
      throw std::logic_error("bad id");
  }
}

VectorXd printed_x0(int id, Index n) {
  VectorXd x = VectorXd::Zero(n);
  switch (id) {
    case 1:
    case 9:
      x.setConstant(2.0);
      break;
    case 2:
      x.head(3) << -0.5, 1.5, 1.0;
      break;
    case 3:
      for (Index i = 0; i < n; i += 3) x.segment(i, 3) << 1.0, 0.5, -1.0;
      break;
    case 4:
      x.setOnes();
      break;
    case 5:
      for (Index i = 0; i < n; i += 2) x.segment(i, 2) << -1.0, 1.0;
      break;
    case 6:
      x(0) = 2.0;
      break;
    case 7:
      x(0) = x(1) = 2.0;
      break;
    case 8:
      x(0) = 1.5;
      break;
    case 10:
      for (Index i = 0; i < n; i += 3) x(i) = 1.0;
      break;
  }
  return x;
}

Index test_dimension(int id) { return 4 * problems::block_multiple(id); }

VectorXd random_point(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  VectorXd x(n);
  for (Index i = 0; i < n; ++i) x(i) = u(rng);
  return x;
}

VectorXd central_difference(const ObjectiveProblem& p, const VectorXd& x) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x(i)));
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (p.objective(xp) - p.objective(xm)) / (2 * h);
  }
  return g;
}

class EveryExample : public ::testing::TestWithParam<int> {};

TEST_P(EveryExample, ObjectiveMatchesTranscription) {
  const int id = GetParam();
  const Index n = test_dimension(id);
  const auto p = problems::make_example(id, n);
  std::mt19937_64 rng(100 + id);
  for (int t = 0; t < 10; ++t) {
    const VectorXd x = random_point(n, rng);
    EXPECT_NEAR(p.objective(x), reference_objective(id, x), 1e-11 * (1 + std::abs(p.objective(x))));
  }
}

TEST_P(EveryExample, GradientMatchesCentralDifferences) {
  const int id = GetParam();
  const Index n = test_dimension(id);
  const auto p = problems::make_example(id, n);
  const auto rc = reduce(p.constraints);
  std::mt19937_64 rng(200 + id);
  for (int t = 0; t < 10; ++t) {
    const VectorXd x = rc.project_point(random_point(n, rng));
    const VectorXd g = p.gradient(x);
    const VectorXd fd = central_difference(p, x);
    EXPECT_LE((g - fd).lpNorm<Eigen::Infinity>(), 1e-5 * (1 + g.lpNorm<Eigen::Infinity>()));
  }
}

TEST_P(EveryExample, HessianMatchesGradientDifferences) {
  const int id = GetParam();
  const Index n = test_dimension(id);
  const auto p = problems::make_example(id, n);
  ASSERT_TRUE(p.hessian);
  std::mt19937_64 rng(300 + id);
  const VectorXd x = random_point(n, rng);
  const MatrixXd H = p.hessian(x);
  EXPECT_EQ(H, H.transpose());
  for (Index j = 0; j < n; ++j) {
    const double h = 1e-6;
    VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const VectorXd col = (p.gradient(xp) - p.gradient(xm)) / (2 * h);
    EXPECT_LE((H.col(j) - col).lpNorm<Eigen::Infinity>(), 1e-5 * (1 + H.lpNorm<Eigen::Infinity>()));
  }
}

TEST_P(EveryExample, ObjectiveChangeMatchesDifference) {
  const int id = GetParam();
  const Index n = test_dimension(id);
  const auto p = problems::make_example(id, n);
  ASSERT_TRUE(p.objective_change);
  std::mt19937_64 rng(400 + id);
  for (int t = 0; t < 10; ++t) {
    const VectorXd x = random_point(n, rng);
    const VectorXd y = x + 0.1 * random_point(n, rng);
    const double direct = p.objective(x) - p.objective(y);
    EXPECT_NEAR(p.objective_change(x, y), direct, 1e-10 * (1 + std::abs(p.objective(x))));
  }
  const VectorXd x = random_point(n, rng);
  EXPECT_EQ(p.objective_change(x, x), 0.0);
}

TEST_P(EveryExample, SeparableBlocks) {
  const int id = GetParam();
  const Index n = test_dimension(id);
  const Index block = problems::block_multiple(id) == 6 ? 2 : problems::block_multiple(id);
  const auto p = problems::make_example(id, n);
  std::mt19937_64 rng(500 + id);
  const VectorXd x = random_point(n, rng);
  VectorXd y = x;
  y.segment(block, block) += VectorXd::Constant(block, 0.3);  // perturb the second block only
  const VectorXd gx = p.gradient(x);
  const VectorXd gy = p.gradient(y);
  for (Index i = 0; i < n; ++i) {
    if (i >= block && i < 2 * block) continue;
    EXPECT_EQ(gx(i), gy(i)) << "component " << i;
  }
  // f is the sum of single-block evaluations.
  double blocks = 0.0;
  for (Index b0 = 0; b0 < n; b0 += block) {
    VectorXd only = VectorXd::Zero(n);
    only.segment(b0, block) = x.segment(b0, block);
    blocks += p.objective(only) - p.objective(VectorXd::Zero(n));
  }
  EXPECT_NEAR(p.objective(x) - p.objective(VectorXd::Zero(n)), blocks,
              1e-10 * (1 + std::abs(p.objective(x))));
}

TEST_P(EveryExample, InitialPointAndRowCount) {
  const int id = GetParam();
  const Index n = test_dimension(id);
  const auto p = problems::make_example(id, n);
  ASSERT_TRUE(p.x0.has_value());
  EXPECT_EQ(*p.x0, printed_x0(id, n));
  EXPECT_EQ(p.constraints.rows(), problems::constraint_rows(id, n));
  EXPECT_EQ(p.constraints.cols(), n);
  const double residual = (p.constraints.A * *p.x0 - p.constraints.b).lpNorm<Eigen::Infinity>();
  const bool feasible_start = id == 1 || id == 5 || id == 9 || id == 10;
  if (feasible_start) {
    EXPECT_EQ(residual, 0.0);
  } else {
    EXPECT_GE(residual, 0.5);
  }
}

INSTANTIATE_TEST_SUITE_P(Problems, EveryExample, ::testing::Range(1, 11));

TEST(Problems, RowCounts) {
  EXPECT_EQ(problems::constraint_rows(1, 1000), 500);
  EXPECT_EQ(problems::constraint_rows(2, 1200), 400);
  EXPECT_EQ(problems::constraint_rows(3, 1200), 800);
  EXPECT_EQ(problems::constraint_rows(6, 1200), 800);
  EXPECT_EQ(problems::constraint_rows(8, 1200), 400);
  EXPECT_EQ(problems::constraint_rows(10, 1200), 400);
  EXPECT_EQ(problems::constraint_rows(9, 1000), 500);
}

TEST(Problems, ConstraintCoefficientsAsPrinted) {
  const auto p2 = problems::make_example(2, 6);
  EXPECT_EQ(p2.constraints.A.row(1), (Eigen::RowVectorXd(6) << 0, 0, 0, 1, 4, 2).finished());
  EXPECT_EQ(p2.constraints.b(1), 3.0);
  const auto p3 = problems::make_example(3, 3);
  EXPECT_EQ(p3.constraints.A.row(0), Eigen::RowVector3d(1, 2, 1));
  EXPECT_EQ(p3.constraints.A.row(1), Eigen::RowVector3d(2, -1, -3));
  EXPECT_EQ(p3.constraints.b, Eigen::Vector2d(1, 4));
  const auto p8 = problems::make_example(8, 3);
  EXPECT_EQ(p8.constraints.A.row(0), Eigen::RowVector3d(2, 5, 1));
  const auto p10 = problems::make_example(10, 3);
  EXPECT_EQ(p10.constraints.A.row(0), Eigen::RowVector3d(1, 2, 2));
  EXPECT_EQ(p10.constraints.b(0), 1.0);
}

TEST(Problems, ExampleOneStartingValue) {
  const auto p = problems::make_example(1, 1000);
  EXPECT_EQ(p.constraints.rows(), 500);
  EXPECT_DOUBLE_EQ(p.objective(*p.x0), 22000.0);
}

TEST(Problems, InvalidArguments) {
  EXPECT_THROW(problems::make_example(0, 10), InvalidInput);
  EXPECT_THROW(problems::make_example(11, 10), InvalidInput);
  EXPECT_THROW(problems::make_example(1, 3), InvalidInput);
  EXPECT_THROW(problems::make_example(3, 4), InvalidInput);
  EXPECT_THROW(problems::make_example(2, 9), InvalidInput);
  EXPECT_THROW(problems::make_example(1, 0), InvalidInput);
  EXPECT_THROW(problems::parse_example_id("ex11"), InvalidInput);
  EXPECT_THROW(problems::parse_example_id("1"), InvalidInput);
  EXPECT_EQ(problems::parse_example_id("ex7"), 7);
  EXPECT_EQ(problems::example_name(10), "ex10");
}

TEST(Problems, PresetDimensions) {
  using problems::Scale;
  EXPECT_EQ(problems::paper_dimension(1, Scale::Paper1000), 1000);
  EXPECT_EQ(problems::paper_dimension(3, Scale::Paper1000), 1200);
  EXPECT_EQ(problems::paper_dimension(3, Scale::Paper5000), 4800);
  EXPECT_EQ(problems::paper_dimension(9, Scale::Paper5000), 5000);
  for (int id = 1; id <= 10; ++id) {
    for (Scale s : {Scale::Paper1000, Scale::Paper5000}) {
      EXPECT_EQ(problems::paper_dimension(id, s) % problems::block_multiple(id), 0);
    }
  }
}

TEST(Problems, PrintedReferenceValues) {
  using problems::Scale;
  EXPECT_DOUBLE_EQ(problems::table_entry(1, Scale::Paper1000).f_star, 7.27e3);
  EXPECT_DOUBLE_EQ(problems::table_entry(3, Scale::Paper1000).f_star, 714.67);
  EXPECT_DOUBLE_EQ(problems::table_entry(10, Scale::Paper1000).f_star, 0.50);
  EXPECT_DOUBLE_EQ(problems::table_entry(1, Scale::Paper5000).f_star, 3.636364e4);
  EXPECT_DOUBLE_EQ(problems::table_entry(3, Scale::Paper5000).f_star, 2.858667e3);
  EXPECT_DOUBLE_EQ(problems::table_entry(9, Scale::Paper5000).f_star, 2.211073e5);
  EXPECT_EQ(problems::table_entry(1, Scale::Paper1000).accepted_steps, 11);
  EXPECT_EQ(problems::table_entry(8, Scale::Paper1000).accepted_steps, 38);
  EXPECT_TRUE(problems::table_entry(5, Scale::Paper1000).pfm_close);
  EXPECT_FALSE(problems::table_entry(3, Scale::Paper1000).pfm_close);
  const auto p = problems::make_example(1, 1000);
  ASSERT_TRUE(p.known_f_star.has_value());
  EXPECT_DOUBLE_EQ(p.known_f_star->value, 7.27e3);
}

TEST(Oracle, ExampleOneBlock) {
  const auto o = problems::analytic_oracle(1, 1000);
  EXPECT_NEAR(o.block_minimizer(0), 40.0 / 11.0, 1e-15);
  EXPECT_NEAR(o.block_minimizer(1), 4.0 / 11.0, 1e-15);
  EXPECT_NEAR(o.block_value, 1760.0 / 121.0, 1e-12);
  EXPECT_NEAR(o.f_star(), 500.0 * 1760.0 / 121.0, 1e-9);
  EXPECT_NEAR(problems::analytic_oracle(1, 5000).f_star(), 36363.636363636, 1e-6);
}

TEST(Oracle, ExampleThreeBlock) {
  const auto o = problems::analytic_oracle(3, 4800);
  EXPECT_NEAR(o.block_minimizer(0), 16.0 / 15.0, 1e-14);
  EXPECT_NEAR(o.block_minimizer(1), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(o.block_minimizer(2), -11.0 / 15.0, 1e-14);
  EXPECT_NEAR(o.f_star(), 1600.0 * 402.0 / 225.0, 1e-9);
  // The block minimiser is feasible.
  const auto p = problems::make_example(3, 3);
  EXPECT_NEAR((p.constraints.A * o.block_minimizer - p.constraints.b).norm(), 0.0, 1e-14);
  EXPECT_THROW(problems::analytic_oracle(2, 6), InvalidInput);
}

TEST(Oracle, SolverAgreesOnSmallQuadratics) {
  for (int id : {1, 3}) {
    const Index n = id == 1 ? 100 : 99;
    const auto o = problems::analytic_oracle(id, n);
    const SolveReport r = solve(problems::make_example(id, n));
    ASSERT_TRUE(r.converged());
    EXPECT_NEAR(r.f_star, o.f_star(), 1e-8 * o.f_star());
    EXPECT_LE((r.x_star - o.x_star()).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(Problems, SolvedValuesMatchPrintedTable) {
  for (int id : {1, 10}) {
    const Index n = problems::paper_dimension(id, problems::Scale::Paper1000);
    const auto p = problems::make_example(id, n);
    const SolveReport r = solve(p);
    ASSERT_TRUE(r.converged());
    EXPECT_NEAR(r.f_star, p.known_f_star->value, 5e-3 * std::abs(p.known_f_star->value));
  }
}

}  // namespace
