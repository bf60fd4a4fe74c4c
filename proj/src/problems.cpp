#include "ptctr/problems.hpp"

#include <array>
#include <cmath>
#include <memory>

#include <fmt/core.h>

namespace ptctr {

void ObjectiveProblem::validate() const {
  if (dimension < 1) throw InvalidInput(fmt::format("{}: dimension must be positive", name));
  if (!objective || !gradient) {
    throw InvalidInput(fmt::format("{}: objective and gradient are required", name));
  }
  constraints.validate();
  if (constraints.cols() != dimension) {
    throw InvalidInput(fmt::format("{}: constraints act on {} variables, problem has {}", name,
                                   constraints.cols(), dimension));
  }
  if (x0 && x0->size() != dimension) {
    throw InvalidInput(fmt::format("{}: initial point has {} entries, expected {}", name,
                                   x0->size(), dimension));
  }
}

namespace problems {

namespace {

// Objective terms act on consecutive blocks of `size` variables.
struct BlockTerm {
  Index size;
  double (*value)(const double* x);
  void (*gradient)(const double* x, double* g);
  void (*hessian)(const double* x, double* h);  // size x size, row-major
};

// Each constraint block of `size` variables contributes rows.size() equations.
struct ConstraintPattern {
  Index size;
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
};

struct ExampleSpec {
  BlockTerm term;
  double offset;
  ConstraintPattern pattern;
};

// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      carry_ += (sum_ - t) + v;
    } else {
      carry_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

double sq(double v) { return v * v; }

// t^p - (t + s)^p = -s * sum_{j<p} t^j (t + s)^(p-1-j), accurate for small s.
double power_drop(double t, double s, int p) {
  const double u = t + s;
  double sum = 0.0;
  double tj = 1.0;
  for (int j = 0; j < p; ++j) {
    sum += tj * std::pow(u, p - 1 - j);
    tj *= t;
  }
  return -s * sum;
}

// Change of the product a b when a -> a + da and b -> b + db.
double product_change(double a, double da, double b, double db) { return da * b + a * db + da * db; }

// phi(x) - phi(x + s) for one block of example `id`.
double block_decrease(int id, const double* x, const double* s) {
  switch (id) {
    case 1:
      return power_drop(x[0], s[0], 2) + 10.0 * power_drop(x[1], s[1], 2);
    case 2:
      return power_drop(x[0] - 2.0, s[0], 2) + 2.0 * power_drop(x[1] - 1.0, s[1], 4);
    case 3:
      return power_drop(x[0], s[0], 2) + power_drop(x[1], s[1], 2) + power_drop(x[2], s[2], 2);
    case 4:
      return power_drop(x[0], s[0], 2) + power_drop(x[1], s[1], 6);
    case 5:
      return power_drop(x[0] - 2.0, s[0], 4) + 2.0 * power_drop(x[1] - 1.0, s[1], 6);
    case 6:
      return power_drop(x[0], s[0], 2) + power_drop(x[1], s[1], 4) + power_drop(x[2], s[2], 6);
    case 7:
      return power_drop(x[0], s[0], 4) + 3.0 * power_drop(x[1], s[1], 2);
    case 8: {
      const double x1x3 = x[0] * x[2];
      const double d13 = product_change(x[0], s[0], x[2], s[2]);
      return power_drop(x[0], s[0], 2) + power_drop(x1x3, d13, 2) -
             2.0 * product_change(x[0], s[0], x[1], s[1]) + power_drop(x[1], s[1], 4) -
             8.0 * s[1];
    }
    case 9:
      return power_drop(x[0], s[0], 4) + 10.0 * power_drop(x[1], s[1], 6);
    case 10:
      return power_drop(x[0], s[0], 8) + power_drop(x[1], s[1], 6) + power_drop(x[2], s[2], 2);
    default:
      return 0.0;
  }
}

ExampleSpec spec_for(int id) {
  using Rows = std::vector<std::vector<double>>;
  const ConstraintPattern pair_sum4{2, Rows{{1.0, 1.0}}, {4.0}};
  const ConstraintPattern triple_two_rows{3, Rows{{1.0, 2.0, 1.0}, {2.0, -1.0, -3.0}}, {1.0, 4.0}};

  switch (id) {
    case 1:
      return {{2, [](const double* x) { return sq(x[0]) + 10.0 * sq(x[1]); },
               [](const double* x, double* g) {
                 g[0] = 2.0 * x[0];
                 g[1] = 20.0 * x[1];
               },
               [](const double*, double* h) {
                 h[0] = 2.0;
                 h[3] = 20.0;
               }},
              0.0,
              pair_sum4};
    case 2:
      return {{2, [](const double* x) { return sq(x[0] - 2.0) + 2.0 * std::pow(x[1] - 1.0, 4); },
               [](const double* x, double* g) {
                 g[0] = 2.0 * (x[0] - 2.0);
                 g[1] = 8.0 * std::pow(x[1] - 1.0, 3);
               },
               [](const double* x, double* h) {
                 h[0] = 2.0;
                 h[3] = 24.0 * sq(x[1] - 1.0);
               }},
              -5.0,
              {3, Rows{{1.0, 4.0, 2.0}}, {3.0}}};
    case 3:
      return {{3, [](const double* x) { return sq(x[0]) + sq(x[1]) + sq(x[2]); },
               [](const double* x, double* g) {
                 for (int i = 0; i < 3; ++i) g[i] = 2.0 * x[i];
               },
               [](const double*, double* h) { h[0] = h[4] = h[8] = 2.0; }},
              0.0,
              triple_two_rows};
    case 4:
      return {{2, [](const double* x) { return sq(x[0]) + std::pow(x[1], 6); },
               [](const double* x, double* g) {
                 g[0] = 2.0 * x[0];
                 g[1] = 6.0 * std::pow(x[1], 5);
               },
               [](const double* x, double* h) {
                 h[0] = 2.0;
                 h[3] = 30.0 * std::pow(x[1], 4);
               }},
              -1.0,
              {2, Rows{{1.0, 1.0}}, {1.0}}};
    case 5:
      return {{2,
               [](const double* x) {
                 return std::pow(x[0] - 2.0, 4) + 2.0 * std::pow(x[1] - 1.0, 6);
               },
               [](const double* x, double* g) {
                 g[0] = 4.0 * std::pow(x[0] - 2.0, 3);
                 g[1] = 12.0 * std::pow(x[1] - 1.0, 5);
               },
               [](const double* x, double* h) {
                 h[0] = 12.0 * sq(x[0] - 2.0);
                 h[3] = 60.0 * std::pow(x[1] - 1.0, 4);
               }},
              -5.0,
              {2, Rows{{1.0, 4.0}}, {3.0}}};
    case 6:
      return {{3, [](const double* x) { return sq(x[0]) + std::pow(x[1], 4) + std::pow(x[2], 6); },
               [](const double* x, double* g) {
                 g[0] = 2.0 * x[0];
                 g[1] = 4.0 * std::pow(x[1], 3);
                 g[2] = 6.0 * std::pow(x[2], 5);
               },
               [](const double* x, double* h) {
                 h[0] = 2.0;
                 h[4] = 12.0 * sq(x[1]);
                 h[8] = 30.0 * std::pow(x[2], 4);
               }},
              0.0,
              triple_two_rows};
    case 7:
      return {{2, [](const double* x) { return std::pow(x[0], 4) + 3.0 * sq(x[1]); },
               [](const double* x, double* g) {
                 g[0] = 4.0 * std::pow(x[0], 3);
                 g[1] = 6.0 * x[1];
               },
               [](const double* x, double* h) {
                 h[0] = 12.0 * sq(x[0]);
                 h[3] = 6.0;
               }},
              0.0,
              pair_sum4};
    case 8:
      return {{3,
               [](const double* x) {
                 return sq(x[0]) + sq(x[0]) * sq(x[2]) + 2.0 * x[0] * x[1] + std::pow(x[1], 4) +
                        8.0 * x[1];
               },
               [](const double* x, double* g) {
                 g[0] = 2.0 * x[0] + 2.0 * x[0] * sq(x[2]) + 2.0 * x[1];
                 g[1] = 2.0 * x[0] + 4.0 * std::pow(x[1], 3) + 8.0;
                 g[2] = 2.0 * sq(x[0]) * x[2];
               },
               [](const double* x, double* h) {
                 h[0] = 2.0 + 2.0 * sq(x[2]);
                 h[1] = h[3] = 2.0;
                 h[2] = h[6] = 4.0 * x[0] * x[2];
                 h[4] = 12.0 * sq(x[1]);
                 h[5] = h[7] = 0.0;
                 h[8] = 2.0 * sq(x[0]);
               }},
              0.0,
              {3, Rows{{2.0, 5.0, 1.0}}, {3.0}}};
    case 9:
      return {{2, [](const double* x) { return std::pow(x[0], 4) + 10.0 * std::pow(x[1], 6); },
               [](const double* x, double* g) {
                 g[0] = 4.0 * std::pow(x[0], 3);
                 g[1] = 60.0 * std::pow(x[1], 5);
               },
               [](const double* x, double* h) {
                 h[0] = 12.0 * sq(x[0]);
                 h[3] = 300.0 * std::pow(x[1], 4);
               }},
              0.0,
              pair_sum4};
    case 10:
      return {{3, [](const double* x) { return std::pow(x[0], 8) + std::pow(x[1], 6) + sq(x[2]); },
               [](const double* x, double* g) {
                 g[0] = 8.0 * std::pow(x[0], 7);
                 g[1] = 6.0 * std::pow(x[1], 5);
                 g[2] = 2.0 * x[2];
               },
               [](const double* x, double* h) {
                 h[0] = 56.0 * std::pow(x[0], 6);
                 h[4] = 30.0 * std::pow(x[1], 4);
                 h[8] = 2.0;
               }},
              0.0,
              {3, Rows{{1.0, 2.0, 2.0}}, {1.0}}};
    default:
      throw InvalidInput(fmt::format("unknown example id {} (expected 1..10)", id));
  }
}

VectorXd initial_point(int id, Index n) {
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
      x.head(2) << 2.0, 2.0;
      break;
    case 8:
      x(0) = 1.5;
      break;
    case 10:
      for (Index i = 0; i < n; i += 3) x(i) = 1.0;
      break;
    default:
      throw InvalidInput(fmt::format("unknown example id {}", id));
  }
  return x;
}

RawConstraints build_constraints(const ConstraintPattern& pattern, Index n) {
  const Index blocks = n / pattern.size;
  const Index per_block = static_cast<Index>(pattern.rows.size());
  RawConstraints raw{MatrixXd::Zero(blocks * per_block, n), VectorXd(blocks * per_block)};
  for (Index blk = 0; blk < blocks; ++blk) {
    for (Index r = 0; r < per_block; ++r) {
      const Index row = blk * per_block + r;
      for (Index j = 0; j < pattern.size; ++j) {
        raw.A(row, blk * pattern.size + j) = pattern.rows[r][j];
      }
      raw.b(row) = pattern.rhs[r];
    }
  }
  return raw;
}

const std::array<TableEntry, kExampleCount> kPaper1000{{
    {7.27e3, 3, 11, true, "7.27E+03"},
    {1.29e3, 3, 18, true, "1.29E+03"},
    {714.67, 5, 12, false, "714.67"},
    {97.96, 4, 11, true, "97.96"},
    {82.43, 4, 14, true, "82.43"},
    {514.48, 5, 13, true, "514.48"},
    {1.19e4, 3, 10, true, "1.19E+04"},
    {196.24, 5, 38, true, "196.24"},
    {4.42e4, 3, 13, true, "4.42E+04"},
    {0.50, 2, 16, false, "0.50"},
}};

const std::array<TableEntry, kExampleCount> kPaper5000{{
    {3.636364e4, 7, 11, false, "3.636364E+04"},
    {5.179806e3, 7, 16, false, "5.179806E+03"},
    {2.858667e3, 7, 12, false, "2.858667E+03"},
    {4.937947e2, 7, 11, false, "4.937947E+02"},
    {4.321521e2, 7, 14, false, "4.321521E+02"},
    {2.057906e3, 7, 13, false, "2.057906E+03"},
    {5.944739e4, 7, 10, false, "5.944739E+04"},
    {7.768754e2, 7, 38, false, "7.768754E+02"},
    {2.211073e5, 7, 12, false, "2.211073E+05"},
    {2.002622e0, 7, 16, false, "2.002622E+00"},
}};

void check_id(int id) {
  if (id < 1 || id > kExampleCount) {
    throw InvalidInput(fmt::format("unknown example id {} (expected 1..10)", id));
  }
}

}  // namespace

Index block_multiple(int id) {
  check_id(id);
  switch (id) {
    case 2:
      return 6;
    case 3:
    case 6:
    case 8:
    case 10:
      return 3;
    default:
      return 2;
  }
}

Index paper_dimension(int id, Scale scale) {
  check_id(id);
  const bool triple = block_multiple(id) != 2;
  if (scale == Scale::Paper1000) return triple ? 1200 : 1000;
  return triple ? 4800 : 5000;
}

TableEntry table_entry(int id, Scale scale) {
  check_id(id);
  return scale == Scale::Paper1000 ? kPaper1000[id - 1] : kPaper5000[id - 1];
}

Index constraint_rows(int id, Index n) {
  const ExampleSpec spec = spec_for(id);
  return (n / spec.pattern.size) * static_cast<Index>(spec.pattern.rows.size());
}

ObjectiveProblem make_example(int id, Index n) {
  check_id(id);
  const Index multiple = block_multiple(id);
  if (n < multiple || n % multiple != 0) {
    throw InvalidInput(
        fmt::format("example {} needs n to be a positive multiple of {}, got {}", id, multiple, n));
  }

  auto spec = std::make_shared<const ExampleSpec>(spec_for(id));
  ObjectiveProblem p;
  p.name = example_name(id);
  p.dimension = n;
  p.objective = [spec, n](const VectorXd& x) {
    const BlockTerm& t = spec->term;
    CompensatedSum sum;
    for (Index i = 0; i < n; i += t.size) sum.add(t.value(x.data() + i));
    sum.add(spec->offset);
    return sum.value();
  };
  p.gradient = [spec, n](const VectorXd& x) {
    const BlockTerm& t = spec->term;
    VectorXd g(n);
    for (Index i = 0; i < n; i += t.size) t.gradient(x.data() + i, g.data() + i);
    return g;
  };
  p.hessian = [spec, n](const VectorXd& x) {
    const BlockTerm& t = spec->term;
    MatrixXd H = MatrixXd::Zero(n, n);
    std::array<double, 9> h{};
    for (Index i = 0; i < n; i += t.size) {
      h.fill(0.0);
      t.hessian(x.data() + i, h.data());
      for (Index r = 0; r < t.size; ++r) {
        for (Index c = 0; c < t.size; ++c) H(i + r, i + c) = h[r * t.size + c];
      }
    }
    return H;
  };
  p.objective_change = [spec, id, n](const VectorXd& x, const VectorXd& x_trial) {
    const Index size = spec->term.size;
    const VectorXd s = x_trial - x;
    CompensatedSum sum;
    for (Index i = 0; i < n; i += size) sum.add(block_decrease(id, x.data() + i, s.data() + i));
    return sum.value();
  };
  p.constraints = build_constraints(spec->pattern, n);
  p.x0 = initial_point(id, n);

  for (Scale scale : {Scale::Paper1000, Scale::Paper5000}) {
    if (paper_dimension(id, scale) == n) {
      const TableEntry e = table_entry(id, scale);
      p.known_f_star = ReferenceValue{
          e.f_star, fmt::format("{} {}", scale == Scale::Paper1000 ? "paper1000" : "paper5000", e.text)};
    }
  }
  return p;
}

int parse_example_id(const std::string& name) {
  if (name.size() > 2 && name.starts_with("ex")) {
    const std::string digits = name.substr(2);
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.size() <= 2) {
      const int id = std::stoi(digits);
      if (id >= 1 && id <= kExampleCount) return id;
    }
  }
  throw InvalidInput(fmt::format("unknown problem '{}' (expected ex1..ex10)", name));
}

std::string example_name(int id) { return fmt::format("ex{}", id); }

VectorXd BlockOracle::x_star() const {
  const Index size = block_minimizer.size();
  VectorXd x(size * block_count);
  for (Index b = 0; b < block_count; ++b) x.segment(b * size, size) = block_minimizer;
  return x;
}

BlockOracle analytic_oracle(int id, Index n) {
  if (id != 1 && id != 3) {
    throw InvalidInput(fmt::format("no closed-form oracle for example {}", id));
  }
  const Index multiple = block_multiple(id);
  if (n < multiple || n % multiple != 0) {
    throw InvalidInput(fmt::format("example {} needs n divisible by {}", id, multiple));
  }
  BlockOracle oracle;
  oracle.block_count = n / multiple;
  if (id == 1) {
    // min x1^2 + 10 x2^2 s.t. x1 + x2 = 4: 2 x1 = 20 x2 = -lambda.
    oracle.block_minimizer = (VectorXd(2) << 40.0 / 11.0, 4.0 / 11.0).finished();
    oracle.block_value = 1760.0 / 121.0;
  } else {
    // min ||x||^2 s.t. C x = d: x = C^T (C C^T)^{-1} d.
    oracle.block_minimizer = (VectorXd(3) << 16.0 / 15.0, 1.0 / 3.0, -11.0 / 15.0).finished();
    oracle.block_value = 402.0 / 225.0;
  }
  return oracle;
}

}  // namespace problems
}  // namespace ptctr
