#include "ptctr/vin.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <fmt/core.h>
#include <fmt/ostream.h>

namespace ptctr::vin {

namespace {

constexpr double kSqrtFloor = 1e-12;  // metres, keeps the step length differentiable
constexpr int kTurnFrame = 1800;

double closed_uniform(std::mt19937_64& engine, double half_width) {
  if (half_width == 0.0) return 0.0;
  std::uniform_real_distribution<double> dist(
      -half_width, std::nextafter(half_width, std::numeric_limits<double>::infinity()));
  return dist(engine);
}

}  // namespace

void VinParams::validate() const {
  if (!(focal_length > 0.0 && altitude > 0.0 && speed > 0.0 && period > 0.0)) {
    throw InvalidInput("VIN parameters must be positive");
  }
  if (frames < 2) throw InvalidInput("a VIN run needs at least two frames");
  if (landmark_count < 1) throw InvalidInput("at least one landmark is required");
}

Vector3d trajectory(int id, int k, const VinParams& params) {
  if (k < 1) throw InvalidInput(fmt::format("frame index must be >= 1, got {}", k));
  const double step = params.dist_hor();
  const double d = step * k;
  const double half_sqrt3 = std::numbers::sqrt3 / 2.0;
  switch (id) {
    case 1:
      return {0.0, d, params.altitude};
    case 2:
      if (k <= kTurnFrame) return {0.5 * d, half_sqrt3 * d, params.altitude};
      {
        const double d_turn = step * kTurnFrame;
        return {0.5 * d_turn, half_sqrt3 * d_turn + d, params.altitude};
      }
    case 3:
      return {0.5 * d, half_sqrt3 * d, params.altitude};
    default:
      throw InvalidInput(fmt::format("unknown trajectory {} (expected 1, 2 or 3)", id));
  }
}

std::vector<Vector3d> landmarks(const Vector3d& camera, int count) {
  if (count < 1) throw InvalidInput("at least one landmark is required");
  std::vector<Vector3d> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 1; n <= count; ++n) {
    const double t = static_cast<double>(n) / count;
    out.emplace_back(camera.x() + 58.75 * t, camera.y() + 58.75 * t, 40.0 * t);
  }
  return out;
}

Vector2d project_pinhole(const Vector3d& camera, const Vector3d& landmark, double focal_length,
                         std::optional<double> angle_error) {
  const double h = camera.z() - landmark.z();
  if (!(h > 0.0)) throw InvalidInput("landmark above camera");
  const double u = (camera.x() - landmark.x()) / h;
  const double v = (camera.y() - landmark.y()) / h;
  if (!angle_error || *angle_error == 0.0) return {focal_length * u, focal_length * v};

  const double theta_x = std::atan(u) + *angle_error;
  const double theta_y = std::atan(v) + *angle_error;
  const double limit = std::numbers::pi / 2.0;
  if (std::abs(theta_x) >= limit || std::abs(theta_y) >= limit) {
    throw InvalidInput("projection out of view");
  }
  return {focal_length * std::tan(theta_x), focal_length * std::tan(theta_y)};
}

NoiseSampler::NoiseSampler(const NoiseModel& model) : model_(model), engine_(model.seed) {}

double NoiseSampler::altitude() {
  if (model_.altitude_stddev == 0.0) return 0.0;
  std::normal_distribution<double> dist(0.0, model_.altitude_stddev);
  return dist(engine_);
}

double NoiseSampler::distance() { return closed_uniform(engine_, model_.distance_half_width); }

double NoiseSampler::angle() { return closed_uniform(engine_, model_.angle_half_width); }

VinFrame make_frame(int trajectory_id, int k, const VinParams& params, NoiseSampler* sampler) {
  params.validate();
  VinFrame frame;
  frame.k = k;
  frame.camera = trajectory(trajectory_id, k, params);
  frame.next_camera = trajectory(trajectory_id, k + 1, params);
  frame.landmarks = landmarks(frame.camera, params.landmark_count);
  frame.delta_h = frame.next_camera.z() - frame.camera.z();
  frame.dist_hor = params.dist_hor();

  std::optional<double> eps_k;
  std::optional<double> eps_next;
  if (sampler) {
    frame.delta_h += sampler->altitude();
    frame.dist_hor += sampler->distance();
    eps_k = sampler->angle();
    eps_next = sampler->angle();
  }
  for (const Vector3d& lm : frame.landmarks) {
    frame.image.push_back(project_pinhole(frame.camera, lm, params.focal_length, eps_k));
    frame.next_image.push_back(project_pinhole(frame.next_camera, lm, params.focal_length, eps_next));
  }
  return frame;
}

ObjectiveProblem assemble_frame_problem(const VinFrame& frame, const Vector2d& prev_estimate,
                                        const VinParams& params) {
  const Index count = static_cast<Index>(frame.landmarks.size());
  if (count < 1 || static_cast<Index>(frame.image.size()) != count ||
      static_cast<Index>(frame.next_image.size()) != count) {
    throw InvalidInput("frame measurements are incomplete");
  }
  const double fc = params.focal_length;
  const Index n = 2 + 3 * count;
  RawConstraints raw{MatrixXd::Zero(4 * count, n), VectorXd(4 * count)};
  for (Index l = 0; l < count; ++l) {
    const Index row = 4 * l;
    const Index col = 2 + 3 * l;
    const Vector2d& p = frame.image[l];
    const Vector2d& q = frame.next_image[l];
    // B block: x_{k+1}, y_{k+1} enter the last two rows.
    raw.A(row + 2, 0) = 1.0;
    raw.A(row + 3, 1) = 1.0;
    // C_n block over (x_ln, y_ln, h_n).
    raw.A(row, col) = 1.0;
    raw.A(row, col + 2) = p.x() / fc;
    raw.A(row + 1, col + 1) = 1.0;
    raw.A(row + 1, col + 2) = p.y() / fc;
    raw.A(row + 2, col) = -1.0;
    raw.A(row + 2, col + 2) = -q.x() / fc;
    raw.A(row + 3, col + 1) = -1.0;
    raw.A(row + 3, col + 2) = -q.y() / fc;
    raw.b(row) = prev_estimate.x();
    raw.b(row + 1) = prev_estimate.y();
    raw.b(row + 2) = frame.delta_h / fc * q.x();
    raw.b(row + 3) = frame.delta_h / fc * q.y();
  }

  const double xk = prev_estimate.x();
  const double yk = prev_estimate.y();
  const double dist = frame.dist_hor;

  ObjectiveProblem p;
  p.name = fmt::format("vin-frame-{}", frame.k + 1);
  p.dimension = n;
  p.objective = [xk, yk, dist](const VectorXd& w) {
    const double dx = w(0) - xk;
    const double dy = w(1) - yk;
    const double r = std::sqrt(dx * dx + dy * dy + kSqrtFloor * kSqrtFloor);
    return (r - dist) * (r - dist);
  };
  p.gradient = [xk, yk, dist, n](const VectorXd& w) {
    VectorXd g = VectorXd::Zero(n);
    const double dx = w(0) - xk;
    const double dy = w(1) - yk;
    const double r = std::sqrt(dx * dx + dy * dy + kSqrtFloor * kSqrtFloor);
    const double scale = 2.0 * (r - dist) / r;
    g(0) = scale * dx;
    g(1) = scale * dy;
    return g;
  };
  p.hessian = [xk, yk, dist, n](const VectorXd& w) {
    MatrixXd H = MatrixXd::Zero(n, n);
    const Vector2d delta(w(0) - xk, w(1) - yk);
    const double r = std::sqrt(delta.squaredNorm() + kSqrtFloor * kSqrtFloor);
    const Vector2d unit = delta / r;
    H.topLeftCorner<2, 2>() = 2.0 * unit * unit.transpose() +
                              2.0 * (r - dist) / r *
                                  (Eigen::Matrix2d::Identity() - unit * unit.transpose());
    return H;
  };
  p.constraints = std::move(raw);
  return p;
}

VectorXd true_frame_variables(const VinFrame& frame) {
  const Index count = static_cast<Index>(frame.landmarks.size());
  VectorXd w(2 + 3 * count);
  w(0) = frame.next_camera.x();
  w(1) = frame.next_camera.y();
  for (Index l = 0; l < count; ++l) {
    const Vector3d& lm = frame.landmarks[l];
    w.segment<3>(2 + 3 * l) << lm.x(), lm.y(), frame.camera.z() - lm.z();
  }
  return w;
}

Method parse_method(const std::string& name) {
  if (name == "ptctr") return Method::Ptctr;
  if (name == "penalty" || name == "pfm") return Method::Penalty;
  if (name == "flow" || name == "gradient_flow") return Method::GradientFlow;
  throw InvalidInput(fmt::format("unknown solver '{}' (expected ptctr, penalty or flow)", name));
}

std::string method_name(Method method) {
  switch (method) {
    case Method::Ptctr:
      return "ptctr";
    case Method::Penalty:
      return "penalty";
    case Method::GradientFlow:
      return "flow";
  }
  return "unknown";
}

double VinEstimate::max_error() const {
  double worst = 0.0;
  for (const FrameResult& f : frames) worst = std::max(worst, f.error);
  return worst;
}

double VinEstimate::mean_error() const {
  if (frames.empty()) return 0.0;
  double sum = 0.0;
  for (const FrameResult& f : frames) sum += f.error;
  return sum / static_cast<double>(frames.size());
}

VinEstimate simulate(int trajectory_id, const VinParams& params,
                     const std::optional<NoiseModel>& noise, Method method,
                     const SimulationOptions& options) {
  params.validate();
  if (options.first_frame < 1) throw InvalidInput("first frame must be >= 1");
  trajectory(trajectory_id, options.first_frame, params);  // validates the id

  const auto started = std::chrono::steady_clock::now();
  std::optional<NoiseSampler> sampler;
  if (noise) sampler.emplace(*noise);

  SolverConfig ptctr_config;
  ptctr_config.epsilon = options.epsilon;
  ptctr_config.max_iterations = options.max_iterations;
  ptctr_config.record_history = false;
  baselines::PenaltyConfig penalty_config;
  penalty_config.kkt_tol = options.epsilon;
  baselines::FlowConfig flow_config;
  flow_config.tolerance = options.epsilon;

  VinEstimate out;
  out.trajectory_id = trajectory_id;
  const Vector3d start = trajectory(trajectory_id, options.first_frame, params);
  Vector2d estimate(start.x(), start.y());
  std::optional<VectorXd> warm;

  const int last = options.first_frame + params.frames - 1;
  for (int k = options.first_frame; k < last; ++k) {
    FrameResult row;
    row.k = k + 1;
    row.truth = trajectory(trajectory_id, k + 1, params);
    try {
      const VinFrame frame = make_frame(trajectory_id, k, params, sampler ? &*sampler : nullptr);
      ObjectiveProblem problem = assemble_frame_problem(frame, estimate, params);
      if (warm) {
        problem.x0 = *warm;
      } else {
        VectorXd w0(problem.dimension);
        w0.head<2>() = estimate;
        for (Index l = 0; l < params.landmark_count; ++l) {
          w0.segment<3>(2 + 3 * l) << estimate.x(), estimate.y(), params.altitude;
        }
        problem.x0 = w0;
      }

      SolveReport report;
      switch (method) {
        case Method::Ptctr:
          report = solve(problem, ptctr_config);
          break;
        case Method::Penalty:
          report = baselines::penalty_solve(problem, penalty_config);
          break;
        case Method::GradientFlow:
          report = baselines::gradient_flow_solve(problem, flow_config);
          break;
      }
      row.iterations = report.iterations;
      row.status = std::string(to_string(report.status));
      row.rank = report.rank;
      row.kkt_residual = report.kkt_residual;
      row.feasibility_residual = report.feasibility_residual;
      const double feasibility = report.consistent ? report.feasibility_residual
                                                   : report.relaxed_feasibility_residual;
      row.feasible = feasibility <= report.feasibility_tolerance;
      row.message = report.note;
      if (report.x_star.allFinite()) {
        estimate = report.x_star.head<2>();
        warm = report.x_star;
      }
    } catch (const std::exception& e) {
      row.status = "Error";
      row.message = e.what();
    }
    row.estimate = estimate;
    row.error = (row.estimate - row.truth.head<2>()).norm();
    out.frames.push_back(std::move(row));
  }
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

void write_csv(std::ostream& out, const VinEstimate& estimate) {
  out << "k,x_true,y_true,z_true,x_est,y_est,err_xy,solver_iters,solver_status\n";
  for (const FrameResult& f : estimate.frames) {
    fmt::print(out, "{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", f.k, f.truth.x(),
               f.truth.y(), f.truth.z(), f.estimate.x(), f.estimate.y(), f.error, f.iterations,
               f.status);
  }
}

}  // namespace ptctr::vin
