#pragma once

#include "ptctr/baselines.hpp"
#include "ptctr/ptctr.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ptctr::vin {

using Eigen::Vector2d;
using Eigen::Vector3d;

struct VinParams {
  double focal_length = 24e-3;  // metres
  double altitude = 1200.0;
  double speed = 235.0;
  double period = 0.5;
  int frames = 7200;
  int landmark_count = 5;

  double dist_hor() const { return speed * period; }
  void validate() const;
};

struct NoiseModel {
  double altitude_stddev = 1.0;          // Gaussian error of the altimeter difference
  double distance_half_width = 2.57;     // uniform error of the inertial step length
  double angle_half_width = 0.2;         // uniform line-of-sight error, radians
  std::uint64_t seed = 42;
};

/// Camera position of trajectory `id` (1, 2 or 3) at frame k >= 1.
/// Trajectory 2 restarts d_k = 117.5 k after its turn at k = 1800 exactly as
/// printed, so frame 1801 lies about 211.6 km from frame 1800.
Vector3d trajectory(int id, int k, const VinParams& params = {});

/// (x + 58.75 n/N, y + 58.75 n/N, 40 n/N) for n = 1..N.
std::vector<Vector3d> landmarks(const Vector3d& camera, int count);

/// Pinhole image coordinates of a landmark. With an angle error the line-of-sight
/// angles are perturbed before projecting; a zero error takes the clean path.
/// Throws InvalidInput "landmark above camera" or "projection out of view".
Vector2d project_pinhole(const Vector3d& camera, const Vector3d& landmark, double focal_length,
                         std::optional<double> angle_error = {});

/// Measurements for estimating camera k+1 from camera k.
struct VinFrame {
  int k = 0;
  Vector3d camera;       // true position at frame k
  Vector3d next_camera;  // true position at frame k+1
  std::vector<Vector3d> landmarks;
  std::vector<Vector2d> image;       // projections into camera k
  std::vector<Vector2d> next_image;  // projections into camera k+1
  double delta_h = 0.0;              // measured z_{k+1} - z_k
  double dist_hor = 0.0;             // measured horizontal step length
};

/// Draws frame noise in a fixed order: altitude, distance, angle k, angle k+1.
class NoiseSampler {
 public:
  explicit NoiseSampler(const NoiseModel& model);

  double altitude();
  double distance();
  double angle();

 private:
  NoiseModel model_;
  std::mt19937_64 engine_;
};

/// Builds the frame k -> k+1 measurements; clean when sampler is null.
VinFrame make_frame(int trajectory_id, int k, const VinParams& params,
                    NoiseSampler* sampler = nullptr);

/// 17-variable problem w = (x_{k+1}, y_{k+1}, x_l1, y_l1, h_1, ..., x_l5, y_l5, h_5)
/// with A of size 4N x (2 + 3N). x0 is left unset.
ObjectiveProblem assemble_frame_problem(const VinFrame& frame, const Vector2d& prev_estimate,
                                        const VinParams& params = {});

/// Ground-truth w for a frame: true next position, landmarks and heights.
VectorXd true_frame_variables(const VinFrame& frame);

enum class Method { Ptctr, Penalty, GradientFlow };

Method parse_method(const std::string& name);
std::string method_name(Method method);

struct FrameResult {
  int k = 0;  // frame whose position was estimated
  Vector3d truth;
  Vector2d estimate;
  double error = 0.0;
  int iterations = 0;
  std::string status;  // solver status, or "Error" when the frame threw
  Index rank = 0;
  double kkt_residual = 0.0;
  double feasibility_residual = 0.0;
  bool feasible = false;
  std::string message;
};

struct VinEstimate {
  int trajectory_id = 0;
  std::vector<FrameResult> frames;
  double elapsed_seconds = 0.0;

  double max_error() const;
  double mean_error() const;
};

struct SimulationOptions {
  int first_frame = 1;
  int max_iterations = 200;
  double epsilon = 1e-6;
};

/// Sequential frame loop. Each frame is warm-started from the previous optimum
/// and its b vector uses the previous estimate. A frame that throws keeps the
/// last estimate and the loop continues.
VinEstimate simulate(int trajectory_id, const VinParams& params,
                     const std::optional<NoiseModel>& noise, Method method,
                     const SimulationOptions& options = {});

/// Header plus one row per estimated frame.
void write_csv(std::ostream& out, const VinEstimate& estimate);

}  // namespace ptctr::vin
