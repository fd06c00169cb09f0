#pragma once

// Manifold Gauss-Newton over SE(3) pose blocks and the sliding-window
// object/camera refinement built on it.

#include <functional>
#include <iosfwd>
#include <vector>

#include "objloop/association.hpp"
#include "objloop/geometry.hpp"

namespace objloop {

// Residual callback: receives the current values of the referenced poses,
// in the order they were listed when the block was added.
using ResidualFunction = std::function<Vec6(const std::vector<Pose>&)>;
// Optional analytic Jacobians, one 6x6 block per referenced pose, under the
// right perturbation T * exp(d).
using JacobianFunction =
    std::function<std::vector<Mat6>(const std::vector<Pose>&)>;

class NllsProblem {
 public:
  int AddVariable(const Pose& initial, bool fixed = false);
  void SetFixed(int index, bool fixed);
  void AddResidual(std::vector<int> variables, ResidualFunction fn,
                   const Mat6& information = Mat6::Identity(),
                   JacobianFunction jacobian = nullptr);

  int num_variables() const { return static_cast<int>(variables_.size()); }
  int num_residuals() const { return static_cast<int>(blocks_.size()); }
  int num_free() const;
  const Pose& variable(int index) const { return variables_.at(index); }
  bool fixed(int index) const { return fixed_.at(index); }

  // Sum over blocks of r^T * information * r.
  double Cost() const;

 private:
  friend struct GaussNewtonSolver;

  struct Block {
    std::vector<int> variables;
    ResidualFunction fn;
    Mat6 information;
    JacobianFunction jacobian;
  };

  Vec6 Evaluate(const Block& block) const;

  std::vector<Pose> variables_;
  std::vector<bool> fixed_;
  std::vector<Block> blocks_;
};

struct GnConfig {
  int max_iterations = 50;
  double tolerance = 1e-8;  // on the infinity norm of the step
  int max_halvings = 10;
  double fd_step = 1e-6;
  // Optional per-iteration dump: iteration,cost,step_norm.
  std::ostream* trace = nullptr;
};

struct GnReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
};

// Iterates dx = -(J^T W J)^-1 J^T W r with T <- T * exp(dx). Blocks without
// analytic Jacobians use central differences under right perturbation. Throws
// Error(kSingularNormalEquations) on rank-deficient normal equations.
GnReport SolveGaussNewton(NllsProblem& problem, const GnConfig& cfg = {});

// Central-difference Jacobians of `fn` with respect to each pose.
std::vector<Mat6> NumericJacobians(const ResidualFunction& fn,
                                   std::vector<Pose> poses, double step = 1e-6);

// log(T_wo^-1 * T_wc * T_co).
Vec6 ObjectCameraResidual(const Pose& T_wo, const Pose& T_wc, const Pose& T_co);
// d/d(T_wo), d/d(T_wc).
std::vector<Mat6> ObjectCameraJacobians(const Pose& T_wo, const Pose& T_wc,
                                        const Pose& T_co);

// log(Z^-1 * T_i^-1 * T_j).
Vec6 RelativePoseResidual(const Pose& Z_ij, const Pose& T_i, const Pose& T_j);
// d/d(T_i), d/d(T_j).
std::vector<Mat6> RelativePoseJacobians(const Pose& Z_ij, const Pose& T_i,
                                        const Pose& T_j);

struct WindowConfig {
  int window_size = 10;
  // Objects enter the problem once obs_count exceeds this.
  int min_track_count = 4;
  bool optimize_cameras = true;
  Mat6 information = Mat6::Identity();
  // Weight of the odometry links between consecutive window cameras.
  Mat6 odometry_information =
      (Vec6() << 100, 100, 100, 25, 25, 25).finished().asDiagonal();
  GnConfig gn;

  void Validate() const;
};

struct WindowReport {
  int num_objects = 0;
  int num_cameras = 0;
  int num_residuals = 0;
  GnReport gn;
};

// Jointly refines the window's camera poses and the eligible objects seen in
// it. The oldest window camera is held fixed. Eligible objects also get their
// dims reset to the mean measured dims. When `odometry` is given,
// (*odometry)[i] relates window[i-1] to window[i] and links every window
// camera to its predecessor.
WindowReport RefineWindow(MapState& map, const std::vector<FrameId>& window,
                          const WindowConfig& cfg,
                          const std::vector<Pose>* odometry = nullptr);

}  // namespace objloop
