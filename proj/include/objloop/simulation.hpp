#pragma once

// Deterministic synthetic scenarios: cuboid worlds, keyframe trajectories,
// drifting odometry and noisy detections.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "objloop/features.hpp"
#include "objloop/geometry.hpp"

namespace objloop {

struct LabelSpec {
  std::string name;
  double weight = 1.0;
  Vec3 nominal_dims = Vec3::Ones();
};

std::vector<LabelSpec> DefaultLabels();

enum class TrajectoryShape { kRectangle, kLine, kCurve };

TrajectoryShape ParseTrajectoryShape(const std::string& name);
const char* TrajectoryShapeName(TrajectoryShape shape);

struct TrajectoryConfig {
  TrajectoryShape shape = TrajectoryShape::kRectangle;
  double width = 40.0;    // rectangle x extent, line/curve length
  double height = 20.0;   // rectangle y extent
  double spacing = 1.0;   // m between keyframes
  double curve_radius = 60.0;
  // Heading of the final rectangle leg relative to the first side, degrees.
  double revisit_offset_deg = 90.0;
};

enum class PlacementMode { kUniform, kCorridor };

struct NoiseConfig {
  double odom_sigma_t = 0.0;    // m per sqrt(m)
  double odom_sigma_r = 0.0;    // rad per sqrt(m)
  double det_sigma_t = 0.0;     // m
  double det_sigma_yaw = 0.0;   // rad
  double dims_sigma = 0.0;      // m
  double label_flip = 0.0;
  // Dirichlet jitter scale for detection histograms; 0 disables jitter.
  double hist_concentration = 0.0;
  double emb_sigma = 0.0;
  double dropout = 0.0;

  static NoiseConfig Nominal();
};

struct ScenarioConfig {
  std::uint64_t seed = 0;
  int n_objects = 30;
  std::vector<LabelSpec> labels = DefaultLabels();
  PlacementMode placement = PlacementMode::kCorridor;
  // Uniform placement box (x_min, y_min, x_max, y_max).
  Eigen::Vector4d extent = Eigen::Vector4d(-10.0, -10.0, 50.0, 30.0);
  double corridor = 8.0;   // max distance from the path
  double clearance = 2.0;  // min distance from the path
  double min_separation = 2.0;
  TrajectoryConfig trajectory;
  CameraIntrinsics intrinsics = CameraIntrinsics::FromFov(110.0 * M_PI / 180.0,
                                                          1280.0, 720.0);
  double max_range = 40.0;
  int hist_bins = 8;
  double hist_label_concentration = 30.0;
  int emb_dim = 32;
  double anchor_separation_deg = 30.0;
  double instance_sigma = 0.6;
  NoiseConfig noise;

  void Validate() const;
};

struct GtObject {
  int id = 0;
  std::string label;
  Cuboid cuboid;
  ColorHistogram hist;
  Embedding latent;
};

struct GroundTruth {
  std::vector<Pose> camera_poses;  // T_wc per keyframe
  std::vector<GtObject> objects;
};

// Per-label anchors on the unit sphere with pairwise angle
// `anchor_separation_deg`.
std::vector<Eigen::VectorXd> LabelAnchors(const ScenarioConfig& cfg);

std::vector<Pose> GenerateTrajectory(const TrajectoryConfig& cfg);

// Objects on the ground plane, at least min_separation apart. Throws
// Error(kPlacementFailure) after 10^4 rejected draws.
std::vector<GtObject> GenerateObjects(const ScenarioConfig& cfg,
                                      const std::vector<Pose>& path);

GroundTruth GenerateWorld(const ScenarioConfig& cfg);

// Relative poses T_{k-1,k} perturbed by exp(eps), eps ~ N(0, sigma^2 * len).
std::vector<Pose> SimulateOdometry(const std::vector<Pose>& true_poses,
                                   const NoiseConfig& noise,
                                   std::uint64_t seed);

// Objects of `truth` inside the frustum and range of camera T_wc.
std::vector<int> VisibleObjects(const GroundTruth& truth, const Pose& T_wc,
                                const ScenarioConfig& cfg);

FrameDetections RenderDetections(const GroundTruth& truth, FrameId frame,
                                 const Pose& T_wc, const ScenarioConfig& cfg,
                                 std::uint64_t seed);

struct Scenario {
  ScenarioConfig config;
  GroundTruth truth;
  std::vector<Pose> odometry;  // odometry[k] relates keyframe k-1 to k; [0] = identity
  std::vector<FrameDetections> frames;
  std::vector<double> stamps;
};

Scenario SimulateScenario(const ScenarioConfig& cfg);

// Independent stream seed derived from a base seed and stream tags.
std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream,
                         std::uint64_t index = 0);

}  // namespace objloop
