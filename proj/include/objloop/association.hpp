#pragma once

// Frame-to-map data association: detection/landmark similarity, optimal
// one-to-one assignment and landmark bookkeeping.

#include <deque>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "objloop/features.hpp"
#include "objloop/geometry.hpp"

namespace objloop {

using LandmarkId = int;

// A single-frame cuboid measurement of a landmark, kept for window refinement.
struct ObjectMeasurement {
  FrameId frame = 0;
  Pose T_co;
  Vec3 dims = Vec3::Ones();
};

struct Landmark {
  LandmarkId id = -1;
  std::string label;
  Pose T_wo;
  Vec3 dims = Vec3::Ones();
  std::deque<ColorHistogram> hist_history;
  std::deque<Embedding> emb_history;
  // Sorted ascending.
  std::vector<FrameId> observed_frames;
  std::vector<ObjectMeasurement> measurements;
  // Ground-truth id of the creating detection, -1 when unknown.
  int gt_id = -1;

  int obs_count() const { return static_cast<int>(observed_frames.size()); }
  FrameId first_frame() const { return observed_frames.front(); }
  FrameId last_frame() const { return observed_frames.back(); }
  Cuboid cuboid() const { return Cuboid(T_wo.translation(), T_wo.yaw(), dims); }
  const ObjectMeasurement* MeasurementAt(FrameId frame) const;
};

struct MapState {
  std::map<LandmarkId, Landmark> landmarks;
  std::map<FrameId, Pose> keyframes;  // T_wc
  LandmarkId next_landmark_id = 0;

  LandmarkId AddLandmark(Landmark landmark);
};

struct AssocConfig {
  double lambda = 0.5;
  double threshold = 0.35;
  int history_cap = 10;
  // Only landmarks observed within this many frames are candidates.
  int active_window = 15;

  void Validate() const;
};

// Weighted similarity of one detection against one landmark. Zero when the
// labels differ; negative embedding correlation is clamped to zero.
double DetectionSimilarity(const Detection& d, const Landmark& o,
                           const Pose& T_wc, const CameraIntrinsics& K,
                           double lambda);

struct SimilarityMatrix {
  Eigen::MatrixXd scores;                // rows: detections, cols: landmarks
  std::vector<LandmarkId> landmark_ids;  // column order
};

SimilarityMatrix BuildSimilarityMatrix(const std::vector<Detection>& dets,
                                       const std::vector<const Landmark*>& lms,
                                       const Pose& T_wc,
                                       const CameraIntrinsics& K,
                                       double lambda);

// Landmarks whose last observation is within `active_window` frames of
// `frame`, in id order.
std::vector<const Landmark*> ActiveLandmarks(const MapState& map, FrameId frame,
                                             int active_window);

// Minimum-cost perfect assignment on a square cost matrix. Returns the
// column assigned to each row.
std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost);

struct Assignment {
  std::vector<std::pair<int, LandmarkId>> matches;  // (detection, landmark)
  std::vector<int> unmatched;                       // detection indices
};

// One-to-one assignment maximizing the total score over entries >= threshold.
Assignment AssignMatches(const SimilarityMatrix& matrix, double threshold);

// Appends matched observations and spawns landmarks for unmatched detections.
void ApplyAssociations(MapState& map, FrameId frame, const Pose& T_wc,
                       const Assignment& assignment,
                       const std::vector<Detection>& dets, int history_cap);

// Convenience wrapper: candidates, matrix, assignment and update.
Assignment AssociateFrame(MapState& map, FrameId frame, const Pose& T_wc,
                          const std::vector<Detection>& dets,
                          const CameraIntrinsics& K, const AssocConfig& cfg);

void WriteMapSnapshot(std::ostream& out, const MapState& map);

}  // namespace objloop
