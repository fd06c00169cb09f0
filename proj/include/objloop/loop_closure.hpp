#pragma once

// Loop detection on map slices and the drift-correction sequence: loop frame
// selection, drift estimation, current-pose correction, frame-graph
// optimization and map resynchronization.

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "objloop/association.hpp"
#include "objloop/refinement.hpp"
#include "objloop/scene_graph.hpp"

namespace objloop {

struct ObjectConstraint {
  Pose T_wo_l;  // local (recent, drifted) estimate
  Pose T_wo_g;  // global (earlier) estimate
  Mat6 information = Mat6::Identity();
};

struct LoopConfig {
  GraphConfig graph;
  // Landmarks first observed within this many frames form the local slice.
  int local_window = 15;
  // Local landmarks need this many observations to become match candidates.
  int min_candidate_observations = 5;
  Mat6 object_information = Mat6::Identity();
  Mat6 odometry_information =
      (Vec6() << 100, 100, 100, 25, 25, 25).finished().asDiagonal();
  GnConfig gn;
  int history_cap = 10;
  // Max disagreement between two matches: local vs global distance (m) and
  // the angle between their implied drift rotations (rad).
  double consistency_tolerance = 1.0;
  double consistency_angle = 0.3;
};

struct LoopResult {
  FrameId loop_frame = 0;
  FrameId current_frame = 0;
  MatchSet matches;
  Pose T_drift;
  double cost_before = 0.0;
  double cost_after = 0.0;
};

// Local and global graphs for a loop query at `current`.
struct LoopQuery {
  SceneGraph local;
  SceneGraph global;
  std::vector<LandmarkId> local_candidates;
};

// Local graph: landmarks observed within the window (layout context).
// Candidates: those first observed within it with enough observations. Global
// graph: landmarks first observed before it.
LoopQuery BuildLoopQuery(const MapState& map, FrameId current,
                         const LoopConfig& cfg);

// Largest subset of `matches` that agree pairwise on a common rigid drift:
// landmark distances equal on both sides within `tolerance` and implied
// rotations R_l * R_g^T within `angle`. Ties prefer the larger s_l sum.
// Output keeps the input order.
MatchSet ConsistentMatches(const MatchSet& matches, const MapState& map,
                           double tolerance, double angle);

// Earliest first observation among the matched global landmarks.
FrameId SelectLoopFrame(const MatchSet& matches, const MapState& map);

// log(T_wo_g^-1 * D^-1 * T_wo_l), expressed in the object frame: zero when
// local = D * global.
Vec6 DriftResidual(const Pose& T_drift, const Pose& T_wo_l, const Pose& T_wo_g);
// d/d(T_drift).
Mat6 DriftJacobian(const Pose& T_drift, const Pose& T_wo_l, const Pose& T_wo_g);

// Least-squares drift over all constraints, started from the exact solution
// of constraint `init_index`.
Pose EstimateDrift(const std::vector<ObjectConstraint>& constraints,
                   size_t init_index = 0, const GnConfig& gn = {},
                   GnReport* report = nullptr);

// D^-1 * T_wc.
Pose CorrectCurrentPose(const Pose& T_wc, const Pose& T_drift);

// Chain optimization with measurements[i] relating poses[i] to poses[i+1].
// Poses listed in `anchors` are held fixed.
std::vector<Pose> OptimizeFrameGraph(const std::vector<Pose>& poses,
                                     const std::vector<Pose>& measurements,
                                     const std::set<size_t>& anchors,
                                     const Mat6& information,
                                     const GnConfig& gn = {},
                                     GnReport* report = nullptr);

// Moves every landmark first observed inside the optimized span with its
// first frame's correction.
void PropagateCorrection(MapState& map, const std::map<FrameId, Pose>& old_poses,
                         const std::map<FrameId, Pose>& new_poses);

// Global landmarks absorb their matched local duplicates.
void FuseMatches(MapState& map, const MatchSet& matches, int history_cap);

// Runs drift estimation, correction, frame-graph optimization, propagation
// and fusion on `map` for a verified match set.
LoopResult CloseLoop(MapState& map, FrameId current, const MatchSet& matches,
                     const LoopConfig& cfg);

// Refuses to apply the same match set twice.
class CorrectionGuard {
 public:
  bool TryAcquire(const MatchSet& matches);

 private:
  std::set<std::vector<std::pair<LandmarkId, LandmarkId>>> applied_;
};

void WriteLoopResultJsonl(std::ostream& out, const LoopResult& r);

}  // namespace objloop
