#pragma once

// End-to-end mapping driver: proposal filtering, association, window
// refinement, periodic loop checks and drift correction.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "objloop/association.hpp"
#include "objloop/evaluation.hpp"
#include "objloop/features.hpp"
#include "objloop/loop_closure.hpp"
#include "objloop/refinement.hpp"
#include "objloop/simulation.hpp"

namespace objloop {

struct PipelineConfig {
  FilterConfig filter;
  AssocConfig assoc;
  WindowConfig window;
  LoopConfig loop;
  CameraIntrinsics intrinsics = CameraIntrinsics::FromFov(110.0 * M_PI / 180.0,
                                                          1280.0, 720.0);
  bool refine_enabled = true;
  bool loop_enabled = true;
  int loop_check_interval = 5;
  double tau_l = 5.0;
  // Minimum frame gap for a revisit to count as a loop opportunity.
  int opportunity_gap = 50;
  AlignMode align = AlignMode::kRigid;

  void Validate() const;
};

enum Stage {
  kDataAssociation = 0,
  kObjectOptimization,
  kLoopDetection,
  kDriftCorrection,
  kNumStages
};

const char* StageName(Stage stage);

struct StageTimes {
  std::array<std::vector<double>, kNumStages> ms;

  void Add(Stage stage, double value) { ms[stage].push_back(value); }
  double Mean(Stage stage) const;
  double Max(Stage stage) const;
};

struct FrameInput {
  FrameId frame = 0;
  double stamp = 0.0;
  Pose odometry;  // relative motion from the previous frame
  std::vector<Detection> detections;
};

struct AssociationStats {
  long correct = 0;
  long total = 0;

  double accuracy() const { return total ? double(correct) / double(total) : 1.0; }
};

struct LoopCheck {
  FrameId frame = 0;
  MatchSet raw;                    // consistent verified matches before the size gate
  std::optional<MatchSet> matches; // set when a loop is declared
  Pose T_wc;                       // current estimate at the check
  std::optional<Pose> corrected;   // hypothetical corrected pose for `raw`
};

class Mapper {
 public:
  Mapper(const PipelineConfig& cfg, const Pose& initial_pose);

  // Pose prediction, filtering, association and window refinement.
  void Track(const FrameInput& input);
  bool LoopCheckDue() const;
  LoopCheck CheckLoop();
  // Applies a declared loop. Returns nullopt when the guard refuses it.
  std::optional<LoopResult> ApplyLoop(const LoopCheck& check);

  void DisableLoops() { cfg_.loop_enabled = false; }

  const MapState& map() const { return map_; }
  const StageTimes& times() const { return times_; }
  const AssociationStats& association_stats() const { return stats_; }
  double max_refinement_cost() const { return max_refinement_cost_; }
  FrameId current_frame() const { return current_; }
  const std::vector<double>& stamps() const { return stamps_; }
  Trajectory trajectory() const;

 private:
  PipelineConfig cfg_;
  Pose initial_pose_;
  MapState map_;
  StageTimes times_;
  AssociationStats stats_;
  CorrectionGuard guard_;
  std::vector<FrameId> frames_;
  std::vector<double> stamps_;
  std::vector<Pose> odometry_;
  FrameId current_ = -1;
  double max_refinement_cost_ = 0.0;
};

struct PipelineInput {
  std::vector<FrameInput> frames;
  Pose initial_pose;
  std::optional<Trajectory> gt;
  // When present, loop opportunities use object co-visibility; otherwise
  // gt positions within tau_l at least `opportunity_gap` frames apart.
  std::optional<GroundTruth> truth;
  std::optional<ScenarioConfig> scenario;
};

PipelineInput InputFromScenario(const Scenario& scenario);

struct PipelineResult {
  Trajectory before;  // loop closure disabled
  Trajectory after;
  MapState map;
  std::vector<LoopResult> loops;
  std::vector<LoopAttempt> attempts;
  std::optional<AteReport> ate_before;
  std::optional<AteReport> ate_after;
  StageTimes times;
  AssociationStats association;
  double max_refinement_cost = 0.0;
};

PipelineResult RunPipeline(const PipelineInput& input, const PipelineConfig& cfg);

// Per-frame loop-opportunity flags.
std::vector<bool> LoopOpportunities(const PipelineInput& input,
                                    const PipelineConfig& cfg);

// ATE with a fallback to unaligned error when the geometry cannot be aligned.
AteReport RobustAte(const Trajectory& est, const Trajectory& gt, AlignMode mode);

void WriteRuntimeCsv(std::ostream& out, const StageTimes& times);

}  // namespace objloop
