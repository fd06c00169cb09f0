#include "objloop/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>
#include <set>

#include "objloop/error.hpp"

namespace objloop {

namespace {

using Clock = std::chrono::steady_clock;

double ElapsedMs(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

void PipelineConfig::Validate() const {
  assoc.Validate();
  window.Validate();
  loop.graph.Validate();
  intrinsics.Validate();
  if (loop_check_interval < 1 || loop.local_window < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "loop check interval and local window must be positive");
  }
  if (!(tau_l > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tau_l must be > 0");
}

const char* StageName(Stage stage) {
  switch (stage) {
    case kDataAssociation: return "data_association";
    case kObjectOptimization: return "object_optimization";
    case kLoopDetection: return "loop_detection";
    case kDriftCorrection: return "drift_correction";
    case kNumStages: break;
  }
  return "unknown";
}

double StageTimes::Mean(Stage stage) const {
  const auto& v = ms[stage];
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / double(v.size());
}

double StageTimes::Max(Stage stage) const {
  const auto& v = ms[stage];
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

Mapper::Mapper(const PipelineConfig& cfg, const Pose& initial_pose)
    : cfg_(cfg), initial_pose_(initial_pose) {
  cfg_.Validate();
}

void Mapper::Track(const FrameInput& input) {
  if (!frames_.empty() && input.frame <= current_) {
    throw Error(ErrorCode::kInvalidArgument, "frames must arrive in order");
  }
  const Pose T_wc = frames_.empty()
                        ? initial_pose_
                        : map_.keyframes.at(frames_.back()) * input.odometry;
  current_ = input.frame;
  frames_.push_back(input.frame);
  stamps_.push_back(input.stamp);
  odometry_.push_back(input.odometry);
  map_.keyframes[input.frame] = T_wc;

  const std::vector<Detection> dets = FilterProposals(input.detections, cfg_.filter);

  auto start = Clock::now();
  const auto candidates =
      ActiveLandmarks(map_, input.frame, cfg_.assoc.active_window);
  const SimilarityMatrix matrix = BuildSimilarityMatrix(
      dets, candidates, T_wc, cfg_.intrinsics, cfg_.assoc.lambda);
  const Assignment assignment = AssignMatches(matrix, cfg_.assoc.threshold);

  // Scored against simulator labels when they are available.
  for (const auto& [i, id] : assignment.matches) {
    if (dets[size_t(i)].gt_id < 0) continue;
    ++stats_.total;
    if (map_.landmarks.at(id).gt_id == dets[size_t(i)].gt_id) ++stats_.correct;
  }
  for (int i : assignment.unmatched) {
    const int gt = dets[size_t(i)].gt_id;
    if (gt < 0) continue;
    ++stats_.total;
    const bool available = std::any_of(
        candidates.begin(), candidates.end(),
        [gt](const Landmark* lm) { return lm->gt_id == gt; });
    if (!available) ++stats_.correct;
  }
  ApplyAssociations(map_, input.frame, T_wc, assignment, dets,
                    cfg_.assoc.history_cap);
  times_.Add(kDataAssociation, ElapsedMs(start));

  start = Clock::now();
  if (cfg_.refine_enabled && frames_.size() >= 2) {
    const size_t n = std::min(frames_.size(), size_t(cfg_.window.window_size));
    const std::vector<FrameId> window(frames_.end() - long(n), frames_.end());
    const std::vector<Pose> odometry(odometry_.end() - long(n), odometry_.end());
    const WindowReport report = RefineWindow(map_, window, cfg_.window, &odometry);
    if (report.num_residuals > 0) {
      max_refinement_cost_ = std::max(max_refinement_cost_, report.gn.final_cost);
    }
  }
  times_.Add(kObjectOptimization, ElapsedMs(start));
}

bool Mapper::LoopCheckDue() const {
  return cfg_.loop_enabled && current_ > 0 &&
         current_ % cfg_.loop_check_interval == 0;
}

LoopCheck Mapper::CheckLoop() {
  const auto start = Clock::now();
  LoopCheck check;
  check.frame = current_;
  check.T_wc = map_.keyframes.at(current_);
  const LoopQuery query = BuildLoopQuery(map_, current_, cfg_.loop);
  if (!query.local_candidates.empty()) {
    MatchSet verified;
    DetectLoop(query.local, query.global, cfg_.loop.graph,
               query.local_candidates, &verified);
    check.raw = ConsistentMatches(verified, map_,
                                  cfg_.loop.consistency_tolerance,
                                  cfg_.loop.consistency_angle);
    if (int(check.raw.size()) >= cfg_.loop.graph.min_matches) {
      check.matches = check.raw;
    }
  }
  if (!check.raw.empty()) {
    std::vector<ObjectConstraint> constraints;
    size_t best = 0;
    for (size_t i = 0; i < check.raw.size(); ++i) {
      constraints.push_back({map_.landmarks.at(check.raw[i].local_id).T_wo,
                             map_.landmarks.at(check.raw[i].global_id).T_wo,
                             cfg_.loop.object_information});
      if (check.raw[i].s_l > check.raw[best].s_l) best = i;
    }
    try {
      const Pose drift = EstimateDrift(constraints, best, cfg_.loop.gn);
      check.corrected = CorrectCurrentPose(check.T_wc, drift);
    } catch (const Error&) {
      // Inconsistent candidate sets leave the attempt uncorrected.
    }
  }
  times_.Add(kLoopDetection, ElapsedMs(start));
  return check;
}

std::optional<LoopResult> Mapper::ApplyLoop(const LoopCheck& check) {
  if (!check.matches || !guard_.TryAcquire(*check.matches)) return std::nullopt;
  const auto start = Clock::now();
  LoopResult result = CloseLoop(map_, check.frame, *check.matches, cfg_.loop);
  times_.Add(kDriftCorrection, ElapsedMs(start));
  return result;
}

Trajectory Mapper::trajectory() const {
  Trajectory t;
  for (size_t i = 0; i < frames_.size(); ++i) {
    t.Add(stamps_[i], map_.keyframes.at(frames_[i]));
  }
  return t;
}

PipelineInput InputFromScenario(const Scenario& scenario) {
  PipelineInput input;
  Trajectory gt;
  for (size_t k = 0; k < scenario.frames.size(); ++k) {
    FrameInput f;
    f.frame = scenario.frames[k].frame;
    f.stamp = scenario.frames[k].stamp;
    f.odometry = scenario.odometry[k];
    f.detections = scenario.frames[k].detections;
    input.frames.push_back(std::move(f));
    gt.Add(scenario.stamps[k], scenario.truth.camera_poses[k]);
  }
  input.initial_pose = scenario.truth.camera_poses.front();
  input.gt = std::move(gt);
  input.truth = scenario.truth;
  input.scenario = scenario.config;
  return input;
}

std::vector<bool> LoopOpportunities(const PipelineInput& input,
                                    const PipelineConfig& cfg) {
  const size_t n = input.frames.size();
  std::vector<bool> out(n, false);
  const long gap = cfg.opportunity_gap;
  if (input.truth && input.scenario &&
      input.truth->camera_poses.size() == n) {
    std::map<int, long> first_seen;
    for (size_t j = 0; j < n; ++j) {
      int revisited = 0;
      for (int id : VisibleObjects(*input.truth, input.truth->camera_poses[j],
                                   *input.scenario)) {
        auto [it, inserted] = first_seen.emplace(id, long(j));
        if (!inserted && long(j) - it->second > gap) ++revisited;
      }
      out[j] = revisited >= cfg.loop.graph.min_matches;
    }
    return out;
  }
  if (!input.gt) return out;
  const auto pairs = AssociateStamps(
      [&] {
        Trajectory t;
        for (const FrameInput& f : input.frames) t.Add(f.stamp, Pose());
        return t;
      }(),
      *input.gt);
  std::vector<std::optional<Vec3>> position(n);
  for (const auto& [i, j] : pairs) position[i] = input.gt->poses[j].translation();
  for (size_t j = 0; j < n; ++j) {
    if (!position[j]) continue;
    for (size_t i = 0; long(i) < long(j) - gap; ++i) {
      if (position[i] && (*position[i] - *position[j]).norm() <= cfg.tau_l) {
        out[j] = true;
        break;
      }
    }
  }
  return out;
}

AteReport RobustAte(const Trajectory& est, const Trajectory& gt,
                    AlignMode mode) {
  try {
    return ComputeAte(est, gt, mode);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kDegenerateGeometry) throw;
    return ComputeAte(est, gt, AlignMode::kNone);
  }
}

PipelineResult RunPipeline(const PipelineInput& input,
                           const PipelineConfig& cfg) {
  Mapper mapper(cfg, input.initial_pose);
  std::optional<Mapper> shadow;
  const std::vector<bool> opportunities = LoopOpportunities(input, cfg);
  PipelineResult result;

  std::vector<long> gt_of_frame(input.frames.size(), -1);
  if (input.gt) {
    Trajectory stamps_only;
    for (const FrameInput& f : input.frames) stamps_only.Add(f.stamp, Pose());
    for (const auto& [i, j] : AssociateStamps(stamps_only, *input.gt)) {
      gt_of_frame[i] = long(j);
    }
  }

  for (size_t k = 0; k < input.frames.size(); ++k) {
    const FrameInput& frame = input.frames[k];
    mapper.Track(frame);
    if (shadow) shadow->Track(frame);
    if (!mapper.LoopCheckDue()) continue;

    const LoopCheck check = mapper.CheckLoop();
    LoopAttempt attempt;
    attempt.frame = check.frame;
    attempt.score = MatchSetScore(check.raw);
    attempt.declared = check.matches.has_value();
    attempt.est_position = (check.corrected ? *check.corrected : check.T_wc).translation();
    if (gt_of_frame[k] >= 0) {
      attempt.gt_position = input.gt->poses[size_t(gt_of_frame[k])].translation();
    }
    attempt.opportunity = opportunities[k];
    result.attempts.push_back(attempt);

    if (check.matches) {
      if (!shadow) {
        shadow = mapper;
        shadow->DisableLoops();
      }
      if (auto loop = mapper.ApplyLoop(check)) result.loops.push_back(*loop);
    }
  }

  result.after = mapper.trajectory();
  result.before = shadow ? shadow->trajectory() : result.after;
  result.map = mapper.map();
  result.times = mapper.times();
  result.association = mapper.association_stats();
  result.max_refinement_cost = mapper.max_refinement_cost();
  if (input.gt && !input.frames.empty()) {
    result.ate_before = RobustAte(result.before, *input.gt, cfg.align);
    result.ate_after = RobustAte(result.after, *input.gt, cfg.align);
  }
  return result;
}

void WriteRuntimeCsv(std::ostream& out, const StageTimes& times) {
  out << "stage,mean_ms,max_ms\n";
  for (int s = 0; s < kNumStages; ++s) {
    const Stage stage = static_cast<Stage>(s);
    out << StageName(stage) << ',' << times.Mean(stage) << ','
        << times.Max(stage) << '\n';
  }
}

}  // namespace objloop
