#include "objloop/loop_closure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "objloop/error.hpp"

namespace objloop {

LoopQuery BuildLoopQuery(const MapState& map, FrameId current,
                         const LoopConfig& cfg) {
  const FrameId window_start = current - cfg.local_window + 1;
  std::vector<Vertex> local, global;
  LoopQuery q;
  for (const auto& [id, lm] : map.landmarks) {
    const bool recent = lm.last_frame() >= window_start;
    const bool fresh = lm.first_frame() >= window_start;
    if (recent) local.push_back(VertexFromLandmark(lm));
    if (fresh && lm.obs_count() >= cfg.min_candidate_observations) {
      q.local_candidates.push_back(id);
    }
    if (!fresh) global.push_back(VertexFromLandmark(lm));
  }
  q.local = BuildGraph(std::move(local), cfg.graph.k_nn);
  q.global = BuildGraph(std::move(global), cfg.graph.k_nn);
  return q;
}

namespace {

// Exhaustive max-weight clique search; match sets are small.
struct CliqueSearch {
  const std::vector<std::vector<bool>>& ok;
  const std::vector<double>& weight;
  std::vector<size_t> current, best;
  double current_weight = 0.0, best_weight = -1.0;

  void Extend(size_t next) {
    if (current.size() > best.size() ||
        (current.size() == best.size() && current_weight > best_weight)) {
      best = current;
      best_weight = current_weight;
    }
    for (size_t i = next; i < ok.size(); ++i) {
      if (current.size() + (ok.size() - i) < best.size()) return;
      if (!std::all_of(current.begin(), current.end(),
                       [&](size_t j) { return ok[i][j]; })) {
        continue;
      }
      current.push_back(i);
      current_weight += weight[i];
      Extend(i + 1);
      current_weight -= weight[i];
      current.pop_back();
    }
  }
};

}  // namespace

MatchSet ConsistentMatches(const MatchSet& matches, const MapState& map,
                           double tolerance, double angle) {
  const size_t n = matches.size();
  std::vector<Vec3> local(n), global(n);
  std::vector<Mat3> rotation(n);
  std::vector<double> weight(n);
  for (size_t i = 0; i < n; ++i) {
    const Pose& l = map.landmarks.at(matches[i].local_id).T_wo;
    const Pose& g = map.landmarks.at(matches[i].global_id).T_wo;
    local[i] = l.translation();
    global[i] = g.translation();
    rotation[i] = l.rotation() * g.rotation().transpose();
    weight[i] = matches[i].s_l;
  }
  std::vector<std::vector<bool>> ok(n, std::vector<bool>(n, true));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dl = (local[i] - local[j]).norm();
      const double dg = (global[i] - global[j]).norm();
      const double turn =
          Pose(rotation[i].transpose() * rotation[j], Vec3::Zero())
              .rotation_angle();
      ok[i][j] = ok[j][i] = std::abs(dl - dg) <= tolerance && turn <= angle;
    }
  }
  CliqueSearch search{ok, weight, {}, {}};
  search.Extend(0);
  MatchSet out;
  for (size_t i : search.best) out.push_back(matches[i]);
  return out;
}

FrameId SelectLoopFrame(const MatchSet& matches, const MapState& map) {
  if (matches.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty match set");
  }
  FrameId best = std::numeric_limits<FrameId>::max();
  for (const MatchCandidate& m : matches) {
    best = std::min(best, map.landmarks.at(m.global_id).first_frame());
  }
  return best;
}

Vec6 DriftResidual(const Pose& T_drift, const Pose& T_wo_l,
                   const Pose& T_wo_g) {
  return Se3Log(T_wo_g.inverse() * T_drift.inverse() * T_wo_l).coeffs;
}

Mat6 DriftJacobian(const Pose& T_drift, const Pose& T_wo_l, const Pose& T_wo_g) {
  const Pose E = T_wo_g.inverse() * T_drift.inverse() * T_wo_l;
  return -Se3RightJacobianInverse(Se3Log(E).coeffs) *
         Adjoint(T_wo_l.inverse() * T_drift);
}

Pose EstimateDrift(const std::vector<ObjectConstraint>& constraints,
                   size_t init_index, const GnConfig& gn, GnReport* report) {
  if (constraints.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no object constraints");
  }
  const ObjectConstraint& seed = constraints.at(init_index);
  NllsProblem problem;
  const int d = problem.AddVariable(seed.T_wo_l * seed.T_wo_g.inverse());
  for (const ObjectConstraint& c : constraints) {
    const Pose l = c.T_wo_l;
    const Pose g = c.T_wo_g;
    problem.AddResidual(
        {d},
        [l, g](const std::vector<Pose>& x) { return DriftResidual(x[0], l, g); },
        c.information,
        [l, g](const std::vector<Pose>& x) {
          return std::vector<Mat6>{DriftJacobian(x[0], l, g)};
        });
  }
  const GnReport r = SolveGaussNewton(problem, gn);
  if (report) *report = r;
  return problem.variable(d);
}

Pose CorrectCurrentPose(const Pose& T_wc, const Pose& T_drift) {
  return T_drift.inverse() * T_wc;
}

std::vector<Pose> OptimizeFrameGraph(const std::vector<Pose>& poses,
                                     const std::vector<Pose>& measurements,
                                     const std::set<size_t>& anchors,
                                     const Mat6& information,
                                     const GnConfig& gn, GnReport* report) {
  if (poses.size() < 2 || measurements.size() + 1 != poses.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "frame graph needs M >= 2 poses and M - 1 measurements");
  }
  NllsProblem problem;
  for (size_t i = 0; i < poses.size(); ++i) {
    problem.AddVariable(poses[i], anchors.count(i) > 0);
  }
  for (size_t i = 0; i + 1 < poses.size(); ++i) {
    const Pose z = measurements[i];
    problem.AddResidual(
        {int(i), int(i + 1)},
        [z](const std::vector<Pose>& x) {
          return RelativePoseResidual(z, x[0], x[1]);
        },
        information,
        [z](const std::vector<Pose>& x) {
          return RelativePoseJacobians(z, x[0], x[1]);
        });
  }
  const GnReport r = SolveGaussNewton(problem, gn);
  if (report) *report = r;
  std::vector<Pose> out;
  out.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) {
    // Anchors are returned untouched, bit for bit.
    out.push_back(anchors.count(i) ? poses[i] : problem.variable(int(i)));
  }
  return out;
}

void PropagateCorrection(MapState& map, const std::map<FrameId, Pose>& old_poses,
                         const std::map<FrameId, Pose>& new_poses) {
  if (old_poses.empty()) return;
  const FrameId first = old_poses.begin()->first;
  const FrameId last = old_poses.rbegin()->first;
  for (auto& [id, lm] : map.landmarks) {
    const FrameId anchor = lm.first_frame();
    if (anchor < first || anchor > last) continue;
    const auto o = old_poses.find(anchor);
    const auto n = new_poses.find(anchor);
    if (o == old_poses.end() || n == new_poses.end()) continue;
    if (o->second == n->second) continue;
    lm.T_wo = n->second * (o->second.inverse() * lm.T_wo);
  }
}

namespace {

template <typename T>
void Absorb(std::deque<T>& into, const std::deque<T>& from, int cap) {
  into.insert(into.end(), from.begin(), from.end());
  while (static_cast<int>(into.size()) > cap) into.pop_front();
}

}  // namespace

void FuseMatches(MapState& map, const MatchSet& matches, int history_cap) {
  for (const MatchCandidate& m : matches) {
    auto local_it = map.landmarks.find(m.local_id);
    auto global_it = map.landmarks.find(m.global_id);
    if (local_it == map.landmarks.end() || global_it == map.landmarks.end()) {
      continue;
    }
    Landmark& g = global_it->second;
    const Landmark& l = local_it->second;
    Absorb(g.hist_history, l.hist_history, history_cap);
    Absorb(g.emb_history, l.emb_history, history_cap);
    std::vector<FrameId> frames;
    std::merge(g.observed_frames.begin(), g.observed_frames.end(),
               l.observed_frames.begin(), l.observed_frames.end(),
               std::back_inserter(frames));
    g.observed_frames = std::move(frames);
    g.measurements.insert(g.measurements.end(), l.measurements.begin(),
                          l.measurements.end());
    map.landmarks.erase(local_it);
  }
}

LoopResult CloseLoop(MapState& map, FrameId current, const MatchSet& matches,
                     const LoopConfig& cfg) {
  LoopResult result;
  result.current_frame = current;
  result.matches = matches;
  result.loop_frame = SelectLoopFrame(matches, map);
  if (result.loop_frame >= current) {
    throw Error(ErrorCode::kInvalidArgument, "loop frame must precede current");
  }

  std::vector<ObjectConstraint> constraints;
  size_t best = 0;
  for (size_t i = 0; i < matches.size(); ++i) {
    constraints.push_back({map.landmarks.at(matches[i].local_id).T_wo,
                           map.landmarks.at(matches[i].global_id).T_wo,
                           cfg.object_information});
    if (matches[i].s_l > matches[best].s_l) best = i;
  }
  result.T_drift = EstimateDrift(constraints, best, cfg.gn);

  std::map<FrameId, Pose> old_poses;
  for (auto it = map.keyframes.lower_bound(result.loop_frame);
       it != map.keyframes.end() && it->first <= current; ++it) {
    old_poses.insert(*it);
  }
  std::vector<Pose> chain, measurements;
  for (const auto& [f, pose] : old_poses) {
    if (!chain.empty()) measurements.push_back(chain.back().inverse() * pose);
    chain.push_back(pose);
  }
  chain.back() = CorrectCurrentPose(chain.back(), result.T_drift);

  GnReport report;
  std::vector<Pose> optimized = chain;
  if (chain.size() >= 2) {
    optimized = OptimizeFrameGraph(chain, measurements, {0, chain.size() - 1},
                                   cfg.odometry_information, cfg.gn, &report);
  }
  result.cost_before = report.initial_cost;
  result.cost_after = report.final_cost;

  std::map<FrameId, Pose> new_poses;
  size_t k = 0;
  for (const auto& [f, pose] : old_poses) {
    new_poses[f] = optimized[k++];
    map.keyframes[f] = new_poses[f];
  }
  PropagateCorrection(map, old_poses, new_poses);
  FuseMatches(map, matches, cfg.history_cap);
  return result;
}

bool CorrectionGuard::TryAcquire(const MatchSet& matches) {
  std::vector<std::pair<LandmarkId, LandmarkId>> key;
  for (const MatchCandidate& m : matches) key.emplace_back(m.local_id, m.global_id);
  std::sort(key.begin(), key.end());
  return applied_.insert(std::move(key)).second;
}

void WriteLoopResultJsonl(std::ostream& out, const LoopResult& r) {
  nlohmann::ordered_json obj;
  obj["loop_frame"] = r.loop_frame;
  obj["current_frame"] = r.current_frame;
  obj["n_matches"] = r.matches.size();
  obj["drift_translation_m"] = r.T_drift.translation().norm();
  obj["drift_rotation_deg"] = r.T_drift.rotation_angle() * 180.0 / M_PI;
  obj["cost_before"] = r.cost_before;
  obj["cost_after"] = r.cost_after;
  out << obj.dump() << '\n';
}

}  // namespace objloop
