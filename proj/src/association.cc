#include "objloop/association.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "objloop/error.hpp"

namespace objloop {

const ObjectMeasurement* Landmark::MeasurementAt(FrameId frame) const {
  for (const ObjectMeasurement& m : measurements) {
    if (m.frame == frame) return &m;
  }
  return nullptr;
}

LandmarkId MapState::AddLandmark(Landmark landmark) {
  landmark.id = next_landmark_id++;
  const LandmarkId id = landmark.id;
  landmarks.emplace(id, std::move(landmark));
  return id;
}

void AssocConfig::Validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must lie in [0, 1]");
  }
  if (!(threshold >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must be >= 0");
  }
  if (history_cap < 1 || active_window < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "history cap and active window must be positive");
  }
}

double DetectionSimilarity(const Detection& d, const Landmark& o,
                           const Pose& T_wc, const CameraIntrinsics& K,
                           double lambda) {
  if (d.label != o.label) return 0.0;
  double iou = 0.0;
  if (lambda > 0.0) {
    if (auto predicted = TryPredictBBox(o.cuboid(), T_wc.inverse(), K)) {
      iou = Iou2d(d.bbox, *predicted);
    }
  }
  double his = 0.0;
  double dis = 0.0;
  if (lambda < 1.0) {
    his = HistSimilarity(d.hist, {o.hist_history.begin(), o.hist_history.end()});
    dis = std::max(
        0.0, EmbSimilarity(d.emb, {o.emb_history.begin(), o.emb_history.end()}));
  }
  const double mu = 1.0 - lambda;
  return lambda * iou + lambda * mu * his + mu * mu * dis;
}

std::vector<const Landmark*> ActiveLandmarks(const MapState& map, FrameId frame,
                                             int active_window) {
  std::vector<const Landmark*> out;
  for (const auto& [id, lm] : map.landmarks) {
    if (frame - lm.last_frame() <= active_window) out.push_back(&lm);
  }
  return out;
}

SimilarityMatrix BuildSimilarityMatrix(const std::vector<Detection>& dets,
                                       const std::vector<const Landmark*>& lms,
                                       const Pose& T_wc,
                                       const CameraIntrinsics& K,
                                       double lambda) {
  SimilarityMatrix m;
  m.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dets.size()),
                                   static_cast<Eigen::Index>(lms.size()));
  m.landmark_ids.reserve(lms.size());
  for (const Landmark* lm : lms) m.landmark_ids.push_back(lm->id);
  for (size_t i = 0; i < dets.size(); ++i) {
    for (size_t k = 0; k < lms.size(); ++k) {
      m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          DetectionSimilarity(dets[i], *lms[k], T_wc, K, lambda);
    }
  }
  return m;
}

// Shortest augmenting path with row/column potentials, O(n^3).
std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) {
    throw Error(ErrorCode::kDimMismatch, "assignment matrix must be square");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

Assignment AssignMatches(const SimilarityMatrix& matrix, double threshold) {
  const Eigen::MatrixXd& s = matrix.scores;
  const Eigen::Index rows = s.rows();
  const Eigen::Index cols = s.cols();
  Assignment out;
  if (cols == 0) {
    for (Eigen::Index i = 0; i < rows; ++i) out.unmatched.push_back(int(i));
    return out;
  }
  auto admissible = [&](Eigen::Index i, Eigen::Index k) {
    return s(i, k) >= threshold && s(i, k) > 0.0;
  };
  const Eigen::Index n = std::max(rows, cols);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) {
      if (admissible(i, k)) cost(i, k) = -s(i, k);
    }
  }
  const std::vector<int> assigned = SolveAssignment(cost);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int k = assigned[static_cast<size_t>(i)];
    if (k < cols && admissible(i, k)) {
      out.matches.emplace_back(int(i), matrix.landmark_ids[size_t(k)]);
    } else {
      out.unmatched.push_back(int(i));
    }
  }
  return out;
}

namespace {

template <typename T>
void PushCapped(std::deque<T>& history, const T& value, int cap) {
  history.push_back(value);
  while (static_cast<int>(history.size()) > cap) history.pop_front();
}

}  // namespace

void ApplyAssociations(MapState& map, FrameId frame, const Pose& T_wc,
                       const Assignment& assignment,
                       const std::vector<Detection>& dets, int history_cap) {
  for (const auto& [det_index, id] : assignment.matches) {
    const Detection& d = dets.at(static_cast<size_t>(det_index));
    Landmark& lm = map.landmarks.at(id);
    PushCapped(lm.hist_history, d.hist, history_cap);
    PushCapped(lm.emb_history, d.emb, history_cap);
    lm.observed_frames.insert(
        std::upper_bound(lm.observed_frames.begin(), lm.observed_frames.end(),
                         frame),
        frame);
    lm.measurements.push_back({frame, d.pose_in_camera(), d.dims});
  }
  for (int det_index : assignment.unmatched) {
    const Detection& d = dets.at(static_cast<size_t>(det_index));
    Landmark lm;
    lm.label = d.label;
    lm.T_wo = T_wc * d.pose_in_camera();
    lm.dims = d.dims;
    lm.hist_history.push_back(d.hist);
    lm.emb_history.push_back(d.emb);
    lm.observed_frames.push_back(frame);
    lm.measurements.push_back({frame, d.pose_in_camera(), d.dims});
    lm.gt_id = d.gt_id;
    map.AddLandmark(std::move(lm));
  }
}

Assignment AssociateFrame(MapState& map, FrameId frame, const Pose& T_wc,
                          const std::vector<Detection>& dets,
                          const CameraIntrinsics& K, const AssocConfig& cfg) {
  const auto candidates = ActiveLandmarks(map, frame, cfg.active_window);
  const SimilarityMatrix matrix =
      BuildSimilarityMatrix(dets, candidates, T_wc, K, cfg.lambda);
  Assignment assignment = AssignMatches(matrix, cfg.threshold);
  ApplyAssociations(map, frame, T_wc, assignment, dets, cfg.history_cap);
  return assignment;
}

void WriteMapSnapshot(std::ostream& out, const MapState& map) {
  nlohmann::ordered_json landmarks = nlohmann::ordered_json::array();
  for (const auto& [id, lm] : map.landmarks) {
    const Vec3& t = lm.T_wo.translation();
    nlohmann::ordered_json obj;
    obj["id"] = id;
    obj["label"] = lm.label;
    obj["t"] = {t.x(), t.y(), t.z()};
    obj["yaw"] = lm.T_wo.yaw();
    obj["dims"] = {lm.dims.x(), lm.dims.y(), lm.dims.z()};
    obj["obs_count"] = lm.obs_count();
    obj["first_frame"] = lm.first_frame();
    landmarks.push_back(std::move(obj));
  }
  nlohmann::ordered_json root;
  root["landmarks"] = std::move(landmarks);
  out << root.dump(2) << '\n';
}

}  // namespace objloop
