#include "objloop/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <json.hpp>

#include "objloop/error.hpp"

namespace objloop {

void Trajectory::Add(double stamp, const Pose& pose) {
  if (!stamps.empty() && !(stamp > stamps.back())) {
    throw Error(ErrorCode::kInvalidArgument,
                "trajectory stamps must be strictly increasing");
  }
  stamps.push_back(stamp);
  poses.push_back(pose);
}

Trajectory ReadTum(std::istream& in) {
  Trajectory t;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double v[8];
    for (double& x : v) {
      if (!(ss >> x)) {
        throw Error(ErrorCode::kParseError,
                    "line " + std::to_string(line_no) +
                        ": expected 8 numbers (stamp tx ty tz qx qy qz qw)");
      }
    }
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.0)) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": zero quaternion");
    }
    try {
      t.Add(v[0], Pose::FromQuaternion(q.normalized(), Vec3(v[1], v[2], v[3])));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return t;
}

Trajectory ReadTum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return ReadTum(in);
}

void WriteTum(std::ostream& out, const Trajectory& t) {
  out << std::setprecision(17);
  for (size_t i = 0; i < t.size(); ++i) {
    const Vec3& p = t.poses[i].translation();
    const Eigen::Quaterniond q = t.poses[i].quaternion();
    out << t.stamps[i] << ' ' << p.x() << ' ' << p.y() << ' ' << p.z() << ' '
        << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
}

void WriteTum(const std::string& path, const Trajectory& t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  WriteTum(out, t);
}

std::vector<std::pair<size_t, size_t>> AssociateStamps(const Trajectory& est,
                                                       const Trajectory& gt,
                                                       double max_dt) {
  std::vector<std::pair<size_t, size_t>> out;
  for (size_t i = 0; i < est.size(); ++i) {
    const double s = est.stamps[i];
    auto it = std::lower_bound(gt.stamps.begin(), gt.stamps.end(), s);
    size_t best = gt.size();
    double best_dt = max_dt;
    for (auto c : {it, it == gt.stamps.begin() ? it : std::prev(it)}) {
      if (c == gt.stamps.end()) continue;
      const double dt = std::abs(*c - s);
      if (dt <= best_dt) {
        best_dt = dt;
        best = size_t(c - gt.stamps.begin());
      }
    }
    if (best < gt.size()) out.emplace_back(i, best);
  }
  return out;
}

Alignment AlignTrajectories(const Trajectory& est, const Trajectory& gt,
                            AlignMode mode) {
  const auto pairs = AssociateStamps(est, gt);
  if (pairs.empty()) throw Error(ErrorCode::kNoOverlap, "no matching stamps");
  if (mode == AlignMode::kNone) return {};
  Eigen::Matrix3Xd src(3, pairs.size()), dst(3, pairs.size());
  for (size_t k = 0; k < pairs.size(); ++k) {
    src.col(Eigen::Index(k)) = est.poses[pairs[k].first].translation();
    dst.col(Eigen::Index(k)) = gt.poses[pairs[k].second].translation();
  }
  for (const Eigen::Matrix3Xd* m : {&src, &dst}) {
    const Eigen::Matrix3Xd centered = m->colwise() - m->rowwise().mean();
    const Eigen::Vector3d sv =
        Eigen::JacobiSVD<Eigen::Matrix3d>(centered * centered.transpose())
            .singularValues();
    if (pairs.size() < 3 || !(sv[1] > 1e-9 * sv[0]) || !(sv[0] > 0.0)) {
      throw Error(ErrorCode::kDegenerateGeometry,
                  "collinear or coincident trajectory samples");
    }
  }
  const Eigen::Matrix4d T =
      Eigen::umeyama(src, dst, mode == AlignMode::kSimilarity);
  Alignment a;
  a.scale = T.block<3, 3>(0, 0).col(0).norm();
  a.transform = Pose(T.block<3, 3>(0, 0) / a.scale, T.block<3, 1>(0, 3));
  return a;
}

AteReport AteFromErrors(std::vector<double> errors) {
  AteReport r;
  r.errors = std::move(errors);
  if (r.errors.empty()) return r;
  const double n = static_cast<double>(r.errors.size());
  double sum = 0.0, sum2 = 0.0;
  for (double e : r.errors) {
    sum += e;
    sum2 += e * e;
    r.max = std::max(r.max, e);
  }
  r.mse = sum2 / n;
  r.rmse = std::sqrt(r.mse);
  const double mean = sum / n;
  r.std = std::sqrt(std::max(0.0, r.mse - mean * mean));
  return r;
}

AteReport ComputeAte(const Trajectory& est, const Trajectory& gt,
                     AlignMode mode) {
  const Alignment a = AlignTrajectories(est, gt, mode);
  std::vector<double> errors;
  for (const auto& [i, j] : AssociateStamps(est, gt)) {
    const Vec3 p = a.scale * (a.transform.rotation() * est.poses[i].translation()) +
                   a.transform.translation();
    errors.push_back((p - gt.poses[j].translation()).norm());
  }
  return AteFromErrors(std::move(errors));
}

void WriteAteJson(std::ostream& out, const AteReport& r) {
  nlohmann::ordered_json obj;
  obj["mse"] = r.mse;
  obj["rmse"] = r.rmse;
  obj["std"] = r.std;
  obj["max"] = r.max;
  obj["n"] = r.errors.size();
  out << obj.dump() << '\n';
}

PrPoint CountPr(const std::vector<LoopAttempt>& attempts,
                const std::function<bool(const LoopAttempt&)>& declared,
                double tau_l) {
  PrPoint p;
  int detected = 0;
  bool in_event = false;
  bool event_hit = false;
  auto close_event = [&] {
    if (!in_event) return;
    ++p.events;
    if (event_hit) ++detected;
    in_event = event_hit = false;
  };
  for (const LoopAttempt& a : attempts) {
    const bool positive = declared(a);
    const bool correct = (a.est_position - a.gt_position).norm() <= tau_l;
    if (positive) (correct ? p.tp : p.fp)++;
    if (a.opportunity) {
      in_event = true;
      event_hit |= positive && correct;
    } else {
      close_event();
    }
  }
  close_event();
  p.fn = p.events - detected;
  p.precision = p.tp + p.fp > 0 ? double(p.tp) / double(p.tp + p.fp) : 1.0;
  p.recall = p.events > 0 ? double(detected) / double(p.events) : 1.0;
  return p;
}

std::vector<PrPoint> ComputePrCurve(const std::vector<LoopAttempt>& attempts,
                                    double tau_l,
                                    const std::vector<double>& thresholds) {
  if (attempts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty attempt log");
  }
  std::vector<PrPoint> curve;
  for (double t : thresholds) {
    PrPoint p = CountPr(
        attempts,
        [t](const LoopAttempt& a) { return a.score > 0.0 && a.score >= t; },
        tau_l);
    p.threshold = t;
    curve.push_back(p);
  }
  return curve;
}

std::vector<double> DefaultThresholds(const std::vector<LoopAttempt>& attempts) {
  std::set<double> scores;
  for (const LoopAttempt& a : attempts) {
    if (a.score > 0.0) scores.insert(a.score);
  }
  std::vector<double> out(scores.begin(), scores.end());
  out.push_back(out.empty() ? 1.0 : out.back() + 1.0);
  return out;
}

void WritePrCsv(std::ostream& out, const std::vector<PrPoint>& curve) {
  out << "threshold,precision,recall,tp,fp,fn\n" << std::setprecision(10);
  for (const PrPoint& p : curve) {
    out << p.threshold << ',' << p.precision << ',' << p.recall << ',' << p.tp
        << ',' << p.fp << ',' << p.fn << '\n';
  }
}

void WriteAttemptsCsv(std::ostream& out, const std::vector<LoopAttempt>& a) {
  out << "frame,score,declared,est_x,est_y,est_z,gt_x,gt_y,gt_z,opportunity\n"
      << std::setprecision(17);
  for (const LoopAttempt& x : a) {
    out << x.frame << ',' << x.score << ',' << int(x.declared) << ','
        << x.est_position.x() << ',' << x.est_position.y() << ','
        << x.est_position.z() << ',' << x.gt_position.x() << ','
        << x.gt_position.y() << ',' << x.gt_position.z() << ','
        << int(x.opportunity) << '\n';
  }
}

std::vector<LoopAttempt> ReadAttemptsCsv(std::istream& in) {
  std::vector<LoopAttempt> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("frame", 0) == 0) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    LoopAttempt a;
    int declared = 0, opportunity = 0;
    if (!(ss >> a.frame >> a.score >> declared >> a.est_position.x() >>
          a.est_position.y() >> a.est_position.z() >> a.gt_position.x() >>
          a.gt_position.y() >> a.gt_position.z() >> opportunity)) {
      throw Error(ErrorCode::kParseError,
                  "attempt log line " + std::to_string(line_no) +
                      ": expected 10 columns");
    }
    a.declared = declared != 0;
    a.opportunity = opportunity != 0;
    out.push_back(a);
  }
  return out;
}

}  // namespace objloop
