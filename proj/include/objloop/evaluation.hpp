#pragma once

// Trajectory alignment, absolute trajectory error and loop-detection
// precision/recall.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "objloop/features.hpp"
#include "objloop/geometry.hpp"

namespace objloop {

struct Trajectory {
  std::vector<double> stamps;  // strictly increasing
  std::vector<Pose> poses;

  size_t size() const { return poses.size(); }
  void Add(double stamp, const Pose& pose);
};

// TUM format: "stamp tx ty tz qx qy qz qw" per line, '#' comments allowed.
Trajectory ReadTum(std::istream& in);
Trajectory ReadTum(const std::string& path);
void WriteTum(std::ostream& out, const Trajectory& t);
void WriteTum(const std::string& path, const Trajectory& t);

enum class AlignMode { kRigid, kSimilarity, kNone };

struct Alignment {
  double scale = 1.0;
  Pose transform;  // applied to estimated positions: s * R * p + t
};

// Pairs est/gt samples whose stamps differ by at most `max_dt`.
std::vector<std::pair<size_t, size_t>> AssociateStamps(const Trajectory& est,
                                                       const Trajectory& gt,
                                                       double max_dt = 0.05);

// Closed-form least squares (Umeyama). Throws kNoOverlap without stamp
// matches and kDegenerateGeometry for collinear or coincident samples.
Alignment AlignTrajectories(const Trajectory& est, const Trajectory& gt,
                            AlignMode mode = AlignMode::kSimilarity);

struct AteReport {
  double mse = 0.0;
  double rmse = 0.0;
  double std = 0.0;
  double max = 0.0;
  std::vector<double> errors;
};

AteReport AteFromErrors(std::vector<double> errors);

AteReport ComputeAte(const Trajectory& est, const Trajectory& gt,
                     AlignMode mode = AlignMode::kRigid);

void WriteAteJson(std::ostream& out, const AteReport& r);

struct LoopAttempt {
  FrameId frame = 0;
  double score = 0.0;
  bool declared = false;  // the pipeline's own decision
  Vec3 est_position = Vec3::Zero();
  Vec3 gt_position = Vec3::Zero();
  bool opportunity = false;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
  int tp = 0;  // declared attempts within tau_L
  int fp = 0;  // declared attempts beyond tau_L
  int fn = 0;  // opportunity events without a true positive
  int events = 0;
};

// Events are maximal runs of consecutive attempts flagged as opportunities.
// Recall is the fraction of events containing a true positive.
PrPoint CountPr(const std::vector<LoopAttempt>& attempts,
                const std::function<bool(const LoopAttempt&)>& declared,
                double tau_l);

std::vector<PrPoint> ComputePrCurve(const std::vector<LoopAttempt>& attempts,
                                    double tau_l,
                                    const std::vector<double>& thresholds);

// Distinct positive scores, ascending, plus one threshold above the maximum.
std::vector<double> DefaultThresholds(const std::vector<LoopAttempt>& attempts);

void WritePrCsv(std::ostream& out, const std::vector<PrPoint>& curve);

void WriteAttemptsCsv(std::ostream& out, const std::vector<LoopAttempt>& a);
std::vector<LoopAttempt> ReadAttemptsCsv(std::istream& in);

}  // namespace objloop
