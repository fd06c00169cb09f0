#pragma once

// Per-object appearance signals (color histograms, embeddings), detection
// records and the detection JSONL format.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "objloop/geometry.hpp"

namespace objloop {

using FrameId = std::int64_t;

/// K nonnegative weights summing to one.
class ColorHistogram {
 public:
  ColorHistogram() = default;
  // Renormalizes to unit sum unless the sum is already within 1e-12 of one,
  // so that normalization is idempotent bit-for-bit.
  explicit ColorHistogram(std::vector<double> weights);

  const std::vector<double>& weights() const { return weights_; }
  size_t size() const { return weights_.size(); }
  double operator[](size_t i) const { return weights_[i]; }

  bool operator==(const ColorHistogram&) const = default;

 private:
  std::vector<double> weights_;
};

/// Unit-norm appearance embedding.
class Embedding {
 public:
  Embedding() = default;
  // Same idempotent renormalization rule as ColorHistogram, on the L2 norm.
  explicit Embedding(Eigen::VectorXd values);

  const Eigen::VectorXd& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  bool operator==(const Embedding& other) const {
    return values_.size() == other.values_.size() && values_ == other.values_;
  }

 private:
  Eigen::VectorXd values_;
};

struct HsvPixel {
  double h = 0.0;  // degrees in [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

using PixelPatch = std::vector<HsvPixel>;

struct Detection {
  std::string label;
  BBox2D bbox;
  ColorHistogram hist;
  Embedding emb;
  Vec3 t_co = Vec3::Zero();
  double yaw_co = 0.0;  // rotation about the camera z (up) axis
  Vec3 dims = Vec3::Ones();
  double score = 1.0;
  // Ground-truth object id when known (simulation), -1 otherwise.
  int gt_id = -1;

  Pose pose_in_camera() const { return Pose::FromYaw(yaw_co, t_co); }
  Cuboid cuboid_in_camera() const { return Cuboid(t_co, yaw_co, dims); }

  bool operator==(const Detection& other) const;
};

struct FrameDetections {
  FrameId frame = 0;
  double stamp = 0.0;
  std::vector<Detection> detections;
};

// K-means++ seeding followed by Lloyd iterations on (h/360, s, v). Returns
// per-cluster member fractions sorted descending, zero padded to `k`.
ColorHistogram ExtractColorHistogram(const PixelPatch& patch, int k,
                                     std::uint64_t seed);

// Mean dot product of `h` against every histogram in `history`.
double HistSimilarity(const ColorHistogram& h,
                      const std::vector<ColorHistogram>& history);
double EmbSimilarity(const Embedding& e, const std::vector<Embedding>& history);

struct FilterConfig {
  double max_dim = 8.0;     // m
  double max_range = 40.0;  // m
  double min_score = 0.0;
};

// Drops oversized, distant and low-score proposals; order preserved.
std::vector<Detection> FilterProposals(const std::vector<Detection>& dets,
                                       const FilterConfig& cfg);

// Detection JSONL: one object per line with fields frame, stamp, label,
// bbox, dims, t_co, yaw_co, hist, emb, score (and optional gt_id).
std::vector<FrameDetections> ReadDetectionsJsonl(std::istream& in);
std::vector<FrameDetections> ReadDetectionsJsonl(const std::string& path);
void WriteDetectionsJsonl(std::ostream& out,
                          const std::vector<FrameDetections>& frames);
void WriteDetectionsJsonl(const std::string& path,
                          const std::vector<FrameDetections>& frames);

}  // namespace objloop
