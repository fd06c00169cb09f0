#include "objloop/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "objloop/error.hpp"

namespace objloop {

namespace {

constexpr int kMaxLloydIterations = 50;
constexpr double kLloydTolerance = 1e-6;
constexpr double kNormTolerance = 1e-12;

using Point = Eigen::Vector3d;

Point ToPoint(const HsvPixel& p) { return Point(p.h / 360.0, p.s, p.v); }

size_t Nearest(const Point& p, const std::vector<Point>& centers) {
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < centers.size(); ++c) {
    const double d = (p - centers[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

ColorHistogram::ColorHistogram(std::vector<double> weights)
    : weights_(std::move(weights)) {
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "histogram weights must be nonnegative");
    }
    sum += w;
  }
  if (weights_.empty() || sum <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "histogram has no mass");
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    for (double& w : weights_) w /= sum;
  }
}

Embedding::Embedding(Eigen::VectorXd values) : values_(std::move(values)) {
  const double norm = values_.norm();
  if (values_.size() == 0 || !(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kInvalidArgument, "embedding has zero norm");
  }
  if (std::abs(norm - 1.0) > kNormTolerance) values_ /= norm;
}

bool Detection::operator==(const Detection& o) const {
  return label == o.label && bbox.min == o.bbox.min &&
         bbox.max == o.bbox.max && hist == o.hist && emb == o.emb &&
         t_co == o.t_co && yaw_co == o.yaw_co && dims == o.dims &&
         score == o.score && gt_id == o.gt_id;
}

ColorHistogram ExtractColorHistogram(const PixelPatch& patch, int k,
                                     std::uint64_t seed) {
  if (patch.empty()) throw Error(ErrorCode::kEmptyPatch, "no pixels");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "K_c must be >= 1");

  std::vector<Point> points;
  points.reserve(patch.size());
  for (const HsvPixel& p : patch) points.push_back(ToPoint(p));

  // K-means++ seeding. Stops early when every point coincides with a center.
  std::mt19937_64 rng(seed);
  std::vector<Point> centers;
  std::uniform_int_distribution<size_t> pick(0, points.size() - 1);
  centers.push_back(points[pick(rng)]);
  std::vector<double> dist2(points.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      dist2[i] = (points[i] - centers[Nearest(points[i], centers)]).squaredNorm();
      total += dist2[i];
    }
    if (total <= 0.0) break;
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    size_t chosen = points.size() - 1;
    for (size_t i = 0; i < points.size(); ++i) {
      target -= dist2[i];
      if (target < 0.0 && dist2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(points[chosen]);
  }

  // Lloyd iterations.
  std::vector<size_t> assignment(points.size(), 0);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    for (size_t i = 0; i < points.size(); ++i) {
      assignment[i] = Nearest(points[i], centers);
    }
    std::vector<Point> sums(centers.size(), Point::Zero());
    std::vector<size_t> counts(centers.size(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
      sums[assignment[i]] += points[i];
      ++counts[assignment[i]];
    }
    double shift = 0.0;
    for (size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] == 0) continue;
      const Point updated = sums[c] / static_cast<double>(counts[c]);
      shift = std::max(shift, (updated - centers[c]).norm());
      centers[c] = updated;
    }
    if (shift < kLloydTolerance) break;
  }
  for (size_t i = 0; i < points.size(); ++i) {
    assignment[i] = Nearest(points[i], centers);
  }

  std::vector<double> weights(static_cast<size_t>(k), 0.0);
  for (size_t a : assignment) weights[a] += 1.0;
  for (double& w : weights) w /= static_cast<double>(points.size());
  std::sort(weights.begin(), weights.end(), std::greater<>());
  return ColorHistogram(std::move(weights));
}

double HistSimilarity(const ColorHistogram& h,
                      const std::vector<ColorHistogram>& history) {
  if (history.empty()) throw Error(ErrorCode::kEmptyHistory, "no histograms");
  double sum = 0.0;
  for (const ColorHistogram& other : history) {
    if (other.size() != h.size()) {
      throw Error(ErrorCode::kDimMismatch, "histogram length mismatch");
    }
    sum += std::inner_product(h.weights().begin(), h.weights().end(),
                              other.weights().begin(), 0.0);
  }
  return sum / static_cast<double>(history.size());
}

double EmbSimilarity(const Embedding& e,
                     const std::vector<Embedding>& history) {
  if (history.empty()) throw Error(ErrorCode::kEmptyHistory, "no embeddings");
  double sum = 0.0;
  for (const Embedding& other : history) {
    if (other.size() != e.size()) {
      throw Error(ErrorCode::kDimMismatch, "embedding length mismatch");
    }
    sum += e.values().dot(other.values());
  }
  return sum / static_cast<double>(history.size());
}

std::vector<Detection> FilterProposals(const std::vector<Detection>& dets,
                                       const FilterConfig& cfg) {
  std::vector<Detection> out;
  out.reserve(dets.size());
  for (const Detection& d : dets) {
    if (d.dims.maxCoeff() > cfg.max_dim) continue;
    if (d.t_co.norm() > cfg.max_range) continue;
    if (d.score < cfg.min_score) continue;
    out.push_back(d);
  }
  return out;
}

namespace {

using nlohmann::json;

const json& Require(const json& obj, const char* field, size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw Error(ErrorCode::kSchemaError, "line " + std::to_string(line) +
                                             ": missing field '" + field + "'");
  }
  return *it;
}

std::vector<double> RequireArray(const json& obj, const char* field,
                                 size_t line, size_t expected = 0) {
  const json& value = Require(obj, field, line);
  if (!value.is_array() || (expected != 0 && value.size() != expected)) {
    throw Error(ErrorCode::kSchemaError,
                "line " + std::to_string(line) + ": field '" + field +
                    "' must be an array" +
                    (expected ? " of " + std::to_string(expected) : ""));
  }
  std::vector<double> out;
  out.reserve(value.size());
  for (const json& v : value) {
    if (!v.is_number()) {
      throw Error(ErrorCode::kSchemaError, "line " + std::to_string(line) +
                                               ": field '" + field +
                                               "' must hold numbers");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

double RequireNumber(const json& obj, const char* field, size_t line) {
  const json& value = Require(obj, field, line);
  if (!value.is_number()) {
    throw Error(ErrorCode::kSchemaError, "line " + std::to_string(line) +
                                             ": field '" + field +
                                             "' must be a number");
  }
  return value.get<double>();
}

Detection ParseDetection(const json& obj, size_t line) {
  Detection d;
  const json& label = Require(obj, "label", line);
  if (!label.is_string()) {
    throw Error(ErrorCode::kSchemaError,
                "line " + std::to_string(line) + ": 'label' must be a string");
  }
  d.label = label.get<std::string>();
  const auto bbox = RequireArray(obj, "bbox", line, 4);
  d.bbox = BBox2D(bbox[0], bbox[1], bbox[2], bbox[3]);
  const auto dims = RequireArray(obj, "dims", line, 3);
  d.dims = Vec3(dims[0], dims[1], dims[2]);
  const auto t = RequireArray(obj, "t_co", line, 3);
  d.t_co = Vec3(t[0], t[1], t[2]);
  d.yaw_co = WrapAngle(RequireNumber(obj, "yaw_co", line));
  d.score = RequireNumber(obj, "score", line);
  auto hist = RequireArray(obj, "hist", line);
  auto emb = RequireArray(obj, "emb", line);
  try {
    d.hist = ColorHistogram(std::move(hist));
    d.emb = Embedding(Eigen::Map<const Eigen::VectorXd>(
        emb.data(), static_cast<Eigen::Index>(emb.size())));
    if (!d.bbox.valid() || !(d.dims.minCoeff() > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "degenerate bbox or dims");
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaError,
                "line " + std::to_string(line) + ": " + e.what());
  }
  if (auto it = obj.find("gt_id"); it != obj.end() && it->is_number_integer()) {
    d.gt_id = it->get<int>();
  }
  return d;
}

}  // namespace

std::vector<FrameDetections> ReadDetectionsJsonl(std::istream& in) {
  std::map<FrameId, FrameDetections> frames;
  std::string text;
  size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::kParseError,
                  "line " + std::to_string(line) + ": expected an object");
    }
    const json& frame = Require(obj, "frame", line);
    if (!frame.is_number_integer()) {
      throw Error(ErrorCode::kSchemaError,
                  "line " + std::to_string(line) + ": 'frame' must be int");
    }
    const double stamp = RequireNumber(obj, "stamp", line);
    const FrameId id = frame.get<FrameId>();
    auto [it, inserted] = frames.try_emplace(id);
    if (inserted) {
      it->second.frame = id;
      it->second.stamp = stamp;
    }
    it->second.detections.push_back(ParseDetection(obj, line));
  }
  std::vector<FrameDetections> out;
  out.reserve(frames.size());
  for (auto& [id, group] : frames) out.push_back(std::move(group));
  return out;
}

std::vector<FrameDetections> ReadDetectionsJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return ReadDetectionsJsonl(in);
}

void WriteDetectionsJsonl(std::ostream& out,
                          const std::vector<FrameDetections>& frames) {
  for (const FrameDetections& f : frames) {
    for (const Detection& d : f.detections) {
      nlohmann::ordered_json obj;
      obj["frame"] = f.frame;
      obj["stamp"] = f.stamp;
      obj["label"] = d.label;
      obj["bbox"] = {d.bbox.min.x(), d.bbox.min.y(), d.bbox.max.x(),
                     d.bbox.max.y()};
      obj["dims"] = {d.dims.x(), d.dims.y(), d.dims.z()};
      obj["t_co"] = {d.t_co.x(), d.t_co.y(), d.t_co.z()};
      obj["yaw_co"] = d.yaw_co;
      obj["hist"] = d.hist.weights();
      obj["emb"] = std::vector<double>(d.emb.values().data(),
                                       d.emb.values().data() + d.emb.size());
      obj["score"] = d.score;
      if (d.gt_id >= 0) obj["gt_id"] = d.gt_id;
      out << obj.dump() << '\n';
    }
  }
}

void WriteDetectionsJsonl(const std::string& path,
                          const std::vector<FrameDetections>& frames) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  WriteDetectionsJsonl(out, frames);
}

}  // namespace objloop
