#include "objloop/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "objloop/error.hpp"

namespace objloop {

namespace {

constexpr int kMaxPlacementAttempts = 10000;
constexpr double kMinDepth = 0.5;
constexpr double kMinBoxSide = 2.0;  // px

enum Stream : std::uint64_t {
  kWorldStream = 1,
  kOdometryStream = 2,
  kDetectionStream = 3,
  kLabelProfileStream = 4,
};

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<double> SampleDirichlet(const std::vector<double>& alpha,
                                    std::mt19937_64& rng) {
  std::vector<double> out(alpha.size());
  double sum = 0.0;
  for (size_t i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> gamma(alpha[i], 1.0);
    out[i] = gamma(rng);
    sum += out[i];
  }
  if (!(sum > 0.0)) {
    std::fill(out.begin(), out.end(), 1.0 / double(out.size()));
    return out;
  }
  for (double& v : out) v /= sum;
  return out;
}

ColorHistogram SortedHistogram(std::vector<double> weights) {
  std::sort(weights.begin(), weights.end(), std::greater<>());
  return ColorHistogram(std::move(weights));
}

Eigen::VectorXd GaussianVector(int dim, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(rng);
  return v;
}

// Label color profile: the mean of the per-label Dirichlet, independent of
// the scenario seed so labels keep their look across scenarios.
std::vector<double> LabelProfile(size_t label_index, int bins) {
  std::mt19937_64 rng(DeriveSeed(0, kLabelProfileStream, label_index));
  std::vector<double> alpha(size_t(bins), 1.0);
  auto p = SampleDirichlet(alpha, rng);
  std::sort(p.begin(), p.end(), std::greater<>());
  return p;
}

double DistanceToPath(const Eigen::Vector2d& q, const std::vector<Pose>& path) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < path.size(); ++i) {
    const Eigen::Vector2d a = path[i].translation().head<2>();
    if (i + 1 == path.size()) {
      best = std::min(best, (q - a).norm());
      break;
    }
    const Eigen::Vector2d b = path[i + 1].translation().head<2>();
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t =
        len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, (q - (a + t * ab)).norm());
  }
  return best;
}

std::vector<Pose> SamplePolyline(const std::vector<Eigen::Vector2d>& pts,
                                 double spacing) {
  std::vector<double> cumulative{0.0};
  for (size_t i = 1; i < pts.size(); ++i) {
    cumulative.push_back(cumulative.back() + (pts[i] - pts[i - 1]).norm());
  }
  const double total = cumulative.back();
  std::vector<Pose> out;
  const int n = static_cast<int>(std::floor(total / spacing + 1e-9));
  size_t seg = 0;
  for (int k = 0; k <= n; ++k) {
    const double s = std::min(k * spacing, total);
    while (seg + 2 < pts.size() && s >= cumulative[seg + 1] - 1e-9) ++seg;
    const Eigen::Vector2d dir = (pts[seg + 1] - pts[seg]).normalized();
    const Eigen::Vector2d p = pts[seg] + (s - cumulative[seg]) * dir;
    out.push_back(Pose::FromYaw(std::atan2(dir.y(), dir.x()),
                                Vec3(p.x(), p.y(), 0.0)));
  }
  return out;
}

}  // namespace

std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t stream,
                         std::uint64_t index) {
  return SplitMix(SplitMix(SplitMix(base) ^ stream) + index);
}

std::vector<LabelSpec> DefaultLabels() {
  return {{"car", 3.0, Vec3(4.2, 1.8, 1.5)},
          {"van", 1.0, Vec3(5.0, 2.0, 2.2)},
          {"truck", 1.0, Vec3(6.5, 2.5, 3.0)},
          {"cyclist", 1.0, Vec3(1.8, 0.6, 1.7)},
          {"pedestrian", 1.0, Vec3(0.6, 0.6, 1.75)}};
}

TrajectoryShape ParseTrajectoryShape(const std::string& name) {
  if (name == "rectangle") return TrajectoryShape::kRectangle;
  if (name == "line") return TrajectoryShape::kLine;
  if (name == "curve") return TrajectoryShape::kCurve;
  throw Error(ErrorCode::kInvalidArgument, "unknown trajectory shape " + name);
}

const char* TrajectoryShapeName(TrajectoryShape shape) {
  switch (shape) {
    case TrajectoryShape::kRectangle: return "rectangle";
    case TrajectoryShape::kLine: return "line";
    case TrajectoryShape::kCurve: return "curve";
  }
  return "unknown";
}

NoiseConfig NoiseConfig::Nominal() {
  NoiseConfig n;
  n.odom_sigma_t = 0.01;
  n.odom_sigma_r = 0.002;
  n.det_sigma_t = 0.1;
  n.det_sigma_yaw = 0.05;
  n.dims_sigma = 0.05;
  n.label_flip = 0.0;
  n.hist_concentration = 200.0;
  n.emb_sigma = 0.05;
  n.dropout = 0.1;
  return n;
}

void ScenarioConfig::Validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  check(n_objects >= 1, "n_objects must be >= 1");
  check(!labels.empty(), "label vocabulary is empty");
  for (const LabelSpec& l : labels) {
    check(l.weight >= 0.0 && l.nominal_dims.minCoeff() > 0.0,
          "invalid label spec");
  }
  check(trajectory.width > 0.0 && trajectory.spacing > 0.0,
        "span and spacing must be positive");
  check(trajectory.shape != TrajectoryShape::kRectangle ||
            trajectory.height > 0.0,
        "rectangle height must be positive");
  check(trajectory.revisit_offset_deg > 0.0 &&
            trajectory.revisit_offset_deg < 180.0,
        "revisit offset must lie in (0, 180) degrees");
  const NoiseConfig& n = noise;
  check(n.odom_sigma_t >= 0 && n.odom_sigma_r >= 0 && n.det_sigma_t >= 0 &&
            n.det_sigma_yaw >= 0 && n.dims_sigma >= 0 &&
            n.hist_concentration >= 0 && n.emb_sigma >= 0,
        "noise sigmas must be >= 0");
  check(n.label_flip >= 0 && n.label_flip <= 1 && n.dropout >= 0 &&
            n.dropout <= 1,
        "probabilities must lie in [0, 1]");
  check(hist_bins >= 1 && emb_dim >= int(labels.size()) + 1,
        "emb_dim must exceed the number of labels");
  check(max_range > 0.0 && corridor > clearance && min_separation >= 0.0,
        "invalid range or corridor");
  intrinsics.Validate();
}

std::vector<Eigen::VectorXd> LabelAnchors(const ScenarioConfig& cfg) {
  const double cos_sep = std::cos(cfg.anchor_separation_deg * M_PI / 180.0);
  const double alpha = std::acos(std::sqrt(std::max(0.0, cos_sep)));
  std::vector<Eigen::VectorXd> anchors;
  for (size_t l = 0; l < cfg.labels.size(); ++l) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(cfg.emb_dim);
    a[0] = std::cos(alpha);
    a[Eigen::Index(l + 1)] = std::sin(alpha);
    anchors.push_back(a);
  }
  return anchors;
}

std::vector<Pose> GenerateTrajectory(const TrajectoryConfig& cfg) {
  const double W = cfg.width;
  const double H = cfg.height;
  switch (cfg.shape) {
    case TrajectoryShape::kLine:
      return SamplePolyline({{0.0, 0.0}, {W, 0.0}}, cfg.spacing);
    case TrajectoryShape::kCurve: {
      std::vector<Pose> out;
      const int n = static_cast<int>(std::floor(W / cfg.spacing + 1e-9));
      for (int k = 0; k <= n; ++k) {
        const double theta = k * cfg.spacing / cfg.curve_radius;
        out.push_back(Pose::FromYaw(
            theta, Vec3(cfg.curve_radius * std::sin(theta),
                        cfg.curve_radius * (1.0 - std::cos(theta)), 0.0)));
      }
      return out;
    }
    case TrajectoryShape::kRectangle: {
      const double offset = cfg.revisit_offset_deg * M_PI / 180.0;
      const Eigen::Vector2d dir(std::cos(-offset), std::sin(-offset));
      std::vector<Eigen::Vector2d> pts{{0.0, 0.0}, {W, 0.0}, {W, H}};
      Eigen::Vector2d start(W, H);
      if (offset <= M_PI / 2 + 1e-12) {
        pts.emplace_back(0.0, H);
        start = Eigen::Vector2d(0.0, H);
      }
      // Final leg runs until it reaches the first side's line.
      pts.push_back(start + (H / std::sin(offset)) * dir);
      if (std::abs(pts.back().y()) < 1e-9) pts.back().y() = 0.0;
      if (std::abs(pts.back().x()) < 1e-9) pts.back().x() = 0.0;
      return SamplePolyline(pts, cfg.spacing);
    }
  }
  return {};
}

std::vector<GtObject> GenerateObjects(const ScenarioConfig& cfg,
                                      const std::vector<Pose>& path) {
  std::mt19937_64 rng(DeriveSeed(cfg.seed, kWorldStream));
  Eigen::Vector2d lo, hi;
  if (cfg.placement == PlacementMode::kUniform) {
    lo = cfg.extent.head<2>();
    hi = cfg.extent.tail<2>();
  } else {
    lo = hi = path.front().translation().head<2>();
    for (const Pose& p : path) {
      lo = lo.cwiseMin(p.translation().head<2>());
      hi = hi.cwiseMax(p.translation().head<2>());
    }
    lo.array() -= cfg.corridor;
    hi.array() += cfg.corridor;
  }
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> uyaw(-M_PI, M_PI);
  std::uniform_real_distribution<double> udim(-0.1, 0.1);
  std::vector<double> weights;
  for (const LabelSpec& l : cfg.labels) weights.push_back(l.weight);
  std::discrete_distribution<size_t> pick_label(weights.begin(), weights.end());

  std::vector<std::vector<double>> profiles;
  for (size_t l = 0; l < cfg.labels.size(); ++l) {
    profiles.push_back(LabelProfile(l, cfg.hist_bins));
  }
  const auto anchors = LabelAnchors(cfg);
  const double per_dim = cfg.instance_sigma / std::sqrt(double(cfg.emb_dim));

  std::vector<GtObject> objects;
  int attempts = 0;
  while (static_cast<int>(objects.size()) < cfg.n_objects) {
    if (++attempts > kMaxPlacementAttempts) {
      throw Error(ErrorCode::kPlacementFailure,
                  "could not place " + std::to_string(cfg.n_objects) +
                      " objects with the requested separation");
    }
    const Eigen::Vector2d q(ux(rng), uy(rng));
    if (cfg.placement == PlacementMode::kCorridor) {
      const double d = DistanceToPath(q, path);
      if (d < cfg.clearance || d > cfg.corridor) continue;
    }
    bool too_close = false;
    for (const GtObject& o : objects) {
      if ((o.cuboid.position.head<2>() - q).norm() < cfg.min_separation) {
        too_close = true;
        break;
      }
    }
    if (too_close) continue;

    GtObject o;
    o.id = static_cast<int>(objects.size());
    const size_t l = pick_label(rng);
    o.label = cfg.labels[l].name;
    Vec3 dims = cfg.labels[l].nominal_dims;
    for (int a = 0; a < 3; ++a) dims[a] *= 1.0 + udim(rng);
    o.cuboid = Cuboid(Vec3(q.x(), q.y(), 0.0), uyaw(rng), dims);
    std::vector<double> alpha = profiles[l];
    for (double& a : alpha) a *= cfg.hist_label_concentration;
    o.hist = SortedHistogram(SampleDirichlet(alpha, rng));
    o.latent = Embedding(anchors[l] + GaussianVector(cfg.emb_dim, per_dim, rng));
    objects.push_back(std::move(o));
  }
  return objects;
}

GroundTruth GenerateWorld(const ScenarioConfig& cfg) {
  cfg.Validate();
  GroundTruth truth;
  truth.camera_poses = GenerateTrajectory(cfg.trajectory);
  truth.objects = GenerateObjects(cfg, truth.camera_poses);
  return truth;
}

std::vector<Pose> SimulateOdometry(const std::vector<Pose>& true_poses,
                                   const NoiseConfig& noise,
                                   std::uint64_t seed) {
  if (true_poses.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "odometry needs >= 2 poses");
  }
  std::mt19937_64 rng(DeriveSeed(seed, kOdometryStream));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Pose> out{Pose::Identity()};
  for (size_t k = 1; k < true_poses.size(); ++k) {
    const Pose rel = true_poses[k - 1].inverse() * true_poses[k];
    const double len = rel.translation().norm();
    const double sr = noise.odom_sigma_r * std::sqrt(len);
    const double st = noise.odom_sigma_t * std::sqrt(len);
    Vec6 eps;
    for (int i = 0; i < 3; ++i) eps[i] = sr * n(rng);
    for (int i = 3; i < 6; ++i) eps[i] = st * n(rng);
    out.push_back(sr == 0.0 && st == 0.0 ? rel : rel * Se3Exp(Twist(eps)));
  }
  return out;
}

std::vector<int> VisibleObjects(const GroundTruth& truth, const Pose& T_wc,
                                const ScenarioConfig& cfg) {
  std::vector<int> out;
  const Pose T_cw = T_wc.inverse();
  const double half_fov = 0.5 * cfg.intrinsics.HorizontalFov();
  for (const GtObject& o : truth.objects) {
    const Vec3 t = T_cw * o.cuboid.position;
    if (t.x() < kMinDepth || t.norm() > cfg.max_range) continue;
    if (std::abs(std::atan2(t.y(), t.x())) > half_fov) continue;
    const auto box = TryPredictBBox(o.cuboid, T_cw, cfg.intrinsics);
    if (!box || box->width() < kMinBoxSide || box->height() < kMinBoxSide) {
      continue;
    }
    out.push_back(o.id);
  }
  return out;
}

FrameDetections RenderDetections(const GroundTruth& truth, FrameId frame,
                                 const Pose& T_wc, const ScenarioConfig& cfg,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(DeriveSeed(seed, kDetectionStream,
                                 static_cast<std::uint64_t>(frame)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const NoiseConfig& noise = cfg.noise;
  const Pose T_cw = T_wc.inverse();
  const double per_dim = noise.emb_sigma / std::sqrt(double(cfg.emb_dim));

  FrameDetections out;
  out.frame = frame;
  out.stamp = 0.1 * static_cast<double>(frame);
  for (int id : VisibleObjects(truth, T_wc, cfg)) {
    const GtObject& o = truth.objects[size_t(id)];
    if (u(rng) < noise.dropout) continue;
    Detection d;
    d.gt_id = o.id;
    d.label = o.label;
    if (noise.label_flip > 0.0 && cfg.labels.size() > 1 &&
        u(rng) < noise.label_flip) {
      std::vector<std::string> others;
      for (const LabelSpec& l : cfg.labels) {
        if (l.name != o.label) others.push_back(l.name);
      }
      std::uniform_int_distribution<size_t> pick(0, others.size() - 1);
      d.label = others[pick(rng)];
    }
    const Pose T_co = T_cw * o.cuboid.pose();
    d.t_co = T_co.translation();
    d.yaw_co = T_co.yaw();
    if (noise.det_sigma_t > 0.0) {
      for (int a = 0; a < 3; ++a) d.t_co[a] += noise.det_sigma_t * n(rng);
    }
    if (noise.det_sigma_yaw > 0.0) {
      d.yaw_co = WrapAngle(d.yaw_co + noise.det_sigma_yaw * n(rng));
    }
    d.dims = o.cuboid.dims;
    if (noise.dims_sigma > 0.0) {
      for (int a = 0; a < 3; ++a) {
        d.dims[a] = std::max(0.1, d.dims[a] + noise.dims_sigma * n(rng));
      }
    }
    if (noise.hist_concentration > 0.0) {
      std::vector<double> alpha;
      for (double w : o.hist.weights()) {
        alpha.push_back(noise.hist_concentration * w + 1.0);
      }
      d.hist = SortedHistogram(SampleDirichlet(alpha, rng));
    } else {
      d.hist = o.hist;
    }
    if (noise.emb_sigma > 0.0) {
      d.emb = Embedding(o.latent.values() +
                        GaussianVector(cfg.emb_dim, per_dim, rng));
    } else {
      d.emb = o.latent;
    }
    const auto box = TryPredictBBox(d.cuboid_in_camera(), Pose::Identity(),
                                    cfg.intrinsics);
    if (!box || !box->valid()) continue;
    d.bbox = *box;
    out.detections.push_back(std::move(d));
  }
  return out;
}

Scenario SimulateScenario(const ScenarioConfig& cfg) {
  Scenario s;
  s.config = cfg;
  s.truth = GenerateWorld(cfg);
  s.odometry = SimulateOdometry(s.truth.camera_poses, cfg.noise, cfg.seed);
  for (size_t k = 0; k < s.truth.camera_poses.size(); ++k) {
    s.frames.push_back(RenderDetections(s.truth, FrameId(k),
                                        s.truth.camera_poses[k], cfg, cfg.seed));
    s.stamps.push_back(s.frames.back().stamp);
  }
  return s;
}

}  // namespace objloop
