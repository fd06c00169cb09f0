#pragma once

// Rigid-body algebra, yaw-only cuboids, pinhole projection and IoU.
//
// Frame conventions used throughout the library:
//   * world: z up, objects rest on the horizontal plane.
//   * camera body: x forward (optical axis), y left, z up. The pinhole model
//     maps a camera-frame point (x, y, z) with depth x to pixel
//     u = cx - fx * y / x, v = cy - fy * z / x.
//   * Twists are ordered (omega, v): rotation first, then translation.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace objloop {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Projects a near-orthonormal matrix back onto SO(3).
Mat3 Orthonormalize(const Mat3& R);

Mat3 Skew(const Vec3& v);

// Rotation about the world z axis.
Mat3 YawRotation(double yaw);

// Wraps an angle into [-pi, pi).
double WrapAngle(double angle);

/// Rigid transform on SE(3). A Pose `T_ab` maps points from frame b into
/// frame a.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose Identity() { return Pose(); }
  static Pose FromTranslation(const Vec3& t);
  static Pose FromYaw(double yaw, const Vec3& t);
  static Pose FromQuaternion(const Eigen::Quaterniond& q, const Vec3& t);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  // Heading of the x axis in the world xy plane.
  double yaw() const;
  // Rotation angle in [0, pi].
  double rotation_angle() const;

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& point) const;

  bool operator==(const Pose& other) const {
    return rotation_ == other.rotation_ && translation_ == other.translation_;
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

// a * b: applies b first, then a.
Pose Compose(const Pose& a, const Pose& b);
Pose Inverse(const Pose& a);

/// Element of se(3), ordered (omega, v).
struct Twist {
  Vec6 coeffs = Vec6::Zero();

  Twist() = default;
  explicit Twist(const Vec6& c) : coeffs(c) {}
  Twist(const Vec3& omega, const Vec3& v) {
    coeffs << omega, v;
  }

  Vec3 omega() const { return coeffs.head<3>(); }
  Vec3 v() const { return coeffs.tail<3>(); }
};

// Throws Error(kAngleNearPi) when the rotation angle is >= pi - 1e-6.
Twist Se3Log(const Pose& pose);
Pose Se3Exp(const Twist& twist);

Vec3 So3Log(const Mat3& R);
Mat3 So3Exp(const Vec3& omega);

// Ad(T) with T * exp(xi) * T^-1 = exp(Ad(T) * xi).
Mat6 Adjoint(const Pose& T);

// Left Jacobian of SE(3) and the inverse of the right one:
// log(exp(xi) * exp(d)) ~= xi + Jr^-1(xi) * d.
Mat6 Se3LeftJacobian(const Vec6& xi);
Mat6 Se3RightJacobianInverse(const Vec6& xi);

/// Yaw-only 3D box. Roll and pitch are zero by construction.
struct Cuboid {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Vec3 dims = Vec3::Ones();

  Cuboid() = default;
  Cuboid(const Vec3& position, double yaw, const Vec3& dims);

  Pose pose() const { return Pose::FromYaw(yaw, position); }
  double volume() const { return dims.prod(); }
  std::array<Vec3, 8> corners() const;
  // Ground-plane footprint, counter-clockwise.
  std::array<Eigen::Vector2d, 4> footprint() const;

  bool operator==(const Cuboid& other) const {
    return position == other.position && yaw == other.yaw &&
           dims == other.dims;
  }
};

struct BBox2D {
  Eigen::Vector2d min = Eigen::Vector2d::Zero();  // left-top
  Eigen::Vector2d max = Eigen::Vector2d::Zero();  // right-bottom

  BBox2D() = default;
  BBox2D(double ul, double vl, double ur, double vr);

  double width() const { return max.x() - min.x(); }
  double height() const { return max.y() - min.y(); }
  double area() const { return width() * height(); }
  bool valid() const { return width() > 0.0 && height() > 0.0; }
};

struct CameraIntrinsics {
  double fx = 448.1;
  double fy = 448.1;
  double cx = 640.0;
  double cy = 360.0;
  double width = 1280.0;
  double height = 720.0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx, double fy, double cx, double cy, double width,
                   double height);

  // Throws kInvalidArgument when invariants are violated.
  void Validate() const;

  // Intrinsics whose horizontal field of view equals `hfov_rad`.
  static CameraIntrinsics FromFov(double hfov_rad, double width,
                                  double height);
  double HorizontalFov() const;
};

// Projects the eight cuboid corners through T_cw and returns the clamped
// min/max rectangle. Corners with depth <= 0.01 m are ignored. Returns
// nullopt when nothing is visible.
std::optional<BBox2D> TryPredictBBox(const Cuboid& cuboid, const Pose& T_cw,
                                     const CameraIntrinsics& K);
// Same as TryPredictBBox but throws Error(kNotVisible).
BBox2D PredictBBox(const Cuboid& cuboid, const Pose& T_cw,
                   const CameraIntrinsics& K);

double Iou2d(const BBox2D& a, const BBox2D& b);

// Exact IoU of two yaw-only cuboids: footprint polygon intersection times
// vertical overlap, over the union volume.
double Iou3d(const Cuboid& a, const Cuboid& b);

// Area of the intersection of two convex counter-clockwise polygons.
double ConvexIntersectionArea(const std::vector<Eigen::Vector2d>& subject,
                              const std::vector<Eigen::Vector2d>& clip);

// ||t(a^-1 * b)||.
double TranslationDistance(const Pose& a, const Pose& b);

}  // namespace objloop
