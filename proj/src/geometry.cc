#include "objloop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "objloop/error.hpp"

namespace objloop {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSmallAngle = 1e-6;
constexpr double kOrthoDrift = 1e-12;
constexpr double kMinDepth = 0.01;

Vec3 Vee(const Mat3& W) { return Vec3(W(2, 1), W(0, 2), W(1, 0)); }

bool NeedsOrthonormalize(const Mat3& R) {
  return ((R * R.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff() >
         kOrthoDrift;
}

// V(omega) such that t = V * v in exp([omega, v]).
// Series below this angle; the closed forms cancel catastrophically there.
constexpr double kSeriesAngle = 1e-2;

// (1 - cos t) / t^2
double CosineRatio(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    return 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0;
  }
  return (1.0 - std::cos(theta)) / t2;
}

// (t - sin t) / t^3
double SineRatio(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
  }
  return (theta - std::sin(theta)) / (t2 * theta);
}

Mat3 LeftJacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = Skew(omega);
  return Mat3::Identity() + CosineRatio(theta) * W + SineRatio(theta) * W * W;
}

Mat3 LeftJacobianInverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = Skew(omega);
  const double t2 = theta * theta;
  double c;
  if (theta < kSeriesAngle) {
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  } else {
    c = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / t2;
  }
  return Mat3::Identity() - 0.5 * W + c * W * W;
}

// Off-diagonal block of the SE(3) left Jacobian.
Mat3 CouplingBlock(const Vec3& omega, const Vec3& v) {
  const double theta = omega.norm();
  const double t2 = theta * theta;
  double a, b, c;
  if (theta < 1e-2) {
    a = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    b = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c = 1.0 / 120.0 - t2 / 2520.0;
  } else {
    const double s = std::sin(theta), co = std::cos(theta);
    a = (theta - s) / (t2 * theta);
    b = (t2 + 2.0 * co - 2.0) / (2.0 * t2 * t2);
    c = (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t2 * t2 * theta);
  }
  const Mat3 W = Skew(omega);
  const Mat3 V = Skew(v);
  const Mat3 WV = W * V;
  const Mat3 VW = V * W;
  const Mat3 WVW = WV * W;
  return 0.5 * V + a * (WV + VW + WVW) + b * (W * WV + VW * W - 3.0 * WVW) +
         c * (WVW * W + W * WVW);
}

}  // namespace

Mat3 Orthonormalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

Mat3 Skew(const Vec3& v) {
  Mat3 S;
  // clang-format off
  S <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return S;
}

Mat3 YawRotation(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 R;
  R << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return R;
}

double WrapAngle(double angle) {
  double wrapped = std::fmod(angle + kPi, 2.0 * kPi);
  if (wrapped < 0.0) wrapped += 2.0 * kPi;
  wrapped -= kPi;
  // fmod rounding can land exactly on +pi.
  if (wrapped >= kPi) wrapped -= 2.0 * kPi;
  return wrapped;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (NeedsOrthonormalize(rotation_)) rotation_ = Orthonormalize(rotation_);
}

Pose Pose::FromTranslation(const Vec3& t) { return Pose(Mat3::Identity(), t); }

Pose Pose::FromYaw(double yaw, const Vec3& t) {
  return Pose(YawRotation(yaw), t);
}

Pose Pose::FromQuaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return Pose(q.normalized().toRotationMatrix(), t);
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  // Canonical sign: non-negative scalar part.
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

double Pose::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

double Pose::rotation_angle() const {
  const double c = std::clamp((rotation_.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double s = 0.5 * Vee(rotation_ - rotation_.transpose()).norm();
  return std::atan2(s, c);
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

Pose Pose::operator*(const Pose& other) const {
  return Pose(rotation_ * other.rotation_,
              rotation_ * other.translation_ + translation_);
}

Vec3 Pose::operator*(const Vec3& point) const {
  return rotation_ * point + translation_;
}

Pose Compose(const Pose& a, const Pose& b) { return a * b; }
Pose Inverse(const Pose& a) { return a.inverse(); }

Mat3 So3Exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = Skew(omega);
  const double t2 = theta * theta;
  const double a = theta < kSeriesAngle
                       ? 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
                       : std::sin(theta) / theta;
  return Mat3::Identity() + a * W + CosineRatio(theta) * W * W;
}

Vec3 So3Log(const Mat3& R) {
  const double c = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const Vec3 w = 0.5 * Vee(R - R.transpose());  // sin(theta) * axis
  const double s = w.norm();
  const double theta = std::atan2(s, c);
  if (theta >= kPi - kSmallAngle) {
    throw Error(ErrorCode::kAngleNearPi,
                "rotation angle " + std::to_string(theta) +
                    " too close to pi for the logarithm");
  }
  if (theta < kSmallAngle) {
    return w * (1.0 + theta * theta / 6.0);
  }
  if (c > -0.7) {
    return w * (theta / s);
  }
  // Near pi the antisymmetric part vanishes; recover the axis from the
  // symmetric part instead: (R + R^T)/2 - cI = (1 - c) a a^T.
  const Mat3 B = 0.5 * (R + R.transpose()) - c * Mat3::Identity();
  int k = 0;
  B.diagonal().maxCoeff(&k);
  const double one_minus_c = 1.0 - c;
  const double ak = std::sqrt(std::max(B(k, k) / one_minus_c, 0.0));
  Vec3 axis = B.col(k) / (one_minus_c * ak);
  if (axis.dot(w) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

Mat6 Adjoint(const Pose& T) {
  Mat6 A = Mat6::Zero();
  A.topLeftCorner<3, 3>() = T.rotation();
  A.bottomRightCorner<3, 3>() = T.rotation();
  A.bottomLeftCorner<3, 3>() = Skew(T.translation()) * T.rotation();
  return A;
}

Mat6 Se3LeftJacobian(const Vec6& xi) {
  const Vec3 omega = xi.head<3>();
  Mat6 J = Mat6::Zero();
  J.topLeftCorner<3, 3>() = LeftJacobian(omega);
  J.bottomRightCorner<3, 3>() = J.topLeftCorner<3, 3>();
  J.bottomLeftCorner<3, 3>() = CouplingBlock(omega, xi.tail<3>());
  return J;
}

Mat6 Se3RightJacobianInverse(const Vec6& xi) {
  // Jr(xi) = Jl(-xi); block-triangular inverse.
  const Vec3 omega = -xi.head<3>();
  const Mat3 Jinv = LeftJacobianInverse(omega);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = Jinv;
  out.bottomRightCorner<3, 3>() = Jinv;
  out.bottomLeftCorner<3, 3>() =
      -Jinv * CouplingBlock(omega, -xi.tail<3>()) * Jinv;
  return out;
}

Pose Se3Exp(const Twist& twist) {
  const Vec3 omega = twist.omega();
  return Pose(So3Exp(omega), LeftJacobian(omega) * twist.v());
}

Twist Se3Log(const Pose& pose) {
  const Vec3 omega = So3Log(pose.rotation());
  return Twist(omega, LeftJacobianInverse(omega) * pose.translation());
}

Cuboid::Cuboid(const Vec3& position_in, double yaw_in, const Vec3& dims_in)
    : position(position_in), yaw(yaw_in), dims(dims_in) {
  if (!(dims.minCoeff() > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "cuboid dims must be positive");
  }
}

std::array<Vec3, 8> Cuboid::corners() const {
  const Mat3 R = YawRotation(yaw);
  const Vec3 half = 0.5 * dims;
  std::array<Vec3, 8> out;
  int i = 0;
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      for (double sz : {-1.0, 1.0}) {
        out[i++] = R * Vec3(sx * half.x(), sy * half.y(), sz * half.z()) +
                   position;
      }
    }
  }
  return out;
}

std::array<Eigen::Vector2d, 4> Cuboid::footprint() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hx = 0.5 * dims.x();
  const double hy = 0.5 * dims.y();
  const Eigen::Vector2d center = position.head<2>();
  auto corner = [&](double x, double y) -> Eigen::Vector2d {
    return Eigen::Vector2d(c * x - s * y, s * x + c * y) + center;
  };
  return {corner(-hx, -hy), corner(hx, -hy), corner(hx, hy), corner(-hx, hy)};
}

BBox2D::BBox2D(double ul, double vl, double ur, double vr)
    : min(ul, vl), max(ur, vr) {}

CameraIntrinsics::CameraIntrinsics(double fx_in, double fy_in, double cx_in,
                                   double cy_in, double width_in,
                                   double height_in)
    : fx(fx_in), fy(fy_in), cx(cx_in), cy(cy_in), width(width_in),
      height(height_in) {
  Validate();
}

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0 && fy > 0.0 && cx > 0.0 && cx < width && cy > 0.0 &&
        cy < height)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid camera intrinsics");
  }
}

CameraIntrinsics CameraIntrinsics::FromFov(double hfov_rad, double width,
                                           double height) {
  const double f = 0.5 * width / std::tan(0.5 * hfov_rad);
  return CameraIntrinsics(f, f, 0.5 * width, 0.5 * height, width, height);
}

double CameraIntrinsics::HorizontalFov() const {
  return 2.0 * std::atan(std::max(cx, width - cx) / fx);
}

std::optional<BBox2D> TryPredictBBox(const Cuboid& cuboid, const Pose& T_cw,
                                     const CameraIntrinsics& K) {
  double umin = std::numeric_limits<double>::infinity();
  double vmin = umin;
  double umax = -umin;
  double vmax = -umin;
  bool any = false;
  for (const Vec3& corner : cuboid.corners()) {
    const Vec3 p = T_cw * corner;
    if (p.x() <= kMinDepth) continue;
    const double u = K.cx - K.fx * p.y() / p.x();
    const double v = K.cy - K.fy * p.z() / p.x();
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
    any = true;
  }
  if (!any) return std::nullopt;
  BBox2D box(std::clamp(umin, 0.0, K.width), std::clamp(vmin, 0.0, K.height),
             std::clamp(umax, 0.0, K.width), std::clamp(vmax, 0.0, K.height));
  if (!box.valid()) return std::nullopt;
  return box;
}

BBox2D PredictBBox(const Cuboid& cuboid, const Pose& T_cw,
                   const CameraIntrinsics& K) {
  auto box = TryPredictBBox(cuboid, T_cw, K);
  if (!box) {
    throw Error(ErrorCode::kNotVisible, "cuboid does not project into image");
  }
  return *box;
}

double Iou2d(const BBox2D& a, const BBox2D& b) {
  const double iw =
      std::min(a.max.x(), b.max.x()) - std::max(a.min.x(), b.min.x());
  const double ih =
      std::min(a.max.y(), b.max.y()) - std::max(a.min.y(), b.min.y());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double ConvexIntersectionArea(const std::vector<Eigen::Vector2d>& subject,
                              const std::vector<Eigen::Vector2d>& clip) {
  // Sutherland-Hodgman against each clip edge.
  std::vector<Eigen::Vector2d> output = subject;
  const double eps = 1e-12;
  for (size_t i = 0; i < clip.size() && !output.empty(); ++i) {
    const Eigen::Vector2d& a = clip[i];
    const Eigen::Vector2d& b = clip[(i + 1) % clip.size()];
    const Eigen::Vector2d edge = b - a;
    auto side = [&](const Eigen::Vector2d& p) {
      const Eigen::Vector2d d = p - a;
      return edge.x() * d.y() - edge.y() * d.x();
    };
    std::vector<Eigen::Vector2d> input;
    input.swap(output);
    Eigen::Vector2d prev = input.back();
    double prev_side = side(prev);
    for (const Eigen::Vector2d& cur : input) {
      const double cur_side = side(cur);
      const bool cur_in = cur_side >= -eps;
      const bool prev_in = prev_side >= -eps;
      if (cur_in != prev_in) {
        const double t =
            std::clamp(prev_side / (prev_side - cur_side), 0.0, 1.0);
        output.push_back(prev + t * (cur - prev));
      }
      if (cur_in) output.push_back(cur);
      prev = cur;
      prev_side = cur_side;
    }
  }
  if (output.size() < 3) return 0.0;
  double area = 0.0;
  for (size_t i = 0; i < output.size(); ++i) {
    const Eigen::Vector2d& p = output[i];
    const Eigen::Vector2d& q = output[(i + 1) % output.size()];
    area += p.x() * q.y() - q.x() * p.y();
  }
  return std::max(0.5 * area, 0.0);
}

double Iou3d(const Cuboid& a, const Cuboid& b) {
  if (a == b) return 1.0;
  const double zlo = std::max(a.position.z() - 0.5 * a.dims.z(),
                              b.position.z() - 0.5 * b.dims.z());
  const double zhi = std::min(a.position.z() + 0.5 * a.dims.z(),
                              b.position.z() + 0.5 * b.dims.z());
  if (zhi <= zlo) return 0.0;
  const double reach = 0.5 * (a.dims.head<2>().norm() + b.dims.head<2>().norm());
  if ((a.position.head<2>() - b.position.head<2>()).norm() > reach) return 0.0;

  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const double area = ConvexIntersectionArea({fa.begin(), fa.end()},
                                             {fb.begin(), fb.end()});
  const double inter = area * (zhi - zlo);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double TranslationDistance(const Pose& a, const Pose& b) {
  return (a.inverse() * b).translation().norm();
}

}  // namespace objloop
