#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "objloop/error.hpp"
#include "objloop/geometry.hpp"
#include "test_util.hpp"

namespace objloop {
namespace {

TEST(Pose, ComposeTranslations) {
  const Pose a = Pose::FromTranslation(Vec3(1, 0, 0));
  const Pose b = Pose::FromTranslation(Vec3(0, 2, 0));
  EXPECT_TRUE((a * b).translation().isApprox(Vec3(1, 2, 0)));
  EXPECT_TRUE((a * b).rotation().isIdentity());
}

TEST(Pose, IdentityAndInverse) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Pose p = test::RandomPose(rng, 10.0);
    EXPECT_TRUE(test::PoseNear(Pose::Identity() * p, p, 0.0));
    EXPECT_TRUE(test::PoseNear(p * p.inverse(), Pose::Identity(), 1e-12));
  }
  const Pose t = Pose::FromTranslation(Vec3(1, 2, 3)).inverse();
  EXPECT_TRUE(t.translation().isApprox(Vec3(-1, -2, -3)));
}

TEST(Pose, ComposeMatchesMatrixProduct) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Pose a = test::RandomPose(rng, 5.0);
    const Pose b = test::RandomPose(rng, 5.0);
    Eigen::Matrix4d ma = Eigen::Matrix4d::Identity(), mb = ma;
    ma.topLeftCorner<3, 3>() = a.rotation();
    ma.topRightCorner<3, 1>() = a.translation();
    mb.topLeftCorner<3, 3>() = b.rotation();
    mb.topRightCorner<3, 1>() = b.translation();
    const Eigen::Matrix4d m = ma * mb;
    const Pose c = Compose(a, b);
    EXPECT_LT((c.rotation() - m.topLeftCorner<3, 3>()).norm(), 1e-12);
    EXPECT_LT((c.translation() - m.topRightCorner<3, 1>()).norm(), 1e-12);
  }
}

TEST(Se3, LogOfKnownPoses) {
  EXPECT_EQ(Se3Log(Pose::Identity()).coeffs, Vec6::Zero());
  const Twist quarter = Se3Log(Pose::FromYaw(M_PI / 2, Vec3::Zero()));
  EXPECT_LT((quarter.coeffs - (Vec6() << 0, 0, M_PI / 2, 0, 0, 0).finished())
                .norm(),
            1e-12);
  const Twist shift = Se3Log(Pose::FromTranslation(Vec3(1, 2, 3)));
  EXPECT_LT((shift.coeffs - (Vec6() << 0, 0, 0, 1, 2, 3).finished()).norm(),
            1e-12);
}

TEST(Se3, LogNearPiThrows) {
  const Pose flip(So3Exp(Vec3(0, 0, M_PI - 1e-8)), Vec3::Zero());
  try {
    Se3Log(flip);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAngleNearPi);
  }
}

TEST(Se3, ExpMatchesRodrigues) {
  EXPECT_TRUE(Se3Exp(Twist()) == Pose::Identity());
  const Pose half = Se3Exp(Twist(Vec3(0, 0, M_PI), Vec3::Zero()));
  Mat3 expected;
  expected << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  EXPECT_LT((half.rotation() - expected).norm(), 1e-12);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Vec3 w(u(rng), u(rng), u(rng));
    const double theta = w.norm();
    const Mat3 K = Skew(w / theta);
    const Mat3 R = Mat3::Identity() + std::sin(theta) * K +
                   (1 - std::cos(theta)) * K * K;
    EXPECT_LT((So3Exp(w) - R).norm(), 1e-12);
  }
}

TEST(Se3, RoundTripThousandPoses) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Pose p = test::RandomPose(rng, 20.0);
    EXPECT_TRUE(test::PoseNear(Se3Exp(Se3Log(p)), p, 1e-9));
  }
}

TEST(Se3, SmallAngleRoundTrip) {
  for (double theta : {1e-12, 1e-9, 1e-6, 1e-3}) {
    const Twist xi(Vec3(theta, -theta, 0.5 * theta), Vec3(1, -2, 0.5));
    EXPECT_LT((Se3Log(Se3Exp(xi)).coeffs - xi.coeffs).norm(), 1e-10);
  }
}

TEST(Se3, AdjointConjugation) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const Pose T = test::RandomPose(rng, 5.0);
    const Vec6 xi = test::RandomTwist(rng, 0.5);
    const Pose lhs = T * Se3Exp(Twist(xi)) * T.inverse();
    EXPECT_TRUE(
        test::PoseNear(lhs, Se3Exp(Twist(Vec6(Adjoint(T) * xi))), 1e-10));
  }
}

TEST(Se3, RightJacobianInverseAgainstDifferences) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    const Vec6 xi = test::RandomTwist(rng, 1.0);
    const Mat6 analytic = Se3RightJacobianInverse(xi);
    Mat6 numeric;
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Vec6 d = Vec6::Zero();
      d[k] = h;
      const Vec6 plus = Se3Log(Se3Exp(Twist(xi)) * Se3Exp(Twist(d))).coeffs;
      const Vec6 minus = Se3Log(Se3Exp(Twist(xi)) * Se3Exp(Twist(Vec6(-d)))).coeffs;
      numeric.col(k) = (plus - minus) / (2 * h);
    }
    EXPECT_LT((analytic - numeric).norm(), 1e-5 * (1 + numeric.norm()));
  }
}

TEST(Projection, CubeAheadOnAxis) {
  const CameraIntrinsics K(500, 500, 320, 320, 640, 640);
  const Cuboid cube(Vec3(5, 0, 0), 0.0, Vec3::Ones());
  const BBox2D box = PredictBBox(cube, Pose::Identity(), K);
  const double half = 500.0 * 0.5 / 4.5;
  EXPECT_NEAR(box.min.x(), 320 - half, 1e-9);
  EXPECT_NEAR(box.max.x(), 320 + half, 1e-9);
  EXPECT_NEAR(box.min.y(), 320 - half, 1e-9);
  EXPECT_NEAR(box.max.y(), 320 + half, 1e-9);
}

TEST(Projection, BehindCameraNotVisible) {
  const CameraIntrinsics K(500, 500, 320, 320, 640, 640);
  const Cuboid cube(Vec3(-5, 0, 0), 0.0, Vec3::Ones());
  EXPECT_FALSE(TryPredictBBox(cube, Pose::Identity(), K).has_value());
  try {
    PredictBBox(cube, Pose::Identity(), K);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotVisible);
  }
}

TEST(Projection, ClampedAtBorder) {
  const CameraIntrinsics K(500, 500, 320, 320, 640, 640);
  const Cuboid cube(Vec3(5, 0, 0), 0.0, Vec3::Ones());
  // Camera shifted 3 m right: the cube sits left of the axis, u extends past 0.
  const Pose T_wc = Pose::FromTranslation(Vec3(0, -3, 0));
  const BBox2D box = PredictBBox(cube, T_wc.inverse(), K);
  // Hand projection: y in [2.5, 3.5]; near face x = 4.5 governs u min.
  const double u_min = 320 - 500 * 3.5 / 4.5;
  const double u_max = 320 - 500 * 2.5 / 5.5;
  EXPECT_LT(u_min, 0.0);
  EXPECT_DOUBLE_EQ(box.min.x(), 0.0);
  EXPECT_NEAR(box.max.x(), u_max, 1e-9);
  EXPECT_LE(box.max.y(), 640.0);
}

TEST(Iou2d, HandArithmetic) {
  const BBox2D a(0, 0, 2, 2), b(1, 1, 3, 3), far(10, 10, 11, 11);
  EXPECT_DOUBLE_EQ(Iou2d(a, a), 1.0);
  EXPECT_DOUBLE_EQ(Iou2d(a, far), 0.0);
  EXPECT_NEAR(Iou2d(a, b), 1.0 / 7.0, 1e-12);
}

TEST(Iou3d, KnownValues) {
  const Cuboid a(Vec3::Zero(), 0.0, Vec3::Ones());
  EXPECT_NEAR(Iou3d(a, a), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(Iou3d(a, Cuboid(Vec3(5, 0, 0), 0.3, Vec3::Ones())), 0.0);
  EXPECT_NEAR(Iou3d(a, Cuboid(Vec3(0.5, 0, 0), 0.0, Vec3::Ones())), 1.0 / 3.0,
              1e-12);
  // 45 degree square inside a square: octagon overlap.
  const Cuboid r(Vec3::Zero(), M_PI / 4, Vec3::Ones());
  const double octagon = 2.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(Iou3d(a, r), octagon / (2.0 - octagon), 1e-12);
}

TEST(Iou3d, SymmetricAndBounded) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Cuboid a = test::RandomCuboid(rng, 1.5);
    const Cuboid b = test::RandomCuboid(rng, 1.5);
    const double ab = Iou3d(a, b);
    EXPECT_NEAR(ab, Iou3d(b, a), 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0 + 1e-12);
  }
}

TEST(Iou3d, MonteCarloOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const Cuboid a = test::RandomCuboid(rng, 1.0);
    const Cuboid b = test::RandomCuboid(rng, 1.0);
    EXPECT_NEAR(Iou3d(a, b), test::MonteCarloIou(a, b, 200000, 100 + i), 0.01);
  }
}

TEST(Distance, PythagorasAndInvariance) {
  const Pose a = Pose::Identity(), b = Pose::FromTranslation(Vec3(3, 4, 0));
  EXPECT_DOUBLE_EQ(TranslationDistance(a, a), 0.0);
  EXPECT_NEAR(TranslationDistance(a, b), 5.0, 1e-12);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const Pose G = test::RandomPose(rng, 10.0);
    const Pose p = test::RandomPose(rng, 10.0), q = test::RandomPose(rng, 10.0);
    EXPECT_NEAR(TranslationDistance(G * p, G * q), TranslationDistance(p, q),
                1e-12);
  }
}

TEST(Intrinsics, Validation) {
  EXPECT_THROW(CameraIntrinsics(-1, 500, 320, 240, 640, 480).Validate(), Error);
  const auto K = CameraIntrinsics::FromFov(M_PI / 2, 1280, 720);
  EXPECT_NEAR(K.HorizontalFov(), M_PI / 2, 1e-12);
}

}  // namespace
}  // namespace objloop
