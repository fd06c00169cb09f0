#include <random>

#include <gtest/gtest.h>

#include "objloop/error.hpp"
#include "objloop/refinement.hpp"
#include "test_util.hpp"

namespace objloop {
namespace {

double MaxRelativeError(const std::vector<Mat6>& a, const std::vector<Mat6>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, (a[i] - b[i]).norm() / std::max(1.0, b[i].norm()));
  }
  return worst;
}

TEST(ObjectCameraResidual, ZeroWhenConsistent) {
  std::mt19937_64 rng(31);
  const Pose T_wc = test::RandomPose(rng, 5.0), T_co = test::RandomPose(rng, 5.0);
  EXPECT_LT(ObjectCameraResidual(T_wc * T_co, T_wc, T_co).norm(), 1e-12);
}

TEST(ObjectCameraResidual, PureTranslationOffset) {
  const Pose T_wc = Pose::Identity(), T_co = Pose::FromTranslation(Vec3(4, 1, 0));
  const Pose T_wo = Pose::FromTranslation(Vec3(4.1, 1, 0));
  const Vec6 r = ObjectCameraResidual(T_wo, T_wc, T_co);
  EXPECT_LT((r - (Vec6() << 0, 0, 0, -0.1, 0, 0).finished()).norm(), 1e-12);
}

TEST(ObjectCameraResidual, FirstOrderInObjectPerturbation) {
  std::mt19937_64 rng(32);
  const Pose T_wc = test::RandomPose(rng, 5.0), T_co = test::RandomPose(rng, 5.0);
  const Vec6 delta = test::RandomTwist(rng, 1e-4);
  const Vec6 r =
      ObjectCameraResidual(T_wc * T_co * Se3Exp(Twist(delta)), T_wc, T_co);
  EXPECT_LT((r + delta).norm(), 1e-7);
}

TEST(Jacobians, AnalyticMatchesFiniteDifferences) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 100; ++i) {
    const Pose a = test::RandomPose(rng, 5.0), b = test::RandomPose(rng, 5.0);
    const Pose z = a.inverse() * b * Se3Exp(Twist(test::RandomTwist(rng, 0.3)));
    const Pose T_co = b.inverse() * a * Se3Exp(Twist(test::RandomTwist(rng, 0.3)));
    EXPECT_LT(MaxRelativeError(
                  ObjectCameraJacobians(a, b, T_co),
                  NumericJacobians(
                      [&](const std::vector<Pose>& x) {
                        return ObjectCameraResidual(x[0], x[1], T_co);
                      },
                      {a, b})),
              1e-5);
    EXPECT_LT(MaxRelativeError(
                  RelativePoseJacobians(z, a, b),
                  NumericJacobians(
                      [&](const std::vector<Pose>& x) {
                        return RelativePoseResidual(z, x[0], x[1]);
                      },
                      {a, b})),
              1e-5);
  }
}

TEST(GaussNewton, ZeroResidualStart) {
  NllsProblem problem;
  const Pose target = Pose::FromYaw(0.3, Vec3(1, 2, 3));
  const int v = problem.AddVariable(target);
  problem.AddResidual({v}, [target](const std::vector<Pose>& x) {
    return Se3Log(target.inverse() * x[0]).coeffs;
  });
  const GnReport r = SolveGaussNewton(problem);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_DOUBLE_EQ(r.final_cost, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(GaussNewton, RecoversComposedGroundTruth) {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose T_wc = test::RandomPose(rng, 5.0), T_co = test::RandomPose(rng, 5.0);
    const Pose truth = T_wc * T_co;
    Vec3 axis(u(rng), u(rng), u(rng));
    const Vec3 omega = axis.normalized() * (M_PI / 6) * std::abs(u(rng));
    const Vec3 shift = Vec3(u(rng), u(rng), u(rng)).normalized() * std::abs(u(rng));
    NllsProblem problem;
    const int o = problem.AddVariable(truth * Se3Exp(Twist(omega, shift)));
    const int c = problem.AddVariable(T_wc, true);
    problem.AddResidual({o, c}, [T_co](const std::vector<Pose>& x) {
      return ObjectCameraResidual(x[0], x[1], T_co);
    });
    const GnReport r = SolveGaussNewton(problem);
    EXPECT_TRUE(r.converged);
    EXPECT_TRUE(test::PoseNear(problem.variable(o), truth, 1e-6));
    EXPECT_TRUE(problem.variable(c) == T_wc);
  }
}

TEST(GaussNewton, AllFixedReturnsInput) {
  NllsProblem problem;
  const Pose p = Pose::FromTranslation(Vec3(1, 0, 0));
  problem.AddVariable(p, true);
  problem.AddResidual({0}, [](const std::vector<Pose>& x) {
    return Se3Log(x[0]).coeffs;
  });
  const GnReport r = SolveGaussNewton(problem);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(problem.variable(0) == p);
}

TEST(GaussNewton, UnconstrainedVariableIsSingular) {
  NllsProblem problem;
  problem.AddVariable(Pose::Identity());
  problem.AddVariable(Pose::FromTranslation(Vec3(1, 0, 0)));
  // Only the relative pose is observed: no gauge.
  problem.AddResidual({0, 1}, [](const std::vector<Pose>& x) {
    return RelativePoseResidual(Pose::FromTranslation(Vec3(2, 0, 0)), x[0], x[1]);
  });
  try {
    SolveGaussNewton(problem);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularNormalEquations);
  }
}

TEST(GaussNewton, InformationValidated) {
  NllsProblem problem;
  problem.AddVariable(Pose::Identity());
  Mat6 bad = Mat6::Identity();
  bad(0, 1) = 1.0;
  EXPECT_THROW(problem.AddResidual(
                   {0}, [](const std::vector<Pose>& x) { return Se3Log(x[0]).coeffs; },
                   bad),
               Error);
}

// Cameras on a line looking along +x, one object seen from all of them.
MapState ObjectWindow(int views, const Pose& truth, double sigma,
                      std::mt19937_64& rng, std::vector<FrameId>* window) {
  std::normal_distribution<double> n(0.0, sigma);
  MapState map;
  Landmark lm;
  lm.label = "car";
  for (int k = 0; k < views; ++k) {
    const Pose T_wc = Pose::FromTranslation(Vec3(k, 0.2 * k, 0));
    map.keyframes[k] = T_wc;
    window->push_back(k);
    const Pose T_co = T_wc.inverse() * truth;
    const Pose noisy(T_co.rotation(), T_co.translation() + Vec3(n(rng), n(rng), n(rng)));
    lm.measurements.push_back({k, noisy, Vec3(4, 2, 1.5)});
    lm.observed_frames.push_back(k);
  }
  lm.T_wo = map.keyframes[0] * lm.measurements[0].T_co;
  map.AddLandmark(lm);
  return map;
}

TEST(RefineWindow, NoiselessWindowAlreadyOptimal) {
  std::mt19937_64 rng(35);
  std::vector<FrameId> window;
  const Pose truth = Pose::FromYaw(0.4, Vec3(12, 3, 0));
  MapState map = ObjectWindow(6, truth, 0.0, rng, &window);
  const MapState before = map;
  const WindowReport r = RefineWindow(map, window, WindowConfig());
  EXPECT_EQ(r.num_objects, 1);
  EXPECT_LT(r.gn.final_cost, 1e-12);
  EXPECT_TRUE(test::PoseNear(map.landmarks.at(0).T_wo, truth, 1e-9));
  for (const auto& [f, pose] : before.keyframes) {
    EXPECT_TRUE(test::PoseNear(map.keyframes.at(f), pose, 1e-9));
  }
}

TEST(RefineWindow, ShortTracksExcluded) {
  std::mt19937_64 rng(36);
  std::vector<FrameId> window;
  MapState map = ObjectWindow(3, Pose::FromTranslation(Vec3(10, 0, 0)), 0.05,
                              rng, &window);
  const Pose before = map.landmarks.at(0).T_wo;
  const WindowReport r = RefineWindow(map, window, WindowConfig());
  EXPECT_EQ(r.num_objects, 0);
  EXPECT_TRUE(map.landmarks.at(0).T_wo == before);
}

TEST(RefineWindow, MultiViewBeatsSingleView) {
  std::mt19937_64 rng(37);
  WindowConfig cfg;
  cfg.optimize_cameras = false;
  int better = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<FrameId> window;
    const Pose truth = Pose::FromYaw(0.1 * trial, Vec3(12, 4, 0));
    MapState map = ObjectWindow(6, truth, 0.05, rng, &window);
    // Raw error: mean over the per-view estimates.
    double raw = 0.0;
    for (const auto& m : map.landmarks.at(0).measurements) {
      raw += ((map.keyframes.at(m.frame) * m.T_co).translation() - truth.translation()).norm();
    }
    raw /= 6.0;
    RefineWindow(map, window, cfg);
    const double refined =
        (map.landmarks.at(0).T_wo.translation() - truth.translation()).norm();
    better += refined < raw;
  }
  EXPECT_GE(better, 95);
}

TEST(RefineWindow, OdometrySizeChecked) {
  std::mt19937_64 rng(38);
  std::vector<FrameId> window;
  MapState map = ObjectWindow(6, Pose::FromTranslation(Vec3(10, 0, 0)), 0.0,
                              rng, &window);
  const std::vector<Pose> odometry(2);
  EXPECT_THROW(RefineWindow(map, window, WindowConfig(), &odometry), Error);
}

}  // namespace
}  // namespace objloop
