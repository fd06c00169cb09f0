#pragma once

#include <random>

#include "objloop/geometry.hpp"

namespace objloop::test {

inline Vec6 RandomTwist(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi[i] = u(rng);
  return xi;
}

// Rotation angle below 2.5 rad so log stays well defined.
inline Pose RandomPose(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(u(rng), u(rng), u(rng));
  axis.normalize();
  const double angle = 2.5 * std::abs(u(rng));
  return Pose(So3Exp(angle * axis),
              extent * Vec3(u(rng), u(rng), u(rng)));
}

inline bool PoseNear(const Pose& a, const Pose& b, double tol) {
  return (a.rotation() - b.rotation()).cwiseAbs().maxCoeff() <= tol &&
         (a.translation() - b.translation()).cwiseAbs().maxCoeff() <= tol;
}

inline Cuboid RandomCuboid(std::mt19937_64& rng, double spread) {
  std::uniform_real_distribution<double> c(-spread, spread);
  std::uniform_real_distribution<double> d(0.5, 2.5);
  std::uniform_real_distribution<double> y(-M_PI, M_PI);
  return Cuboid(Vec3(c(rng), c(rng), 0.5 * c(rng)), y(rng),
                Vec3(d(rng), d(rng), d(rng)));
}

inline bool InsideCuboid(const Cuboid& c, const Vec3& p) {
  const Vec3 local = c.pose().inverse() * p;
  return (local.cwiseAbs() - 0.5 * c.dims).maxCoeff() <= 0.0;
}

// Point sampling over the joint bounding box of both cuboids.
inline double MonteCarloIou(const Cuboid& a, const Cuboid& b, int samples,
                            unsigned seed) {
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const Cuboid* c : {&a, &b}) {
    for (const Vec3& p : c->corners()) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long both = 0, either = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 p = lo + (hi - lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
    const bool in_a = InsideCuboid(a, p), in_b = InsideCuboid(b, p);
    both += in_a && in_b;
    either += in_a || in_b;
  }
  return either ? double(both) / double(either) : 0.0;
}

}  // namespace objloop::test
