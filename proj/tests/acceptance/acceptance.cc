// Acceptance suite. Run with no arguments for every criterion, or with
// criterion numbers to select. Prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "objloop/association.hpp"
#include "objloop/config_io.hpp"
#include "objloop/evaluation.hpp"
#include "objloop/geometry.hpp"
#include "objloop/loop_closure.hpp"
#include "objloop/pipeline.hpp"
#include "objloop/refinement.hpp"
#include "objloop/scene_graph.hpp"
#include "../pr_oracle.hpp"
#include "../test_util.hpp"

using namespace objloop;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void Check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void Note(const std::string& what) {
    detail += (detail.empty() ? "" : "; ") + what;
  }
};

std::string Fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

double RelativeGap(const Mat6& analytic, const Mat6& numeric) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12);
}

Outcome LieAlgebra() {
  Outcome out;
  std::mt19937_64 rng(1001);
  double worst_round_trip = 0.0, worst_residual = 0.0, worst_jacobian = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose p = test::RandomPose(rng, 20.0);
    const Pose q = Se3Exp(Se3Log(p));
    worst_round_trip =
        std::max({worst_round_trip, (q.rotation() - p.rotation()).cwiseAbs().maxCoeff(),
                  (q.translation() - p.translation()).cwiseAbs().maxCoeff()});
  }
  for (int i = 0; i < 200; ++i) {
    const Pose T_wc = test::RandomPose(rng, 10.0), T_co = test::RandomPose(rng, 10.0);
    worst_residual = std::max(
        worst_residual, ObjectCameraResidual(T_wc * T_co, T_wc, T_co).cwiseAbs().maxCoeff());

    const Pose T_wo = T_wc * T_co * Se3Exp(Twist(test::RandomTwist(rng, 0.4)));
    const auto fn = [&](const std::vector<Pose>& x) {
      return ObjectCameraResidual(x[0], x[1], T_co);
    };
    const auto analytic = ObjectCameraJacobians(T_wo, T_wc, T_co);
    const auto numeric = NumericJacobians(fn, {T_wo, T_wc});
    for (int k = 0; k < 2; ++k) {
      worst_jacobian = std::max(worst_jacobian, RelativeGap(analytic[k], numeric[k]));
    }
    const Pose z = T_wc.inverse() * T_wo * Se3Exp(Twist(test::RandomTwist(rng, 0.4)));
    const auto rel_a = RelativePoseJacobians(z, T_wc, T_wo);
    const auto rel_n = NumericJacobians(
        [&](const std::vector<Pose>& x) { return RelativePoseResidual(z, x[0], x[1]); },
        {T_wc, T_wo});
    for (int k = 0; k < 2; ++k) {
      worst_jacobian = std::max(worst_jacobian, RelativeGap(rel_a[k], rel_n[k]));
    }
    const Pose D = Se3Exp(Twist(test::RandomTwist(rng, 0.5)));
    const Pose g = D.inverse() * T_wo * Se3Exp(Twist(test::RandomTwist(rng, 0.3)));
    const auto drift_n = NumericJacobians(
        [&](const std::vector<Pose>& x) { return DriftResidual(x[0], T_wo, g); }, {D});
    worst_jacobian =
        std::max(worst_jacobian, RelativeGap(DriftJacobian(D, T_wo, g), drift_n[0]));
  }
  out.Check(worst_round_trip <= 1e-9, Fmt("round trip %.2e > 1e-9", worst_round_trip));
  out.Check(worst_residual <= 1e-9, Fmt("consistent residual %.2e", worst_residual));
  out.Check(worst_jacobian <= 1e-5, Fmt("jacobian gap %.2e > 1e-5", worst_jacobian));
  out.Note(Fmt("round trip %.1e, residual %.1e, jacobian %.1e", worst_round_trip,
               worst_residual, worst_jacobian));
  return out;
}

Outcome OracleEquivalence() {
  Outcome out;
  std::mt19937_64 rng(1002);
  double worst_iou = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Cuboid a = test::RandomCuboid(rng, 1.0), b = test::RandomCuboid(rng, 1.0);
    worst_iou = std::max(worst_iou,
                         std::abs(Iou3d(a, b) - test::MonteCarloIou(a, b, 1000000, 5000 + i)));
  }
  out.Check(worst_iou <= 0.01, Fmt("iou gap %.4f > 0.01", worst_iou));

  int mismatches = 0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd cost(6, 6);
    for (int k = 0; k < 36; ++k) cost(k / 6, k % 6) = u(rng);
    const std::vector<int> cols = SolveAssignment(cost);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    std::vector<int> best_perm;
    do {
      double total = 0.0;
      for (int r = 0; r < 6; ++r) total += cost(r, perm[r]);
      if (total < best) best = total, best_perm = perm;
    } while (std::next_permutation(perm.begin(), perm.end()));
    mismatches += cols != best_perm;
  }
  out.Check(mismatches == 0, Fmt("%.0f of 200 assignments differ", mismatches));
  out.Note(Fmt("iou gap %.4f, assignment mismatches %.0f/200", worst_iou, mismatches));
  return out;
}

Outcome NoiselessEndToEnd() {
  Outcome out;
  RunConfig cfg = DefaultRunConfig();
  cfg.scenario.noise = NoiseConfig();
  cfg.scenario.n_objects = 30;
  cfg.scenario.trajectory.width = 40.0;
  cfg.scenario.trajectory.height = 20.0;
  const PipelineInput input = InputFromScenario(SimulateScenario(cfg.scenario));
  const PipelineResult r = RunPipeline(input, cfg.pipeline);
  double worst_drift = 0.0;
  for (const LoopResult& l : r.loops) {
    worst_drift = std::max({worst_drift,
                            (l.T_drift.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff(),
                            l.T_drift.translation().cwiseAbs().maxCoeff()});
  }
  const PrPoint pr =
      CountPr(r.attempts, [](const LoopAttempt& a) { return a.declared; }, cfg.pipeline.tau_l);
  out.Check(r.association.accuracy() == 1.0,
            Fmt("association %.6f", r.association.accuracy()));
  out.Check(r.max_refinement_cost < 1e-12, Fmt("refinement cost %.2e", r.max_refinement_cost));
  out.Check(!r.loops.empty() && pr.tp > 0 && pr.fp == 0,
            Fmt("loops %.0f, tp %.0f, fp %.0f", r.loops.size(), pr.tp, pr.fp));
  out.Check(worst_drift <= 1e-9, Fmt("drift off identity by %.2e", worst_drift));
  out.Check(r.ate_after && r.ate_after->rmse < 1e-6,
            Fmt("ATE after %.2e", r.ate_after ? r.ate_after->rmse : -1.0));
  out.Note(Fmt("%.0f loops, drift %.1e, ATE %.1e", r.loops.size(), worst_drift,
               r.ate_after ? r.ate_after->rmse : -1.0));
  return out;
}

Outcome DriftStatistics() {
  Outcome out;
  const double sigma = 0.05;
  const double bound = 3.0 * sigma / std::sqrt(6.0);
  // Rotations are exact, translations carry sigma.
  Mat6 info = Mat6::Identity();
  info.topLeftCorner<3, 3>() *= 1e6;
  info.bottomRightCorner<3, 3>() *= 1.0 / (sigma * sigma);
  int within = 0, within_identity = 0;
  for (int seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(20000 + seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> n(0.0, sigma);
    const Pose D = Pose::FromYaw(0.3 * u(rng), Vec3(2 * u(rng), 2 * u(rng), 0.1 * u(rng)));
    std::vector<ObjectConstraint> weighted, plain;
    for (int i = 0; i < 6; ++i) {
      const Pose g = Pose::FromYaw(M_PI * u(rng), Vec3(3 * u(rng), 3 * u(rng), 0.0));
      const Pose noisy(g.rotation(), g.translation() + Vec3(n(rng), n(rng), n(rng)));
      weighted.push_back({D * g, noisy, info});
      plain.push_back({D * g, noisy, Mat6::Identity()});
    }
    within += (EstimateDrift(weighted).translation() - D.translation()).norm() <= bound;
    within_identity +=
        (EstimateDrift(plain).translation() - D.translation()).norm() <= bound;
  }
  out.Check(within >= 190, Fmt("%.0f/200 within 3 sigma/sqrt(6)", within));
  out.Note(Fmt("%.0f/200 within %.4f m (identity information: %.0f/200)", within, bound,
               within_identity));
  return out;
}

Outcome ViewpointRobustness() {
  Outcome out;
  std::vector<double> recalls;
  for (const double offset : {30.0, 70.0, 110.0, 130.0}) {
    int tp = 0, fp = 0, events = 0, missed = 0;
    for (int seed = 0; seed < 50; ++seed) {
      RunConfig cfg = DefaultRunConfig();
      cfg.scenario.seed = std::uint64_t(seed);
      cfg.scenario.trajectory.revisit_offset_deg = offset;
      const PipelineResult r =
          RunPipeline(InputFromScenario(SimulateScenario(cfg.scenario)), cfg.pipeline);
      const PrPoint p = CountPr(
          r.attempts, [](const LoopAttempt& a) { return a.declared; }, cfg.pipeline.tau_l);
      tp += p.tp;
      fp += p.fp;
      events += p.events;
      missed += p.fn;
    }
    const double precision = tp + fp ? double(tp) / double(tp + fp) : 1.0;
    const double recall = events ? 1.0 - double(missed) / double(events) : 1.0;
    recalls.push_back(recall);
    out.Note(Fmt("%.0f deg P %.3f R %.3f", offset, precision, recall));
    if (offset == 130.0) {
      out.Check(precision == 1.0, Fmt("precision at 130 deg %.3f", precision));
      out.Check(recall >= 0.9, Fmt("recall at 130 deg %.3f", recall));
    }
  }
  const auto [lo, hi] = std::minmax_element(recalls.begin(), recalls.end());
  out.Check(*hi - *lo < 0.05, Fmt("recall spread %.3f", *hi - *lo));
  return out;
}

Outcome DriftCorrection() {
  Outcome out;
  int within = 0, lower = 0;
  std::string ratios;
  for (int seed = 0; seed < 20; ++seed) {
    RunConfig cfg = DefaultRunConfig();
    cfg.scenario.seed = std::uint64_t(seed);
    cfg.scenario.noise = NoiseConfig();
    cfg.scenario.noise.odom_sigma_t = 0.01;
    cfg.scenario.noise.odom_sigma_r = 0.002;
    const PipelineResult r =
        RunPipeline(InputFromScenario(SimulateScenario(cfg.scenario)), cfg.pipeline);
    const double ratio = r.ate_after->rmse / r.ate_before->rmse;
    within += ratio <= 0.2;
    lower += r.ate_after->rmse < r.ate_before->rmse;
    ratios += (ratios.empty() ? "" : " ") + Fmt("%.2f", ratio);
  }
  out.Check(within >= 18, Fmt("%.0f/20 seeds at <= 20%%", within));
  out.Check(lower == 20, Fmt("%.0f/20 strictly lower", lower));
  out.Note("after/before " + ratios);
  return out;
}

Outcome AssociationAblation() {
  Outcome out;
  double full = 0.0, iou_only = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    RunConfig cfg = DefaultRunConfig();
    cfg.scenario.seed = std::uint64_t(seed);
    cfg.scenario.n_objects = 40;
    // Crowded parking lot: cars and vans packed along the route.
    cfg.scenario.labels = {DefaultLabels()[0], DefaultLabels()[1]};
    cfg.scenario.corridor = 5.0;
    cfg.pipeline.loop_enabled = false;
    const PipelineInput input = InputFromScenario(SimulateScenario(cfg.scenario));
    full += RunPipeline(input, cfg.pipeline).association.accuracy();
    cfg.pipeline.assoc.lambda = 1.0;
    iou_only += RunPipeline(input, cfg.pipeline).association.accuracy();
  }
  full /= 20.0;
  iou_only /= 20.0;
  const double gap = 100.0 * (full - iou_only);
  out.Check(full >= iou_only, "IoU-only association is more accurate");
  out.Check(gap >= 2.0, Fmt("gap %.2f pp < 2", gap));
  out.Note(Fmt("full %.4f, IoU only %.4f, gap %.2f pp", full, iou_only, gap));
  return out;
}

Outcome Invariance() {
  Outcome out;
  std::mt19937_64 rng(1008);
  std::uniform_real_distribution<double> u(0.0, 30.0), s(0.1, 10.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vertex> base;
    for (int i = 0; i < 15; ++i) {
      Vertex v;
      v.id = i;
      v.label = "car";
      v.pose = Pose::FromYaw(u(rng), Vec3(u(rng), u(rng), 0.0));
      base.push_back(v);
    }
    const Pose G = test::RandomPose(rng, 100.0);
    const double scale = s(rng);
    std::vector<Vertex> moved = base;
    for (Vertex& v : moved) {
      const Pose p = G * v.pose;
      v.pose = Pose(p.rotation(), scale * p.translation());
    }
    const SceneGraph a = BuildGraph(base, 4), b = BuildGraph(moved, 4);
    for (int i = 0; i < 15; ++i) {
      worst = std::max(worst, (ComputeLayoutDescriptor(a, i) - ComputeLayoutDescriptor(b, i))
                                  .cwiseAbs()
                                  .maxCoeff());
    }
  }
  out.Check(worst <= 1e-9, Fmt("descriptor change %.2e", worst));

  int pr_mismatch = 0, points = 0;
  bool identical = true;
  for (int seed = 0; seed < 3; ++seed) {
    RunConfig cfg = DefaultRunConfig();
    cfg.scenario.seed = std::uint64_t(seed);
    const PipelineInput input = InputFromScenario(SimulateScenario(cfg.scenario));
    const PipelineResult r = RunPipeline(input, cfg.pipeline);
    const PipelineResult again =
        RunPipeline(InputFromScenario(SimulateScenario(cfg.scenario)), cfg.pipeline);
    const auto curve = ComputePrCurve(r.attempts, cfg.pipeline.tau_l, DefaultThresholds(r.attempts));
    for (const PrPoint& p : curve) {
      const test::PrCounts c = test::CountPrOracle(r.attempts, p.threshold, cfg.pipeline.tau_l);
      pr_mismatch += p.tp != c.tp || p.fp != c.fp || p.fn != c.fn || p.events != c.events;
      ++points;
    }
    std::ostringstream x, y;
    for (const PipelineResult* res : {&r, &again}) {
      std::ostringstream& o = res == &r ? x : y;
      WriteTum(o, res->after);
      WriteMapSnapshot(o, res->map);
      WriteAttemptsCsv(o, res->attempts);
      for (const LoopResult& l : res->loops) WriteLoopResultJsonl(o, l);
    }
    identical &= x.str() == y.str();
  }
  out.Check(pr_mismatch == 0, Fmt("%.0f of %.0f PR points disagree", pr_mismatch, points));
  out.Check(identical, "same-seed runs differ");
  out.Note(Fmt("descriptor change %.1e, %.0f PR points checked", worst, points));
  return out;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "lie algebra suite", 5, LieAlgebra},
      {2, "oracle equivalence", 60, OracleEquivalence},
      {3, "noiseless end-to-end", 30, NoiselessEndToEnd},
      {4, "drift estimation statistics", 60, DriftStatistics},
      {5, "viewpoint robustness sweep", 600, ViewpointRobustness},
      {6, "drift correction", 600, DriftCorrection},
      {7, "association ablation", 300, AssociationAblation},
      {8, "invariance suite", 60, Invariance},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end()) {
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (seconds > c.budget_s) o.Check(false, Fmt("over budget of %.0f s", c.budget_s));
    std::printf("[%s] criterion %d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id,
                c.name, seconds, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures ? 1 : 0;
}
