#include "objloop/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "objloop/error.hpp"

namespace objloop {

namespace {

constexpr double kPivotRatio = 1e-12;

Pose Retract(const Pose& T, const Vec6& delta) {
  return T * Se3Exp(Twist(delta));
}

}  // namespace

int NllsProblem::AddVariable(const Pose& initial, bool fixed) {
  variables_.push_back(initial);
  fixed_.push_back(fixed);
  return static_cast<int>(variables_.size()) - 1;
}

void NllsProblem::SetFixed(int index, bool fixed) { fixed_.at(index) = fixed; }

void NllsProblem::AddResidual(std::vector<int> variables, ResidualFunction fn,
                              const Mat6& information,
                              JacobianFunction jacobian) {
  for (int v : variables) {
    if (v < 0 || v >= num_variables()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "residual references unknown variable");
    }
  }
  if (!information.isApprox(information.transpose(), 1e-12)) {
    throw Error(ErrorCode::kInvalidArgument, "information must be symmetric");
  }
  blocks_.push_back(
      {std::move(variables), std::move(fn), information, std::move(jacobian)});
}

int NllsProblem::num_free() const {
  return static_cast<int>(std::count(fixed_.begin(), fixed_.end(), false));
}

Vec6 NllsProblem::Evaluate(const Block& block) const {
  std::vector<Pose> poses;
  poses.reserve(block.variables.size());
  for (int v : block.variables) poses.push_back(variables_[size_t(v)]);
  return block.fn(poses);
}

double NllsProblem::Cost() const {
  double cost = 0.0;
  for (const Block& b : blocks_) {
    const Vec6 r = Evaluate(b);
    cost += r.dot(b.information * r);
  }
  return cost;
}

struct GaussNewtonSolver {
  static GnReport Solve(NllsProblem& p, const GnConfig& cfg) {
    GnReport report;
    report.initial_cost = report.final_cost = p.Cost();
    if (cfg.trace) *cfg.trace << "iteration,cost,step_norm\n0," << report.initial_cost << ",0\n";

    // Column offset of every free variable.
    std::vector<int> column(p.variables_.size(), -1);
    int dim = 0;
    for (size_t v = 0; v < p.variables_.size(); ++v) {
      if (!p.fixed_[v]) {
        column[v] = dim;
        dim += 6;
      }
    }
    if (dim == 0 || report.initial_cost == 0.0) {
      report.converged = true;
      return report;
    }

    double cost = report.initial_cost;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
      std::vector<Eigen::Triplet<double>> triplets;
      Eigen::VectorXd gradient = Eigen::VectorXd::Zero(dim);
      for (const auto& block : p.blocks_) {
        std::vector<Pose> poses;
        for (int v : block.variables) poses.push_back(p.variables_[size_t(v)]);
        const Vec6 r = block.fn(poses);
        std::vector<Mat6> jac;
        if (block.jacobian) {
          jac = block.jacobian(poses);
        } else {
          jac.resize(block.variables.size());
          for (size_t a = 0; a < block.variables.size(); ++a) {
            if (column[size_t(block.variables[a])] < 0) continue;
            const Pose original = poses[a];
            for (int k = 0; k < 6; ++k) {
              Vec6 step = Vec6::Zero();
              step[k] = cfg.fd_step;
              poses[a] = Retract(original, step);
              const Vec6 plus = block.fn(poses);
              poses[a] = Retract(original, -step);
              const Vec6 minus = block.fn(poses);
              jac[a].col(k) = (plus - minus) / (2.0 * cfg.fd_step);
            }
            poses[a] = original;
          }
        }
        for (size_t a = 0; a < block.variables.size(); ++a) {
          const int ca = column[size_t(block.variables[a])];
          if (ca < 0) continue;
          const Eigen::Matrix<double, 6, 6> JtW =
              jac[a].transpose() * block.information;
          gradient.segment<6>(ca) += JtW * r;
          for (size_t b = 0; b < block.variables.size(); ++b) {
            const int cb = column[size_t(block.variables[b])];
            if (cb < 0) continue;
            const Eigen::Matrix<double, 6, 6> H = JtW * jac[b];
            for (int i = 0; i < 6; ++i) {
              for (int j = 0; j < 6; ++j) {
                triplets.emplace_back(ca + i, cb + j, H(i, j));
              }
            }
          }
        }
      }
      Eigen::SparseMatrix<double> H(dim, dim);
      H.setFromTriplets(triplets.begin(), triplets.end());
      // Jacobi scaling so the rank test is insensitive to units and lever arms.
      Eigen::VectorXd scaling(dim);
      for (int i = 0; i < dim; ++i) {
        const double d = H.coeff(i, i);
        if (!(d > 0.0)) {
          throw Error(ErrorCode::kSingularNormalEquations,
                      "variable without information");
        }
        scaling[i] = 1.0 / std::sqrt(d);
      }
      const Eigen::SparseMatrix<double> Hs =
          scaling.asDiagonal() * H * scaling.asDiagonal();
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Hs);
      if (ldlt.info() != Eigen::Success) {
        throw Error(ErrorCode::kSingularNormalEquations, "factorization failed");
      }
      const Eigen::VectorXd D = ldlt.vectorD();
      if (!(D.minCoeff() > kPivotRatio * D.cwiseAbs().maxCoeff())) {
        throw Error(ErrorCode::kSingularNormalEquations,
                    "rank-deficient normal equations");
      }
      const Eigen::VectorXd delta =
          -scaling.cwiseProduct(ldlt.solve(scaling.cwiseProduct(gradient)));
      if (delta.cwiseAbs().maxCoeff() < cfg.tolerance) {
        report.converged = true;
        break;
      }

      const std::vector<Pose> saved = p.variables_;
      double scale = 1.0;
      bool accepted = false;
      for (int h = 0; h <= cfg.max_halvings; ++h, scale *= 0.5) {
        for (size_t v = 0; v < saved.size(); ++v) {
          if (column[v] < 0) continue;
          p.variables_[v] = Retract(saved[v], scale * delta.segment<6>(column[v]));
        }
        const double trial = p.Cost();
        if (trial <= cost) {
          cost = trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        p.variables_ = saved;
        break;
      }
      ++report.iterations;
      const double step_norm = scale * delta.cwiseAbs().maxCoeff();
      if (cfg.trace) {
        *cfg.trace << report.iterations << ',' << cost << ',' << step_norm << '\n';
      }
      if (step_norm < cfg.tolerance || cost == 0.0) {
        report.converged = true;
        break;
      }
    }
    report.final_cost = cost;
    return report;
  }
};

GnReport SolveGaussNewton(NllsProblem& problem, const GnConfig& cfg) {
  return GaussNewtonSolver::Solve(problem, cfg);
}

std::vector<Mat6> NumericJacobians(const ResidualFunction& fn,
                                   std::vector<Pose> poses, double step) {
  std::vector<Mat6> out(poses.size());
  for (size_t a = 0; a < poses.size(); ++a) {
    const Pose original = poses[a];
    for (int k = 0; k < 6; ++k) {
      Vec6 d = Vec6::Zero();
      d[k] = step;
      poses[a] = Retract(original, d);
      const Vec6 plus = fn(poses);
      poses[a] = Retract(original, -d);
      const Vec6 minus = fn(poses);
      out[a].col(k) = (plus - minus) / (2.0 * step);
    }
    poses[a] = original;
  }
  return out;
}

Vec6 ObjectCameraResidual(const Pose& T_wo, const Pose& T_wc,
                          const Pose& T_co) {
  return Se3Log(T_wo.inverse() * T_wc * T_co).coeffs;
}

std::vector<Mat6> ObjectCameraJacobians(const Pose& T_wo, const Pose& T_wc,
                                        const Pose& T_co) {
  const Pose E = T_wo.inverse() * T_wc * T_co;
  const Mat6 Jr_inv = Se3RightJacobianInverse(Se3Log(E).coeffs);
  return {-Jr_inv * Adjoint(E.inverse()), Jr_inv * Adjoint(T_co.inverse())};
}

Vec6 RelativePoseResidual(const Pose& Z_ij, const Pose& T_i, const Pose& T_j) {
  return Se3Log(Z_ij.inverse() * T_i.inverse() * T_j).coeffs;
}

std::vector<Mat6> RelativePoseJacobians(const Pose& Z_ij, const Pose& T_i,
                                        const Pose& T_j) {
  const Pose E = Z_ij.inverse() * T_i.inverse() * T_j;
  const Mat6 Jr_inv = Se3RightJacobianInverse(Se3Log(E).coeffs);
  return {-Jr_inv * Adjoint(T_j.inverse() * T_i), Jr_inv};
}

void WindowConfig::Validate() const {
  if (window_size < 2) {
    throw Error(ErrorCode::kInvalidArgument, "window size must be >= 2");
  }
  if (min_track_count < 1) {
    throw Error(ErrorCode::kInvalidArgument, "min track count must be >= 1");
  }
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(size_t(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int Find(int x) {
    while (parent[size_t(x)] != x) x = parent[size_t(x)] = parent[size_t(parent[size_t(x)])];
    return x;
  }
  void Unite(int a, int b) { parent[size_t(Find(a))] = Find(b); }
};

}  // namespace

WindowReport RefineWindow(MapState& map, const std::vector<FrameId>& window,
                          const WindowConfig& cfg,
                          const std::vector<Pose>* odometry) {
  if (window.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "window needs >= 2 frames");
  }
  if (odometry && odometry->size() != window.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one odometry entry per window frame");
  }
  const bool chained = odometry && cfg.optimize_cameras;
  WindowReport report;
  const std::set<FrameId> frames(window.begin(), window.end());
  const FrameId oldest = *frames.begin();

  struct Observation {
    LandmarkId object;
    FrameId frame;
    Pose T_co;
  };
  std::vector<Observation> observations;
  std::set<LandmarkId> objects;
  std::set<FrameId> cameras;
  for (const auto& [id, lm] : map.landmarks) {
    if (lm.obs_count() <= cfg.min_track_count) continue;
    for (const ObjectMeasurement& m : lm.measurements) {
      if (!frames.count(m.frame) || !map.keyframes.count(m.frame)) continue;
      observations.push_back({id, m.frame, m.T_co});
      objects.insert(id);
      cameras.insert(m.frame);
    }
  }
  if (observations.empty()) return report;
  if (chained) {
    for (FrameId f : window) {
      if (map.keyframes.count(f)) cameras.insert(f);
    }
  }

  NllsProblem problem;
  std::map<FrameId, int> camera_var;
  std::map<LandmarkId, int> object_var;
  for (FrameId f : cameras) {
    camera_var[f] = problem.AddVariable(map.keyframes.at(f),
                                        !cfg.optimize_cameras || f == oldest);
  }
  for (LandmarkId id : objects) {
    object_var[id] = problem.AddVariable(map.landmarks.at(id).T_wo);
  }
  UnionFind components(problem.num_variables());
  for (const Observation& obs : observations) {
    const int o = object_var.at(obs.object);
    const int c = camera_var.at(obs.frame);
    const Pose T_co = obs.T_co;
    problem.AddResidual(
        {o, c},
        [T_co](const std::vector<Pose>& x) {
          return ObjectCameraResidual(x[0], x[1], T_co);
        },
        cfg.information,
        [T_co](const std::vector<Pose>& x) {
          return ObjectCameraJacobians(x[0], x[1], T_co);
        });
    components.Unite(o, c);
  }
  if (chained) {
    for (size_t i = 1; i < window.size(); ++i) {
      auto a = camera_var.find(window[i - 1]);
      auto b = camera_var.find(window[i]);
      if (a == camera_var.end() || b == camera_var.end()) continue;
      const Pose Z = (*odometry)[i];
      problem.AddResidual(
          {a->second, b->second},
          [Z](const std::vector<Pose>& x) {
            return RelativePoseResidual(Z, x[0], x[1]);
          },
          cfg.odometry_information,
          [Z](const std::vector<Pose>& x) {
            return RelativePoseJacobians(Z, x[0], x[1]);
          });
      components.Unite(a->second, b->second);
    }
  }
  // Fix the oldest camera of every component that has no fixed variable.
  std::map<int, bool> anchored;
  for (int v = 0; v < problem.num_variables(); ++v) {
    anchored[components.Find(v)] |= problem.fixed(v);
  }
  for (const auto& [f, v] : camera_var) {
    bool& a = anchored[components.Find(v)];
    if (!a) {
      problem.SetFixed(v, true);
      a = true;
    }
  }

  report.num_objects = static_cast<int>(objects.size());
  report.num_cameras = static_cast<int>(cameras.size());
  report.num_residuals = problem.num_residuals();
  report.gn = SolveGaussNewton(problem, cfg.gn);

  for (const auto& [f, v] : camera_var) {
    if (!problem.fixed(v)) map.keyframes[f] = problem.variable(v);
  }
  for (const auto& [id, v] : object_var) {
    Landmark& lm = map.landmarks.at(id);
    lm.T_wo = problem.variable(v);
    Vec3 sum = Vec3::Zero();
    for (const ObjectMeasurement& m : lm.measurements) sum += m.dims;
    lm.dims = sum / static_cast<double>(lm.measurements.size());
  }
  return report;
}

}  // namespace objloop
