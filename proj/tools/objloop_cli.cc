#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "objloop/config_io.hpp"
#include "objloop/error.hpp"
#include "objloop/evaluation.hpp"
#include "objloop/pipeline.hpp"
#include "objloop/scene_graph.hpp"
#include "objloop/simulation.hpp"

namespace fs = std::filesystem;
using namespace objloop;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct CommonOptions {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out;
};

void AddCommon(CLI::App* app, CommonOptions& opts) {
  app->add_option("--seed", opts.seed, "scenario seed")
      ->each([&](const std::string&) { opts.seed_set = true; });
  app->add_option("--config", opts.config, "JSON run configuration");
  app->add_option("--out", opts.out, "output directory");
}

RunConfig LoadConfig(const CommonOptions& opts) {
  RunConfig cfg = opts.config.empty() ? DefaultRunConfig()
                                      : LoadRunConfig(opts.config);
  if (opts.seed_set) cfg.scenario.seed = opts.seed;
  return cfg;
}

fs::path OutDir(const CommonOptions& opts) {
  fs::path dir = opts.out.empty() ? fs::path(".") : fs::path(opts.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());
  return dir;
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

AlignMode ParseAlign(const std::string& name) {
  if (name == "rigid") return AlignMode::kRigid;
  if (name == "similarity") return AlignMode::kSimilarity;
  if (name == "none") return AlignMode::kNone;
  throw Error(ErrorCode::kInvalidArgument, "unknown alignment " + name);
}

Trajectory OdometryTrajectory(const Scenario& sc) {
  Trajectory t;
  Pose pose = sc.truth.camera_poses.front();
  for (size_t k = 0; k < sc.odometry.size(); ++k) {
    if (k > 0) pose = pose * sc.odometry[k];
    t.Add(sc.stamps[k], pose);
  }
  return t;
}

Trajectory GtTrajectory(const Scenario& sc) {
  Trajectory t;
  for (size_t k = 0; k < sc.stamps.size(); ++k) {
    t.Add(sc.stamps[k], sc.truth.camera_poses[k]);
  }
  return t;
}

// Detections plus an integrated odometry trajectory; frames are matched by
// position in the file, stamps are taken from the odometry.
PipelineInput InputFromFiles(const std::string& obs_path,
                             const std::string& odom_path,
                             const std::string& gt_path) {
  const std::vector<FrameDetections> frames = ReadDetectionsJsonl(obs_path);
  const Trajectory odom = ReadTum(odom_path);
  if (odom.size() == 0) throw Error(ErrorCode::kParseError, "empty odometry");
  PipelineInput input;
  input.initial_pose = odom.poses.front();
  std::map<FrameId, const FrameDetections*> by_frame;
  for (const auto& f : frames) by_frame[f.frame] = &f;
  for (size_t k = 0; k < odom.size(); ++k) {
    FrameInput f;
    f.frame = FrameId(k);
    f.stamp = odom.stamps[k];
    if (k > 0) f.odometry = odom.poses[k - 1].inverse() * odom.poses[k];
    if (auto it = by_frame.find(f.frame); it != by_frame.end()) {
      f.detections = it->second->detections;
    }
    input.frames.push_back(std::move(f));
  }
  if (!gt_path.empty()) input.gt = ReadTum(gt_path);
  return input;
}

void WriteRunOutputs(const fs::path& dir, const PipelineResult& r,
                     const PipelineConfig& cfg) {
  WriteTum((dir / "trajectory_before.tum").string(), r.before);
  WriteTum((dir / "trajectory_after.tum").string(), r.after);
  {
    auto out = OpenOut(dir / "map.json");
    WriteMapSnapshot(out, r.map);
  }
  {
    auto out = OpenOut(dir / "loops.jsonl");
    for (const LoopResult& l : r.loops) WriteLoopResultJsonl(out, l);
  }
  {
    auto out = OpenOut(dir / "attempts.csv");
    WriteAttemptsCsv(out, r.attempts);
  }
  {
    auto out = OpenOut(dir / "pr.csv");
    WritePrCsv(out, ComputePrCurve(r.attempts, cfg.tau_l,
                                   DefaultThresholds(r.attempts)));
  }
  {
    auto out = OpenOut(dir / "runtime.csv");
    WriteRuntimeCsv(out, r.times);
  }
  nlohmann::ordered_json metrics;
  metrics["frames"] = r.after.size();
  metrics["landmarks"] = r.map.landmarks.size();
  metrics["loops"] = r.loops.size();
  metrics["association_accuracy"] = r.association.accuracy();
  metrics["max_refinement_cost"] = r.max_refinement_cost;
  for (const auto& [key, ate] : {std::pair{"ate_before", &r.ate_before},
                                 std::pair{"ate_after", &r.ate_after}}) {
    if (!*ate) continue;
    metrics[key] = {{"mse", (*ate)->mse},
                    {"rmse", (*ate)->rmse},
                    {"std", (*ate)->std},
                    {"max", (*ate)->max},
                    {"n", (*ate)->errors.size()}};
  }
  auto out = OpenOut(dir / "metrics.json");
  out << metrics.dump(2) << '\n';
}

int CmdSim(const CommonOptions& opts) {
  const RunConfig cfg = LoadConfig(opts);
  const Scenario sc = SimulateScenario(cfg.scenario);
  const fs::path dir = OutDir(opts);
  WriteTum((dir / "gt.tum").string(), GtTrajectory(sc));
  WriteTum((dir / "odom.tum").string(), OdometryTrajectory(sc));
  WriteDetectionsJsonl((dir / "obs.jsonl").string(), sc.frames);
  auto out = OpenOut(dir / "scenario.json");
  out << RunConfigToJson(cfg) << '\n';
  std::cerr << "sim: " << sc.frames.size() << " frames, "
            << sc.truth.objects.size() << " objects -> " << dir.string()
            << '\n';
  return kOk;
}

struct BatchRow {
  std::uint64_t seed = 0;
  std::string error;
  PipelineResult result;
};

// Seeds run in a worker pool; each run owns its map.
int RunBatch(const RunConfig& base, int seeds, int jobs, const fs::path& dir) {
  std::vector<BatchRow> rows(seeds);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < seeds; i = next++) {
      RunConfig cfg = base;
      cfg.scenario.seed = base.scenario.seed + std::uint64_t(i);
      rows[i].seed = cfg.scenario.seed;
      try {
        rows[i].result = RunPipeline(
            InputFromScenario(SimulateScenario(cfg.scenario)), cfg.pipeline);
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, std::min(jobs, seeds)); ++j) {
    pool.emplace_back(worker);
  }
  for (auto& t : pool) t.join();

  auto out = OpenOut(dir / "summary.csv");
  out << "seed,loops,association_accuracy,ate_before_rmse,ate_after_rmse,error\n";
  int failures = 0;
  for (const BatchRow& row : rows) {
    const PipelineResult& r = row.result;
    out << row.seed << ',' << r.loops.size() << ','
        << r.association.accuracy() << ','
        << (r.ate_before ? r.ate_before->rmse : 0.0) << ','
        << (r.ate_after ? r.ate_after->rmse : 0.0) << ',' << row.error << '\n';
    if (!row.error.empty()) {
      std::cerr << "seed " << row.seed << ": " << row.error << '\n';
      ++failures;
    }
  }
  return failures ? kData : kOk;
}

struct RunOptions {
  std::string obs, odom, gt;
  int seeds = 1;
  int jobs = int(std::max(1u, std::thread::hardware_concurrency()));
};

int CmdRun(const CommonOptions& opts, const RunOptions& run) {
  const RunConfig cfg = LoadConfig(opts);
  const fs::path dir = OutDir(opts);
  if (run.obs.empty() && run.seeds > 1) {
    return RunBatch(cfg, run.seeds, run.jobs, dir);
  }
  PipelineInput input;
  if (run.obs.empty()) {
    input = InputFromScenario(SimulateScenario(cfg.scenario));
  } else {
    if (run.odom.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "--odom is required with observations");
    }
    input = InputFromFiles(run.obs, run.odom, run.gt);
  }
  const PipelineResult r = RunPipeline(input, cfg.pipeline);
  WriteRunOutputs(dir, r, cfg.pipeline);
  std::cerr << "run: " << r.after.size() << " frames, " << r.loops.size()
            << " loops -> " << dir.string() << '\n';
  return kOk;
}

int CmdEval(const CommonOptions& opts, const std::string& est_path,
            const std::string& gt_path, const std::string& align) {
  const AteReport r =
      ComputeAte(ReadTum(est_path), ReadTum(gt_path), ParseAlign(align));
  std::cout << std::setprecision(17);
  WriteAteJson(std::cout, r);
  if (!opts.out.empty()) {
    auto out = OpenOut(OutDir(opts) / "ate.json");
    WriteAteJson(out, r);
  }
  return kOk;
}

int CmdPr(const CommonOptions& opts, const std::string& path, double tau_l) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  const std::vector<LoopAttempt> attempts = ReadAttemptsCsv(in);
  if (attempts.empty()) throw Error(ErrorCode::kParseError, "empty attempt log");
  const auto curve = ComputePrCurve(attempts, tau_l, DefaultThresholds(attempts));
  if (opts.out.empty()) {
    WritePrCsv(std::cout, curve);
  } else {
    auto out = OpenOut(OutDir(opts) / "pr.csv");
    WritePrCsv(out, curve);
  }
  return kOk;
}

void WriteTrajectoryCsv(std::ostream& out, const Trajectory& t) {
  out << "stamp,x,y,z,yaw\n";
  for (size_t k = 0; k < t.size(); ++k) {
    const Vec3& p = t.poses[k].translation();
    out << t.stamps[k] << ',' << p.x() << ',' << p.y() << ',' << p.z() << ','
        << t.poses[k].yaw() << '\n';
  }
}

void WriteGraphCsv(const fs::path& dir, const SceneGraph& g) {
  auto nodes = OpenOut(dir / "graph_nodes.csv");
  nodes << "id,label,x,y,z,yaw,dx,dy,dz\n";
  for (const Vertex& v : g.vertices) {
    const Vec3& p = v.position();
    nodes << v.id << ',' << v.label << ',' << p.x() << ',' << p.y() << ','
          << p.z() << ',' << v.pose.yaw() << ',' << v.dims.x() << ','
          << v.dims.y() << ',' << v.dims.z() << '\n';
  }
  auto edges = OpenOut(dir / "graph_edges.csv");
  edges << "a,b,length\n";
  for (const Edge& e : g.edges) {
    edges << g.vertices[e.a].id << ',' << g.vertices[e.b].id << ','
          << e.length << '\n';
  }
}

// TUM inputs are converted one to one; without inputs a scenario is simulated
// and run, and its trajectories and final scene graph are exported.
int CmdExportPlot(const CommonOptions& opts,
                  const std::vector<std::string>& inputs) {
  const fs::path dir = OutDir(opts);
  if (!inputs.empty()) {
    for (const std::string& path : inputs) {
      auto out = OpenOut(dir / (fs::path(path).stem().string() + ".csv"));
      WriteTrajectoryCsv(out, ReadTum(path));
    }
    return kOk;
  }
  const RunConfig cfg = LoadConfig(opts);
  const Scenario sc = SimulateScenario(cfg.scenario);
  const PipelineResult r = RunPipeline(InputFromScenario(sc), cfg.pipeline);
  for (const auto& [name, t] :
       {std::pair{"gt", GtTrajectory(sc)}, std::pair{"odom", OdometryTrajectory(sc)},
        std::pair{"before", r.before}, std::pair{"after", r.after}}) {
    auto out = OpenOut(dir / (std::string(name) + ".csv"));
    WriteTrajectoryCsv(out, t);
  }
  std::vector<Vertex> vertices;
  for (const auto& [id, lm] : r.map.landmarks) {
    vertices.push_back(VertexFromLandmark(lm));
  }
  WriteGraphCsv(dir, BuildGraph(std::move(vertices), cfg.pipeline.loop.graph.k_nn));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-level mapping with scene-graph loop closure"};
  app.require_subcommand(1);

  CommonOptions common;
  RunOptions run;
  std::string est_path, gt_path, align = "rigid", attempts_path;
  std::vector<std::string> plot_inputs;
  double tau_l = 5.0;

  CLI::App* sim = app.add_subcommand("sim", "simulate a scenario");
  AddCommon(sim, common);

  CLI::App* run_cmd = app.add_subcommand("run", "run the mapping pipeline");
  AddCommon(run_cmd, common);
  run_cmd->add_option("observations", run.obs, "detection JSONL");
  run_cmd->add_option("--odom", run.odom, "odometry TUM trajectory");
  run_cmd->add_option("--gt", run.gt, "ground-truth TUM trajectory");
  run_cmd->add_option("--seeds", run.seeds, "simulated seeds in a batch")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--jobs", run.jobs, "batch workers")
      ->check(CLI::PositiveNumber);

  CLI::App* eval = app.add_subcommand("eval", "absolute trajectory error");
  AddCommon(eval, common);
  eval->add_option("estimate", est_path)->required();
  eval->add_option("groundtruth", gt_path)->required();
  eval->add_option("--align", align)
      ->check(CLI::IsMember({"rigid", "similarity", "none"}));

  CLI::App* pr = app.add_subcommand("pr", "precision/recall from an attempt log");
  AddCommon(pr, common);
  pr->add_option("attempts", attempts_path)->required();
  pr->add_option("--tau", tau_l, "true-positive radius, m")
      ->check(CLI::PositiveNumber);

  CLI::App* plot = app.add_subcommand("export-plot", "CSV for external plotting");
  AddCommon(plot, common);
  plot->add_option("inputs", plot_inputs, "TUM trajectories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*sim) return CmdSim(common);
    if (*run_cmd) return CmdRun(common, run);
    if (*eval) return CmdEval(common, est_path, gt_path, align);
    if (*pr) return CmdPr(common, attempts_path, tau_l);
    if (*plot) return CmdExportPlot(common, plot_inputs);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return IsNumericalError(e.code()) ? kNumerical : kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
