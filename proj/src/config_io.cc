#include "objloop/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "objloop/error.hpp"

namespace objloop {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads known keys out of a JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) Fail("", "expected an object");
  }

  template <typename T>
  void Get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) Fail(key, "expected a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) Fail(key, "expected a number");
        if (std::is_integral_v<T> && !it->is_number_integer()) {
          Fail(key, "expected an integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) Fail(key, "expected a string");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      Fail(key, e.what());
    }
  }

  template <int N>
  void GetVector(const char* key, Eigen::Matrix<double, N, 1>& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_array() || it->size() != size_t(N)) {
      Fail(key, "expected an array of " + std::to_string(N) + " numbers");
    }
    for (int i = 0; i < N; ++i) {
      if (!(*it)[size_t(i)].is_number()) Fail(key, "expected numbers");
      out[i] = (*it)[size_t(i)].get<double>();
    }
  }

  const json* Child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string Path(const char* key) const { return path_ + "." + key; }

  void Finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) Fail(key.c_str(), "unknown key");
    }
  }

  [[noreturn]] void Fail(const std::string& key, const std::string& what) const {
    throw Error(ErrorCode::kSchemaError,
                (key.empty() ? path_ : path_ + "." + key) + ": " + what);
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

Mat6 DiagonalFromVector(const Vec6& d) { return d.asDiagonal(); }

void ReadNoise(const json& j, const std::string& path, NoiseConfig& n) {
  ObjectReader r(j, path);
  r.Get("odom_sigma_t", n.odom_sigma_t);
  r.Get("odom_sigma_r", n.odom_sigma_r);
  r.Get("det_sigma_t", n.det_sigma_t);
  r.Get("det_sigma_yaw", n.det_sigma_yaw);
  r.Get("dims_sigma", n.dims_sigma);
  r.Get("label_flip", n.label_flip);
  r.Get("hist_concentration", n.hist_concentration);
  r.Get("emb_sigma", n.emb_sigma);
  r.Get("dropout", n.dropout);
  r.Finish();
}

void ReadTrajectory(const json& j, const std::string& path,
                    TrajectoryConfig& t) {
  ObjectReader r(j, path);
  std::string shape = TrajectoryShapeName(t.shape);
  r.Get("shape", shape);
  try {
    t.shape = ParseTrajectoryShape(shape);
  } catch (const Error& e) {
    r.Fail("shape", e.what());
  }
  r.Get("width", t.width);
  r.Get("height", t.height);
  r.Get("spacing", t.spacing);
  r.Get("curve_radius", t.curve_radius);
  r.Get("revisit_offset_deg", t.revisit_offset_deg);
  r.Finish();
}

void ReadIntrinsics(const json& j, const std::string& path,
                    CameraIntrinsics& k) {
  ObjectReader r(j, path);
  double hfov_deg = 0.0;
  r.Get("hfov_deg", hfov_deg);
  r.Get("width", k.width);
  r.Get("height", k.height);
  if (hfov_deg > 0.0) k = CameraIntrinsics::FromFov(hfov_deg * M_PI / 180.0, k.width, k.height);
  r.Get("fx", k.fx);
  r.Get("fy", k.fy);
  r.Get("cx", k.cx);
  r.Get("cy", k.cy);
  r.Finish();
}

void ReadScenario(const json& j, ScenarioConfig& s) {
  ObjectReader r(j, "scenario");
  r.Get("seed", s.seed);
  r.Get("n_objects", s.n_objects);
  if (const json* labels = r.Child("labels")) {
    if (!labels->is_array() || labels->empty()) {
      r.Fail("labels", "expected a non-empty array");
    }
    s.labels.clear();
    for (size_t i = 0; i < labels->size(); ++i) {
      ObjectReader lr((*labels)[i], "scenario.labels[" + std::to_string(i) + "]");
      LabelSpec spec;
      lr.Get("name", spec.name);
      lr.Get("weight", spec.weight);
      lr.GetVector<3>("dims", spec.nominal_dims);
      lr.Finish();
      if (spec.name.empty()) lr.Fail("name", "required");
      s.labels.push_back(spec);
    }
  }
  std::string placement =
      s.placement == PlacementMode::kUniform ? "uniform" : "corridor";
  r.Get("placement", placement);
  if (placement == "uniform") {
    s.placement = PlacementMode::kUniform;
  } else if (placement == "corridor") {
    s.placement = PlacementMode::kCorridor;
  } else {
    r.Fail("placement", "expected uniform or corridor");
  }
  r.GetVector<4>("extent", s.extent);
  r.Get("corridor", s.corridor);
  r.Get("clearance", s.clearance);
  r.Get("min_separation", s.min_separation);
  if (const json* t = r.Child("trajectory")) {
    ReadTrajectory(*t, r.Path("trajectory"), s.trajectory);
  }
  if (const json* k = r.Child("intrinsics")) {
    ReadIntrinsics(*k, r.Path("intrinsics"), s.intrinsics);
  }
  r.Get("max_range", s.max_range);
  r.Get("hist_bins", s.hist_bins);
  r.Get("hist_label_concentration", s.hist_label_concentration);
  r.Get("emb_dim", s.emb_dim);
  r.Get("anchor_separation_deg", s.anchor_separation_deg);
  r.Get("instance_sigma", s.instance_sigma);
  if (const json* n = r.Child("noise")) ReadNoise(*n, r.Path("noise"), s.noise);
  r.Finish();
}

void ReadPipeline(const json& j, PipelineConfig& p) {
  ObjectReader r(j, "pipeline");
  if (const json* f = r.Child("filter")) {
    ObjectReader fr(*f, r.Path("filter"));
    fr.Get("max_dim", p.filter.max_dim);
    fr.Get("max_range", p.filter.max_range);
    fr.Get("min_score", p.filter.min_score);
    fr.Finish();
  }
  if (const json* a = r.Child("assoc")) {
    ObjectReader ar(*a, r.Path("assoc"));
    ar.Get("lambda", p.assoc.lambda);
    ar.Get("threshold", p.assoc.threshold);
    ar.Get("history_cap", p.assoc.history_cap);
    ar.Get("active_window", p.assoc.active_window);
    ar.Finish();
  }
  if (const json* w = r.Child("window")) {
    ObjectReader wr(*w, r.Path("window"));
    wr.Get("window_size", p.window.window_size);
    wr.Get("min_track_count", p.window.min_track_count);
    wr.Get("optimize_cameras", p.window.optimize_cameras);
    wr.Get("max_iterations", p.window.gn.max_iterations);
    wr.Get("tolerance", p.window.gn.tolerance);
    wr.Finish();
  }
  if (const json* l = r.Child("loop")) {
    ObjectReader lr(*l, r.Path("loop"));
    GraphConfig& g = p.loop.graph;
    lr.Get("k_nn", g.k_nn);
    lr.Get("delta", g.delta);
    lr.Get("mu", g.mu);
    lr.Get("tau", g.tau);
    lr.Get("min_matches", g.min_matches);
    lr.Get("literal_appearance", g.literal_appearance);
    std::string frame = g.position_frame == PositionFrame::kWorld
                            ? "world"
                            : g.position_frame == PositionFrame::kGraphCentroid
                                  ? "graph_centroid"
                                  : "neighborhood";
    lr.Get("position_frame", frame);
    if (frame == "world") {
      g.position_frame = PositionFrame::kWorld;
    } else if (frame == "graph_centroid") {
      g.position_frame = PositionFrame::kGraphCentroid;
    } else if (frame == "neighborhood") {
      g.position_frame = PositionFrame::kNeighborhood;
    } else {
      lr.Fail("position_frame", "expected neighborhood, graph_centroid or world");
    }
    lr.Get("local_window", p.loop.local_window);
    lr.Get("min_candidate_observations", p.loop.min_candidate_observations);
    lr.Get("consistency_tolerance", p.loop.consistency_tolerance);
    lr.Get("consistency_angle", p.loop.consistency_angle);
    Vec6 odo = p.loop.odometry_information.diagonal();
    Vec6 obj = p.loop.object_information.diagonal();
    lr.GetVector<6>("odometry_information", odo);
    lr.GetVector<6>("object_information", obj);
    p.loop.odometry_information = DiagonalFromVector(odo);
    p.loop.object_information = DiagonalFromVector(obj);
    lr.Finish();
  }
  r.Get("refine_enabled", p.refine_enabled);
  r.Get("loop_enabled", p.loop_enabled);
  r.Get("loop_check_interval", p.loop_check_interval);
  r.Get("tau_l", p.tau_l);
  r.Get("opportunity_gap", p.opportunity_gap);
  std::string align = p.align == AlignMode::kRigid        ? "rigid"
                      : p.align == AlignMode::kSimilarity ? "similarity"
                                                          : "none";
  r.Get("align", align);
  if (align == "rigid") {
    p.align = AlignMode::kRigid;
  } else if (align == "similarity") {
    p.align = AlignMode::kSimilarity;
  } else if (align == "none") {
    p.align = AlignMode::kNone;
  } else {
    r.Fail("align", "expected rigid, similarity or none");
  }
  r.Finish();
}

ordered_json Vec(const Eigen::VectorXd& v) {
  return ordered_json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

RunConfig DefaultRunConfig() {
  RunConfig cfg;
  cfg.scenario.noise = NoiseConfig::Nominal();
  cfg.pipeline.intrinsics = cfg.scenario.intrinsics;
  return cfg;
}

RunConfig ParseRunConfig(const std::string& text, const RunConfig& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  RunConfig cfg = base;
  ObjectReader r(root, "config");
  const bool has_intrinsics = root.is_object() && root.contains("pipeline") &&
                              root["pipeline"].is_object() &&
                              root["pipeline"].contains("intrinsics");
  if (const json* s = r.Child("scenario")) ReadScenario(*s, cfg.scenario);
  if (const json* p = r.Child("pipeline")) {
    json copy = *p;
    if (has_intrinsics) {
      ReadIntrinsics(copy["intrinsics"], "pipeline.intrinsics",
                     cfg.pipeline.intrinsics);
      copy.erase("intrinsics");
    }
    ReadPipeline(copy, cfg.pipeline);
  }
  r.Finish();
  if (!has_intrinsics) cfg.pipeline.intrinsics = cfg.scenario.intrinsics;
  cfg.scenario.Validate();
  cfg.pipeline.Validate();
  return cfg;
}

RunConfig LoadRunConfig(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str(), base);
}

std::string RunConfigToJson(const RunConfig& cfg) {
  const ScenarioConfig& s = cfg.scenario;
  ordered_json labels = ordered_json::array();
  for (const LabelSpec& l : s.labels) {
    labels.push_back({{"name", l.name},
                      {"weight", l.weight},
                      {"dims", Vec(l.nominal_dims)}});
  }
  auto intrinsics = [](const CameraIntrinsics& k) {
    ordered_json j;
    j["fx"] = k.fx;
    j["fy"] = k.fy;
    j["cx"] = k.cx;
    j["cy"] = k.cy;
    j["width"] = k.width;
    j["height"] = k.height;
    return j;
  };
  ordered_json scenario;
  scenario["seed"] = s.seed;
  scenario["n_objects"] = s.n_objects;
  scenario["labels"] = labels;
  scenario["placement"] =
      s.placement == PlacementMode::kUniform ? "uniform" : "corridor";
  scenario["extent"] = Vec(s.extent);
  scenario["corridor"] = s.corridor;
  scenario["clearance"] = s.clearance;
  scenario["min_separation"] = s.min_separation;
  ordered_json traj;
  traj["shape"] = TrajectoryShapeName(s.trajectory.shape);
  traj["width"] = s.trajectory.width;
  traj["height"] = s.trajectory.height;
  traj["spacing"] = s.trajectory.spacing;
  traj["curve_radius"] = s.trajectory.curve_radius;
  traj["revisit_offset_deg"] = s.trajectory.revisit_offset_deg;
  scenario["trajectory"] = traj;
  scenario["intrinsics"] = intrinsics(s.intrinsics);
  scenario["max_range"] = s.max_range;
  scenario["hist_bins"] = s.hist_bins;
  scenario["hist_label_concentration"] = s.hist_label_concentration;
  scenario["emb_dim"] = s.emb_dim;
  scenario["anchor_separation_deg"] = s.anchor_separation_deg;
  scenario["instance_sigma"] = s.instance_sigma;
  ordered_json noise;
  noise["odom_sigma_t"] = s.noise.odom_sigma_t;
  noise["odom_sigma_r"] = s.noise.odom_sigma_r;
  noise["det_sigma_t"] = s.noise.det_sigma_t;
  noise["det_sigma_yaw"] = s.noise.det_sigma_yaw;
  noise["dims_sigma"] = s.noise.dims_sigma;
  noise["label_flip"] = s.noise.label_flip;
  noise["hist_concentration"] = s.noise.hist_concentration;
  noise["emb_sigma"] = s.noise.emb_sigma;
  noise["dropout"] = s.noise.dropout;
  scenario["noise"] = noise;

  const PipelineConfig& p = cfg.pipeline;
  ordered_json pipeline;
  pipeline["filter"] = {{"max_dim", p.filter.max_dim},
                        {"max_range", p.filter.max_range},
                        {"min_score", p.filter.min_score}};
  pipeline["assoc"] = {{"lambda", p.assoc.lambda},
                       {"threshold", p.assoc.threshold},
                       {"history_cap", p.assoc.history_cap},
                       {"active_window", p.assoc.active_window}};
  pipeline["window"] = {{"window_size", p.window.window_size},
                        {"min_track_count", p.window.min_track_count},
                        {"optimize_cameras", p.window.optimize_cameras},
                        {"max_iterations", p.window.gn.max_iterations},
                        {"tolerance", p.window.gn.tolerance}};
  const GraphConfig& g = p.loop.graph;
  ordered_json loop;
  loop["k_nn"] = g.k_nn;
  loop["delta"] = g.delta;
  loop["mu"] = g.mu;
  loop["tau"] = g.tau;
  loop["min_matches"] = g.min_matches;
  loop["literal_appearance"] = g.literal_appearance;
  loop["position_frame"] = g.position_frame == PositionFrame::kWorld ? "world"
                           : g.position_frame == PositionFrame::kGraphCentroid
                               ? "graph_centroid"
                               : "neighborhood";
  loop["local_window"] = p.loop.local_window;
  loop["min_candidate_observations"] = p.loop.min_candidate_observations;
  loop["consistency_tolerance"] = p.loop.consistency_tolerance;
  loop["consistency_angle"] = p.loop.consistency_angle;
  loop["odometry_information"] = Vec(p.loop.odometry_information.diagonal());
  loop["object_information"] = Vec(p.loop.object_information.diagonal());
  pipeline["loop"] = loop;
  pipeline["intrinsics"] = intrinsics(p.intrinsics);
  pipeline["refine_enabled"] = p.refine_enabled;
  pipeline["loop_enabled"] = p.loop_enabled;
  pipeline["loop_check_interval"] = p.loop_check_interval;
  pipeline["tau_l"] = p.tau_l;
  pipeline["opportunity_gap"] = p.opportunity_gap;
  pipeline["align"] = p.align == AlignMode::kRigid        ? "rigid"
                      : p.align == AlignMode::kSimilarity ? "similarity"
                                                          : "none";
  ordered_json root;
  root["scenario"] = scenario;
  root["pipeline"] = pipeline;
  return root.dump(2);
}

}  // namespace objloop
