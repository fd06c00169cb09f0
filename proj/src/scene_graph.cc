#include "objloop/scene_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "objloop/error.hpp"

namespace objloop {

Vertex VertexFromLandmark(const Landmark& lm) {
  if (lm.hist_history.empty() || lm.emb_history.empty()) {
    throw Error(ErrorCode::kEmptyHistory, "landmark has no appearance history");
  }
  Vertex v;
  v.id = lm.id;
  v.label = lm.label;
  v.pose = lm.T_wo;
  v.dims = lm.dims;
  std::vector<double> hist(lm.hist_history.front().size(), 0.0);
  for (const ColorHistogram& h : lm.hist_history) {
    if (h.size() != hist.size()) {
      throw Error(ErrorCode::kDimMismatch, "histogram length mismatch");
    }
    for (size_t i = 0; i < hist.size(); ++i) hist[i] += h[i];
  }
  v.hist = ColorHistogram(std::move(hist));
  Eigen::VectorXd emb = Eigen::VectorXd::Zero(lm.emb_history.front().size());
  for (const Embedding& e : lm.emb_history) {
    if (e.size() != emb.size()) {
      throw Error(ErrorCode::kDimMismatch, "embedding length mismatch");
    }
    emb += e.values();
  }
  v.emb = Embedding(std::move(emb));
  return v;
}

int SceneGraph::IndexOf(LandmarkId id) const {
  for (size_t i = 0; i < vertices.size(); ++i) {
    if (vertices[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

SceneGraph BuildGraph(std::vector<Vertex> vertices, int k_nn) {
  if (k_nn < 1) throw Error(ErrorCode::kInvalidArgument, "k_nn must be >= 1");
  SceneGraph g;
  g.k_nn = k_nn;
  g.vertices = std::move(vertices);
  const int n = static_cast<int>(g.vertices.size());
  g.neighbors.resize(size_t(n));
  std::set<std::pair<int, int>> edge_set;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    dist.reserve(size_t(n));
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist.emplace_back((g.vertices[size_t(i)].position() -
                         g.vertices[size_t(j)].position()).norm(),
                        j);
    }
    const size_t k = std::min<size_t>(size_t(k_nn), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + long(k), dist.end());
    for (size_t r = 0; r < k; ++r) {
      const int j = dist[r].second;
      g.neighbors[size_t(i)].push_back(j);
      edge_set.emplace(std::min(i, j), std::max(i, j));
    }
  }
  for (const auto& [a, b] : edge_set) {
    g.edges.push_back({a, b,
                       TranslationDistance(g.vertices[size_t(a)].pose,
                                           g.vertices[size_t(b)].pose)});
  }
  return g;
}

LayoutDescriptor ComputeLayoutDescriptor(const SceneGraph& g, int vertex) {
  LayoutDescriptor w = LayoutDescriptor::Zero(g.k_nn);
  const auto& nbrs = g.neighbors.at(size_t(vertex));
  const Vec3& p = g.vertices[size_t(vertex)].position();
  for (size_t r = 0; r < nbrs.size(); ++r) {
    w[Eigen::Index(r)] = (g.vertices[size_t(nbrs[r])].position() - p).norm();
  }
  std::sort(w.data(), w.data() + w.size());
  const double sum = w.sum();
  if (sum > 0.0) w /= sum;
  return w;
}

double LayoutDifference(const LayoutDescriptor& a, const LayoutDescriptor& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch, "descriptor length mismatch");
  }
  return (a - b).norm();
}

void GraphConfig::Validate() const {
  if (k_nn < 1) throw Error(ErrorCode::kInvalidArgument, "k_nn must be >= 1");
  if (!(mu >= 0.0 && mu <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mu must lie in [0, 1]");
  }
  if (!(delta >= 0.0) || min_matches < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid delta or min_matches");
  }
}

Vec3 RelativePosition(const SceneGraph& g, int vertex, PositionFrame frame) {
  const Vec3& p = g.vertices.at(size_t(vertex)).position();
  switch (frame) {
    case PositionFrame::kWorld:
      return p;
    case PositionFrame::kGraphCentroid: {
      Vec3 c = Vec3::Zero();
      for (const Vertex& v : g.vertices) c += v.position();
      return p - c / static_cast<double>(g.vertices.size());
    }
    case PositionFrame::kNeighborhood: {
      const auto& nbrs = g.neighbors[size_t(vertex)];
      if (nbrs.empty()) return Vec3::Zero();
      Vec3 c = Vec3::Zero();
      for (int j : nbrs) c += g.vertices[size_t(j)].position();
      return p - c / static_cast<double>(nbrs.size());
    }
  }
  return p;
}

double SemanticSimilarity(const Vertex& a, const Vec3& position_a,
                          const Vertex& b, const Vec3& position_b, double mu,
                          bool literal_appearance, SemanticTerms* terms) {
  if (a.label != b.label) {
    if (terms) *terms = {};
    return 0.0;
  }
  if (a.hist.size() != b.hist.size() || a.emb.size() != b.emb.size()) {
    throw Error(ErrorCode::kDimMismatch, "appearance length mismatch");
  }
  SemanticTerms t;
  t.d_s = std::exp(-(a.dims - b.dims).norm());
  t.d_p = std::exp(-(position_a - position_b).norm());
  const Eigen::Map<const Eigen::VectorXd> ha(a.hist.weights().data(),
                                             Eigen::Index(a.hist.size()));
  const Eigen::Map<const Eigen::VectorXd> hb(b.hist.weights().data(),
                                             Eigen::Index(b.hist.size()));
  if (literal_appearance) {
    t.d_c = std::exp(-std::abs(ha.dot(hb)));
    t.d_e = std::exp(-std::abs(a.emb.values().dot(b.emb.values())));
  } else {
    t.d_c = std::exp(-(ha - hb).norm());
    t.d_e = std::exp(-(a.emb.values() - b.emb.values()).norm());
  }
  if (terms) *terms = t;
  return mu * (t.d_s + t.d_p) + (1.0 - mu) * (t.d_c + t.d_e);
}

std::vector<MatchCandidate> CandidateMatches(const SceneGraph& local,
                                             const SceneGraph& global,
                                             const GraphConfig& cfg) {
  std::vector<LayoutDescriptor> global_desc;
  global_desc.reserve(global.vertices.size());
  for (size_t j = 0; j < global.vertices.size(); ++j) {
    global_desc.push_back(ComputeLayoutDescriptor(global, int(j)));
  }
  std::vector<MatchCandidate> out;
  for (size_t i = 0; i < local.vertices.size(); ++i) {
    if (local.neighbors[i].empty()) continue;
    const LayoutDescriptor wl = ComputeLayoutDescriptor(local, int(i));
    for (size_t j = 0; j < global.vertices.size(); ++j) {
      if (global.neighbors[j].empty()) continue;
      if (local.vertices[i].id == global.vertices[j].id) continue;
      const double d = LayoutDifference(wl, global_desc[j]);
      if (d <= cfg.delta) {
        out.push_back({local.vertices[i].id, global.vertices[j].id, d, 0.0});
      }
    }
  }
  return out;
}

MatchSet VerifyMatches(std::vector<MatchCandidate> candidates,
                       const SceneGraph& local, const SceneGraph& global,
                       const GraphConfig& cfg) {
  MatchSet kept;
  for (MatchCandidate& c : candidates) {
    const int i = local.IndexOf(c.local_id);
    const int j = global.IndexOf(c.global_id);
    if (i < 0 || j < 0) {
      throw Error(ErrorCode::kInvalidArgument, "candidate references unknown vertex");
    }
    c.s_l = SemanticSimilarity(
        local.vertices[size_t(i)],
        RelativePosition(local, i, cfg.position_frame),
        global.vertices[size_t(j)],
        RelativePosition(global, j, cfg.position_frame), cfg.mu,
        cfg.literal_appearance);
    if (c.s_l >= cfg.tau && c.s_l > 0.0) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(),
            [](const MatchCandidate& a, const MatchCandidate& b) {
              return std::make_tuple(-a.s_l, a.d_f, a.local_id, a.global_id) <
                     std::make_tuple(-b.s_l, b.d_f, b.local_id, b.global_id);
            });
  std::set<LandmarkId> used_local, used_global;
  MatchSet out;
  for (const MatchCandidate& c : kept) {
    if (used_local.count(c.local_id) || used_global.count(c.global_id)) continue;
    used_local.insert(c.local_id);
    used_global.insert(c.global_id);
    out.push_back(c);
  }
  return out;
}

std::optional<MatchSet> DetectLoop(const SceneGraph& local,
                                   const SceneGraph& global,
                                   const GraphConfig& cfg,
                                   const std::vector<LandmarkId>& local_candidates,
                                   MatchSet* raw) {
  if (raw) raw->clear();
  if (local.vertices.empty() || global.vertices.empty()) return std::nullopt;
  std::vector<MatchCandidate> candidates = CandidateMatches(local, global, cfg);
  if (!local_candidates.empty()) {
    const std::set<LandmarkId> allowed(local_candidates.begin(),
                                       local_candidates.end());
    std::erase_if(candidates, [&](const MatchCandidate& c) {
      return !allowed.count(c.local_id);
    });
  }
  MatchSet matches = VerifyMatches(std::move(candidates), local, global, cfg);
  if (raw) *raw = matches;
  if (static_cast<int>(matches.size()) < cfg.min_matches) return std::nullopt;
  return matches;
}

double MatchSetScore(const MatchSet& matches) {
  if (matches.empty()) return 0.0;
  double sum = 0.0;
  for (const MatchCandidate& m : matches) sum += m.s_l;
  return static_cast<double>(matches.size()) +
         0.5 * sum / static_cast<double>(matches.size());
}

void WriteGraphJson(std::ostream& out, const SceneGraph& g) {
  nlohmann::ordered_json vertices = nlohmann::ordered_json::array();
  for (const Vertex& v : g.vertices) {
    nlohmann::ordered_json obj;
    obj["id"] = v.id;
    obj["label"] = v.label;
    obj["position"] = {v.position().x(), v.position().y(), v.position().z()};
    obj["dims"] = {v.dims.x(), v.dims.y(), v.dims.z()};
    vertices.push_back(std::move(obj));
  }
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const Edge& e : g.edges) {
    edges.push_back({{"a", g.vertices[size_t(e.a)].id},
                     {"b", g.vertices[size_t(e.b)].id},
                     {"length", e.length}});
  }
  nlohmann::ordered_json root;
  root["vertices"] = std::move(vertices);
  root["edges"] = std::move(edges);
  out << root.dump(2) << '\n';
}

}  // namespace objloop
