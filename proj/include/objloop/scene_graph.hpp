#pragma once

// Semantic topology graphs over object landmarks, K-NN layout descriptors and
// two-stage (layout, then semantics) graph matching.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "objloop/association.hpp"
#include "objloop/features.hpp"
#include "objloop/geometry.hpp"

namespace objloop {

struct Vertex {
  LandmarkId id = -1;
  std::string label;
  Pose pose;  // T_wo
  Vec3 dims = Vec3::Ones();
  ColorHistogram hist;
  Embedding emb;

  const Vec3& position() const { return pose.translation(); }
};

// Mean of the landmark's histogram and embedding histories, renormalized.
Vertex VertexFromLandmark(const Landmark& lm);

struct Edge {
  int a = 0;  // vertex indices, a < b
  int b = 0;
  double length = 0.0;
};

struct SceneGraph {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  // Per vertex: indices of its K nearest neighbors, closest first.
  std::vector<std::vector<int>> neighbors;
  int k_nn = 0;

  int IndexOf(LandmarkId id) const;
};

SceneGraph BuildGraph(std::vector<Vertex> vertices, int k_nn);

using LayoutDescriptor = Eigen::VectorXd;

// Sorted ascending K-NN distances, zero padded, divided by their sum. All
// zeros for an isolated vertex.
LayoutDescriptor ComputeLayoutDescriptor(const SceneGraph& g, int vertex);

double LayoutDifference(const LayoutDescriptor& a, const LayoutDescriptor& b);

enum class PositionFrame {
  kNeighborhood,   // offset from the centroid of the vertex's K neighbors
  kGraphCentroid,  // offset from the centroid of all graph vertices
  kWorld,
};

struct GraphConfig {
  int k_nn = 4;
  double delta = 0.15;
  double mu = 0.5;
  double tau = 1.2;
  int min_matches = 3;
  PositionFrame position_frame = PositionFrame::kNeighborhood;
  // Uses exp(-|h . h~|) and exp(-|e . e~|) for the appearance terms.
  bool literal_appearance = false;

  void Validate() const;
};

// Position of a vertex as compared across graphs under `frame`.
Vec3 RelativePosition(const SceneGraph& g, int vertex, PositionFrame frame);

struct SemanticTerms {
  double d_s = 0.0;
  double d_p = 0.0;
  double d_c = 0.0;
  double d_e = 0.0;
};

// Zero when labels differ, otherwise mu (d_s + d_p) + (1 - mu)(d_c + d_e).
// `position_a`/`position_b` are the already-relativized positions.
double SemanticSimilarity(const Vertex& a, const Vec3& position_a,
                          const Vertex& b, const Vec3& position_b, double mu,
                          bool literal_appearance = false,
                          SemanticTerms* terms = nullptr);

struct MatchCandidate {
  LandmarkId local_id = -1;
  LandmarkId global_id = -1;
  double d_f = 0.0;
  double s_l = 0.0;
};

using MatchSet = std::vector<MatchCandidate>;

// All local x global pairs with d_f <= delta. Pairs with an isolated vertex
// and pairs sharing a landmark id are skipped.
std::vector<MatchCandidate> CandidateMatches(const SceneGraph& local,
                                             const SceneGraph& global,
                                             const GraphConfig& cfg);

// Scores candidates, drops s_l < tau and resolves conflicts greedily by
// (s_l desc, d_f asc, local id asc, global id asc).
MatchSet VerifyMatches(std::vector<MatchCandidate> candidates,
                       const SceneGraph& local, const SceneGraph& global,
                       const GraphConfig& cfg);

// Candidate set restricted to `local_candidates` (when non-empty) on the
// local side; nullopt when fewer than min_matches survive. The raw match set
// is returned through `raw` even when gated.
std::optional<MatchSet> DetectLoop(const SceneGraph& local,
                                   const SceneGraph& global,
                                   const GraphConfig& cfg,
                                   const std::vector<LandmarkId>& local_candidates = {},
                                   MatchSet* raw = nullptr);

// Loop-detection score of a match set: size plus half the mean s_l.
double MatchSetScore(const MatchSet& matches);

void WriteGraphJson(std::ostream& out, const SceneGraph& g);

}  // namespace objloop
