#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <json.hpp>

#include "storyweaver/search.hpp"
#include "storyweaver/similarity_graph.hpp"

namespace storyweaver {

// c(P*) <= c(P^(o)) for one open node o of the pre-feedback search.
struct PathInequality {
  std::size_t open_doc = 0;
  std::vector<std::size_t> alternative;  // P^(o), or the s->o prefix when o cannot reach t
  std::optional<double> recorded_f;      // comparison value when o cannot reach t
};

// c(e) >= c0(e) with the baseline frozen from the initial topic space.
struct EdgeInequality {
  std::size_t a = 0;
  std::size_t b = 0;
  double baseline = 0.0;
};

struct RelationshipSet {
  std::vector<std::size_t> pstar;
  std::vector<PathInequality> paths;
  std::vector<EdgeInequality> edges;
  double epsilon = -0.05;

  std::size_t size() const { return paths.size() + edges.size(); }
  bool empty() const { return size() == 0; }
  bool is_path(std::size_t r) const { return r < paths.size(); }

  // Relationship indices (paths first, then edges) whose paths or edge touch each document.
  std::vector<std::vector<std::size_t>> touching(std::size_t num_docs) const;
  // Documents that appear in any relationship, ascending.
  std::vector<std::size_t> involved_documents() const;
};

struct EdgeTolerance {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t edge = 0;
  double value = 0.0;
};

struct ToleranceReport {
  double pstar_cost = 0.0;
  std::vector<EdgeTolerance> upper;  // beta for every edge of P*
  std::vector<EdgeTolerance> lower;  // alpha for every other edge
};

// Sum of Manhattan distances between consecutive topic rows along a path.
double topic_path_cost(const std::vector<std::size_t>& path, const Matrix& theta);

// Upper tolerances beta = d^{e,inf}(s,t) - c(P*) + c(e) for e on P* (infinite when
// removing e disconnects s and t) and lower tolerances alpha = c(P*) - d^{e,0}(s,t)
// for every other edge.
ToleranceReport tolerances(const SimilarityGraph& graph, const Story& pstar);

// Heuristic lower bounds max(0, c(P*) - g(l) - h(m)) for edges (l, m) not on P*
// whose endpoint l was expanded in the trace. Both orientations are reported.
struct HeuristicBound {
  std::size_t l = 0;
  std::size_t m = 0;
  double value = 0.0;
};
std::vector<HeuristicBound> heuristic_edge_bounds(const SimilarityGraph& graph,
                                                  const SearchTrace& trace, const Story& pstar);

struct DeriveOptions {
  // Keep only open nodes lying outside the search subtree below some edge of P*.
  bool subtree_filter = false;
};

// One path inequality per open node of the pre-feedback trace, and one edge
// inequality per edge of a compared alternative that is not on P*.
RelationshipSet derive_relationships(const SearchTrace& trace, const Story& pstar,
                                     const SimilarityGraph& graph, double epsilon,
                                     const DeriveOptions& options = {});

// Signed gap: c(P*) - c(P^(o)) for path relationships, c(e) - c0(e) for edges,
// evaluated live from theta.
double mu(const RelationshipSet& set, std::size_t relationship, const Matrix& theta);

struct SatisfactionSummary {
  std::size_t paths_satisfied = 0;
  std::size_t edges_satisfied = 0;
  double mean_path_mu = 0.0;
  double mean_edge_mu = 0.0;
};
SatisfactionSummary summarize(const RelationshipSet& set, const Matrix& theta);

nlohmann::json relationships_to_json(const RelationshipSet& set);
RelationshipSet relationships_from_json(const nlohmann::json& j);
nlohmann::json tolerances_to_json(const ToleranceReport& report);

}  // namespace storyweaver
