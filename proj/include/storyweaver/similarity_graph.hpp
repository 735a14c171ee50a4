#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "storyweaver/corpus.hpp"
#include "storyweaver/topic_model.hpp"

namespace storyweaver {

// L1 distance between two topic vectors. Throws ParameterError on length mismatch.
double manhattan(std::span<const double> a, std::span<const double> b);

struct Edge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double cost = 0.0;
};

struct Neighbor {
  std::size_t doc = 0;
  std::size_t edge = 0;
};

using DocPair = std::pair<std::size_t, std::size_t>;

// Undirected document network. Edge costs are Manhattan distances between
// topic rows; an edge exists only for term-sharing pairs whose cost is below xi.
// The A* heuristic is the Manhattan distance between topic rows, or zero when
// the graph was built from explicit costs.
class SimilarityGraph {
 public:
  SimilarityGraph() = default;

  // candidates: unordered document pairs that share at least one term.
  SimilarityGraph(Matrix theta, std::vector<DocPair> candidates, double xi);

  static SimilarityGraph build(const Corpus& corpus, const TopicState& state, double xi);

  // Explicit-cost graph without topic rows; every edge is kept.
  static SimilarityGraph from_edges(std::size_t num_nodes, const std::vector<Edge>& edges);

  SimilarityGraph rebuild_costs(const Matrix& theta) const;
  SimilarityGraph rebuild_costs(const TopicState& state) const { return rebuild_costs(state.theta); }

  // Same topology and heuristic rows with one edge cost replaced.
  SimilarityGraph with_edge_cost(std::size_t edge, double cost) const;

  // Drops every edge touching a node whose keep flag is false.
  SimilarityGraph restricted_to(const std::vector<bool>& keep) const;

  std::size_t num_nodes() const { return adjacency_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Neighbor>& neighbors(std::size_t doc) const { return adjacency_.at(doc); }
  std::optional<std::size_t> edge_between(std::size_t a, std::size_t b) const;
  double cost(std::size_t a, std::size_t b) const;  // throws NotFoundError when not adjacent

  bool has_topics() const { return !theta_.empty(); }
  double heuristic(std::size_t from, std::size_t to) const;
  const Matrix& theta() const { return theta_; }
  double xi() const { return xi_; }
  const std::vector<DocPair>& candidates() const { return candidates_; }

  friend bool operator==(const SimilarityGraph& a, const SimilarityGraph& b);

 private:
  void index_edges();
  static std::uint64_t key(std::size_t a, std::size_t b);

  Matrix theta_;
  std::vector<DocPair> candidates_;
  double xi_ = 0.0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::unordered_map<std::uint64_t, std::size_t> edge_index_;
};

// Pairs of documents sharing at least one vocabulary term, sorted.
std::vector<DocPair> term_sharing_pairs(const Corpus& corpus);

nlohmann::json graph_to_json(const SimilarityGraph& graph);

}  // namespace storyweaver
