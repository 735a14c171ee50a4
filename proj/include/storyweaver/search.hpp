#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "storyweaver/errors.hpp"
#include "storyweaver/similarity_graph.hpp"

namespace storyweaver {

struct Story {
  std::vector<std::size_t> path;  // s, ..., t
  double cost = 0.0;

  std::size_t length() const { return path.empty() ? 0 : path.size() - 1; }
  friend bool operator==(const Story&, const Story&) = default;
};

// One search node as recorded in a trace. ancestry counts how many feedback
// documents (in order) lie on the node's best known path; it is 0 for plain A*.
struct TraceNode {
  std::size_t doc = 0;
  std::size_t ancestry = 0;
  double g = 0.0;
  double h = 0.0;
  double f = 0.0;
  std::optional<std::size_t> predecessor;  // index into SearchTrace::nodes

  friend bool operator==(const TraceNode&, const TraceNode&) = default;
};

struct SearchTrace {
  std::vector<TraceNode> nodes;  // every generated search node
  std::vector<std::size_t> open;    // indices into nodes, opened but not expanded
  std::vector<std::size_t> closed;  // indices into nodes, expanded
  std::size_t expansions = 0;
  std::size_t depth = 0;

  // Documents from the search root to the given node, following predecessors.
  std::vector<std::size_t> path_to(std::size_t node) const;
  friend bool operator==(const SearchTrace&, const SearchTrace&) = default;
};

struct SearchResult {
  Story story;
  SearchTrace trace;
  // False when the exact constrained search ran out of budget and the story
  // is a repaired simple path rather than a proven minimum.
  bool exact = true;
};

class NoPathError : public Error {
 public:
  NoPathError(const std::string& what, SearchTrace trace, std::size_t from, std::size_t to)
      : Error(what), trace_(std::move(trace)), from_(from), to_(to) {}
  const SearchTrace& trace() const { return trace_; }
  // The leg that could not be connected.
  std::size_t from() const { return from_; }
  std::size_t to() const { return to_; }

 private:
  SearchTrace trace_;
  std::size_t from_;
  std::size_t to_;
};

// Sum of edge costs along the path, accumulated from the start. Throws
// NotFoundError when consecutive documents are not adjacent.
double path_cost(const SimilarityGraph& graph, const std::vector<std::size_t>& path);
Story make_story(const SimilarityGraph& graph, std::vector<std::size_t> path);

// A* with the topic-space Manhattan heuristic. Ties on f go to the smaller document.
SearchResult astar(const SimilarityGraph& graph, std::size_t s, std::size_t t);

// Same search with a zero heuristic.
SearchResult uniform_cost(const SimilarityGraph& graph, std::size_t s, std::size_t t);

struct ConstrainedSearchOptions {
  // Budget for the exact simple-path search used when the relaxed search
  // returns a walk that revisits a document.
  std::size_t label_limit = 1'000'000;
  // Past the budget, return a repaired simple path instead of throwing
  // SearchLimitError.
  bool repair_on_limit = true;
};

// Minimum-cost simple path from s to t that visits the feedback documents in
// order (see SearchResult::exact). Search states are (document, ancestry) pairs with the chained
// waypoint heuristic; on equal f the richer ancestry is expanded first.
SearchResult constrained_astar(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                               const std::vector<std::size_t>& feedback,
                               const ConstrainedSearchOptions& options = {});

// Shortest s->C1, C1->C2, ..., CK->t legs concatenated.
Story initial_constrained_story(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                                const std::vector<std::size_t>& feedback);

// Yen's k shortest loopless paths, ascending cost; equal costs ordered by path.
std::vector<Story> yen_k_shortest(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                                  std::size_t k);

// b >= 1 solving b + b^2 + ... + b^depth = expansions.
double effective_branching_factor(double expansions, std::size_t depth);

// Single-source shortest distances with an optional banned edge; unreachable
// nodes are +infinity.
std::vector<double> shortest_distances(const SimilarityGraph& graph, std::size_t source,
                                       std::optional<std::size_t> banned_edge = std::nullopt);

// True when the sequence appears in order (not necessarily contiguously).
bool contains_in_order(const std::vector<std::size_t>& path,
                       const std::vector<std::size_t>& sequence);

nlohmann::json trace_to_json(const SearchTrace& trace);
nlohmann::json story_to_json(const Story& story);
Story story_from_json(const nlohmann::json& j);

}  // namespace storyweaver
