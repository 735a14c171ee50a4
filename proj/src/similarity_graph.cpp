#include "storyweaver/similarity_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "storyweaver/errors.hpp"

namespace storyweaver {

double manhattan(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ParameterError("manhattan: vector lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum;
}

std::vector<DocPair> term_sharing_pairs(const Corpus& corpus) {
  std::vector<std::vector<std::size_t>> postings(corpus.vocabulary_size());
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (const auto& [w, count] : corpus.term_counts(d)) postings[w].push_back(d);
  }
  std::set<DocPair> pairs;
  for (const auto& docs : postings) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      for (std::size_t j = i + 1; j < docs.size(); ++j) pairs.emplace(docs[i], docs[j]);
    }
  }
  return {pairs.begin(), pairs.end()};
}

std::uint64_t SimilarityGraph::key(std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

SimilarityGraph::SimilarityGraph(Matrix theta, std::vector<DocPair> candidates, double xi)
    : theta_(std::move(theta)), candidates_(std::move(candidates)), xi_(xi) {
  for (auto& [a, b] : candidates_) {
    if (a > b) std::swap(a, b);
    if (b >= theta_.size() || a == b) throw ParameterError("candidate pair out of range");
  }
  std::sort(candidates_.begin(), candidates_.end());
  candidates_.erase(std::unique(candidates_.begin(), candidates_.end()), candidates_.end());
  adjacency_.assign(theta_.size(), {});
  for (const auto& [a, b] : candidates_) {
    const double c = manhattan(theta_[a], theta_[b]);
    if (c < xi_) edges_.push_back({a, b, c});
  }
  index_edges();
}

SimilarityGraph SimilarityGraph::build(const Corpus& corpus, const TopicState& state, double xi) {
  if (state.theta.size() != corpus.size()) {
    throw ParameterError("topic state and corpus disagree on document count");
  }
  return SimilarityGraph(state.theta, term_sharing_pairs(corpus), xi);
}

SimilarityGraph SimilarityGraph::from_edges(std::size_t num_nodes, const std::vector<Edge>& edges) {
  SimilarityGraph g;
  g.xi_ = std::numeric_limits<double>::infinity();
  g.adjacency_.assign(num_nodes, {});
  for (Edge e : edges) {
    if (e.a > e.b) std::swap(e.a, e.b);
    if (e.b >= num_nodes || e.a == e.b) throw ParameterError("edge endpoint out of range");
    if (!(e.cost >= 0.0)) throw ParameterError("edge costs must be non-negative");
    g.candidates_.emplace_back(e.a, e.b);
    g.edges_.push_back(e);
  }
  std::sort(g.edges_.begin(), g.edges_.end(),
            [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  std::sort(g.candidates_.begin(), g.candidates_.end());
  g.index_edges();
  if (g.edge_index_.size() != g.edges_.size()) throw ParameterError("duplicate edge");
  return g;
}

void SimilarityGraph::index_edges() {
  edge_index_.clear();
  for (auto& adj : adjacency_) adj.clear();
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    edge_index_.emplace(key(e.a, e.b), i);
    adjacency_[e.a].push_back({e.b, i});
    adjacency_[e.b].push_back({e.a, i});
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end(),
              [](const Neighbor& x, const Neighbor& y) { return x.doc < y.doc; });
  }
}

SimilarityGraph SimilarityGraph::rebuild_costs(const Matrix& theta) const {
  if (!has_topics()) throw ParameterError("graph was built without topic rows");
  if (theta.size() != theta_.size()) throw ParameterError("theta row count changed");
  return SimilarityGraph(theta, candidates_, xi_);
}

SimilarityGraph SimilarityGraph::with_edge_cost(std::size_t edge, double cost) const {
  if (edge >= edges_.size()) throw ParameterError("edge index out of range");
  SimilarityGraph g = *this;
  g.edges_[edge].cost = cost;
  return g;
}

SimilarityGraph SimilarityGraph::restricted_to(const std::vector<bool>& keep) const {
  if (keep.size() != num_nodes()) throw ParameterError("node mask has wrong size");
  SimilarityGraph g = *this;
  g.edges_.clear();
  for (const Edge& e : edges_) {
    if (keep[e.a] && keep[e.b]) g.edges_.push_back(e);
  }
  g.index_edges();
  return g;
}

std::optional<std::size_t> SimilarityGraph::edge_between(std::size_t a, std::size_t b) const {
  auto it = edge_index_.find(key(a, b));
  if (it == edge_index_.end()) return std::nullopt;
  return it->second;
}

double SimilarityGraph::cost(std::size_t a, std::size_t b) const {
  if (auto e = edge_between(a, b)) return edges_[*e].cost;
  throw NotFoundError("documents " + std::to_string(a) + " and " + std::to_string(b) +
                      " are not adjacent");
}

double SimilarityGraph::heuristic(std::size_t from, std::size_t to) const {
  if (theta_.empty()) return 0.0;
  return manhattan(theta_[from], theta_[to]);
}

bool operator==(const SimilarityGraph& a, const SimilarityGraph& b) {
  if (a.xi_ != b.xi_ || a.theta_ != b.theta_ || a.candidates_ != b.candidates_) return false;
  if (a.edges_.size() != b.edges_.size()) return false;
  for (std::size_t i = 0; i < a.edges_.size(); ++i) {
    const Edge& x = a.edges_[i];
    const Edge& y = b.edges_[i];
    if (x.a != y.a || x.b != y.b || x.cost != y.cost) return false;
  }
  return true;
}

nlohmann::json graph_to_json(const SimilarityGraph& graph) {
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : graph.edges()) edges.push_back({{"a", e.a}, {"b", e.b}, {"cost", e.cost}});
  nlohmann::json j = {{"edges", std::move(edges)}};
  if (std::isfinite(graph.xi())) {
    j["xi"] = graph.xi();
  } else {
    j["xi"] = nullptr;
  }
  return j;
}

}  // namespace storyweaver
