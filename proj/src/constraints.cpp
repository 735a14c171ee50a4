#include "storyweaver/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "storyweaver/log.hpp"

namespace storyweaver {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::size_t> path_edges(const SimilarityGraph& graph,
                                    const std::vector<std::size_t>& path) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    auto e = graph.edge_between(path[i], path[i + 1]);
    if (!e) throw NotFoundError("path uses a missing edge");
    out.push_back(*e);
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> RelationshipSet::touching(std::size_t num_docs) const {
  std::vector<std::vector<std::size_t>> index(num_docs);
  auto add = [&](std::size_t doc, std::size_t r) {
    auto& list = index.at(doc);
    if (list.empty() || list.back() != r) list.push_back(r);
  };
  for (std::size_t r = 0; r < paths.size(); ++r) {
    std::set<std::size_t> docs(pstar.begin(), pstar.end());
    docs.insert(paths[r].alternative.begin(), paths[r].alternative.end());
    for (std::size_t d : docs) add(d, r);
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::size_t r = paths.size() + i;
    add(edges[i].a, r);
    add(edges[i].b, r);
  }
  return index;
}

std::vector<std::size_t> RelationshipSet::involved_documents() const {
  std::set<std::size_t> docs;
  if (!paths.empty()) docs.insert(pstar.begin(), pstar.end());
  for (const auto& p : paths) docs.insert(p.alternative.begin(), p.alternative.end());
  for (const auto& e : edges) {
    docs.insert(e.a);
    docs.insert(e.b);
  }
  return {docs.begin(), docs.end()};
}

double topic_path_cost(const std::vector<std::size_t>& path, const Matrix& theta) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    total += manhattan(theta[path[i]], theta[path[i + 1]]);
  }
  return total;
}

ToleranceReport tolerances(const SimilarityGraph& graph, const Story& pstar) {
  if (pstar.path.size() < 2) throw ParameterError("P* needs at least one edge");
  const std::size_t s = pstar.path.front();
  const std::size_t t = pstar.path.back();
  ToleranceReport report;
  report.pstar_cost = path_cost(graph, pstar.path);
  const std::vector<std::size_t> on_path = path_edges(graph, pstar.path);
  std::set<std::size_t> on_path_set(on_path.begin(), on_path.end());

  for (std::size_t e : on_path_set) {
    const Edge& edge = graph.edges()[e];
    const double avoiding = shortest_distances(graph, s, e)[t];
    const double beta = std::isinf(avoiding) ? kInf : avoiding - report.pstar_cost + edge.cost;
    report.upper.push_back({edge.a, edge.b, e, beta});
  }

  const std::vector<double> from_s = shortest_distances(graph, s);
  const std::vector<double> from_t = shortest_distances(graph, t);
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    if (on_path_set.count(e)) continue;
    const Edge& edge = graph.edges()[e];
    const double via = std::min(from_s[edge.a] + from_t[edge.b], from_s[edge.b] + from_t[edge.a]);
    const double zero_cost_distance = std::min(report.pstar_cost, via);
    report.lower.push_back({edge.a, edge.b, e, report.pstar_cost - zero_cost_distance});
  }
  return report;
}

std::vector<HeuristicBound> heuristic_edge_bounds(const SimilarityGraph& graph,
                                                  const SearchTrace& trace, const Story& pstar) {
  const std::size_t t = pstar.path.back();
  const double cost = path_cost(graph, pstar.path);
  std::set<std::size_t> on_path;
  for (std::size_t e : path_edges(graph, pstar.path)) on_path.insert(e);
  std::vector<double> g_closed(graph.num_nodes(), kInf);
  for (std::size_t idx : trace.closed) {
    const TraceNode& n = trace.nodes[idx];
    g_closed[n.doc] = std::min(g_closed[n.doc], n.g);
  }
  std::vector<HeuristicBound> out;
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    if (on_path.count(e)) continue;
    const Edge& edge = graph.edges()[e];
    for (auto [l, m] : {std::pair{edge.a, edge.b}, std::pair{edge.b, edge.a}}) {
      if (std::isinf(g_closed[l])) continue;
      out.push_back({l, m, std::max(0.0, cost - g_closed[l] - graph.heuristic(m, t))});
    }
  }
  return out;
}

RelationshipSet derive_relationships(const SearchTrace& trace, const Story& pstar,
                                     const SimilarityGraph& graph, double epsilon,
                                     const DeriveOptions& options) {
  if (pstar.path.size() < 2) throw ParameterError("P* needs at least one edge");
  if (epsilon > 0.0) throw ParameterError("epsilon must be <= 0");
  const std::size_t t = pstar.path.back();
  RelationshipSet set;
  set.pstar = pstar.path;
  set.epsilon = epsilon;

  std::set<std::size_t> pstar_edges;
  for (std::size_t e : path_edges(graph, pstar.path)) pstar_edges.insert(e);

  if (trace.open.empty()) warn("search trace has no open nodes; only edge relationships derived");

  std::set<std::size_t> compared_edges;
  for (std::size_t idx : trace.open) {
    const TraceNode& node = trace.nodes[idx];
    std::vector<std::size_t> prefix = trace.path_to(idx);
    if (options.subtree_filter) {
      // o lies in tau(e*) when its search-tree path uses e*; keep o if some e* misses it.
      std::set<std::size_t> used;
      for (std::size_t e : path_edges(graph, prefix)) used.insert(e);
      const bool outside_some =
          std::any_of(pstar_edges.begin(), pstar_edges.end(),
                      [&](std::size_t e) { return used.count(e) == 0; });
      if (!outside_some) continue;
    }
    PathInequality ineq;
    ineq.open_doc = node.doc;
    if (node.doc == t) {
      ineq.alternative = std::move(prefix);
    } else {
      try {
        const SearchResult rest = astar(graph, node.doc, t);
        ineq.alternative = std::move(prefix);
        ineq.alternative.insert(ineq.alternative.end(), rest.story.path.begin() + 1,
                                rest.story.path.end());
      } catch (const NoPathError&) {
        ineq.alternative = std::move(prefix);
        ineq.recorded_f = node.f;
      }
    }
    for (std::size_t e : path_edges(graph, ineq.alternative)) {
      if (!pstar_edges.count(e)) compared_edges.insert(e);
    }
    set.paths.push_back(std::move(ineq));
  }
  for (std::size_t e : compared_edges) {
    const Edge& edge = graph.edges()[e];
    set.edges.push_back({edge.a, edge.b, edge.cost});
  }
  return set;
}

double mu(const RelationshipSet& set, std::size_t r, const Matrix& theta) {
  if (r < set.paths.size()) {
    const PathInequality& p = set.paths[r];
    const double pstar_cost = topic_path_cost(set.pstar, theta);
    const double other = p.recorded_f ? *p.recorded_f : topic_path_cost(p.alternative, theta);
    return pstar_cost - other;
  }
  const EdgeInequality& e = set.edges.at(r - set.paths.size());
  return manhattan(theta[e.a], theta[e.b]) - e.baseline;
}

SatisfactionSummary summarize(const RelationshipSet& set, const Matrix& theta) {
  SatisfactionSummary out;
  for (std::size_t r = 0; r < set.size(); ++r) {
    const double m = mu(set, r, theta);
    if (set.is_path(r)) {
      out.mean_path_mu += m;
      if (m <= 0.0) ++out.paths_satisfied;
    } else {
      out.mean_edge_mu += m;
      if (m >= 0.0) ++out.edges_satisfied;
    }
  }
  if (!set.paths.empty()) out.mean_path_mu /= static_cast<double>(set.paths.size());
  if (!set.edges.empty()) out.mean_edge_mu /= static_cast<double>(set.edges.size());
  return out;
}

nlohmann::json relationships_to_json(const RelationshipSet& set) {
  nlohmann::json rel = nlohmann::json::array();
  for (const auto& p : set.paths) {
    nlohmann::json j = {{"kind", "path"}, {"open", p.open_doc}, {"docs", p.alternative},
                        {"epsilon", set.epsilon}};
    if (p.recorded_f) j["alt_f"] = *p.recorded_f;
    rel.push_back(std::move(j));
  }
  for (const auto& e : set.edges) {
    rel.push_back({{"kind", "edge"},
                   {"edge", {e.a, e.b}},
                   {"baseline", e.baseline},
                   {"epsilon", set.epsilon}});
  }
  return {{"pstar", set.pstar}, {"epsilon", set.epsilon}, {"relationships", std::move(rel)}};
}

RelationshipSet relationships_from_json(const nlohmann::json& j) {
  RelationshipSet set;
  set.pstar = j.at("pstar").get<std::vector<std::size_t>>();
  set.epsilon = j.at("epsilon").get<double>();
  for (const auto& r : j.at("relationships")) {
    if (r.at("kind") == "path") {
      PathInequality p;
      p.open_doc = r.at("open").get<std::size_t>();
      p.alternative = r.at("docs").get<std::vector<std::size_t>>();
      if (r.contains("alt_f")) p.recorded_f = r.at("alt_f").get<double>();
      set.paths.push_back(std::move(p));
    } else {
      const auto edge = r.at("edge").get<std::vector<std::size_t>>();
      set.edges.push_back({edge.at(0), edge.at(1), r.at("baseline").get<double>()});
    }
  }
  return set;
}

nlohmann::json tolerances_to_json(const ToleranceReport& report) {
  auto list = [](const std::vector<EdgeTolerance>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : v) {
      nlohmann::json item = {{"a", e.a}, {"b", e.b}};
      if (std::isfinite(e.value)) {
        item["value"] = e.value;
      } else {
        item["value"] = nullptr;
      }
      arr.push_back(std::move(item));
    }
    return arr;
  };
  return {{"pstar_cost", report.pstar_cost},
          {"upper", list(report.upper)},
          {"lower", list(report.lower)}};
}

}  // namespace storyweaver
