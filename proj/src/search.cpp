#include "storyweaver/search.hpp"

#include "storyweaver/log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <deque>
#include <queue>
#include <set>
#include <tuple>
#include <unordered_map>

namespace storyweaver {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

void check_node(const SimilarityGraph& graph, std::size_t doc, const char* role) {
  if (doc >= graph.num_nodes()) {
    throw NotFoundError(std::string(role) + " document " + std::to_string(doc) + " not in graph");
  }
}

// Waypoint bookkeeping shared by the relaxed and the exact constrained searches.
class WaypointPlan {
 public:
  WaypointPlan(const SimilarityGraph& graph, std::size_t s, std::size_t t,
               const std::vector<std::size_t>& waypoints, bool use_heuristic)
      : graph_(graph), s_(s), t_(t), order_(graph.num_nodes(), kNone) {
    targets_ = waypoints;
    targets_.push_back(t);
    for (std::size_t j = 0; j < waypoints.size(); ++j) order_[waypoints[j]] = j;
    suffix_.assign(targets_.size(), 0.0);
    if (use_heuristic) {
      for (std::size_t j = targets_.size() - 1; j-- > 0;) {
        suffix_[j] = graph.heuristic(targets_[j], targets_[j + 1]) + suffix_[j + 1];
      }
    }
    use_heuristic_ = use_heuristic;
  }

  std::size_t count() const { return targets_.size() - 1; }

  double h(std::size_t doc, std::size_t ancestry) const {
    if (!use_heuristic_) return 0.0;
    return graph_.heuristic(doc, targets_[ancestry]) + suffix_[ancestry];
  }

  // Ancestry after stepping onto v, or kNone when the step is not allowed:
  // the start is never revisited, the goal only ends the story, and feedback
  // documents are entered in order.
  std::size_t step(std::size_t ancestry, std::size_t v) const {
    if (v == s_) return kNone;
    if (v == t_) return ancestry == count() ? ancestry : kNone;
    const std::size_t j = order_[v];
    if (j == kNone) return ancestry;
    return j == ancestry ? ancestry + 1 : kNone;
  }

  bool is_goal(std::size_t doc, std::size_t ancestry) const {
    return doc == t_ && ancestry == count();
  }

 private:
  const SimilarityGraph& graph_;
  std::size_t s_;
  std::size_t t_;
  std::vector<std::size_t> targets_;
  std::vector<std::size_t> order_;
  std::vector<double> suffix_;
  bool use_heuristic_ = true;
};

struct QueueEntry {
  double f;
  std::size_t ancestry;
  std::size_t doc;
  double g;
  std::size_t node;
};

// Min-f first; on ties richer ancestry, then smaller document, then smaller g.
struct QueueOrder {
  bool operator()(const QueueEntry& x, const QueueEntry& y) const {
    if (x.f != y.f) return x.f > y.f;
    if (x.ancestry != y.ancestry) return x.ancestry < y.ancestry;
    if (x.doc != y.doc) return x.doc > y.doc;
    return x.g > y.g;
  }
};

struct Bans {
  const std::vector<bool>* nodes = nullptr;
  const std::vector<bool>* edges = nullptr;
};

// Best-first search over (document, ancestry) states. Returns the goal node
// index in the trace, or kNone when the goal is unreachable.
std::size_t best_first(const SimilarityGraph& graph, std::size_t s, const WaypointPlan& plan,
                       const Bans& bans, SearchTrace& trace) {
  const std::size_t layers = plan.count() + 1;
  std::vector<std::size_t> node_of(graph.num_nodes() * layers, kNone);
  std::vector<bool> closed;
  std::vector<std::size_t> expansion_order;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueOrder> queue;

  auto open_node = [&](std::size_t doc, std::size_t ancestry, double g,
                       std::optional<std::size_t> pred) {
    const std::size_t state = doc * layers + ancestry;
    std::size_t idx = node_of[state];
    if (idx == kNone) {
      idx = trace.nodes.size();
      node_of[state] = idx;
      const double h = plan.h(doc, ancestry);
      trace.nodes.push_back({doc, ancestry, g, h, g + h, pred});
      closed.push_back(false);
    } else {
      TraceNode& n = trace.nodes[idx];
      if (!(g < n.g)) return;
      n.g = g;
      n.f = g + n.h;
      n.predecessor = pred;
      closed[idx] = false;  // reopen
    }
    const TraceNode& n = trace.nodes[idx];
    queue.push({n.f, ancestry, doc, g, idx});
  };

  open_node(s, 0, 0.0, std::nullopt);
  std::size_t goal = kNone;
  while (!queue.empty()) {
    const QueueEntry e = queue.top();
    queue.pop();
    if (closed[e.node] || e.g > trace.nodes[e.node].g) continue;
    if (plan.is_goal(e.doc, e.ancestry)) {
      goal = e.node;
      break;
    }
    closed[e.node] = true;
    expansion_order.push_back(e.node);
    ++trace.expansions;
    for (const Neighbor& nb : graph.neighbors(e.doc)) {
      if (bans.nodes && (*bans.nodes)[nb.doc]) continue;
      if (bans.edges && (*bans.edges)[nb.edge]) continue;
      const std::size_t next = plan.step(e.ancestry, nb.doc);
      if (next == kNone) continue;
      open_node(nb.doc, next, e.g + graph.edges()[nb.edge].cost, e.node);
    }
  }

  std::vector<bool> listed(trace.nodes.size(), false);
  for (std::size_t idx : expansion_order) {
    if (closed[idx] && !listed[idx]) {
      trace.closed.push_back(idx);
      listed[idx] = true;
    }
  }
  for (std::size_t idx = 0; idx < trace.nodes.size(); ++idx) {
    if (!closed[idx]) trace.open.push_back(idx);
  }
  return goal;
}

std::vector<std::size_t> unwind(const SearchTrace& trace, std::size_t node) {
  std::vector<std::size_t> path;
  std::optional<std::size_t> cur = node;
  while (cur) {
    path.push_back(trace.nodes[*cur].doc);
    cur = trace.nodes[*cur].predecessor;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

SearchResult plain_search(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                          bool use_heuristic, const Bans& bans = {}) {
  check_node(graph, s, "start");
  check_node(graph, t, "goal");
  if (s == t) throw ParameterError("start and goal must differ");
  WaypointPlan plan(graph, s, t, {}, use_heuristic);
  SearchResult result;
  const std::size_t goal = best_first(graph, s, plan, bans, result.trace);
  if (goal == kNone) {
    throw NoPathError("no path from document " + std::to_string(s) + " to " + std::to_string(t),
                      std::move(result.trace), s, t);
  }
  result.story = make_story(graph, unwind(result.trace, goal));
  result.trace.depth = result.story.length();
  return result;
}

bool reachable(const SimilarityGraph& graph, std::size_t from, std::size_t to) {
  std::vector<bool> seen(graph.num_nodes(), false);
  std::deque<std::size_t> frontier{from};
  seen[from] = true;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop_front();
    if (u == to) return true;
    for (const Neighbor& nb : graph.neighbors(u)) {
      if (!seen[nb.doc]) {
        seen[nb.doc] = true;
        frontier.push_back(nb.doc);
      }
    }
  }
  return false;
}

bool is_simple(const std::vector<std::size_t>& path) {
  std::vector<std::size_t> sorted = path;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

// Cost-to-go of the relaxed (walk) problem for every (document, ancestry)
// state, by Dijkstra backwards from the goal state. Lower-bounds every simple
// completion.
std::vector<double> relaxed_cost_to_go(const SimilarityGraph& graph, const WaypointPlan& plan,
                                       std::size_t t) {
  const std::size_t layers = plan.count() + 1;
  std::vector<double> dist(graph.num_nodes() * layers, kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[t * layers + plan.count()] = 0.0;
  queue.push({0.0, t * layers + plan.count()});
  while (!queue.empty()) {
    const auto [d, state] = queue.top();
    queue.pop();
    if (d > dist[state]) continue;
    const std::size_t v = state / layers;
    const std::size_t b = state % layers;
    // Predecessor states (u, a) with step(a, v) == b.
    for (std::size_t a : {b, b == 0 ? kNone : b - 1}) {
      if (a == kNone || plan.step(a, v) != b) continue;
      for (const Neighbor& nb : graph.neighbors(v)) {
        const std::size_t pred = nb.doc * layers + a;
        const double nd = d + graph.edges()[nb.edge].cost;
        if (nd < dist[pred]) {
          dist[pred] = nd;
          queue.push({nd, pred});
        }
      }
    }
  }
  return dist;
}

// Exact A* over simple partial paths, guided by the relaxed cost-to-go. A label
// is dropped when another label at the same state cost no more and visited a
// subset of its documents.
std::vector<std::size_t> elementary_search(const SimilarityGraph& graph, std::size_t s,
                                           std::size_t t, const WaypointPlan& plan,
                                           std::size_t label_limit) {
  constexpr std::size_t kDominanceList = 64;
  const std::size_t layers = plan.count() + 1;
  const std::vector<double> h = relaxed_cost_to_go(graph, plan, t);
  const std::size_t words = (graph.num_nodes() + 63) / 64;
  struct Label {
    std::size_t doc;
    std::size_t ancestry;
    double g;
    std::size_t parent;
  };
  struct Kept {
    double g;
    std::vector<std::uint64_t> visited;
  };
  std::vector<Label> labels;
  std::unordered_map<std::size_t, std::vector<Kept>> kept;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueOrder> queue;
  if (!std::isfinite(h[s * layers])) return {};
  labels.push_back({s, 0, 0.0, kNone});
  queue.push({h[s * layers], 0, s, 0.0, 0});
  std::vector<std::uint64_t> visited(words);
  while (!queue.empty()) {
    const QueueEntry e = queue.top();
    queue.pop();
    if (plan.is_goal(e.doc, e.ancestry)) {
      std::vector<std::size_t> path;
      for (std::size_t cur = e.node; cur != kNone; cur = labels[cur].parent) {
        path.push_back(labels[cur].doc);
      }
      std::reverse(path.begin(), path.end());
      return path;
    }
    std::fill(visited.begin(), visited.end(), 0);
    for (std::size_t cur = e.node; cur != kNone; cur = labels[cur].parent) {
      visited[labels[cur].doc / 64] |= std::uint64_t{1} << (labels[cur].doc % 64);
    }
    auto& list = kept[e.doc * layers + e.ancestry];
    const bool dominated = std::any_of(list.begin(), list.end(), [&](const Kept& k) {
      if (k.g > e.g) return false;
      for (std::size_t w = 0; w < words; ++w) {
        if (k.visited[w] & ~visited[w]) return false;
      }
      return true;
    });
    if (dominated) continue;
    if (list.size() < kDominanceList) list.push_back({e.g, visited});
    for (const Neighbor& nb : graph.neighbors(e.doc)) {
      if (visited[nb.doc / 64] >> (nb.doc % 64) & 1) continue;
      const std::size_t next = plan.step(e.ancestry, nb.doc);
      if (next == kNone) continue;
      const double rest = h[nb.doc * layers + next];
      if (!std::isfinite(rest)) continue;
      if (labels.size() >= label_limit) {
        throw SearchLimitError("constrained search exceeded its label budget");
      }
      const double g = e.g + graph.edges()[nb.edge].cost;
      labels.push_back({nb.doc, next, g, e.node});
      queue.push({g + rest, next, nb.doc, g, labels.size() - 1});
    }
  }
  return {};
}

// Leg-by-leg simple path: each leg avoids documents already used and the
// stops still ahead. Built forwards and backwards; the cheaper one wins.
std::vector<std::size_t> repaired_path(const SimilarityGraph& graph,
                                       const std::vector<std::size_t>& stops) {
  auto build = [&](const std::vector<std::size_t>& order) -> std::vector<std::size_t> {
    std::vector<bool> banned(graph.num_nodes(), false);
    for (std::size_t d : order) banned[d] = true;
    std::vector<std::size_t> path{order.front()};
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      banned[order[i + 1]] = false;
      banned[order[i]] = false;
      try {
        const auto leg = plain_search(graph, order[i], order[i + 1], true, Bans{&banned, nullptr});
        path.insert(path.end(), leg.story.path.begin() + 1, leg.story.path.end());
      } catch (const NoPathError&) {
        return {};
      }
      for (std::size_t d : path) banned[d] = true;
    }
    return path;
  };
  std::vector<std::size_t> forward = build(stops);
  std::vector<std::size_t> backward = build({stops.rbegin(), stops.rend()});
  std::reverse(backward.begin(), backward.end());
  if (forward.empty()) return backward;
  if (backward.empty()) return forward;
  return path_cost(graph, backward) < path_cost(graph, forward) ? backward : forward;
}

}  // namespace

std::vector<std::size_t> SearchTrace::path_to(std::size_t node) const { return unwind(*this, node); }

double path_cost(const SimilarityGraph& graph, const std::vector<std::size_t>& path) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) total += graph.cost(path[i], path[i + 1]);
  return total;
}

Story make_story(const SimilarityGraph& graph, std::vector<std::size_t> path) {
  Story story;
  story.cost = path_cost(graph, path);
  story.path = std::move(path);
  return story;
}

SearchResult astar(const SimilarityGraph& graph, std::size_t s, std::size_t t) {
  return plain_search(graph, s, t, true);
}

SearchResult uniform_cost(const SimilarityGraph& graph, std::size_t s, std::size_t t) {
  return plain_search(graph, s, t, false);
}

SearchResult constrained_astar(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                               const std::vector<std::size_t>& feedback,
                               const ConstrainedSearchOptions& options) {
  if (feedback.empty()) return astar(graph, s, t);
  check_node(graph, s, "start");
  check_node(graph, t, "goal");
  if (s == t) throw ParameterError("start and goal must differ");
  {
    std::set<std::size_t> unique;
    for (std::size_t c : feedback) {
      check_node(graph, c, "feedback");
      if (c == s || c == t) throw ParameterError("feedback must not contain the start or goal");
      if (!unique.insert(c).second) throw ParameterError("feedback documents must be distinct");
    }
  }
  WaypointPlan plan(graph, s, t, feedback, true);
  SearchResult result;
  const std::size_t goal = best_first(graph, s, plan, {}, result.trace);
  std::vector<std::size_t> legs{s};
  legs.insert(legs.end(), feedback.begin(), feedback.end());
  legs.push_back(t);
  auto fail = [&](const std::string& why) {
    for (std::size_t i = 0; i + 1 < legs.size(); ++i) {
      if (!reachable(graph, legs[i], legs[i + 1])) {
        throw NoPathError("no path for leg " + std::to_string(legs[i]) + " -> " +
                              std::to_string(legs[i + 1]),
                          std::move(result.trace), legs[i], legs[i + 1]);
      }
    }
    throw NoPathError(why, std::move(result.trace), s, t);
  };
  if (goal == kNone) fail("no path visits the feedback documents in order");

  std::vector<std::size_t> path = unwind(result.trace, goal);
  if (!is_simple(path)) {
    try {
      path = elementary_search(graph, s, t, plan, options.label_limit);
    } catch (const SearchLimitError&) {
      if (!options.repair_on_limit) throw;
      path = repaired_path(graph, legs);
      if (path.empty()) throw;
      warn("constrained search budget exhausted; story is a repaired simple path");
      result.exact = false;
    }
    if (path.empty()) fail("no simple path visits the feedback documents in order");
  }
  result.story = make_story(graph, std::move(path));
  result.trace.depth = result.story.length();
  return result;
}

Story initial_constrained_story(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                                const std::vector<std::size_t>& feedback) {
  std::vector<std::size_t> stops{s};
  stops.insert(stops.end(), feedback.begin(), feedback.end());
  stops.push_back(t);
  std::vector<std::size_t> path{s};
  for (std::size_t i = 0; i + 1 < stops.size(); ++i) {
    if (stops[i] == stops[i + 1]) continue;
    try {
      const SearchResult leg = astar(graph, stops[i], stops[i + 1]);
      path.insert(path.end(), leg.story.path.begin() + 1, leg.story.path.end());
    } catch (const NoPathError& e) {
      throw NoPathError("no path for leg " + std::to_string(stops[i]) + " -> " +
                            std::to_string(stops[i + 1]),
                        e.trace(), stops[i], stops[i + 1]);
    }
  }
  return make_story(graph, std::move(path));
}

std::vector<Story> yen_k_shortest(const SimilarityGraph& graph, std::size_t s, std::size_t t,
                                  std::size_t k) {
  if (k < 1) throw ParameterError("k must be at least 1");
  std::vector<Story> found;
  try {
    found.push_back(plain_search(graph, s, t, true).story);
  } catch (const NoPathError&) {
    return found;
  }
  std::set<std::vector<std::size_t>> accepted{found.front().path};
  std::set<std::pair<double, std::vector<std::size_t>>> candidates;
  std::vector<bool> banned_nodes(graph.num_nodes(), false);
  std::vector<bool> banned_edges(graph.num_edges(), false);

  // Keep extracting past k while candidates tie the k-th cost, then order
  // ties by path.
  while (true) {
    const std::vector<std::size_t> previous = found.back().path;
    for (std::size_t i = 0; i + 1 < previous.size(); ++i) {
      const std::size_t spur = previous[i];
      std::fill(banned_nodes.begin(), banned_nodes.end(), false);
      std::fill(banned_edges.begin(), banned_edges.end(), false);
      for (const Story& story : found) {
        const auto& p = story.path;
        if (p.size() > i + 1 && std::equal(previous.begin(), previous.begin() + i + 1, p.begin())) {
          if (auto e = graph.edge_between(p[i], p[i + 1])) banned_edges[*e] = true;
        }
      }
      for (std::size_t j = 0; j < i; ++j) banned_nodes[previous[j]] = true;
      std::vector<std::size_t> path(previous.begin(), previous.begin() + i);
      try {
        const SearchResult spur_result =
            plain_search(graph, spur, t, true, Bans{&banned_nodes, &banned_edges});
        path.insert(path.end(), spur_result.story.path.begin(), spur_result.story.path.end());
      } catch (const NoPathError&) {
        continue;
      }
      if (accepted.count(path)) continue;
      const double cost = path_cost(graph, path);
      candidates.emplace(cost, std::move(path));
    }
    if (candidates.empty()) break;
    auto best = candidates.begin();
    if (found.size() >= k && best->first > found[k - 1].cost) break;
    found.push_back({best->second, best->first});
    accepted.insert(best->second);
    candidates.erase(best);
  }
  std::stable_sort(found.begin(), found.end(), [](const Story& a, const Story& b) {
    return std::tie(a.cost, a.path) < std::tie(b.cost, b.path);
  });
  if (found.size() > k) found.resize(k);
  return found;
}

double effective_branching_factor(double expansions, std::size_t depth) {
  if (depth < 1) throw ParameterError("depth must be at least 1");
  const double d = static_cast<double>(depth);
  if (!(expansions >= d)) throw ParameterError("expansions must be at least the solution depth");
  auto total = [&](double b) {
    double sum = 0.0;
    double power = 1.0;
    for (std::size_t i = 0; i < depth; ++i) {
      power *= b;
      sum += power;
    }
    return sum;
  };
  double lo = 1.0;
  double hi = std::max(1.0, expansions);
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (total(mid) < expansions) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::vector<double> shortest_distances(const SimilarityGraph& graph, std::size_t source,
                                       std::optional<std::size_t> banned_edge) {
  check_node(graph, source, "source");
  std::vector<double> dist(graph.num_nodes(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    for (const Neighbor& nb : graph.neighbors(u)) {
      if (banned_edge && nb.edge == *banned_edge) continue;
      const double nd = d + graph.edges()[nb.edge].cost;
      if (nd < dist[nb.doc]) {
        dist[nb.doc] = nd;
        queue.emplace(nd, nb.doc);
      }
    }
  }
  return dist;
}

bool contains_in_order(const std::vector<std::size_t>& path,
                       const std::vector<std::size_t>& sequence) {
  std::size_t next = 0;
  for (std::size_t doc : path) {
    if (next < sequence.size() && doc == sequence[next]) ++next;
  }
  return next == sequence.size();
}

nlohmann::json trace_to_json(const SearchTrace& trace) {
  auto entries = [&](const std::vector<std::size_t>& ids) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t idx : ids) {
      const TraceNode& n = trace.nodes[idx];
      nlohmann::json e = {{"doc", n.doc}, {"f", n.f}, {"g", n.g}};
      if (n.ancestry) e["ancestry"] = n.ancestry;
      arr.push_back(std::move(e));
    }
    return arr;
  };
  return {{"open", entries(trace.open)},
          {"closed", entries(trace.closed)},
          {"expansions", trace.expansions},
          {"depth", trace.depth}};
}

nlohmann::json story_to_json(const Story& story) {
  return {{"path", story.path}, {"cost", story.cost}};
}

Story story_from_json(const nlohmann::json& j) {
  return {j.at("path").get<std::vector<std::size_t>>(), j.at("cost").get<double>()};
}

}  // namespace storyweaver
