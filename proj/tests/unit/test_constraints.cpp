#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "../support/scenario.hpp"
#include "storyweaver/constraints.hpp"
#include "storyweaver/errors.hpp"

using namespace storyweaver;

namespace {

// s=0, a=1, t=2; P* = s a t at cost 2, direct edge costs 3.
SimilarityGraph triangle() { return SimilarityGraph::from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 3.0}}); }

bool still_shortest(const SimilarityGraph& g, const std::vector<std::size_t>& path) {
  return astar(g, path.front(), path.back()).story.path == path;
}

}  // namespace

TEST_SUITE("constraints") {
  TEST_CASE("triangle tolerances") {
    const auto g = triangle();
    const Story pstar = astar(g, 0, 2).story;
    REQUIRE(pstar.path == std::vector<std::size_t>{0, 1, 2});
    const auto rep = tolerances(g, pstar);
    CHECK(rep.pstar_cost == 2.0);
    REQUIRE(rep.upper.size() == 2);
    for (const auto& u : rep.upper) CHECK(u.value == doctest::Approx(2.0));
    REQUIRE(rep.lower.size() == 1);
    CHECK(rep.lower[0].value == doctest::Approx(2.0));

    // Raising an on-path edge to just below beta keeps P*; just above flips it.
    const std::size_t sa = *g.edge_between(0, 1);
    CHECK(still_shortest(g.with_edge_cost(sa, 1.9), pstar.path));
    CHECK_FALSE(still_shortest(g.with_edge_cost(sa, 2.1), pstar.path));
    // Lowering the off-path edge to just above alpha keeps P*; below flips it.
    const std::size_t st = *g.edge_between(0, 2);
    CHECK(still_shortest(g.with_edge_cost(st, 2.1), pstar.path));
    CHECK_FALSE(still_shortest(g.with_edge_cost(st, 1.9), pstar.path));
  }

  TEST_CASE("alpha is zero when the edge cannot shortcut P*") {
    // Pendant edge 2-3 hanging off t.
    const auto g = SimilarityGraph::from_edges(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 0.5}});
    const auto rep = tolerances(g, astar(g, 0, 2).story);
    REQUIRE(rep.lower.size() == 1);
    CHECK(rep.lower[0].value == 0.0);
    for (const auto& u : rep.upper) CHECK(std::isinf(u.value));
  }

  TEST_CASE("tolerances are sound on random graphs") {
    std::mt19937_64 rng(31);
    int checked = 0;
    for (int i = 0; i < 40; ++i) {
      const auto g = oracle::random_graph(10, 4, 0.4, rng);
      const auto unique = oracle::unique_shortest(g, 0, 9, 1e-6);
      if (unique.empty()) continue;
      const Story pstar = make_story(g, unique);
      const auto rep = tolerances(g, pstar);
      for (const auto& u : rep.upper) {
        if (std::isinf(u.value)) continue;
        CHECK(oracle::unique_shortest(g.with_edge_cost(u.edge, u.value - 1e-4), 0, 9, 0) == unique);
        CHECK(oracle::unique_shortest(g.with_edge_cost(u.edge, u.value + 1e-4), 0, 9, 0) != unique);
      }
      for (const auto& l : rep.lower) {
        if (l.value <= 1e-4) continue;
        CHECK(oracle::unique_shortest(g.with_edge_cost(l.edge, l.value + 1e-4), 0, 9, 0) == unique);
        CHECK(oracle::unique_shortest(g.with_edge_cost(l.edge, l.value - 1e-4), 0, 9, 0) != unique);
      }
      ++checked;
    }
    CHECK(checked > 10);
  }

  TEST_CASE("heuristic bounds dominate alpha") {
    std::mt19937_64 rng(32);
    for (int i = 0; i < 40; ++i) {
      const auto g = oracle::random_graph(12, 4, 0.35, rng);
      if (!std::isfinite(shortest_distances(g, 0)[11])) continue;
      const auto r = astar(g, 0, 11);
      const auto rep = tolerances(g, r.story);
      const auto bounds = heuristic_edge_bounds(g, r.trace, r.story);
      for (const auto& l : rep.lower) {
        double best = -1.0;
        int seen = 0;
        for (const auto& b : bounds) {
          if ((b.l == l.a && b.m == l.b) || (b.l == l.b && b.m == l.a)) {
            best = std::max(best, b.value);
            ++seen;
          }
        }
        if (seen == 2) CHECK(best >= l.value - 1e-12);
      }
    }
  }

  TEST_CASE("one path inequality per open node") {
    std::mt19937_64 rng(33);
    for (int i = 0; i < 30; ++i) {
      const auto g = oracle::random_graph(14, 4, 0.3, rng);
      if (!std::isfinite(shortest_distances(g, 0)[13])) continue;
      const auto r = astar(g, 0, 13);
      const auto set = derive_relationships(r.trace, r.story, g, -0.05);
      CHECK(set.paths.size() == r.trace.open.size());
      for (const auto& p : set.paths) {
        CHECK(p.alternative.front() == 0);
        CHECK(std::find(p.alternative.begin(), p.alternative.end(), p.open_doc) != p.alternative.end());
        if (!p.recorded_f) CHECK(p.alternative.back() == 13);
      }
      // P* is the shortest path here, so every path inequality already holds.
      const auto sum = summarize(set, g.theta());
      CHECK(sum.paths_satisfied == set.paths.size());
      CHECK(sum.edges_satisfied == set.edges.size());
      for (std::size_t e = 0; e < set.edges.size(); ++e) {
        CHECK(mu(set, set.paths.size() + e, g.theta()) == doctest::Approx(0.0).epsilon(1e-12));
      }
      // Edge relationships never cover P* edges.
      for (const auto& e : set.edges) {
        for (std::size_t k = 0; k + 1 < set.pstar.size(); ++k) {
          const bool same = (set.pstar[k] == e.a && set.pstar[k + 1] == e.b) ||
                            (set.pstar[k] == e.b && set.pstar[k + 1] == e.a);
          CHECK_FALSE(same);
        }
      }
    }
  }

  TEST_CASE("hand trace") {
    // Zero heuristic, so the search is uniform cost.
    const auto g = SimilarityGraph::from_edges(
        6, {{0, 1, 1.0}, {0, 2, 2.0}, {0, 3, 4.0}, {1, 4, 1.0}, {4, 5, 1.0}, {2, 5, 1.5}, {3, 5, 0.5}});
    const auto r = astar(g, 0, 5);
    CHECK(r.story.path == std::vector<std::size_t>{0, 1, 4, 5});
    CHECK(r.story.cost == 3.0);
    std::set<std::size_t> open_docs;
    for (std::size_t idx : r.trace.open) open_docs.insert(r.trace.nodes[idx].doc);
    CHECK(open_docs.count(3) == 1);
    CHECK(open_docs.count(0) == 0);
    const Story pstar = make_story(g, {0, 3, 5});
    const auto set = derive_relationships(r.trace, pstar, g, -0.05);
    for (const auto& p : set.paths) {
      if (p.open_doc == 3) CHECK(p.alternative == std::vector<std::size_t>{0, 3, 5});
    }
    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& e : set.edges) edges.insert({e.a, e.b});
    CHECK(edges.count({0, 3}) == 0);
    CHECK(edges.count({4, 5}) == 1);
  }

  TEST_CASE("mu sign convention") {
    RelationshipSet set;
    set.pstar = {0, 1};
    set.paths.push_back({2, {0, 2, 1}, std::nullopt});
    set.edges.push_back({0, 2, 0.6});
    const Matrix theta{{1, 0}, {0.8, 0.2}, {0.5, 0.5}};
    // c(P*) = 0.4, alternative 1.0 + 0.6 = 1.6.
    CHECK(mu(set, 0, theta) == doctest::Approx(-1.2));
    CHECK(mu(set, 1, theta) == doctest::Approx(0.4));
    set.paths[0].recorded_f = 0.8;
    CHECK(mu(set, 0, theta) == doctest::Approx(-0.4));
  }

  TEST_CASE("mu from hand-set topic rows") {
    // P* legs 0.4 + 0.2, alternative legs 0.5 + 0.5.
    RelationshipSet set;
    set.pstar = {0, 1, 2};
    set.paths.push_back({4, {3, 4, 5}, std::nullopt});
    const Matrix theta{{1, 0}, {0.8, 0.2}, {0.7, 0.3}, {1, 0}, {0.75, 0.25}, {0.5, 0.5}};
    CHECK(mu(set, 0, theta) == doctest::Approx(-0.4).epsilon(1e-12));
  }

  TEST_CASE("positive epsilon is rejected") {
    const auto r = astar(triangle(), 0, 2);
    CHECK_THROWS_AS(derive_relationships(r.trace, r.story, triangle(), 0.1), ParameterError);
  }

  TEST_CASE("walkthrough relationships round trip") {
    const scenario::Run r = scenario::fitted(scenario::kWalkthroughSeed);
    const Story pstar = initial_constrained_story(r.graph_before, r.s, r.t, r.feedback);
    const auto set = derive_relationships(r.pre.trace, pstar, r.graph_before, -0.05);
    CHECK(set.paths.size() == r.pre.trace.open.size());
    // P* is not the shortest story yet, so some path inequality is violated.
    CHECK(summarize(set, r.before.theta).paths_satisfied < set.paths.size());
    const auto back = relationships_from_json(relationships_to_json(set));
    CHECK(back.pstar == set.pstar);
    CHECK(back.size() == set.size());
    for (std::size_t k = 0; k < set.size(); ++k) {
      CHECK(mu(back, k, r.before.theta) == mu(set, k, r.before.theta));
    }
    const auto filtered = derive_relationships(r.pre.trace, pstar, r.graph_before, -0.05, {true});
    CHECK(filtered.paths.size() <= set.paths.size());
    const auto tol = tolerances_to_json(tolerances(r.graph_before, pstar));
    CHECK(tol.contains("upper"));
  }
}
