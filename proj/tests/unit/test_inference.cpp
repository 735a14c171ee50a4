#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>

#include "../support/oracles.hpp"
#include "../support/scenario.hpp"
#include "storyweaver/errors.hpp"
#include "storyweaver/inference.hpp"

using namespace storyweaver;

namespace {

double phi_ref(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> draws(double mean, TruncationRegion region, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& x : out) x = sample_truncated_normal(mean, region, rng);
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Gamma-normalized Dirichlet draws, independent of the library sampler.
std::vector<double> dirichlet_first(const std::vector<double>& conc, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    double first = 0.0, total = 0.0;
    for (std::size_t t = 0; t < conc.size(); ++t) {
      std::gamma_distribution<double> g(conc[t], 1.0);
      const double x = g(rng);
      if (t == 0) first = x;
      total += x;
    }
    out.push_back(first / total);
  }
  return out;
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("normal cdf and quantile") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021).epsilon(1e-6));
    for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999}) {
      CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
    }
  }

  TEST_CASE("truncated normal at most zero") {
    const auto x = draws(0.0, TruncationRegion::at_most(0.0), 100000, 1);
    for (double v : x) REQUIRE(v <= 0.0);
    CHECK(mean_of(x) == doctest::Approx(-std::sqrt(2.0 / M_PI)).epsilon(0.01));
    const double d = oracle::ks_statistic(x, [](double v) { return phi_ref(v) / 0.5; });
    CHECK(oracle::kolmogorov_p(std::sqrt(100000.0) * d) > 0.001);
  }

  TEST_CASE("truncated normal against reference cdf") {
    for (double mean : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
      for (double b : {-0.05, 0.0, 1.0}) {
        const auto x = draws(mean, TruncationRegion::at_most(b), 20000, 7);
        const double z = phi_ref(b - mean);
        const double d = oracle::ks_statistic(x, [&](double v) { return phi_ref(v - mean) / z; });
        CHECK(oracle::kolmogorov_p(std::sqrt(20000.0) * d) > 0.001);
        CHECK(truncated_normal_cdf(b, mean, TruncationRegion::at_most(b)) == doctest::Approx(1.0));
      }
      const auto y = draws(mean, TruncationRegion::above(0.0), 20000, 8);
      const double z = 1.0 - phi_ref(-mean);
      const double d = oracle::ks_statistic(y, [&](double v) { return (phi_ref(v - mean) - (1.0 - z)) / z; });
      CHECK(oracle::kolmogorov_p(std::sqrt(20000.0) * d) > 0.001);
    }
  }

  TEST_CASE("far tails stay finite and inside the region") {
    const auto lo = draws(10.0, TruncationRegion::at_most(0.0), 20000, 2);
    for (double v : lo) REQUIRE((std::isfinite(v) && v <= 0.0));
    CHECK(mean_of(lo) == doctest::Approx(-0.0981).epsilon(0.05));
    const auto hi = draws(-10.0, TruncationRegion::above(0.0), 20000, 3);
    for (double v : hi) REQUIRE((std::isfinite(v) && v > 0.0));
    CHECK(mean_of(hi) == doctest::Approx(0.0981).epsilon(0.05));
    const auto far = draws(60.0, TruncationRegion::at_most(-0.05), 1000, 4);
    for (double v : far) REQUIRE((std::isfinite(v) && v <= -0.05));
  }

  TEST_CASE("relationship regions") {
    RelationshipSet set;
    set.epsilon = -0.05;
    set.pstar = {0, 1};
    set.paths.push_back({1, {0, 1}, std::nullopt});
    set.edges.push_back({0, 1, 0.2});
    CHECK(region_for(set, 0).side == TruncationRegion::Side::kAtMost);
    CHECK(region_for(set, 0).bound == -0.05);
    CHECK(region_for(set, 1).side == TruncationRegion::Side::kAbove);
    CHECK(region_for(set, 1).bound == 0.0);
  }

  TEST_CASE("stick breaking") {
    const auto theta = stick_forward({0.5, 0.5});
    CHECK(theta == std::vector<double>{0.5, 0.25, 0.25});
    const auto u = stick_inverse({0.2, 0.3, 0.5});
    CHECK(u[0] == doctest::Approx(0.2));
    CHECK(u[1] == doctest::Approx(0.375));
    CHECK_THROWS_AS(stick_forward({0.0, 0.5}), ParameterError);
    CHECK_THROWS_AS(stick_forward({0.5, 1.0}), ParameterError);

    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
      const auto row = oracle::random_simplex(2 + i % 12, rng);
      const auto back = stick_forward(stick_inverse(row));
      for (std::size_t t = 0; t < row.size(); ++t) CHECK(back[t] == doctest::Approx(row[t]).epsilon(1e-9));
    }
    // Dominant leading component: the remaining mass is still resolved.
    const auto peaked = stick_forward(stick_inverse({1.0 - 3e-9, 1e-9, 1e-9, 1e-9}));
    CHECK(peaked[3] == doctest::Approx(1e-9).epsilon(1e-3));
  }

  TEST_CASE("stick inverse examples") {
    const auto u = stick_inverse({0.5, 0.25, 0.25});
    CHECK(u[0] == doctest::Approx(0.5));
    CHECK(u[1] == doctest::Approx(0.5));
    for (std::size_t T : {2, 4, 7}) {
      const auto v = stick_inverse(std::vector<double>(T, 1.0 / static_cast<double>(T)));
      for (std::size_t t = 0; t + 1 < T; ++t) CHECK(v[t] == doctest::Approx(1.0 / static_cast<double>(T - t)));
    }
    CHECK(jacobian_logdet({0.5, 0.25, 0.25}) == doctest::Approx(std::log(0.5)));
    CHECK(jacobian_logdet({0.3, 0.7}) == 0.0);
  }

  TEST_CASE("jacobian against finite differences") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    for (std::size_t T : {2, 3, 5, 10}) {
      for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> u(T - 1);
        for (double& x : u) x = unif(rng);
        const std::size_t n = T - 1;
        Eigen::MatrixXd J(n, n);
        const double h = 1e-6;
        for (std::size_t j = 0; j < n; ++j) {
          auto up = u, dn = u;
          up[j] += h;
          dn[j] -= h;
          const auto fu = stick_forward(up), fd = stick_forward(dn);
          for (std::size_t i = 0; i < n; ++i) J(i, j) = (fu[i] - fd[i]) / (2 * h);
        }
        const double numeric = std::log(std::abs(J.fullPivLu().determinant()));
        CHECK(jacobian_logdet(stick_forward(u)) == doctest::Approx(numeric).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("MH without relationships samples the Dirichlet conditional") {
    TopicState s;
    s.num_topics = 3;
    s.alpha = 0.5;
    s.n_dt = {{3, 1, 2}};
    s.theta = {{1.0 / 3, 1.0 / 3, 1.0 / 3}};
    const RelationshipSet empty;
    InferenceConfig cfg;
    Rng rng(13);
    std::vector<double> chain;
    for (int i = 0; i < 60000; ++i) {
      const MhStep step = mh_update_theta(0, s, empty, {}, {}, cfg, rng);
      s.theta[0] = step.theta;
      if (i >= 1000 && i % 15 == 0) chain.push_back(step.theta[0]);
    }
    const auto ref = dirichlet_first({3.5, 1.5, 2.5}, 8000, 14);
    CHECK(oracle::ks_two_sample_p(chain, ref) > 0.001);
    CHECK(mean_of(chain) == doctest::Approx(3.5 / 7.5).epsilon(0.03));
  }

  TEST_CASE("library Dirichlet sampler") {
    Rng rng(15);
    std::vector<double> first;
    for (int i = 0; i < 5000; ++i) {
      const auto d = sample_dirichlet({2.0, 1.0, 0.5}, rng);
      CHECK(std::accumulate(d.begin(), d.end(), 0.0) == doctest::Approx(1.0));
      first.push_back(d[0]);
    }
    CHECK(oracle::ks_two_sample_p(first, dirichlet_first({2.0, 1.0, 0.5}, 5000, 16)) > 0.001);
  }

  TEST_CASE("feedback inference pushes toward the constraints") {
    const scenario::Run r = scenario::full(scenario::kWalkthroughSeed);
    const auto& rep = r.inference.report;
    CHECK(rep.sweeps == 500);
    CHECK(rep.acceptance_rate() > 0.01);
    CHECK(rep.acceptance_rate() < 1.0);
    CHECK(rep.sum_path_mu_after < rep.sum_path_mu_before);
    CHECK(rep.after.paths_satisfied >= rep.before.paths_satisfied);
    CHECK(topic_path_cost(r.pstar.path, r.inference.state.theta) <
          topic_path_cost(r.pstar.path, r.before.theta));
    validate_counts(r.inference.state, r.corpus);
    for (const auto& row : r.inference.state.theta) {
      CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    const auto j = report_to_json(rep, r.relationships);
    CHECK(j["path_inequalities"] == r.relationships.paths.size());
  }

  TEST_CASE("path inequalities mostly hold after inference") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const scenario::Run r = scenario::full(seed);
      const auto sum = summarize(r.relationships, r.inference.state.theta);
      CHECK(sum.paths_satisfied == r.inference.report.after.paths_satisfied);
      CHECK(static_cast<double>(sum.paths_satisfied) >= 0.9 * static_cast<double>(r.relationships.paths.size()));
    }
  }

  TEST_CASE("inference is deterministic and reports progress") {
    const scenario::Run r = scenario::fitted(1);
    const Story pstar = initial_constrained_story(r.graph_before, r.s, r.t, r.feedback);
    const auto set = derive_relationships(r.pre.trace, pstar, r.graph_before, -0.05);
    InferenceConfig cfg;
    cfg.sweeps = 40;
    std::size_t calls = 0, last = 0;
    const auto a = run_constrained_inference(r.corpus, r.before, set, cfg, [&](std::size_t k, std::size_t n) {
      ++calls;
      last = k;
      CHECK(n == 40);
    });
    const auto b = run_constrained_inference(r.corpus, r.before, set, cfg);
    CHECK(calls == 40);
    CHECK(last == 40);
    CHECK(a.state.theta == b.state.theta);
    CHECK(a.state.z == b.state.z);
  }
}
