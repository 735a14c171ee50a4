#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "../support/oracles.hpp"
#include "storyweaver/corpus.hpp"
#include "storyweaver/errors.hpp"
#include "storyweaver/topic_model.hpp"

using namespace storyweaver;

namespace {

Corpus micro_corpus() {
  return Corpus({"w0", "w1"}, {{"a", {0, 1}, ""}, {"b", {1, 1}, ""}});
}

}  // namespace

TEST_SUITE("topic-model") {
  TEST_CASE("collapsed weight matches the formula") {
    const double w = collapsed_topic_weight(0.1, 10, 3, 20, 0.5, 2, 2, 5);
    CHECK(w == doctest::Approx(3.1 / 21.0 * 2.5 / 6.0).epsilon(1e-12));
    CHECK(w == doctest::Approx(0.061508).epsilon(1e-5));
  }

  TEST_CASE("single topic always returns topic 0") {
    const Corpus c = generate_synthetic(toy_spec(1));
    Rng rng(3);
    TopicState s = initialize_state(c, 1, 0.5, 0.01, rng);
    for (int i = 0; i < 50; ++i) CHECK(sample_token_topic(s, c, i % 50, 0, rng) == 0);
  }

  TEST_CASE("symmetric counts give even odds") {
    // After excluding the resampled token, each topic holds one token of the term.
    const Corpus c({"w"}, {{"a", {0, 0, 0}, ""}});
    Rng rng(9);
    TopicState s = initialize_state(c, 2, 0.5, 0.1, rng);
    std::size_t ones = 0;
    const int draws = 40000;
    for (int i = 0; i < draws; ++i) {
      s.z[0] = {0, 0, 1};
      s.n_dt[0] = {2, 1};
      s.n_tw = {{2}, {1}};
      s.n_t = {2, 1};
      ones += sample_token_topic(s, c, 0, 0, rng);
    }
    const double p = static_cast<double>(ones) / draws;
    CHECK(std::abs(p - 0.5) < 4.0 * std::sqrt(0.25 / draws));
  }

  TEST_CASE("default hyperparameters") {
    LdaConfig cfg;
    CHECK(cfg.num_topics == 20);
    CHECK(cfg.resolved_alpha() == doctest::Approx(0.0025));
    CHECK(cfg.beta == 0.01);
  }

  TEST_CASE("estimate_theta examples") {
    TopicState s;
    s.num_topics = 2;
    s.alpha = 0.5;
    s.n_dt = {{3, 1}, {0, 0}};
    auto t = estimate_theta(s, 0);
    CHECK(t[0] == doctest::Approx(0.7));
    CHECK(t[1] == doctest::Approx(0.3));
    auto u = estimate_theta(s, 1);
    CHECK(u[0] == doctest::Approx(0.5));
    s.alpha = 0.0;
    s.n_dt = {{4, 0}, {0, 0}};
    CHECK(estimate_theta(s, 0) == std::vector<double>{1.0, 0.0});
    CHECK(estimate_theta(s, 1) == std::vector<double>{0.5, 0.5});
  }

  TEST_CASE("fit keeps counts consistent and rows normalized") {
    const Corpus c = generate_synthetic(toy_spec(5));
    LdaConfig cfg;
    cfg.num_topics = 9;
    cfg.iterations = 50;
    const TopicState s = fit(c, cfg);
    CHECK_NOTHROW(validate_counts(s, c));
    for (std::size_t d = 0; d < c.size(); ++d) {
      double sum = 0.0;
      std::int64_t tokens = 0;
      for (double v : s.theta[d]) {
        CHECK(v >= 0.0);
        sum += v;
      }
      for (auto n : s.n_dt[d]) tokens += n;
      CHECK(std::abs(sum - 1.0) < 1e-9);
      CHECK(tokens == static_cast<std::int64_t>(c.document(d).tokens.size()));
    }
    const TopicState again = fit(c, cfg);
    CHECK(again.z == s.z);
    CHECK(again.theta == s.theta);
  }

  TEST_CASE("fit rejects bad arguments") {
    const Corpus c = generate_synthetic(toy_spec(5));
    LdaConfig cfg;
    cfg.iterations = 0;
    CHECK_THROWS_AS(fit(c, cfg), ParameterError);
    cfg.iterations = 1;
    cfg.num_topics = 0;
    CHECK_THROWS_AS(fit(c, cfg), ParameterError);
    CHECK_THROWS_AS(fit(Corpus{}, LdaConfig{}), ParameterError);
  }

  TEST_CASE("themes are recovered as topics") {
    const Corpus c = generate_synthetic(toy_spec(1));
    LdaConfig cfg;
    cfg.num_topics = 9;
    cfg.iterations = 2000;
    cfg.seed = 1;
    const TopicState s = fit(c, cfg);
    std::vector<std::set<std::string>> tops;
    for (const auto& row : s.phi) {
      std::vector<std::size_t> idx(row.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::partial_sort(idx.begin(), idx.begin() + 4, idx.end(),
                        [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
      std::set<std::string> t;
      for (int k = 0; k < 4; ++k) t.insert(c.vocabulary()[idx[k]]);
      tops.push_back(t);
    }
    int recovered = 0;
    for (std::size_t th = 0; th < 9; ++th) {
      std::set<std::string> theme(c.vocabulary().begin() + 4 * th, c.vocabulary().begin() + 4 * th + 4);
      recovered += std::find(tops.begin(), tops.end(), theme) != tops.end();
    }
    CHECK(recovered >= 7);
  }

  TEST_CASE("stationary distribution matches enumeration on the micro-corpus") {
    const Corpus c = micro_corpus();
    const std::vector<std::vector<std::size_t>> docs = {{0, 1}, {1, 1}};
    const double alpha = 0.5, beta = 0.5;
    // Exact posterior over all 2^4 assignments.
    std::map<unsigned, double> exact;
    double norm = 0.0;
    for (unsigned code = 0; code < 16; ++code) {
      std::vector<std::vector<std::size_t>> z = {{code & 1u, (code >> 1) & 1u},
                                                 {(code >> 2) & 1u, (code >> 3) & 1u}};
      const double p = std::exp(oracle::collapsed_log_joint(docs, z, 2, 2, alpha, beta));
      exact[code] = p;
      norm += p;
    }
    Rng rng(17);
    TopicState s = initialize_state(c, 2, alpha, beta, rng);
    std::map<unsigned, double> seen;
    const int sweeps = 100000;
    for (int i = 0; i < sweeps; ++i) {
      gibbs_sweep(s, c, rng);
      const unsigned code = static_cast<unsigned>(s.z[0][0] | (s.z[0][1] << 1) | (s.z[1][0] << 2) |
                                                  (s.z[1][1] << 3));
      seen[code] += 1.0 / sweeps;
    }
    double tv = 0.0;
    for (unsigned code = 0; code < 16; ++code) tv += std::abs(seen[code] - exact[code] / norm);
    CHECK(tv / 2.0 < 0.02);
  }

  TEST_CASE("snapshot round trip and corruption") {
    const Corpus c = generate_synthetic(toy_spec(2));
    LdaConfig cfg;
    cfg.num_topics = 4;
    cfg.iterations = 20;
    const TopicState s = fit(c, cfg);
    const nlohmann::json j = state_to_json(s);
    const TopicState back = state_from_json(nlohmann::json::parse(j.dump()), c);
    CHECK(back.z == s.z);
    CHECK(back.theta == s.theta);
    CHECK(back.n_tw == s.n_tw);
    nlohmann::json bad = j;
    bad["z"][0][0] = 99;
    CHECK_THROWS_AS(state_from_json(bad, c), IntegrityError);
    nlohmann::json skew = j;
    skew["theta"][0][0] = 5.0;
    CHECK_THROWS_AS(state_from_json(skew, c), IntegrityError);
  }
}
