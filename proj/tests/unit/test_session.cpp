#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "storyweaver/errors.hpp"
#include "storyweaver/session.hpp"

using namespace storyweaver;

namespace {

SessionConfig walkthrough_config() {
  SessionConfig c;
  c.num_topics = 9;
  c.xi = 2.5;
  c.gini_fraction = 0.0;
  c.lda_seed = 3;
  c.inference_seed = 2;  // the first feedback round uses inference_seed + 1
  return c;
}

std::unique_ptr<Session> walkthrough() {
  return Session::create("t", load_source({{"kind", "toy"}, {"seed", 3}}), walkthrough_config());
}

std::vector<std::string> ids(const Session& s, const Story& story) {
  std::vector<std::string> out;
  for (std::size_t d : story.path) out.push_back(s.corpus().document(d).id);
  return out;
}

}  // namespace

TEST_SUITE("session-service") {
  TEST_CASE("config JSON") {
    SessionConfig c = walkthrough_config();
    const auto j = config_to_json(c);
    CHECK(j["T"] == 9);
    const SessionConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(config_from_json(nlohmann::json::object()).num_topics == 20);
    CHECK_THROWS_AS(config_from_json({{"topics", 3}}), ParameterError);
    CHECK_THROWS_AS(config_from_json({{"epsilon", 0.1}}), ParameterError);
    CHECK_THROWS_AS(config_from_json({{"xi", 0.0}}), ParameterError);
    CHECK_THROWS_AS(config_from_json({{"T", "nine"}}), ParameterError);
    CHECK(c.inference(2).seed == 4);
  }

  TEST_CASE("seed override") {
    SessionConfig c;
    setenv("STORYWEAVER_SEED", "77", 1);
    apply_seed_override(c);
    unsetenv("STORYWEAVER_SEED");
    CHECK(c.lda_seed == 77);
    CHECK(c.inference_seed == 77);
    CHECK(c.cluster_seed == 77);
    setenv("STORYWEAVER_SEED", "x1", 1);
    CHECK_THROWS_AS(apply_seed_override(c), ParameterError);
    unsetenv("STORYWEAVER_SEED");
  }

  TEST_CASE("sources") {
    CHECK(load_source({{"kind", "toy"}, {"seed", 1}}).size() > 40);
    const Corpus syn = load_source({{"kind", "synthetic"}, {"spec", {{"num_docs", 30}, {"seed", 2}}}});
    CHECK(syn.size() == 30);
    CHECK(load_source({{"kind", "corpus"}, {"corpus", corpus_to_json(syn)}}) == syn);
    CHECK_THROWS_AS(load_source({{"kind", "mystery"}}), ParameterError);
    CHECK_THROWS_AS(load_source(nlohmann::json::array()), ParameterError);
  }

  TEST_CASE("story and feedback rounds") {
    auto s = walkthrough();
    const Round first = s->request_story("d43", "d23");
    CHECK(ids(*s, first.story) == std::vector<std::string>{"d43", "d27", "d23"});
    CHECK(first.kind == Round::Kind::kStory);
    const auto alternatives = s->list_alternatives(3);
    REQUIRE(alternatives.size() == 3);
    INFO(alternatives[0].cost, " vs ", first.story.cost);
    CHECK(alternatives[0].path == first.story.path);
    CHECK(alternatives[0] == first.story);

    const Round fb = s->submit_feedback({"d4", "d22"});
    CHECK(fb.kind == Round::Kind::kFeedback);
    CHECK(contains_in_order(fb.story.path, fb.feedback));
    CHECK(fb.pstar_cost_after < fb.pstar_cost_before);
    CHECK(s->history().size() == 2);
    CHECK(s->progress().status == SessionStatus::kIdle);

    const auto j = s->round_json(fb);
    CHECK(j["sequence"] == nlohmann::json{"d4", "d22"});
    CHECK(j["story"]["path"].front() == "d43");
    for (const auto& e : j["story"]["edges"]) CHECK(e["shared_terms"].size() <= 3);

    const auto layout = s->layout();
    CHECK(layout["points"].size() == s->corpus().size());
    REQUIRE(layout["stories"].size() == 2);
    CHECK(layout["stories"][0]["style"] == "solid");
    CHECK(layout["stories"][1]["style"] == "dotted");
    const auto heat = s->heatmap();
    CHECK(heat["rows"] == 9);
    CHECK(heat["matching"].size() == 9);
    CHECK(s->summary()["rounds"].size() == 2);
  }

  TEST_CASE("request errors") {
    auto s = walkthrough();
    CHECK_THROWS_AS(s->submit_feedback({"d4"}), ParameterError);
    CHECK_THROWS_AS(s->list_alternatives(2), ParameterError);
    CHECK_THROWS_AS(s->request_story("d1", "d1"), ParameterError);
    CHECK_THROWS_AS(s->request_story("d1", "nope"), NotFoundError);
    s->request_story("d43", "d23");
    CHECK_THROWS_AS(s->submit_feedback({}), ParameterError);
    CHECK_THROWS_AS(s->submit_feedback({"d43"}), ParameterError);
    CHECK_THROWS_AS(s->submit_feedback({"d4", "d4"}), ParameterError);
    CHECK_THROWS_AS(s->submit_feedback({"zzz"}), NotFoundError);
    CHECK_THROWS_AS(s->list_alternatives(0), ParameterError);
    CHECK(s->history().size() == 1);
  }

  TEST_CASE("unreachable story names the nearest document") {
    // Two documents that share nothing with each other or the rest.
    const Corpus c({"a", "b", "c", "d"}, {{"x1", {0, 1}, ""}, {"x2", {0, 1}, ""}, {"y", {2}, ""}, {"z", {3}, ""}});
    SessionConfig cfg;
    cfg.num_topics = 2;
    cfg.iterations = 20;
    cfg.gini_fraction = 0.0;
    cfg.xi = 2.5;
    auto s = Session::create("u", c, cfg);
    try {
      s->request_story("x1", "y");
      FAIL("expected NoPathError");
    } catch (const NoPathError& e) {
      CHECK(std::string(e.what()).find("nearest reachable document is x") != std::string::npos);
    }
  }

  TEST_CASE("snapshots") {
    auto s = walkthrough();
    s->request_story("d43", "d23");
    s->submit_feedback({"d4", "d22"});
    const std::string snap = s->snapshot();
    auto loaded = Session::load(snap);
    CHECK(loaded->snapshot() == snap);
    CHECK(loaded->graph() == s->graph());
    CHECK(loaded->list_alternatives(4) == s->list_alternatives(4));

    std::string corrupt = snap;
    corrupt[corrupt.size() / 2] = corrupt[corrupt.size() / 2] == '1' ? '2' : '1';
    CHECK_THROWS_AS(Session::load(corrupt), IntegrityError);
    std::string version = snap;
    version.replace(version.find(" v1 "), 4, " v9 ");
    CHECK_THROWS_AS(Session::load(version), IntegrityError);
    CHECK_THROWS_AS(Session::load("garbage"), IntegrityError);

    const ReplayReport rep = replay(snap);
    CHECK(rep.rounds == 2);
    CHECK(rep.ok());
  }

  TEST_CASE("clustering mode") {
    SessionConfig cfg = walkthrough_config();
    cfg.clusters = 4;
    auto s = Session::create("k", load_source({{"kind", "toy"}, {"seed", 3}}), cfg);
    const Round r = s->request_story("d43", "d23");
    CHECK(r.story.path.front() == s->corpus().index_of("d43"));
    const Round fb = s->submit_feedback({"d4", "d22"});
    CHECK(contains_in_order(fb.story.path, fb.feedback));
    CHECK(Session::load(s->snapshot())->snapshot() == s->snapshot());
  }

  TEST_CASE("reads proceed during inference") {
    SessionConfig cfg = walkthrough_config();
    cfg.inference_sweeps = 3000;
    auto s = Session::create("c", load_source({{"kind", "toy"}, {"seed", 3}}), cfg);
    s->request_story("d43", "d23");
    std::thread worker([&] { s->submit_feedback({"d4", "d22"}); });
    bool saw_inferring = false;
    std::size_t reads = 0;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    while (std::chrono::steady_clock::now() < deadline) {
      const Progress p = s->progress();
      if (p.status == SessionStatus::kInferring) {
        saw_inferring = true;
        CHECK(p.total == 3000);
        CHECK(s->summary()["status"] == "inferring");
        CHECK(s->history().size() == 1);
        ++reads;
      }
      if (s->history().size() == 2) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    worker.join();
    CHECK(saw_inferring);
    CHECK(reads > 0);
    CHECK(s->history().size() == 2);
  }

  TEST_CASE("session manager") {
    SessionManager m;
    SessionConfig cfg;
    cfg.num_topics = 4;
    cfg.iterations = 20;
    const std::string a = m.create({{"kind", "toy"}, {"seed", 1}}, cfg);
    const std::string b = m.create({{"kind", "toy"}, {"seed", 1}}, cfg);
    CHECK(a != b);
    CHECK(m.ids().size() == 2);
    CHECK(m.get(a)->id() == a);
    CHECK_THROWS_AS(m.get("nope"), NotFoundError);
    CHECK_THROWS_AS(m.adopt(Session::load(m.get(a)->snapshot())), ParameterError);
  }
}
