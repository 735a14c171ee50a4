#include "storyweaver/session.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>

#include "storyweaver/analytics.hpp"
#include "storyweaver/errors.hpp"
#include "storyweaver/log.hpp"

namespace storyweaver {
namespace {

constexpr const char* kSnapshotMagic = "STORYWEAVER-SNAPSHOT";
constexpr int kSnapshotVersion = 1;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct StatusGuard {
  std::atomic<SessionStatus>& status;
  ~StatusGuard() { status = SessionStatus::kIdle; }
};

const char* kind_name(Round::Kind k) { return k == Round::Kind::kStory ? "story" : "feedback"; }

nlohmann::json round_to_record(const Round& r) {
  return {{"kind", kind_name(r.kind)},
          {"start", r.start},
          {"end", r.end},
          {"feedback", r.feedback},
          {"story", story_to_json(r.story)},
          {"pstar", story_to_json(r.pstar)},
          {"pstar_cost_before", r.pstar_cost_before},
          {"pstar_cost_after", r.pstar_cost_after},
          {"relationships", r.relationships},
          {"inference", r.inference},
          {"expansions", r.expansions},
          {"open_nodes", r.open_nodes}};
}

Round round_from_record(const nlohmann::json& j) {
  Round r;
  r.kind = j.at("kind") == "story" ? Round::Kind::kStory : Round::Kind::kFeedback;
  r.start = j.at("start").get<std::size_t>();
  r.end = j.at("end").get<std::size_t>();
  r.feedback = j.at("feedback").get<std::vector<std::size_t>>();
  r.story = story_from_json(j.at("story"));
  r.pstar = story_from_json(j.at("pstar"));
  r.pstar_cost_before = j.at("pstar_cost_before").get<double>();
  r.pstar_cost_after = j.at("pstar_cost_after").get<double>();
  r.relationships = j.at("relationships");
  r.inference = j.at("inference");
  r.expansions = j.at("expansions").get<std::size_t>();
  r.open_nodes = j.at("open_nodes").get<std::size_t>();
  return r;
}

}  // namespace

LdaConfig SessionConfig::lda() const {
  LdaConfig c;
  c.num_topics = num_topics;
  c.alpha = alpha;
  c.beta = beta;
  c.iterations = iterations;
  c.seed = lda_seed;
  return c;
}

InferenceConfig SessionConfig::inference(std::size_t round) const {
  InferenceConfig c;
  c.sweeps = inference_sweeps;
  c.proposal_scale = proposal_scale;
  c.seed = inference_seed + round;
  return c;
}

nlohmann::json config_to_json(const SessionConfig& c) {
  return {{"T", c.num_topics},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"iterations", c.iterations},
          {"xi", c.xi},
          {"epsilon", c.epsilon},
          {"gini_fraction", c.gini_fraction},
          {"lda_seed", c.lda_seed},
          {"inference_seed", c.inference_seed},
          {"inference_sweeps", c.inference_sweeps},
          {"proposal_scale", c.proposal_scale},
          {"clusters", c.clusters},
          {"cluster_seed", c.cluster_seed}};
}

SessionConfig config_from_json(const nlohmann::json& j) {
  SessionConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "T") c.num_topics = value.get<std::size_t>();
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "iterations") c.iterations = value.get<std::size_t>();
      else if (key == "xi") c.xi = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "gini_fraction") c.gini_fraction = value.get<double>();
      else if (key == "lda_seed") c.lda_seed = value.get<std::uint64_t>();
      else if (key == "inference_seed") c.inference_seed = value.get<std::uint64_t>();
      else if (key == "inference_sweeps") c.inference_sweeps = value.get<std::size_t>();
      else if (key == "proposal_scale") c.proposal_scale = value.get<double>();
      else if (key == "clusters") c.clusters = value.get<std::size_t>();
      else if (key == "cluster_seed") c.cluster_seed = value.get<std::uint64_t>();
      else throw ParameterError("unknown config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad config value: ") + e.what());
  }
  if (c.epsilon > 0.0) throw ParameterError("epsilon must be <= 0");
  if (!(c.xi > 0.0)) throw ParameterError("xi must be positive");
  return c;
}

void apply_seed_override(SessionConfig& config) {
  const char* env = std::getenv("STORYWEAVER_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long seed = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0') throw ParameterError("STORYWEAVER_SEED must be an integer");
  config.lda_seed = seed;
  config.inference_seed = seed;
  config.cluster_seed = seed;
}

Corpus load_source(const nlohmann::json& source) {
  if (!source.is_object() || !source.contains("kind")) {
    throw ParameterError("source needs a kind");
  }
  const std::string kind = source.at("kind").get<std::string>();
  try {
    if (kind == "toy") {
      return generate_synthetic(toy_spec(source.value("seed", std::uint64_t{1})));
    }
    if (kind == "synthetic") {
      const auto& j = source.at("spec");
      SyntheticSpec spec;
      spec.num_docs = j.value("num_docs", spec.num_docs);
      spec.num_themes = j.value("num_themes", spec.num_themes);
      spec.terms_per_theme = j.value("terms_per_theme", spec.terms_per_theme);
      spec.noise_terms_per_doc = j.value("noise_terms_per_doc", spec.noise_terms_per_doc);
      spec.draws_per_theme = j.value("draws_per_theme", spec.draws_per_theme);
      spec.rng_seed = j.value("seed", spec.rng_seed);
      if (j.contains("mixing")) {
        spec.mixing = j.at("mixing").get<std::vector<std::vector<std::size_t>>>();
      } else {
        spec.mixing = random_mixing(spec.num_docs, spec.num_themes, spec.rng_seed);
      }
      return generate_synthetic(spec);
    }
    if (kind == "path") return ingest(source.at("path").get<std::string>());
    if (kind == "corpus") return corpus_from_json(source.at("corpus"));
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("bad source: ") + e.what());
  }
  throw ParameterError("unknown source kind: " + kind);
}

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::kIdle: return "idle";
    case SessionStatus::kFitting: return "fitting";
    case SessionStatus::kInferring: return "inferring";
  }
  return "idle";
}

std::unique_ptr<Session> Session::create(std::string id, const Corpus& corpus,
                                         const SessionConfig& config) {
  std::unique_ptr<Session> s(new Session());
  s->id_ = std::move(id);
  s->config_ = config;
  s->status_ = SessionStatus::kFitting;
  StatusGuard guard{s->status_};
  s->corpus_ = gini_filter(corpus, config.gini_fraction);
  s->state_ = fit(s->corpus_, config.lda());
  s->initial_phi_ = s->state_.phi;
  s->graph_ = SimilarityGraph::build(s->corpus_, s->state_, config.xi);
  if (config.clusters > 0) {
    s->cluster_of_ = kmeans_clusters(s->state_.theta, std::min(config.clusters, s->corpus_.size()),
                                     config.cluster_seed);
  }
  return s;
}

SimilarityGraph Session::search_graph() const {
  if (config_.clusters == 0) return graph_;
  std::vector<bool> keep(corpus_.size());
  for (std::size_t d = 0; d < keep.size(); ++d) keep[d] = active_clusters_.count(cluster_of_[d]) > 0;
  return graph_.restricted_to(keep);
}

void Session::admit_clusters_of(const std::vector<std::size_t>& docs) {
  if (config_.clusters == 0) return;
  std::unique_lock lock(data_mutex_);
  for (std::size_t d : docs) active_clusters_.insert(cluster_of_[d]);
}

namespace {

// Runs the search on the pruned graph and falls back to the full graph.
template <typename Fn>
auto with_fallback(const SimilarityGraph& pruned, const SimilarityGraph& full, bool pruning, Fn fn) {
  if (!pruning) return fn(full);
  try {
    return fn(pruned);
  } catch (const NoPathError&) {
    warn("no path inside the admitted clusters; searching the full graph");
    return fn(full);
  }
}

}  // namespace

Round Session::request_story(const std::string& start, const std::string& end) {
  std::lock_guard mutation(mutation_mutex_);
  const std::size_t s = corpus_.index_of(start);
  const std::size_t t = corpus_.index_of(end);
  if (s == t) throw ParameterError("start and end must differ");
  admit_clusters_of({s, t});
  SimilarityGraph pruned, full;
  {
    std::shared_lock lock(data_mutex_);
    pruned = search_graph();
    full = graph_;
  }
  SearchResult result;
  try {
    result = with_fallback(pruned, full, config_.clusters > 0,
                           [&](const SimilarityGraph& g) { return astar(g, s, t); });
  } catch (const NoPathError& e) {
    // Report the explored document that came closest to the goal in topic space.
    std::string nearest;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t idx : e.trace().closed) {
      const std::size_t doc = e.trace().nodes[idx].doc;
      const double h = full.heuristic(doc, t);
      if (h < best) {
        best = h;
        nearest = corpus_.document(doc).id;
      }
    }
    std::string msg = "no story connects " + start + " to " + end;
    if (!nearest.empty()) msg += "; nearest reachable document is " + nearest;
    throw NoPathError(msg, e.trace(), s, t);
  }
  Round r;
  r.kind = Round::Kind::kStory;
  r.start = s;
  r.end = t;
  r.story = result.story;
  r.expansions = result.trace.expansions;
  r.open_nodes = result.trace.open.size();
  std::unique_lock lock(data_mutex_);
  history_.push_back(r);
  return r;
}

Round Session::submit_feedback(const std::vector<std::string>& sequence) {
  std::lock_guard mutation(mutation_mutex_);
  std::size_t s, t;
  {
    std::shared_lock lock(data_mutex_);
    if (history_.empty()) throw ParameterError("request a story before giving feedback");
    s = history_.back().start;
    t = history_.back().end;
  }
  if (sequence.empty()) throw ParameterError("feedback sequence is empty");
  std::vector<std::size_t> feedback;
  for (const auto& id : sequence) {
    const std::size_t d = corpus_.index_of(id);
    if (d == s || d == t) throw ParameterError("feedback must not contain the start or end document");
    if (std::find(feedback.begin(), feedback.end(), d) != feedback.end()) {
      throw ParameterError("feedback repeats document " + id);
    }
    feedback.push_back(d);
  }
  admit_clusters_of(feedback);

  SimilarityGraph pruned, full;
  TopicState state;
  std::size_t round_index;
  {
    std::shared_lock lock(data_mutex_);
    pruned = search_graph();
    full = graph_;
    state = state_;
    round_index = history_.size();
  }
  const bool pruning = config_.clusters > 0;
  // Pick the graph once so the trace, P* and the relationships agree.
  const SimilarityGraph* base = &full;
  if (pruning) {
    try {
      astar(pruned, s, t);
      initial_constrained_story(pruned, s, t, feedback);
      base = &pruned;
    } catch (const NoPathError&) {
      warn("feedback legs leave the admitted clusters; using the full graph");
    }
  }
  const SearchResult pre = astar(*base, s, t);
  Story pstar;
  try {
    pstar = initial_constrained_story(*base, s, t, feedback);
  } catch (const NoPathError& e) {
    throw NoPathError("feedback leg " + corpus_.document(e.from()).id + " -> " +
                          corpus_.document(e.to()).id + " is unreachable",
                      e.trace(), e.from(), e.to());
  }
  const RelationshipSet relationships =
      derive_relationships(pre.trace, pstar, *base, config_.epsilon);

  status_ = SessionStatus::kInferring;
  StatusGuard guard{status_};
  const InferenceConfig inference = config_.inference(round_index);
  sweep_ = 0;
  total_ = inference.sweeps;
  const InferenceResult result = run_constrained_inference(
      corpus_, state, relationships, inference,
      [this](std::size_t sweep, std::size_t) { sweep_ = sweep; });

  SimilarityGraph next = full.rebuild_costs(result.state.theta);
  SimilarityGraph next_pruned = next;
  if (pruning) {
    std::shared_lock lock(data_mutex_);
    std::vector<bool> keep(corpus_.size());
    for (std::size_t d = 0; d < keep.size(); ++d) keep[d] = active_clusters_.count(cluster_of_[d]) > 0;
    next_pruned = next.restricted_to(keep);
  }
  const SearchResult story = with_fallback(next_pruned, next, pruning, [&](const SimilarityGraph& g) {
    return constrained_astar(g, s, t, feedback);
  });

  Round r;
  r.kind = Round::Kind::kFeedback;
  r.start = s;
  r.end = t;
  r.feedback = feedback;
  r.story = story.story;
  r.pstar = pstar;
  r.pstar_cost_before = pstar.cost;
  r.pstar_cost_after = topic_path_cost(pstar.path, result.state.theta);
  r.relationships = relationships_to_json(relationships);
  r.inference = report_to_json(result.report, relationships);
  r.expansions = story.trace.expansions;
  r.open_nodes = story.trace.open.size();

  std::unique_lock lock(data_mutex_);
  state_ = result.state;
  graph_ = std::move(next);
  history_.push_back(r);
  return r;
}

std::vector<Story> Session::list_alternatives(std::size_t k) const {
  if (k == 0) throw ParameterError("k must be at least 1");
  std::shared_lock lock(data_mutex_);
  if (history_.empty()) throw ParameterError("request a story before listing alternatives");
  const Round& last = history_.back();
  std::vector<Story> out = yen_k_shortest(search_graph(), last.start, last.end, k);
  if (out.empty() && config_.clusters > 0) out = yen_k_shortest(graph_, last.start, last.end, k);
  return out;
}

nlohmann::json Session::story_json(const Story& story) const {
  nlohmann::json ids = nlohmann::json::array();
  for (std::size_t d : story.path) ids.push_back(corpus_.document(d).id);
  nlohmann::json edges = nlohmann::json::array();
  std::shared_lock lock(data_mutex_);
  for (std::size_t i = 0; i + 1 < story.path.size(); ++i) {
    const std::size_t a = story.path[i];
    const std::size_t b = story.path[i + 1];
    std::vector<std::pair<std::size_t, std::size_t>> shared;  // (weight, term)
    const auto& cb = corpus_.term_counts(b);
    for (const auto& [w, n] : corpus_.term_counts(a)) {
      auto it = cb.find(w);
      if (it != cb.end()) shared.emplace_back(std::min(n, it->second), w);
    }
    std::stable_sort(shared.begin(), shared.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    nlohmann::json terms = nlohmann::json::array();
    for (std::size_t k = 0; k < shared.size() && k < 3; ++k) {
      terms.push_back(corpus_.vocabulary()[shared[k].second]);
    }
    nlohmann::json edge = {{"from", ids[i]}, {"to", ids[i + 1]}, {"shared_terms", terms}};
    if (auto e = graph_.edge_between(a, b)) {
      edge["cost"] = graph_.edges()[*e].cost;
    } else {
      edge["cost"] = nullptr;
    }
    edges.push_back(std::move(edge));
  }
  return {{"path", ids}, {"docs", story.path}, {"cost", story.cost}, {"length", story.length()},
          {"edges", edges}};
}

nlohmann::json Session::round_json(const Round& r) const {
  nlohmann::json j = {{"kind", kind_name(r.kind)},
                      {"start", corpus_.document(r.start).id},
                      {"end", corpus_.document(r.end).id},
                      {"story", story_json(r.story)},
                      {"expansions", r.expansions},
                      {"open_nodes", r.open_nodes}};
  if (r.kind == Round::Kind::kFeedback) {
    nlohmann::json seq = nlohmann::json::array();
    for (std::size_t d : r.feedback) seq.push_back(corpus_.document(d).id);
    nlohmann::json pstar_ids = nlohmann::json::array();
    for (std::size_t d : r.pstar.path) pstar_ids.push_back(corpus_.document(d).id);
    j["sequence"] = seq;
    j["pstar"] = {{"path", pstar_ids},
                  {"cost_before", r.pstar_cost_before},
                  {"cost_after", r.pstar_cost_after}};
    j["inference"] = r.inference;
    j["relationships"] = r.relationships;
  }
  return j;
}

nlohmann::json Session::layout() const {
  std::shared_lock lock(data_mutex_);
  const Layout2D layout = mds_layout(state_.theta);
  std::vector<std::string> ids;
  for (const auto& d : corpus_.documents()) ids.push_back(d.id);
  nlohmann::json overlays = nlohmann::json::array();
  for (std::size_t i = 0; i < history_.size(); ++i) {
    const Round& r = history_[i];
    nlohmann::json path = nlohmann::json::array();
    for (std::size_t d : r.story.path) path.push_back(ids[d]);
    overlays.push_back({{"round", i},
                        {"kind", kind_name(r.kind)},
                        {"style", r.kind == Round::Kind::kStory ? "solid" : "dotted"},
                        {"path", path}});
  }
  return {{"points", layout_to_json(layout, ids)}, {"stress", layout.stress}, {"stories", overlays}};
}

nlohmann::json Session::heatmap() const {
  std::shared_lock lock(data_mutex_);
  const TopicDistanceMatrix m = topic_distance_matrix(initial_phi_, state_.phi);
  return {{"rows", m.entries.size()},
          {"cols", m.entries.size()},
          {"entries", m.entries},
          {"matching", m.matching},
          {"dominance_optimal", m.dominance_optimal},
          {"dominance_identity", m.dominance_identity}};
}

nlohmann::json Session::summary() const {
  nlohmann::json rounds = nlohmann::json::array();
  for (const Round& r : history()) rounds.push_back(round_json(r));
  nlohmann::json j = {{"id", id_},
                      {"documents", corpus_.size()},
                      {"vocabulary", corpus_.vocabulary_size()},
                      {"config", config_to_json(config_)},
                      {"status", to_string(status_.load())},
                      {"rounds", rounds}};
  {
    std::shared_lock lock(data_mutex_);
    j["edges"] = graph_.num_edges();
  }
  return j;
}

Progress Session::progress() const { return {status_.load(), sweep_.load(), total_.load()}; }

TopicState Session::model() const {
  std::shared_lock lock(data_mutex_);
  return state_;
}

SimilarityGraph Session::graph() const {
  std::shared_lock lock(data_mutex_);
  return graph_;
}

std::vector<Round> Session::history() const {
  std::shared_lock lock(data_mutex_);
  return history_;
}

std::string Session::snapshot() const {
  std::shared_lock lock(data_mutex_);
  nlohmann::json history = nlohmann::json::array();
  for (const Round& r : history_) history.push_back(round_to_record(r));
  const nlohmann::json body = {{"version", kSnapshotVersion},
                               {"id", id_},
                               {"config", config_to_json(config_)},
                               {"corpus", corpus_to_json(corpus_)},
                               {"model", state_to_json(state_)},
                               {"initial_phi", initial_phi_},
                               {"graph", graph_to_json(graph_)},
                               {"clusters", cluster_of_},
                               {"active_clusters", active_clusters_},
                               {"history", history}};
  const std::string text = body.dump();
  return std::string(kSnapshotMagic) + " v" + std::to_string(kSnapshotVersion) + " " +
         hex(fnv1a(text)) + "\n" + text;
}

std::unique_ptr<Session> Session::load(const std::string& snapshot) {
  const std::size_t newline = snapshot.find('\n');
  if (newline == std::string::npos) throw IntegrityError("snapshot header missing");
  std::istringstream header(snapshot.substr(0, newline));
  std::string magic, version, checksum;
  header >> magic >> version >> checksum;
  if (magic != kSnapshotMagic) throw IntegrityError("not a session snapshot");
  if (version != "v" + std::to_string(kSnapshotVersion)) {
    throw IntegrityError("unsupported snapshot version " + version);
  }
  const std::string text = snapshot.substr(newline + 1);
  if (hex(fnv1a(text)) != checksum) throw IntegrityError("snapshot checksum mismatch");

  std::unique_ptr<Session> s(new Session());
  try {
    const nlohmann::json body = nlohmann::json::parse(text);
    if (body.at("version").get<int>() != kSnapshotVersion) {
      throw IntegrityError("snapshot body version mismatch");
    }
    s->id_ = body.at("id").get<std::string>();
    s->config_ = config_from_json(body.at("config"));
    s->corpus_ = corpus_from_json(body.at("corpus"));
    s->state_ = state_from_json(body.at("model"), s->corpus_);
    s->initial_phi_ = body.at("initial_phi").get<Matrix>();
    s->graph_ = SimilarityGraph(s->state_.theta, term_sharing_pairs(s->corpus_), s->config_.xi);
    if (graph_to_json(s->graph_) != body.at("graph")) {
      throw IntegrityError("stored graph disagrees with the stored model");
    }
    s->cluster_of_ = body.at("clusters").get<std::vector<std::size_t>>();
    for (std::size_t c : body.at("active_clusters")) s->active_clusters_.insert(c);
    for (const auto& r : body.at("history")) s->history_.push_back(round_from_record(r));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed snapshot: ") + e.what());
  } catch (const ParameterError& e) {
    throw IntegrityError(std::string("invalid snapshot: ") + e.what());
  }
  if (s->config_.clusters > 0 && s->cluster_of_.size() != s->corpus_.size()) {
    throw IntegrityError("cluster labels do not match the corpus");
  }
  for (const Round& r : s->history_) {
    if (r.start >= s->corpus_.size() || r.end >= s->corpus_.size()) {
      throw IntegrityError("history references unknown documents");
    }
  }
  return s;
}

ReplayReport replay(const std::string& snapshot) {
  const std::unique_ptr<Session> recorded = Session::load(snapshot);
  SessionConfig config = recorded->config();
  // The stored corpus is already filtered.
  config.gini_fraction = 0.0;
  std::unique_ptr<Session> fresh = Session::create(recorded->id(), recorded->corpus(), config);
  ReplayReport report;
  const Corpus& corpus = recorded->corpus();
  for (const Round& r : recorded->history()) {
    ++report.rounds;
    Round again;
    if (r.kind == Round::Kind::kStory) {
      again = fresh->request_story(corpus.document(r.start).id, corpus.document(r.end).id);
    } else {
      std::vector<std::string> ids;
      for (std::size_t d : r.feedback) ids.push_back(corpus.document(d).id);
      again = fresh->submit_feedback(ids);
    }
    if (story_to_json(again.story).dump() == story_to_json(r.story).dump()) ++report.identical;
  }
  return report;
}

std::string SessionManager::create(const nlohmann::json& source, const SessionConfig& config) {
  const Corpus corpus = load_source(source);
  std::string id;
  {
    std::lock_guard lock(mutex_);
    std::random_device rd;
    id = "s" + std::to_string(++counter_) + "-" + hex(rd()).substr(8);
  }
  std::shared_ptr<Session> session = Session::create(id, corpus, config);
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, std::move(session));
  return id;
}

std::string SessionManager::adopt(std::unique_ptr<Session> session) {
  std::lock_guard lock(mutex_);
  std::string id = session->id();
  if (sessions_.count(id)) throw ParameterError("session " + id + " already exists");
  sessions_.emplace(id, std::move(session));
  return id;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  return it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

}  // namespace storyweaver
