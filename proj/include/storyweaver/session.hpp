#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "storyweaver/constraints.hpp"
#include "storyweaver/corpus.hpp"
#include "storyweaver/inference.hpp"
#include "storyweaver/search.hpp"
#include "storyweaver/similarity_graph.hpp"
#include "storyweaver/topic_model.hpp"

namespace storyweaver {

struct SessionConfig {
  std::size_t num_topics = 20;
  double alpha = -1.0;  // negative selects 0.05 / T
  double beta = 0.01;
  std::size_t iterations = 2000;
  double xi = 1.0;
  double epsilon = -0.05;
  double gini_fraction = 0.1;
  std::uint64_t lda_seed = 1;
  std::uint64_t inference_seed = 1;
  std::size_t inference_sweeps = 500;
  double proposal_scale = 0.1;
  // Clustering mode: 0 disables, otherwise k-means on topic rows with this k.
  std::size_t clusters = 0;
  std::uint64_t cluster_seed = 1;

  LdaConfig lda() const;
  InferenceConfig inference(std::size_t round) const;
};

nlohmann::json config_to_json(const SessionConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
SessionConfig config_from_json(const nlohmann::json& j);
// Applies STORYWEAVER_SEED, when set, to every seed.
void apply_seed_override(SessionConfig& config);

// Corpus source: {"kind":"toy","seed":n} | {"kind":"synthetic","spec":{...}} |
// {"kind":"path","path":"..."} | {"kind":"corpus","corpus":{...}}.
Corpus load_source(const nlohmann::json& source);

struct Round {
  enum class Kind { kStory, kFeedback };
  Kind kind = Kind::kStory;
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<std::size_t> feedback;
  Story story;
  // Feedback rounds only.
  Story pstar;
  double pstar_cost_before = 0.0;
  double pstar_cost_after = 0.0;
  nlohmann::json relationships;
  nlohmann::json inference;
  std::size_t expansions = 0;
  std::size_t open_nodes = 0;
};

enum class SessionStatus { kIdle, kFitting, kInferring };
std::string to_string(SessionStatus status);

struct Progress {
  SessionStatus status = SessionStatus::kIdle;
  std::size_t sweep = 0;
  std::size_t total = 0;
};

class Session {
 public:
  // Runs gini filtering, fitting and graph construction.
  static std::unique_ptr<Session> create(std::string id, const Corpus& corpus,
                                         const SessionConfig& config);
  // Restores a snapshot; throws IntegrityError on corruption or version mismatch.
  static std::unique_ptr<Session> load(const std::string& snapshot);

  const std::string& id() const { return id_; }
  const Corpus& corpus() const { return corpus_; }
  const SessionConfig& config() const { return config_; }

  Round request_story(const std::string& start, const std::string& end);
  Round submit_feedback(const std::vector<std::string>& sequence);
  std::vector<Story> list_alternatives(std::size_t k) const;

  nlohmann::json layout() const;
  nlohmann::json heatmap() const;
  nlohmann::json summary() const;
  Progress progress() const;

  TopicState model() const;
  SimilarityGraph graph() const;
  std::vector<Round> history() const;

  std::string snapshot() const;

  nlohmann::json story_json(const Story& story) const;
  nlohmann::json round_json(const Round& round) const;

 private:
  Session() = default;
  SimilarityGraph search_graph() const;  // caller holds data_mutex_
  void admit_clusters_of(const std::vector<std::size_t>& docs);

  std::string id_;
  Corpus corpus_;
  SessionConfig config_;

  mutable std::shared_mutex data_mutex_;  // guards everything below
  std::mutex mutation_mutex_;             // serializes mutating operations
  TopicState state_;
  Matrix initial_phi_;
  SimilarityGraph graph_;
  std::vector<std::size_t> cluster_of_;
  std::set<std::size_t> active_clusters_;
  std::vector<Round> history_;

  std::atomic<SessionStatus> status_{SessionStatus::kIdle};
  std::atomic<std::size_t> sweep_{0};
  std::atomic<std::size_t> total_{0};
};

// Re-runs the recorded inputs of a snapshot from scratch and reports whether
// every story comes out byte-identical.
struct ReplayReport {
  std::size_t rounds = 0;
  std::size_t identical = 0;
  bool ok() const { return rounds == identical; }
};
ReplayReport replay(const std::string& snapshot);

class SessionManager {
 public:
  std::string create(const nlohmann::json& source, const SessionConfig& config);
  std::string adopt(std::unique_ptr<Session> session);
  std::shared_ptr<Session> get(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace storyweaver
