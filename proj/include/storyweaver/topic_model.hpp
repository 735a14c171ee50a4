#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "storyweaver/corpus.hpp"

namespace storyweaver {

using Rng = std::mt19937_64;
using Matrix = std::vector<std::vector<double>>;

// Collapsed-Gibbs state of an LDA model over one corpus.
struct TopicState {
  std::size_t num_topics = 0;
  std::size_t vocabulary_size = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::vector<std::size_t>> z;     // per document, per token position
  std::vector<std::vector<std::int64_t>> n_dt;  // document x topic
  std::vector<std::vector<std::int64_t>> n_tw;  // topic x term
  std::vector<std::int64_t> n_t;                // topic totals
  Matrix theta;                                 // document x topic, rows on the simplex
  Matrix phi;                                   // topic x term, rows on the simplex

  std::size_t num_documents() const { return z.size(); }
};

struct LdaConfig {
  std::size_t num_topics = 20;
  double alpha = -1.0;  // negative selects 0.05 / T
  double beta = 0.01;
  std::size_t iterations = 2000;
  std::uint64_t seed = 1;

  double resolved_alpha() const {
    return alpha < 0.0 ? 0.05 / static_cast<double>(num_topics) : alpha;
  }
};

// Unnormalized full conditional of one token's topic, counts excluding the token.
inline double collapsed_topic_weight(double beta, std::size_t vocabulary_size, double n_term_topic,
                                     double n_topic, double alpha, std::size_t num_topics,
                                     double n_doc_topic, double n_doc) {
  return (beta + n_term_topic) / (static_cast<double>(vocabulary_size) * beta + n_topic) *
         (alpha + n_doc_topic) / (static_cast<double>(num_topics) * alpha + n_doc);
}

// Draws an index with probability proportional to weights (which need not sum to 1).
std::size_t sample_discrete(const std::vector<double>& weights, Rng& rng);

// Random assignment of every token, with matching count tables.
TopicState initialize_state(const Corpus& corpus, std::size_t num_topics, double alpha, double beta,
                            Rng& rng);

// Resamples the topic of one token from its collapsed conditional and updates
// the count tables. Returns the new topic.
std::size_t sample_token_topic(TopicState& state, const Corpus& corpus, std::size_t doc,
                               std::size_t position, Rng& rng);

// One full collapsed-Gibbs pass over every token in corpus order.
void gibbs_sweep(TopicState& state, const Corpus& corpus, Rng& rng);

TopicState fit(const Corpus& corpus, const LdaConfig& config);

// Posterior mean of Dirichlet(n_dt[doc] + alpha).
std::vector<double> estimate_theta(const TopicState& state, std::size_t doc);

// Recomputes theta (posterior means) and phi from the count tables.
void refresh_estimates(TopicState& state);
void refresh_phi(TopicState& state);

// Throws IntegrityError unless the count tables equal a recount of z.
void validate_counts(const TopicState& state, const Corpus& corpus);

nlohmann::json state_to_json(const TopicState& state);
// Rebuilds counts from z and revalidates them against the stored tables if present.
TopicState state_from_json(const nlohmann::json& j, const Corpus& corpus);

}  // namespace storyweaver
