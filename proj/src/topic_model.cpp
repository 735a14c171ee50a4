#include "storyweaver/topic_model.hpp"

#include <cmath>
#include <numeric>

#include "storyweaver/errors.hpp"

namespace storyweaver {

std::size_t sample_discrete(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> unif(0.0, total);
  double target = unif(rng);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    target -= weights[k];
    if (target < 0.0) return k;
  }
  // Rounding can leave target at ~0; fall back to the last positive weight.
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return 0;
}

TopicState initialize_state(const Corpus& corpus, std::size_t num_topics, double alpha, double beta,
                            Rng& rng) {
  if (num_topics == 0) throw ParameterError("number of topics must be at least 1");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ParameterError("alpha and beta must be positive");
  if (corpus.size() == 0) throw ParameterError("cannot fit an empty corpus");
  TopicState s;
  s.num_topics = num_topics;
  s.vocabulary_size = corpus.vocabulary_size();
  s.alpha = alpha;
  s.beta = beta;
  s.z.resize(corpus.size());
  s.n_dt.assign(corpus.size(), std::vector<std::int64_t>(num_topics, 0));
  s.n_tw.assign(num_topics, std::vector<std::int64_t>(s.vocabulary_size, 0));
  s.n_t.assign(num_topics, 0);
  std::uniform_int_distribution<std::size_t> pick(0, num_topics - 1);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& tokens = corpus.document(d).tokens;
    s.z[d].resize(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t k = pick(rng);
      s.z[d][i] = k;
      ++s.n_dt[d][k];
      ++s.n_tw[k][tokens[i]];
      ++s.n_t[k];
    }
  }
  refresh_estimates(s);
  return s;
}

std::size_t sample_token_topic(TopicState& s, const Corpus& corpus, std::size_t doc,
                               std::size_t position, Rng& rng) {
  const std::size_t w = corpus.document(doc).tokens[position];
  const std::size_t old = s.z[doc][position];
  --s.n_dt[doc][old];
  --s.n_tw[old][w];
  --s.n_t[old];

  const double n_doc = static_cast<double>(s.z[doc].size() - 1);
  thread_local std::vector<double> weights;
  weights.resize(s.num_topics);
  for (std::size_t k = 0; k < s.num_topics; ++k) {
    weights[k] = collapsed_topic_weight(s.beta, s.vocabulary_size, static_cast<double>(s.n_tw[k][w]),
                                        static_cast<double>(s.n_t[k]), s.alpha, s.num_topics,
                                        static_cast<double>(s.n_dt[doc][k]), n_doc);
  }
  const std::size_t k = s.num_topics == 1 ? 0 : sample_discrete(weights, rng);
  s.z[doc][position] = k;
  ++s.n_dt[doc][k];
  ++s.n_tw[k][w];
  ++s.n_t[k];
  return k;
}

void gibbs_sweep(TopicState& state, const Corpus& corpus, Rng& rng) {
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    for (std::size_t i = 0; i < state.z[d].size(); ++i) sample_token_topic(state, corpus, d, i, rng);
  }
}

TopicState fit(const Corpus& corpus, const LdaConfig& config) {
  if (config.iterations < 1) throw ParameterError("iterations must be at least 1");
  Rng rng(config.seed);
  TopicState s =
      initialize_state(corpus, config.num_topics, config.resolved_alpha(), config.beta, rng);
  for (std::size_t it = 0; it < config.iterations; ++it) gibbs_sweep(s, corpus, rng);
  refresh_estimates(s);
  return s;
}

std::vector<double> estimate_theta(const TopicState& s, std::size_t doc) {
  std::vector<double> theta(s.num_topics);
  const auto& counts = s.n_dt.at(doc);
  double total = 0.0;
  for (std::size_t k = 0; k < s.num_topics; ++k) {
    theta[k] = static_cast<double>(counts[k]) + s.alpha;
    total += theta[k];
  }
  if (total <= 0.0) return std::vector<double>(s.num_topics, 1.0 / static_cast<double>(s.num_topics));
  for (double& v : theta) v /= total;
  return theta;
}

void refresh_phi(TopicState& s) {
  s.phi.assign(s.num_topics, std::vector<double>(s.vocabulary_size, 0.0));
  const double mb = static_cast<double>(s.vocabulary_size) * s.beta;
  for (std::size_t k = 0; k < s.num_topics; ++k) {
    const double denom = static_cast<double>(s.n_t[k]) + mb;
    for (std::size_t w = 0; w < s.vocabulary_size; ++w) {
      s.phi[k][w] = (static_cast<double>(s.n_tw[k][w]) + s.beta) / denom;
    }
  }
}

void refresh_estimates(TopicState& s) {
  s.theta.resize(s.num_documents());
  for (std::size_t d = 0; d < s.num_documents(); ++d) s.theta[d] = estimate_theta(s, d);
  refresh_phi(s);
}

void validate_counts(const TopicState& s, const Corpus& corpus) {
  if (s.z.size() != corpus.size()) throw IntegrityError("topic state does not match corpus size");
  std::vector<std::vector<std::int64_t>> n_dt(corpus.size(), std::vector<std::int64_t>(s.num_topics));
  std::vector<std::vector<std::int64_t>> n_tw(s.num_topics,
                                              std::vector<std::int64_t>(s.vocabulary_size));
  std::vector<std::int64_t> n_t(s.num_topics);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& tokens = corpus.document(d).tokens;
    if (s.z[d].size() != tokens.size()) {
      throw IntegrityError("assignment length mismatch for document " + corpus.document(d).id);
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t k = s.z[d][i];
      if (k >= s.num_topics) throw IntegrityError("topic assignment out of range");
      ++n_dt[d][k];
      ++n_tw[k][tokens[i]];
      ++n_t[k];
    }
  }
  if (n_dt != s.n_dt || n_tw != s.n_tw || n_t != s.n_t) {
    throw IntegrityError("count tables disagree with topic assignments");
  }
}

nlohmann::json state_to_json(const TopicState& s) {
  return {{"T", s.num_topics}, {"alpha", s.alpha}, {"beta", s.beta},
          {"z", s.z},          {"theta", s.theta}, {"phi", s.phi}};
}

TopicState state_from_json(const nlohmann::json& j, const Corpus& corpus) {
  TopicState s;
  try {
    s.num_topics = j.at("T").get<std::size_t>();
    s.alpha = j.at("alpha").get<double>();
    s.beta = j.at("beta").get<double>();
    s.z = j.at("z").get<std::vector<std::vector<std::size_t>>>();
    s.theta = j.at("theta").get<Matrix>();
    s.phi = j.at("phi").get<Matrix>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed model snapshot: ") + e.what());
  }
  if (s.num_topics == 0) throw IntegrityError("model snapshot has zero topics");
  s.vocabulary_size = corpus.vocabulary_size();
  if (s.z.size() != corpus.size()) throw IntegrityError("model snapshot does not match corpus");
  s.n_dt.assign(corpus.size(), std::vector<std::int64_t>(s.num_topics, 0));
  s.n_tw.assign(s.num_topics, std::vector<std::int64_t>(s.vocabulary_size, 0));
  s.n_t.assign(s.num_topics, 0);
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& tokens = corpus.document(d).tokens;
    if (s.z[d].size() != tokens.size()) throw IntegrityError("assignment length mismatch");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t k = s.z[d][i];
      if (k >= s.num_topics) throw IntegrityError("topic assignment out of range");
      ++s.n_dt[d][k];
      ++s.n_tw[k][tokens[i]];
      ++s.n_t[k];
    }
  }
  validate_counts(s, corpus);
  if (s.theta.size() != corpus.size()) throw IntegrityError("theta rows do not match corpus");
  for (const auto& row : s.theta) {
    if (row.size() != s.num_topics) throw IntegrityError("theta row has wrong length");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw IntegrityError("theta row has a negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw IntegrityError("theta row is not normalized");
  }
  if (s.phi.size() != s.num_topics) throw IntegrityError("phi rows do not match T");
  for (const auto& row : s.phi) {
    if (row.size() != s.vocabulary_size) throw IntegrityError("phi row has wrong length");
  }
  return s;
}

}  // namespace storyweaver
