#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "storyweaver/constraints.hpp"
#include "storyweaver/corpus.hpp"
#include "storyweaver/topic_model.hpp"

namespace storyweaver {

// Truncation region of an auxiliary variable: (-inf, bound] for path slack,
// (bound, inf) for edge surplus.
struct TruncationRegion {
  enum class Side { kAtMost, kAbove };
  Side side = Side::kAtMost;
  double bound = 0.0;

  static TruncationRegion at_most(double b) { return {Side::kAtMost, b}; }
  static TruncationRegion above(double a) { return {Side::kAbove, a}; }
  bool contains(double x) const { return side == Side::kAtMost ? x <= bound : x > bound; }
};

double normal_cdf(double x);
double normal_quantile(double p);

// Exact inverse-CDF draw from Normal(mean, 1) restricted to the region.
double sample_truncated_normal(double mean, const TruncationRegion& region, Rng& rng);
// CDF of that truncated distribution.
double truncated_normal_cdf(double x, double mean, const TruncationRegion& region);

TruncationRegion region_for(const RelationshipSet& set, std::size_t relationship);
double sample_lambda(const RelationshipSet& set, std::size_t relationship, const Matrix& theta,
                     Rng& rng);

// Stick-breaking map from T-1 fractions in (0,1) to a T-simplex and back.
std::vector<double> stick_forward(const std::vector<double>& u);
std::vector<double> stick_inverse(const std::vector<double>& theta);
// log |d theta_{1:T-1} / d u| of the forward map, written in terms of theta.
double jacobian_logdet(const std::vector<double>& theta);

enum class TopicCoupling {
  kThetaConditioned,  // z | theta, phi counts: weight (beta+n_wj)/(M beta+n_j) * theta_dj
  kCollapsed,         // vanilla collapsed step, theta ignored
};

enum class ThetaReadout {
  kPosteriorMean,  // average of post-burn-in draws
  kFinalDraw,
};

struct InferenceConfig {
  std::size_t sweeps = 300;
  double burn_in_fraction = 0.5;
  double proposal_scale = 0.1;
  std::uint64_t seed = 1;
  TopicCoupling coupling = TopicCoupling::kThetaConditioned;
  ThetaReadout readout = ThetaReadout::kPosteriorMean;
  // Run MH on every document, relationships or not.
  bool force_mh = false;
  std::size_t acceptance_window = 20;
  double min_acceptance = 0.01;
};

struct InferenceReport {
  std::size_t sweeps = 0;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  SatisfactionSummary before;
  SatisfactionSummary after;
  double sum_path_mu_before = 0.0;
  double sum_path_mu_after = 0.0;

  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

struct MhStep {
  std::vector<double> theta;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
};

// Metropolis-within-Gibbs pass over the stick fractions of one document's
// topic row. Each fraction gets a truncated-normal proposal centered at its
// current value; the target is Dirichlet(n_dt + alpha) times the auxiliary
// likelihoods of the relationships touching the document.
MhStep mh_update_theta(std::size_t doc, const TopicState& state, const RelationshipSet& set,
                       const std::vector<std::size_t>& touching, const std::vector<double>& lambdas,
                       const InferenceConfig& config, Rng& rng);

std::vector<double> sample_dirichlet(const std::vector<double>& concentration, Rng& rng);

struct InferenceResult {
  TopicState state;
  InferenceReport report;
};

using ProgressFn = std::function<void(std::size_t sweep, std::size_t total)>;

InferenceResult run_constrained_inference(const Corpus& corpus, const TopicState& state,
                                          const RelationshipSet& set,
                                          const InferenceConfig& config,
                                          const ProgressFn& progress = {});

nlohmann::json report_to_json(const InferenceReport& report, const RelationshipSet& set);

}  // namespace storyweaver
