#include "storyweaver/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "storyweaver/errors.hpp"
#include "storyweaver/log.hpp"

namespace storyweaver {
namespace {

constexpr double kClamp = 1e-12;

double uniform_open(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = unif(rng);
  while (u <= 0.0) u = unif(rng);
  return u;
}

// Mass of N(center, scale) inside (0, 1).
double unit_interval_mass(double center, double scale) {
  return normal_cdf((1.0 - center) / scale) - normal_cdf(-center / scale);
}

double propose_fraction(double center, double scale, Rng& rng) {
  const double lo = normal_cdf(-center / scale);
  const double hi = normal_cdf((1.0 - center) / scale);
  const double p = lo + uniform_open(rng) * (hi - lo);
  return center + scale * normal_quantile(std::clamp(p, 1e-300, 1.0 - 1e-16));
}

struct StickLogs {
  std::vector<double> log_theta;
  double log_jacobian = 0.0;
};

StickLogs stick_logs(const std::vector<double>& u) {
  StickLogs out;
  out.log_theta.resize(u.size() + 1);
  double log_rest = 0.0;
  for (std::size_t t = 0; t < u.size(); ++t) {
    if (t >= 1) out.log_jacobian += log_rest;
    out.log_theta[t] = std::log(u[t]) + log_rest;
    log_rest += std::log1p(-u[t]);
  }
  out.log_theta[u.size()] = log_rest;
  return out;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("normal quantile needs p in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double sample_truncated_normal(double mean, const TruncationRegion& region, Rng& rng) {
  // Both sides are written as a lower tail: (-inf, b] directly, (a, inf) mirrored.
  const bool at_most = region.side == TruncationRegion::Side::kAtMost;
  const double z = at_most ? region.bound - mean : mean - region.bound;
  const double mass = normal_cdf(z);
  double offset;
  if (mass < 1e-300) {
    // Far tail: exponential approximation beyond the boundary.
    std::exponential_distribution<double> expo(-z);
    offset = z - expo(rng);
  } else {
    const double p = uniform_open(rng) * mass;
    offset = std::min(normal_quantile(p), z);
  }
  if (at_most) return mean + offset;
  double x = mean - offset;
  if (x <= region.bound) x = std::nextafter(region.bound, std::numeric_limits<double>::infinity());
  return x;
}

double truncated_normal_cdf(double x, double mean, const TruncationRegion& region) {
  if (region.side == TruncationRegion::Side::kAtMost) {
    if (x >= region.bound) return 1.0;
    return normal_cdf(x - mean) / normal_cdf(region.bound - mean);
  }
  if (x <= region.bound) return 0.0;
  const double below = normal_cdf(region.bound - mean);
  return (normal_cdf(x - mean) - below) / (1.0 - below);
}

TruncationRegion region_for(const RelationshipSet& set, std::size_t r) {
  return set.is_path(r) ? TruncationRegion::at_most(set.epsilon) : TruncationRegion::above(0.0);
}

double sample_lambda(const RelationshipSet& set, std::size_t r, const Matrix& theta, Rng& rng) {
  return sample_truncated_normal(mu(set, r, theta), region_for(set, r), rng);
}

std::vector<double> stick_forward(const std::vector<double>& u) {
  std::vector<double> theta(u.size() + 1);
  double rest = 1.0;
  for (std::size_t t = 0; t < u.size(); ++t) {
    if (!(u[t] > 0.0 && u[t] < 1.0)) throw ParameterError("stick fractions must lie in (0,1)");
    theta[t] = u[t] * rest;
    rest *= 1.0 - u[t];
  }
  theta.back() = rest;
  return theta;
}

std::vector<double> stick_inverse(const std::vector<double>& theta) {
  if (theta.size() < 2) throw ParameterError("stick_inverse needs at least two components");
  std::vector<double> clamped(theta.size());
  for (std::size_t t = 0; t < theta.size(); ++t) clamped[t] = std::max(theta[t], kClamp);
  // Suffix sums keep the remaining mass accurate when the leading components dominate.
  std::vector<double> suffix(theta.size() + 1, 0.0);
  for (std::size_t t = theta.size(); t-- > 0;) suffix[t] = suffix[t + 1] + clamped[t];
  std::vector<double> u(theta.size() - 1);
  for (std::size_t t = 0; t + 1 < theta.size(); ++t) {
    u[t] = std::clamp(clamped[t] / suffix[t], kClamp, 1.0 - kClamp);
  }
  return u;
}

double jacobian_logdet(const std::vector<double>& theta) {
  if (theta.size() < 2) throw ParameterError("jacobian_logdet needs at least two components");
  double total = 0.0;
  for (double v : theta) total += v;
  double rest = total;
  double log_det = 0.0;
  for (std::size_t t = 0; t + 2 < theta.size(); ++t) {
    rest -= theta[t];
    log_det += std::log(rest / total);
  }
  return log_det;
}

std::vector<double> sample_dirichlet(const std::vector<double>& concentration, Rng& rng) {
  std::vector<double> draw(concentration.size());
  double total = 0.0;
  for (std::size_t t = 0; t < concentration.size(); ++t) {
    std::gamma_distribution<double> gamma(concentration[t], 1.0);
    draw[t] = gamma(rng);
    total += draw[t];
  }
  if (!(total > 0.0)) {
    // Every gamma underflowed; fall back to the mean.
    total = 0.0;
    for (std::size_t t = 0; t < draw.size(); ++t) total += draw[t] = concentration[t];
  }
  for (double& v : draw) v /= total;
  return draw;
}

MhStep mh_update_theta(std::size_t doc, const TopicState& state, const RelationshipSet& set,
                       const std::vector<std::size_t>& touching, const std::vector<double>& lambdas,
                       const InferenceConfig& config, Rng& rng) {
  const std::size_t T = state.num_topics;
  MhStep step;
  if (T == 1) {
    step.theta = {1.0};
    return step;
  }
  Matrix theta = state.theta;
  std::vector<double> u = stick_inverse(theta[doc]);
  theta[doc] = stick_forward(u);

  auto log_target = [&](const std::vector<double>& fractions) {
    const StickLogs logs = stick_logs(fractions);
    double value = logs.log_jacobian;
    for (std::size_t t = 0; t < T; ++t) {
      value += (static_cast<double>(state.n_dt[doc][t]) + state.alpha - 1.0) * logs.log_theta[t];
    }
    for (std::size_t r : touching) {
      const double gap = lambdas[r] - mu(set, r, theta);
      value -= 0.5 * gap * gap;
    }
    return value;
  };

  double current = log_target(u);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const double proposed_fraction = propose_fraction(u[t], config.proposal_scale, rng);
    ++step.proposals;
    if (!(proposed_fraction > 0.0 && proposed_fraction < 1.0)) continue;
    std::vector<double> proposal = u;
    proposal[t] = proposed_fraction;
    const std::vector<double> saved = theta[doc];
    theta[doc] = stick_forward(proposal);
    const double candidate = log_target(proposal);
    // The Gaussian kernels cancel; only the truncation normalizers remain.
    const double log_ratio = candidate - current +
                             std::log(unit_interval_mass(u[t], config.proposal_scale)) -
                             std::log(unit_interval_mass(proposed_fraction, config.proposal_scale));
    if (std::isnan(log_ratio)) {
      warn("non-finite MH ratio for document " + std::to_string(doc));
      theta[doc] = saved;
      continue;
    }
    if (log_ratio >= 0.0 || std::log(uniform_open(rng)) < log_ratio) {
      u = std::move(proposal);
      current = candidate;
      ++step.accepted;
    } else {
      theta[doc] = saved;
    }
  }
  step.theta = std::move(theta[doc]);
  return step;
}

namespace {

void resample_topics_given_theta(TopicState& s, const Corpus& corpus, Rng& rng) {
  std::vector<double> weights(s.num_topics);
  const double mb = static_cast<double>(s.vocabulary_size) * s.beta;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& tokens = corpus.document(d).tokens;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::size_t w = tokens[i];
      const std::size_t old = s.z[d][i];
      --s.n_dt[d][old];
      --s.n_tw[old][w];
      --s.n_t[old];
      for (std::size_t k = 0; k < s.num_topics; ++k) {
        weights[k] = (s.beta + static_cast<double>(s.n_tw[k][w])) /
                     (mb + static_cast<double>(s.n_t[k])) * s.theta[d][k];
      }
      const std::size_t k = s.num_topics == 1 ? 0 : sample_discrete(weights, rng);
      s.z[d][i] = k;
      ++s.n_dt[d][k];
      ++s.n_tw[k][w];
      ++s.n_t[k];
    }
  }
}

double sum_path_mu(const RelationshipSet& set, const Matrix& theta) {
  double total = 0.0;
  for (std::size_t r = 0; r < set.paths.size(); ++r) total += mu(set, r, theta);
  return total;
}

}  // namespace

InferenceResult run_constrained_inference(const Corpus& corpus, const TopicState& state,
                                          const RelationshipSet& set,
                                          const InferenceConfig& config,
                                          const ProgressFn& progress) {
  if (config.sweeps < 1) throw ParameterError("sweeps must be at least 1");
  if (!(config.proposal_scale > 0.0)) throw ParameterError("proposal scale must be positive");
  if (state.num_documents() != corpus.size()) {
    throw ParameterError("topic state and corpus disagree on document count");
  }
  InferenceResult result{state, {}};
  TopicState& s = result.state;
  InferenceReport& report = result.report;
  const std::size_t N = s.num_documents();
  const std::size_t T = s.num_topics;
  Rng rng(config.seed);

  const auto touching = set.touching(N);
  report.before = summarize(set, s.theta);
  report.sum_path_mu_before = sum_path_mu(set, s.theta);

  std::vector<double> lambdas(set.size(), 0.0);
  Matrix mean(N, std::vector<double>(T, 0.0));
  std::size_t kept = 0;
  const auto burn_in = static_cast<std::size_t>(
      std::floor(static_cast<double>(config.sweeps) * std::clamp(config.burn_in_fraction, 0.0, 1.0)));
  std::size_t window_proposals = 0;
  std::size_t window_accepted = 0;

  for (std::size_t sweep = 0; sweep < config.sweeps; ++sweep) {
    if (config.coupling == TopicCoupling::kCollapsed) {
      gibbs_sweep(s, corpus, rng);
    } else {
      resample_topics_given_theta(s, corpus, rng);
    }
    for (std::size_t r = 0; r < set.size(); ++r) lambdas[r] = sample_lambda(set, r, s.theta, rng);

    std::vector<double> concentration(T);
    for (std::size_t d = 0; d < N; ++d) {
      if (config.force_mh || !touching[d].empty()) {
        MhStep step = mh_update_theta(d, s, set, touching[d], lambdas, config, rng);
        s.theta[d] = std::move(step.theta);
        report.proposals += step.proposals;
        report.accepted += step.accepted;
        window_proposals += step.proposals;
        window_accepted += step.accepted;
      } else {
        for (std::size_t t = 0; t < T; ++t) {
          concentration[t] = static_cast<double>(s.n_dt[d][t]) + s.alpha;
        }
        s.theta[d] = sample_dirichlet(concentration, rng);
      }
    }

    if (sweep >= burn_in) {
      ++kept;
      for (std::size_t d = 0; d < N; ++d) {
        const std::vector<double> row =
            (config.force_mh || !touching[d].empty()) ? s.theta[d] : estimate_theta(s, d);
        for (std::size_t t = 0; t < T; ++t) mean[d][t] += row[t];
      }
    }

    if (config.acceptance_window > 0 && (sweep + 1) % config.acceptance_window == 0) {
      if (window_proposals > 0 &&
          static_cast<double>(window_accepted) / static_cast<double>(window_proposals) <
              config.min_acceptance) {
        warn("MH acceptance below " + std::to_string(config.min_acceptance) + " over sweeps " +
             std::to_string(sweep + 1 - config.acceptance_window) + ".." + std::to_string(sweep) +
             "; consider retuning the proposal scale");
      }
      window_proposals = 0;
      window_accepted = 0;
    }
    if (progress) progress(sweep + 1, config.sweeps);
  }

  if (config.readout == ThetaReadout::kPosteriorMean && kept > 0) {
    for (std::size_t d = 0; d < N; ++d) {
      double total = 0.0;
      for (double v : mean[d]) total += v;
      for (std::size_t t = 0; t < T; ++t) s.theta[d][t] = mean[d][t] / total;
    }
  }
  refresh_phi(s);
  report.sweeps = config.sweeps;
  report.after = summarize(set, s.theta);
  report.sum_path_mu_after = sum_path_mu(set, s.theta);
  return result;
}

nlohmann::json report_to_json(const InferenceReport& report, const RelationshipSet& set) {
  auto summary = [](const SatisfactionSummary& s, double sum_path) {
    return nlohmann::json{{"mean_path_mu", s.mean_path_mu},
                          {"mean_edge_mu", s.mean_edge_mu},
                          {"sum_path_mu", sum_path}};
  };
  return {{"sweeps", report.sweeps},
          {"acceptance_rate", report.acceptance_rate()},
          {"path_inequalities", set.paths.size()},
          {"edge_inequalities", set.edges.size()},
          {"satisfied_path_inequalities", report.after.paths_satisfied},
          {"satisfied_edge_inequalities", report.after.edges_satisfied},
          {"mu_summary",
           {{"before", summary(report.before, report.sum_path_mu_before)},
            {"after", summary(report.after, report.sum_path_mu_after)}}}};
}

}  // namespace storyweaver
