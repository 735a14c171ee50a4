#include "storyweaver/analytics.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "storyweaver/errors.hpp"
#include "storyweaver/log.hpp"
#include "storyweaver/search.hpp"

namespace storyweaver {

Matrix pairwise_manhattan(const Matrix& rows) {
  const std::size_t n = rows.size();
  Matrix d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d[i][j] = d[j][i] = manhattan(rows[i], rows[j]);
  }
  return d;
}

Layout2D classical_mds(const Matrix& distances) {
  const std::size_t n = distances.size();
  if (n < 2) throw ParameterError("MDS needs at least two points");
  Eigen::MatrixXd sq(n, n);
  double largest = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (distances[i].size() != n) throw ParameterError("distance matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      sq(i, j) = distances[i][j] * distances[i][j];
      largest = std::max(largest, distances[i][j]);
    }
  }
  Layout2D layout;
  layout.points.assign(n, {});
  if (largest == 0.0) {
    warn("all documents coincide; MDS layout collapsed to the origin");
    return layout;
  }
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd gram = -0.5 * centering * sq * centering;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  const Eigen::VectorXd values = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd vectors = solver.eigenvectors();

  for (std::size_t axis = 0; axis < 2 && axis < n; ++axis) {
    const Eigen::Index col = static_cast<Eigen::Index>(n - 1 - axis);
    const double scale = std::sqrt(std::max(0.0, values(col)));
    Eigen::VectorXd v = vectors.col(col);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = v(static_cast<Eigen::Index>(i)) * scale;
      (axis == 0 ? layout.points[i].x : layout.points[i].y) = c;
    }
  }
  Point2D mean;
  for (const auto& p : layout.points) {
    mean.x += p.x / static_cast<double>(n);
    mean.y += p.y / static_cast<double>(n);
  }
  double residual = 0.0;
  double total = 0.0;
  for (auto& p : layout.points) {
    p.x -= mean.x;
    p.y -= mean.y;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = layout.points[i].x - layout.points[j].x;
      const double dy = layout.points[i].y - layout.points[j].y;
      const double diff = distances[i][j] - std::hypot(dx, dy);
      residual += diff * diff;
      total += distances[i][j] * distances[i][j];
    }
  }
  layout.stress = std::sqrt(residual / total);
  return layout;
}

Layout2D mds_layout(const Matrix& theta) { return classical_mds(pairwise_manhattan(theta)); }

std::vector<std::size_t> min_cost_assignment(const Matrix& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw ParameterError("assignment needs a square cost matrix");
  }
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based Hungarian method, 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

TopicDistanceMatrix topic_distance_matrix(const Matrix& phi_before, const Matrix& phi_after) {
  if (phi_before.size() != phi_after.size()) throw ParameterError("topic counts differ");
  if (phi_before.empty()) throw ParameterError("no topics");
  const std::size_t vocab = phi_before.front().size();
  for (const auto& m : {&phi_before, &phi_after}) {
    for (const auto& row : *m) {
      if (row.size() != vocab) throw ParameterError("vocabulary sizes differ");
    }
  }
  const std::size_t T = phi_before.size();
  TopicDistanceMatrix out;
  out.entries.assign(T, std::vector<double>(T, 0.0));
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) out.entries[i][j] = manhattan(phi_before[i], phi_after[j]);
  }
  out.matching = min_cost_assignment(out.entries);
  std::size_t optimal = 0;
  std::size_t identity = 0;
  for (std::size_t i = 0; i < T; ++i) {
    const double row_min = *std::min_element(out.entries[i].begin(), out.entries[i].end());
    if (out.entries[i][out.matching[i]] <= row_min) ++optimal;
    if (out.entries[i][i] <= row_min) ++identity;
  }
  out.dominance_optimal = static_cast<double>(optimal) / static_cast<double>(T);
  out.dominance_identity = static_cast<double>(identity) / static_cast<double>(T);
  return out;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double within_cluster(const Matrix& rows, const Matrix& centroids,
                      const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) total += squared_distance(rows[i], centroids[labels[i]]);
  return total;
}

}  // namespace

KMeansResult kmeans(const Matrix& rows, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations) {
  if (k < 1) throw ParameterError("k must be at least 1");
  if (k > rows.size()) throw ParameterError("k exceeds the number of rows");
  const std::size_t n = rows.size();
  Rng rng(seed);
  KMeansResult out;

  // k-means++ seeding.
  std::vector<bool> chosen(n, false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  out.centroids.push_back(rows[first]);
  chosen[first] = true;
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(rows[i], rows[first]);
  while (out.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : nearest[i];
    std::size_t pick = n;
    if (total > 0.0) {
      std::vector<double> weights(n);
      for (std::size_t i = 0; i < n; ++i) weights[i] = chosen[i] ? 0.0 : nearest[i];
      pick = sample_discrete(weights, rng);
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    chosen[pick] = true;
    out.centroids.push_back(rows[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(rows[i], rows[pick]));
    }
  }

  out.labels.assign(n, 0);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = out.labels[i];
      double best_d = squared_distance(rows[i], out.centroids[best]);
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(rows[i], out.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != out.labels[i]) {
        out.labels[i] = best;
        changed = true;
      }
    }
    Matrix sums(k, std::vector<double>(rows.front().size(), 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[out.labels[i]];
      for (std::size_t t = 0; t < rows[i].size(); ++t) sums[out.labels[i]][t] += rows[i][t];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
      out.centroids[c] = std::move(sums[c]);
    }
    out.objective.push_back(within_cluster(rows, out.centroids, out.labels));
    if (!changed) break;
  }
  return out;
}

std::vector<std::size_t> kmeans_clusters(const Matrix& rows, std::size_t k, std::uint64_t seed) {
  return kmeans(rows, k, seed).labels;
}

std::vector<ComparisonRow> compare_searches(const SimilarityGraph& graph,
                                            const std::vector<SearchTrial>& trials,
                                            const std::vector<double>& xis) {
  using Clock = std::chrono::steady_clock;
  if (!graph.has_topics()) throw ParameterError("comparison needs a graph with topic rows");
  constexpr int kStrategies = 3;
  constexpr int kTimingRepeats = 3;
  const char* names[kStrategies] = {"astar", "ucs", "constrained"};
  struct Run {
    double ebf = 0.0, len = 0.0, millis = 0.0, expansions = 0.0;
  };
  // runs[x][trial][strategy]; a trial failing anywhere is dropped everywhere so
  // every average is taken over the same trials.
  std::vector<std::vector<std::array<Run, kStrategies>>> runs(xis.size());
  std::vector<bool> usable(trials.size(), true);
  for (std::size_t x = 0; x < xis.size(); ++x) {
    const SimilarityGraph g(graph.theta(), graph.candidates(), xis[x]);
    runs[x].resize(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (!usable[i]) continue;
      const SearchTrial& trial = trials[i];
      for (int k = 0; k < kStrategies && usable[i]; ++k) {
        try {
          auto search = [&] {
            return k == 0   ? astar(g, trial.start, trial.end)
                   : k == 1 ? uniform_cost(g, trial.start, trial.end)
                            : constrained_astar(g, trial.start, trial.end, trial.feedback);
          };
          // fastest of a few repeats
          SearchResult r;
          double best = std::numeric_limits<double>::infinity();
          for (int rep = 0; rep < kTimingRepeats; ++rep) {
            const auto t0 = Clock::now();
            r = search();
            best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
          }
          Run& run = runs[x][i][k];
          run.millis = best;
          run.len = static_cast<double>(r.story.length());
          run.expansions = static_cast<double>(r.trace.expansions);
          run.ebf = effective_branching_factor(run.expansions, r.story.length());
        } catch (const Error&) {
          usable[i] = false;
        }
      }
    }
  }
  const auto excluded =
      static_cast<std::size_t>(std::count(usable.begin(), usable.end(), false));
  std::vector<ComparisonRow> rows;
  for (std::size_t x = 0; x < xis.size(); ++x) {
    for (int k = 0; k < kStrategies; ++k) {
      ComparisonRow row;
      row.strategy = names[k];
      row.xi = xis[x];
      row.excluded = excluded;
      for (std::size_t i = 0; i < trials.size(); ++i) {
        if (!usable[i]) continue;
        const Run& run = runs[x][i][k];
        row.ebf += run.ebf;
        row.path_len += run.len;
        row.millis += run.millis;
        row.expansions += run.expansions;
        ++row.trials;
      }
      if (row.trials > 0) {
        const double n = static_cast<double>(row.trials);
        row.ebf /= n;
        row.path_len /= n;
        row.expansions /= n;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "strategy,xi,ebf,path_len,millis\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.xi << ',' << r.ebf << ',' << r.path_len << ',' << r.millis << '\n';
  }
  return out.str();
}

std::vector<SearchTrial> random_trials(std::size_t num_docs, std::size_t count, std::uint64_t seed) {
  if (num_docs < 4) throw ParameterError("trials need at least four documents");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, num_docs - 1);
  std::vector<SearchTrial> trials;
  while (trials.size() < count) {
    const std::size_t s = pick(rng), t = pick(rng), a = pick(rng), b = pick(rng);
    if (s == t || a == b || a == s || a == t || b == s || b == t) continue;
    trials.push_back({s, t, {a, b}});
  }
  return trials;
}

std::vector<ComparisonRow> run_benchmark(const BenchmarkSpec& spec) {
  SyntheticSpec synth;
  synth.num_docs = spec.num_docs;
  synth.rng_seed = spec.seed;
  synth.mixing = random_mixing(spec.num_docs, synth.num_themes, spec.seed);
  const Corpus corpus = generate_synthetic(synth);
  LdaConfig lda;
  lda.num_topics = spec.num_topics;
  lda.iterations = spec.iterations;
  lda.seed = spec.seed;
  const TopicState state = fit(corpus, lda);
  const SimilarityGraph graph(state.theta, term_sharing_pairs(corpus),
                              std::numeric_limits<double>::infinity());
  if (spec.xis.empty()) throw ParameterError("benchmark needs at least one xi");
  // Keep drawing until enough trials connect at the tightest threshold; its
  // edges are a subset of every looser graph's.
  const SimilarityGraph tightest(state.theta, graph.candidates(),
                                 *std::min_element(spec.xis.begin(), spec.xis.end()));
  std::vector<SearchTrial> kept;
  for (const SearchTrial& trial : random_trials(corpus.size(), 50 * spec.trials, spec.seed)) {
    if (kept.size() == spec.trials) break;
    try {
      constrained_astar(tightest, trial.start, trial.end, trial.feedback);
      kept.push_back(trial);
    } catch (const Error&) {
    }
  }
  if (kept.size() < spec.trials) {
    warn("only " + std::to_string(kept.size()) + " of " + std::to_string(spec.trials) +
         " trials connect at xi " + std::to_string(tightest.xi()));
  }
  return compare_searches(graph, kept, spec.xis);
}

nlohmann::json layout_to_json(const Layout2D& layout, const std::vector<std::string>& ids) {
  if (ids.size() != layout.points.size()) throw ParameterError("id count differs from layout size");
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    arr.push_back({{"id", ids[i]}, {"x", layout.points[i].x}, {"y", layout.points[i].y}});
  }
  return arr;
}

std::string heatmap_csv(const TopicDistanceMatrix& m) {
  std::ostringstream out;
  out.precision(10);
  const std::size_t T = m.entries.size();
  out << "topic";
  for (std::size_t j = 0; j < T; ++j) out << ",after_" << j;
  out << '\n';
  for (std::size_t i = 0; i < T; ++i) {
    out << "before_" << i;
    for (double v : m.entries[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace storyweaver
