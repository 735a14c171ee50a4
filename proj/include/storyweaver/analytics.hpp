#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "storyweaver/corpus.hpp"
#include "storyweaver/similarity_graph.hpp"
#include "storyweaver/topic_model.hpp"

namespace storyweaver {

struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

struct Layout2D {
  std::vector<Point2D> points;
  double stress = 0.0;  // sqrt(sum (d - d_layout)^2 / sum d^2)
};

// Classical (Torgerson) MDS of a symmetric distance matrix onto its top two
// components; negative eigenvalues are treated as zero.
Layout2D classical_mds(const Matrix& distances);
// Classical MDS over pairwise Manhattan distances between topic rows.
Layout2D mds_layout(const Matrix& theta);
Matrix pairwise_manhattan(const Matrix& rows);

struct TopicDistanceMatrix {
  Matrix entries;                      // rows: topics before, cols: topics after
  std::vector<std::size_t> matching;   // row -> column, minimum total distance
  double dominance_optimal = 0.0;
  double dominance_identity = 0.0;
};

// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
std::vector<std::size_t> min_cost_assignment(const Matrix& cost);

TopicDistanceMatrix topic_distance_matrix(const Matrix& phi_before, const Matrix& phi_after);

struct KMeansResult {
  std::vector<std::size_t> labels;
  Matrix centroids;
  std::vector<double> objective;  // within-cluster sum of squares after each iteration
};

KMeansResult kmeans(const Matrix& rows, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 100);
std::vector<std::size_t> kmeans_clusters(const Matrix& rows, std::size_t k, std::uint64_t seed);

struct SearchTrial {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<std::size_t> feedback;
};

struct ComparisonRow {
  std::string strategy;  // astar, ucs, constrained
  double xi = 0.0;
  double ebf = 0.0;       // mean effective branching factor
  double path_len = 0.0;  // mean edges per story
  double millis = 0.0;    // summed over counted trials, each the fastest of 3 runs
  double expansions = 0.0;
  std::size_t trials = 0;
  std::size_t excluded = 0;
};

// Runs every trial under each strategy on the graph rebuilt at each xi. A
// trial that fails under any strategy or xi is dropped everywhere and counted.
std::vector<ComparisonRow> compare_searches(const SimilarityGraph& graph,
                                            const std::vector<SearchTrial>& trials,
                                            const std::vector<double>& xis);
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

// Random (s, t, two-document feedback) trials over distinct documents.
std::vector<SearchTrial> random_trials(std::size_t num_docs, std::size_t count, std::uint64_t seed);

struct BenchmarkSpec {
  std::size_t num_docs = 50;
  std::vector<double> xis{1.0, 1.5, 2.01};
  std::size_t trials = 20;
  std::size_t num_topics = 9;
  std::size_t iterations = 300;
  std::uint64_t seed = 1;
};

// Fits a seeded synthetic corpus of the given size and compares the searches on
// trials drawn until spec.trials of them connect at the smallest xi.
std::vector<ComparisonRow> run_benchmark(const BenchmarkSpec& spec);

nlohmann::json layout_to_json(const Layout2D& layout, const std::vector<std::string>& ids);
std::string heatmap_csv(const TopicDistanceMatrix& m);

}  // namespace storyweaver
