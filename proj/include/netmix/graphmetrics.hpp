#pragma once

// Weighted nodal and whole-network metrics used as dyadic covariates and as
// goodness-of-fit summaries. Edge length is 1/weight; absent edges are
// unreachable (+inf) in path computations.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "netmix/netdata.hpp"

namespace netmix {

struct MetricOptions {
  /// Use the count of neighbors instead of strength inside leverage centrality.
  bool binary_leverage = false;
  std::uint64_t louvain_seed = 1;
};

struct NodalMetrics {
  Eigen::VectorXd clustering;
  Eigen::VectorXd efficiency;
  Eigen::VectorXd degree;  // strength
  std::vector<std::optional<double>> leverage;  // absent for isolated nodes
};

struct Partition {
  std::vector<int> community;  // labels 0.. in order of first appearance
  double q = 0.0;

  int n_communities() const;
};

struct PathLengthSummary {
  double mean = 0.0;
  std::size_t excluded_pairs = 0;  // unordered pairs with infinite distance
};

struct NetworkMetrics {
  double clustering = 0.0;
  double global_efficiency = 0.0;
  double path_length = 0.0;
  std::size_t disconnected_pairs = 0;
  double mean_degree = 0.0;
  double mean_leverage = 0.0;
  double modularity = 0.0;
  std::vector<int> partition;
};

double weighted_degree(const SubjectNetwork& net, int node);
Eigen::VectorXd weighted_degrees(const SubjectNetwork& net);

/// Onnela geometric-mean clustering on max-normalized weights; 0 when the
/// node has fewer than two neighbors.
double weighted_clustering(const SubjectNetwork& net, int node);
Eigen::VectorXd weighted_clustering_all(const SubjectNetwork& net);

/// All-pairs shortest path lengths with edge length 1/w (Floyd-Warshall).
Eigen::MatrixXd shortest_path_lengths(const SubjectNetwork& net);

/// (1/(n-1)) * sum_{j != node} 1/d(node, j), with 1/inf = 0.
double nodal_efficiency(const Eigen::MatrixXd& paths, int node);

std::optional<double> leverage_centrality(const SubjectNetwork& net, int node, bool binary_degree = false);

/// Newman weighted modularity of a given assignment.
double modularity_of(const Eigen::MatrixXd& weights, std::span<const int> community);

/// Louvain with a node visiting order shuffled by `seed`. Throws DataError
/// ("no edges") on an empty network.
Partition modularity(const SubjectNetwork& net, std::uint64_t seed);

/// Louvain with an explicit level-0 visiting order (a permutation of 0..n-1).
Partition modularity_with_order(const SubjectNetwork& net, std::span<const int> order);

/// Mean of finite off-diagonal path lengths. Throws if every pair is disconnected.
PathLengthSummary characteristic_path_length(const Eigen::MatrixXd& paths);

struct MetricSuite {
  NodalMetrics nodal;
  NetworkMetrics network;
};

MetricSuite metric_suite(const SubjectNetwork& net, const MetricOptions& opts = {});

/// Seeded visiting order used by modularity(); exposed so callers can remap it.
std::vector<int> louvain_order(int n, std::uint64_t seed);

}  // namespace netmix
