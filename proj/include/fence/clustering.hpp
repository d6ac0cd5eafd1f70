#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace fence {

struct GuidanceConfig;
struct PosteriorTracker;

struct ClusterAssignment {
  std::vector<int> labels;  // one per node, in [0, n_clusters)
  Eigen::MatrixXd centers;  // n_clusters x F
  int n_clusters = 0;
  /// Within-cluster SSE after each Lloyd iteration (first entry: after the
  /// k-means++ seeding assignment).
  std::vector<double> sse_history;
  int iterations = 0;
};

/// Lloyd's algorithm from k-means++ seeding, Euclidean distance. Stops at a
/// label fixpoint or after `max_iter` iterations. Empty clusters are refilled
/// with the point farthest from its center.
ClusterAssignment kmeans(const Eigen::MatrixXd& features, int n_clusters, std::uint64_t seed,
                         int max_iter = 20);

/// Within-cluster sum of squared distances to the given centers.
double within_cluster_sse(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                          const Eigen::MatrixXd& centers);

/// max(1, round(N / 20))
int default_cluster_count(int n_nodes);

/// Arithmetic mean of node log-posteriors within each cluster.
Eigen::VectorXd cluster_log_posterior(const Eigen::VectorXd& node_log_posterior,
                                      const ClusterAssignment& clusters);

/// Shared guidance scale per cluster, expanded back to one entry per node.
Eigen::VectorXd cluster_scales(const Eigen::VectorXd& cluster_logp,
                               const ClusterAssignment& clusters, const GuidanceConfig& cfg);

}  // namespace fence
