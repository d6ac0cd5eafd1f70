#include "fence/clustering.hpp"

#include <cmath>
#include <limits>

#include "fence/error.hpp"
#include "fence/guidance.hpp"
#include "fence/rng.hpp"

namespace fence {

namespace {

std::vector<int> assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers) {
  std::vector<int> labels(static_cast<std::size_t>(x.rows()), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
      const double d = (x.row(i) - centers.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(j);
      }
    }
  }
  return labels;
}

Eigen::MatrixXd cluster_means(const Eigen::MatrixXd& x, const std::vector<int>& labels, int k,
                              const Eigen::MatrixXd& fallback) {
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    centers.row(l) += x.row(i);
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) {
      centers.row(j) /= counts[static_cast<std::size_t>(j)];
    } else {
      centers.row(j) = fallback.row(j);
    }
  }
  return centers;
}

// Moves the point farthest from its own center into each empty cluster.
void repair_empty(const Eigen::MatrixXd& x, std::vector<int>& labels, Eigen::MatrixXd& centers) {
  const int k = static_cast<int>(centers.rows());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  for (int j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int l = labels[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(l)] < 2) continue;
      const double d = (x.row(i) - centers.row(l)).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) fail(ErrorCode::State, "k-means repair found no donor cluster");
    --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
    labels[static_cast<std::size_t>(far)] = j;
    ++counts[static_cast<std::size_t>(j)];
    centers.row(j) = x.row(far);
  }
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  centers.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = true;

  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();

  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0.0 && acc >= u) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2(i) > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // All remaining points coincide with chosen centers.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), (x.row(i) - centers.row(c)).squaredNorm());
    }
  }
  return centers;
}

}  // namespace

double within_cluster_sse(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                          const Eigen::MatrixXd& centers) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    sse += (features.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return sse;
}

ClusterAssignment kmeans(const Eigen::MatrixXd& features, int n_clusters, std::uint64_t seed,
                         int max_iter) {
  const auto n = static_cast<int>(features.rows());
  require(n >= 1, "k-means needs at least one point");
  require(n_clusters >= 1, "cluster count must be positive");
  require(n_clusters <= n, "cluster count " + std::to_string(n_clusters) +
                               " exceeds number of points " + std::to_string(n));
  require(max_iter >= 1, "max_iter must be positive");
  require(features.allFinite(), "k-means features must be finite");

  ClusterAssignment out;
  out.n_clusters = n_clusters;
  if (n_clusters == n) {
    out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.labels[static_cast<std::size_t>(i)] = i;
    out.centers = features;
    out.sse_history = {0.0};
    return out;
  }
  if (n_clusters == 1) {
    out.labels.assign(static_cast<std::size_t>(n), 0);
    out.centers = features.colwise().mean();
    out.sse_history = {within_cluster_sse(features, out.labels, out.centers)};
    return out;
  }

  Rng rng(seed, 0x6B6D65616E73ull);  // "kmeans"
  Eigen::MatrixXd centers = seed_plus_plus(features, n_clusters, rng);
  std::vector<int> labels = assign(features, centers);
  repair_empty(features, labels, centers);
  out.sse_history.push_back(within_cluster_sse(features, labels, centers));

  for (int it = 1; it <= max_iter; ++it) {
    centers = cluster_means(features, labels, n_clusters, centers);
    std::vector<int> next = assign(features, centers);
    repair_empty(features, next, centers);
    out.sse_history.push_back(within_cluster_sse(features, next, centers));
    out.iterations = it;
    const bool converged = next == labels;
    labels = std::move(next);
    if (converged) break;
  }
  out.centers = cluster_means(features, labels, n_clusters, centers);
  out.labels = std::move(labels);
  return out;
}

int default_cluster_count(int n_nodes) {
  return std::max(1, static_cast<int>(std::lround(n_nodes / 20.0)));
}

Eigen::VectorXd cluster_log_posterior(const Eigen::VectorXd& node_log_posterior,
                                      const ClusterAssignment& clusters) {
  require(static_cast<Eigen::Index>(clusters.labels.size()) == node_log_posterior.size(),
          "cluster labels do not cover the node set");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(clusters.n_clusters);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(clusters.n_clusters);
  for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
    const int l = clusters.labels[i];
    require(l >= 0 && l < clusters.n_clusters, "cluster label out of range");
    sum(l) += node_log_posterior(static_cast<Eigen::Index>(i));
    count(l) += 1.0;
  }
  for (int j = 0; j < clusters.n_clusters; ++j) {
    if (count(j) == 0.0) fail(ErrorCode::State, "empty cluster " + std::to_string(j));
  }
  return sum.cwiseQuotient(count);
}

Eigen::VectorXd cluster_scales(const Eigen::VectorXd& cluster_logp,
                               const ClusterAssignment& clusters, const GuidanceConfig& cfg) {
  require(cluster_logp.size() == clusters.n_clusters, "one log-posterior per cluster required");
  Eigen::VectorXd per_cluster(clusters.n_clusters);
  for (int j = 0; j < clusters.n_clusters; ++j) {
    per_cluster(j) = guidance_scale(cluster_logp(j), cfg.pi, cfg.lambda_max);
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(clusters.labels.size()));
  for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = per_cluster(clusters.labels[i]);
  }
  return out;
}

}  // namespace fence
