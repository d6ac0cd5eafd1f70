#pragma once

#include <Eigen/Dense>

#include <string>

namespace fence {

class NoiseSchedule;

enum class GuidanceMode {
  Fence,     // feedback-controlled scale
  FixedCfg,  // constant scale `fixed_lambda`
  None,      // unconditional sampling (scale 0)
};

/// How node log-posteriors are pooled into scales in Fence mode.
enum class Aggregation {
  Cluster,  // per-node trackers averaged within k-means clusters
  Global,   // one tracker over the whole grid, norms averaged over nodes
  Node,     // every node uses its own log-posterior
};

struct GuidanceConfig {
  double pi = 0.5;          // prior confidence in the conditional model
  double lambda_ref = 1.6;  // scale reached at the activation time t0
  double t0 = 0.8;          // activation time (t = 1 is pure noise)
  double t1 = 0.5;          // peak time, sets the temperature
  double alpha_scale = 10.0;
  double lambda_max = 10.0;
  GuidanceMode mode = GuidanceMode::Fence;
  double fixed_lambda = 1.0;
  Aggregation aggregation = Aggregation::Cluster;

  void validate() const;
};

std::string to_string(GuidanceMode mode);
std::string to_string(Aggregation aggregation);

/// Log-posterior values above this are treated as this when exponentiated.
inline constexpr double kLogPosteriorCap = 30.0;

/// delta = log((1 - pi) * lambda_ref / (lambda_ref - 1)) / ((1 - t0) * K).
/// Returns -inf at pi = 1.
double calibrate_delta(const GuidanceConfig& cfg, int n_steps);

/// tau = |2 * sigma2_t1 * delta / alpha_scale|.
double calibrate_tau(const GuidanceConfig& cfg, double delta, double sigma2_t1);

/// Diffusion step for a normalized time t in (0, 1]: round(t * K), clamped to
/// [1, K].
int step_for_time(double t, int n_steps);

/// lambda = p / (p - (1 - pi)) with p = exp(log_posterior), clamped to
/// [1, lambda_max]. For p <= 1 - pi the scale saturates at lambda_max.
double guidance_scale(double log_posterior, double pi, double lambda_max);

/// Unclamped scale r / (r - (1 - pi)) for a posterior ratio
/// r = p(c|x) / p(c).
double guidance_scale_from_ratio(double ratio, double pi);

/// Per-trajectory posterior state, one log-posterior per node.
struct PosteriorTracker {
  Eigen::VectorXd log_posterior;
  double tau = 0.0;
  double delta = 0.0;

  /// Zero log-posterior per node; tau and delta calibrated from `cfg` and the
  /// schedule. At pi = 1 the feedback is inert (scale is identically 1) and
  /// both constants are set to 0.
  static PosteriorTracker calibrated(Eigen::Index n_nodes, const GuidanceConfig& cfg,
                                     const NoiseSchedule& sched);
};

/// log p_i <- log p_i - tau / (2 sigma_k^2) * (|x_prev_i - mu_cond_i|^2 -
/// |x_prev_i - mu_uncond_i|^2) - delta, with norms over node i's row.
PosteriorTracker posterior_update(const PosteriorTracker& tracker, const Eigen::MatrixXd& x_prev,
                                  const Eigen::MatrixXd& mean_cond,
                                  const Eigen::MatrixXd& mean_uncond, int k,
                                  const NoiseSchedule& sched);

/// Same update for a single grid-wide log-posterior; squared norms are
/// divided by the node count so the result equals the node average of the
/// per-node update.
double global_posterior_update(double log_posterior, double tau, double delta,
                               const Eigen::MatrixXd& x_prev, const Eigen::MatrixXd& mean_cond,
                               const Eigen::MatrixXd& mean_uncond, double sigma2);

/// Row i: eps_uncond_i + lambda_i * (eps_cond_i - eps_uncond_i).
Eigen::MatrixXd combine_scores(const Eigen::MatrixXd& eps_uncond, const Eigen::MatrixXd& eps_cond,
                               const Eigen::VectorXd& lambda_per_node);

/// Per-node L2 norm of the score difference s_cond - s_uncond.
Eigen::VectorXd guidance_gradient_norm(const Eigen::MatrixXd& eps_uncond,
                                       const Eigen::MatrixXd& eps_cond, int k,
                                       const NoiseSchedule& sched);

}  // namespace fence
