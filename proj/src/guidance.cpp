#include "fence/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"

namespace fence {

void GuidanceConfig::validate() const {
  require(pi > 0.0 && pi <= 1.0, "pi must lie in (0, 1]");
  require(lambda_ref > 1.0, "lambda_ref must exceed 1");
  require(t0 > 0.0 && t0 < 1.0, "t0 must lie in (0, 1)");
  require(t1 > 0.0 && t1 < 1.0, "t1 must lie in (0, 1)");
  require(std::isfinite(alpha_scale) && alpha_scale != 0.0, "alpha_scale must be finite and nonzero");
  require(lambda_max >= 1.0 && std::isfinite(lambda_max), "lambda_max must be finite and >= 1");
  require(std::isfinite(fixed_lambda), "fixed guidance scale must be finite");
}

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::Fence: return "fence";
    case GuidanceMode::FixedCfg: return "cfg";
    case GuidanceMode::None: return "none";
  }
  return "?";
}

std::string to_string(Aggregation aggregation) {
  switch (aggregation) {
    case Aggregation::Cluster: return "cluster";
    case Aggregation::Global: return "global";
    case Aggregation::Node: return "node";
  }
  return "?";
}

double calibrate_delta(const GuidanceConfig& cfg, int n_steps) {
  require(cfg.lambda_ref > 1.0, "lambda_ref must exceed 1");
  require(cfg.t0 < 1.0, "t0 must be below 1");
  require(n_steps >= 1, "step count must be positive");
  const double arg = (1.0 - cfg.pi) * cfg.lambda_ref / (cfg.lambda_ref - 1.0);
  return std::log(arg) / ((1.0 - cfg.t0) * n_steps);
}

double calibrate_tau(const GuidanceConfig& cfg, double delta, double sigma2_t1) {
  require(sigma2_t1 > 0.0, "sigma^2 at t1 must be positive");
  return std::abs(2.0 * sigma2_t1 * delta / cfg.alpha_scale);
}

int step_for_time(double t, int n_steps) {
  const long k = std::lround(t * n_steps);
  return static_cast<int>(std::clamp<long>(k, 1, n_steps));
}

double guidance_scale(double log_posterior, double pi, double lambda_max) {
  const double p = std::exp(std::min(log_posterior, kLogPosteriorCap));
  const double floor = 1.0 - pi;
  if (!(p > floor)) return lambda_max;
  return std::clamp(p / (p - floor), 1.0, lambda_max);
}

double guidance_scale_from_ratio(double ratio, double pi) { return ratio / (ratio - (1.0 - pi)); }

PosteriorTracker PosteriorTracker::calibrated(Eigen::Index n_nodes, const GuidanceConfig& cfg,
                                              const NoiseSchedule& sched) {
  PosteriorTracker t;
  t.log_posterior = Eigen::VectorXd::Zero(n_nodes);
  if (cfg.pi >= 1.0) return t;
  t.delta = calibrate_delta(cfg, sched.n_steps());
  t.tau = calibrate_tau(cfg, t.delta, sched.sigma2(step_for_time(cfg.t1, sched.n_steps())));
  return t;
}

namespace {

void require_same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), std::string(what) + ": shape mismatch");
}

}  // namespace

PosteriorTracker posterior_update(const PosteriorTracker& tracker, const Eigen::MatrixXd& x_prev,
                                  const Eigen::MatrixXd& mean_cond,
                                  const Eigen::MatrixXd& mean_uncond, int k,
                                  const NoiseSchedule& sched) {
  require_same(x_prev, mean_cond, "posterior_update");
  require_same(x_prev, mean_uncond, "posterior_update");
  require(tracker.log_posterior.size() == x_prev.rows(), "posterior_update: one entry per node");
  const double sigma2 = sched.sigma2(k);
  if (!(sigma2 > 0.0)) {
    fail(ErrorCode::InvalidInput, "posterior_update: sigma^2 is zero at step " + std::to_string(k));
  }
  PosteriorTracker out = tracker;
  const double scale = tracker.tau / (2.0 * sigma2);
  for (Eigen::Index i = 0; i < x_prev.rows(); ++i) {
    const double d_cond = (x_prev.row(i) - mean_cond.row(i)).squaredNorm();
    const double d_uncond = (x_prev.row(i) - mean_uncond.row(i)).squaredNorm();
    out.log_posterior(i) = tracker.log_posterior(i) - scale * (d_cond - d_uncond) - tracker.delta;
  }
  return out;
}

double global_posterior_update(double log_posterior, double tau, double delta,
                               const Eigen::MatrixXd& x_prev, const Eigen::MatrixXd& mean_cond,
                               const Eigen::MatrixXd& mean_uncond, double sigma2) {
  require_same(x_prev, mean_cond, "global_posterior_update");
  require_same(x_prev, mean_uncond, "global_posterior_update");
  require(sigma2 > 0.0, "global_posterior_update: sigma^2 must be positive");
  const double n = static_cast<double>(x_prev.rows());
  const double d_cond = (x_prev - mean_cond).squaredNorm() / n;
  const double d_uncond = (x_prev - mean_uncond).squaredNorm() / n;
  return log_posterior - tau / (2.0 * sigma2) * (d_cond - d_uncond) - delta;
}

Eigen::MatrixXd combine_scores(const Eigen::MatrixXd& eps_uncond, const Eigen::MatrixXd& eps_cond,
                               const Eigen::VectorXd& lambda_per_node) {
  require_same(eps_uncond, eps_cond, "combine_scores");
  require(lambda_per_node.size() == eps_cond.rows(), "combine_scores: one scale per node");
  Eigen::MatrixXd out(eps_cond.rows(), eps_cond.cols());
  for (Eigen::Index i = 0; i < eps_cond.rows(); ++i) {
    out.row(i) = eps_uncond.row(i) + lambda_per_node(i) * (eps_cond.row(i) - eps_uncond.row(i));
  }
  return out;
}

Eigen::VectorXd guidance_gradient_norm(const Eigen::MatrixXd& eps_uncond,
                                       const Eigen::MatrixXd& eps_cond, int k,
                                       const NoiseSchedule& sched) {
  require_same(eps_uncond, eps_cond, "guidance_gradient_norm");
  const double scale = 1.0 / std::sqrt(1.0 - sched.alpha_bar(k));
  return (eps_cond - eps_uncond).rowwise().norm() * scale;
}

}  // namespace fence
