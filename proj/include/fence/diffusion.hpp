#pragma once

#include <Eigen/Dense>

#include <vector>

namespace fence {

class Rng;

enum class VarianceMode {
  BetaTilde,  // posterior variance (1 - abar_{k-1}) / (1 - abar_k) * beta_k
  Beta,       // sigma_k^2 = beta_k
};

/// beta, alpha, alpha-bar and reverse-variance tables for K steps. Steps are
/// 1-based: step(1) is the least noisy, step(K) is pure noise.
class NoiseSchedule {
 public:
  /// Builds the derived tables from an explicit beta sequence (beta_1..beta_K).
  NoiseSchedule(std::vector<double> beta, VarianceMode mode);
  /// Explicit reverse variances, overriding the mode-derived table.
  NoiseSchedule(std::vector<double> beta, std::vector<double> sigma2);

  int n_steps() const { return static_cast<int>(beta_.size()); }
  VarianceMode variance_mode() const { return mode_; }

  double beta(int k) const { return beta_[index(k)]; }
  double alpha(int k) const { return alpha_[index(k)]; }
  double alpha_bar(int k) const { return alpha_bar_[index(k)]; }
  /// alpha-bar with alpha_bar(0) = 1.
  double alpha_bar_or_one(int k) const { return k == 0 ? 1.0 : alpha_bar(k); }
  double sigma2(int k) const { return sigma2_[index(k)]; }

  const std::vector<double>& betas() const { return beta_; }

 private:
  std::size_t index(int k) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma2_;
  VarianceMode mode_;
};

/// beta_k = ((K-k)/(K-1) sqrt(beta1) + (k-1)/(K-1) sqrt(betaK))^2
NoiseSchedule quadratic_schedule(int n_steps, double beta1, double beta_k,
                                 VarianceMode mode = VarianceMode::BetaTilde);

/// sqrt(abar_k) x0 + sqrt(1 - abar_k) noise
Eigen::MatrixXd q_sample(const Eigen::MatrixXd& x0, int k, const Eigen::MatrixXd& noise,
                         const NoiseSchedule& sched);

/// (x_k - (1 - alpha_k) / sqrt(1 - abar_k) eps_hat) / sqrt(alpha_k)
Eigen::MatrixXd reverse_mean(const Eigen::MatrixXd& x_k, const Eigen::MatrixXd& eps_hat, int k,
                             const NoiseSchedule& sched);

/// -eps_hat / sqrt(1 - abar_k)
Eigen::MatrixXd score_from_noise(const Eigen::MatrixXd& eps_hat, int k, const NoiseSchedule& sched);
Eigen::MatrixXd noise_from_score(const Eigen::MatrixXd& score, int k, const NoiseSchedule& sched);

/// mean + sigma_k z; step 1 returns the mean unchanged.
Eigen::MatrixXd reverse_step(const Eigen::MatrixXd& mean, int k, const NoiseSchedule& sched,
                             Rng& rng);

/// Standard-normal matrix drawn row-major from `rng`.
Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Sinusoidal embedding of step k: [sin(k w_0..w_{h-1}), cos(k w_0..w_{h-1})]
/// with w_j = 10^(4 j / (h - 1)), h = dim / 2.
Eigen::VectorXd step_embedding(int k, int dim = 128);

}  // namespace fence
