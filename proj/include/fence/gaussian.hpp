#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fence/denoiser.hpp"
#include "fence/grid.hpp"

namespace fence {

class NoiseSchedule;
class Rng;

/// Grids are vectorized node-major: entry (i, t) sits at index i * T + t.
Eigen::VectorXd flatten(const Eigen::MatrixXd& grid);
Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index n_nodes, Eigen::Index n_steps);

/// Multivariate normal with a cached Cholesky factor.
class GaussianDensity {
 public:
  GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  Eigen::Index dim() const { return mean_.size(); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }

  double log_pdf(const Eigen::VectorXd& x) const;
  /// -cov^{-1} (x - mean), via the factorization.
  Eigen::VectorXd score(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_det_ = 0.0;
};

/// Distribution of x_k = sqrt(abar_k) x_0 + sqrt(1 - abar_k) eps when
/// x_0 ~ N(mean, cov).
GaussianDensity noised(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, double alpha_bar);

struct ConditionalMoments {
  Eigen::VectorXd mean;  // observed coordinates equal their observed values
  Eigen::MatrixXd cov;   // zero rows/columns at observed coordinates
};

/// Jointly Gaussian N x T world with an optional observation set.
class GaussianOracleWorld {
 public:
  /// Throws InvalidInput if `cov` is not symmetric positive definite.
  GaussianOracleWorld(Eigen::Index n_nodes, Eigen::Index n_steps, Eigen::VectorXd mean,
                      Eigen::MatrixXd cov);

  Eigen::Index n_nodes() const { return n_nodes_; }
  Eigen::Index n_steps() const { return n_steps_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }

  /// Copy of this world observing `grid` wherever `mask` is 1.
  GaussianOracleWorld with_observations(const TrafficGrid& grid, const MaskMatrix& mask) const;
  const std::vector<Eigen::Index>& observed_indices() const { return observed_idx_; }
  const Eigen::VectorXd& observed_values() const { return observed_val_; }
  bool has_observations() const { return !observed_idx_.empty(); }

  /// Schur-complement moments given the observation set; the prior moments
  /// when nothing is observed.
  ConditionalMoments conditional_moments() const;

  /// One draw x ~ N(mean, cov).
  TrafficGrid sample(Rng& rng) const;

 private:
  Eigen::Index n_nodes_;
  Eigen::Index n_steps_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_lower_;
  std::vector<Eigen::Index> observed_idx_;
  Eigen::VectorXd observed_val_;
};

/// grad log p_k(x_k) for the prior.
Eigen::VectorXd oracle_uncond_score(const GaussianOracleWorld& world, const Eigen::VectorXd& x_k,
                                    int k, const NoiseSchedule& sched);
/// grad log p_k(x_k | c) given the world's observation set.
Eigen::VectorXd oracle_cond_score(const GaussianOracleWorld& world, const Eigen::VectorXd& x_k,
                                  int k, const NoiseSchedule& sched);

struct WorldSpec {
  int nodes = 6;
  int steps = 12;
  double rho_s = 0.6;
  double rho_t = 0.8;
  double mean = 0.0;
  std::uint64_t seed = 0;
};

/// Sigma = S kron R with S_ij = rho_s^{ring hops(i, j)} and
/// R_ts = rho_t^{|t - s|}.
GaussianOracleWorld make_gaussian_world(const WorldSpec& spec);

/// Oracle spec file: `key = value` lines for nodes, steps, rho_s, rho_t,
/// mean, seed. `#` starts a comment.
WorldSpec read_world_spec(const std::string& path);
void write_world_spec(const std::string& path, const WorldSpec& spec);

/// Exact score functions for the contamination model
/// p_theta(x|c) = (1 - pi) p(x) + pi p(x|c).
struct ContaminatedScores {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score_cond_contaminated;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score_uncond;
  /// p_theta(c|x) / p_theta(c) = p_theta(x|c) / p(x).
  std::function<double(const Eigen::VectorXd&)> posterior_ratio;
  /// Exact mixture responsibility of the conditional component.
  std::function<double(const Eigen::VectorXd&)> responsibility;
};

ContaminatedScores make_contaminated_scores(const GaussianDensity& prior,
                                            const GaussianDensity& conditional, double pi_true);

/// Denoiser backed by the closed-form scores of a Gaussian world at every
/// step. Conditional contexts use the world's observation set; the context's
/// observed values are not re-read. `pi_true` < 1 replaces the conditional
/// score with that of the mixture (1 - pi_true) p_k(x) + pi_true p_k(x|c).
class OracleBackend : public DenoiserBackend {
 public:
  OracleBackend(const GaussianOracleWorld& world, const NoiseSchedule& sched,
                double pi_true = 1.0);

  Prediction predict(const Eigen::MatrixXd& x_k, int k,
                     const ConditioningContext& ctx) const override;

  const GaussianOracleWorld& world() const { return world_; }

 private:
  GaussianOracleWorld world_;
  double pi_true_;
  std::vector<double> alpha_bar_;
  std::vector<GaussianDensity> prior_;  // index k - 1
  std::vector<GaussianDensity> cond_;
  std::vector<Eigen::MatrixXd> prior_affinity_;
  std::vector<Eigen::MatrixXd> cond_affinity_;
};

/// Node-level affinity from a noised covariance over the vectorized grid:
/// entry (i, j) is the mean over time of |corr((i,t), (j,t))|, rows scaled
/// to sum to 1.
Eigen::MatrixXd correlation_affinity(const Eigen::MatrixXd& cov, Eigen::Index n_nodes,
                                     Eigen::Index n_steps);

}  // namespace fence
