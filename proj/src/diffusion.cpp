#include "fence/diffusion.hpp"

#include <cmath>

#include "fence/error.hpp"
#include "fence/rng.hpp"

namespace fence {

NoiseSchedule::NoiseSchedule(std::vector<double> beta, VarianceMode mode)
    : beta_(std::move(beta)), mode_(mode) {
  require(!beta_.empty(), "noise schedule needs at least one step");
  alpha_.resize(beta_.size());
  alpha_bar_.resize(beta_.size());
  sigma2_.resize(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    require(beta_[i] > 0.0 && beta_[i] < 1.0, "beta values must lie in (0, 1)");
    alpha_[i] = 1.0 - beta_[i];
    const double prev = prod;
    prod *= alpha_[i];
    alpha_bar_[i] = prod;
    sigma2_[i] = mode == VarianceMode::Beta ? beta_[i] : (1.0 - prev) / (1.0 - prod) * beta_[i];
  }
}

NoiseSchedule::NoiseSchedule(std::vector<double> beta, std::vector<double> sigma2)
    : NoiseSchedule(std::move(beta), VarianceMode::Beta) {
  require(sigma2.size() == beta_.size(), "one reverse variance per step required");
  for (double s : sigma2) require(s >= 0.0 && std::isfinite(s), "reverse variances must be >= 0");
  sigma2_ = std::move(sigma2);
}

std::size_t NoiseSchedule::index(int k) const {
  if (k < 1 || k > n_steps()) {
    fail(ErrorCode::InvalidInput,
         "diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(n_steps()) + "]");
  }
  return static_cast<std::size_t>(k - 1);
}

NoiseSchedule quadratic_schedule(int n_steps, double beta1, double beta_k, VarianceMode mode) {
  require(n_steps >= 2, "quadratic schedule needs K >= 2");
  require(beta1 > 0.0 && beta1 <= beta_k && beta_k < 1.0, "need 0 < beta1 <= betaK < 1");
  std::vector<double> beta(static_cast<std::size_t>(n_steps));
  const double s1 = std::sqrt(beta1);
  const double sk = std::sqrt(beta_k);
  const double denom = n_steps - 1;
  beta.front() = beta1;
  beta.back() = beta_k;
  for (int k = 2; k < n_steps; ++k) {
    const double v = (n_steps - k) / denom * s1 + (k - 1) / denom * sk;
    beta[static_cast<std::size_t>(k - 1)] = v * v;
  }
  return NoiseSchedule(std::move(beta), mode);
}

namespace {

void require_same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), std::string(what) + ": shape mismatch");
}

}  // namespace

Eigen::MatrixXd q_sample(const Eigen::MatrixXd& x0, int k, const Eigen::MatrixXd& noise,
                         const NoiseSchedule& sched) {
  require_same(x0, noise, "q_sample");
  const double ab = sched.alpha_bar(k);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

Eigen::MatrixXd reverse_mean(const Eigen::MatrixXd& x_k, const Eigen::MatrixXd& eps_hat, int k,
                             const NoiseSchedule& sched) {
  require_same(x_k, eps_hat, "reverse_mean");
  const double coef = (1.0 - sched.alpha(k)) / std::sqrt(1.0 - sched.alpha_bar(k));
  return (x_k - coef * eps_hat) / std::sqrt(sched.alpha(k));
}

Eigen::MatrixXd score_from_noise(const Eigen::MatrixXd& eps_hat, int k, const NoiseSchedule& sched) {
  return -eps_hat / std::sqrt(1.0 - sched.alpha_bar(k));
}

Eigen::MatrixXd noise_from_score(const Eigen::MatrixXd& score, int k, const NoiseSchedule& sched) {
  return -score * std::sqrt(1.0 - sched.alpha_bar(k));
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = rng.normal();
  }
  return z;
}

Eigen::MatrixXd reverse_step(const Eigen::MatrixXd& mean, int k, const NoiseSchedule& sched,
                             Rng& rng) {
  const double s2 = sched.sigma2(k);
  if (k == 1 || s2 == 0.0) return mean;
  return mean + std::sqrt(s2) * standard_normal(mean.rows(), mean.cols(), rng);
}

Eigen::VectorXd step_embedding(int k, int dim) {
  require(dim >= 4 && dim % 2 == 0, "step embedding dimension must be even and >= 4");
  const int half = dim / 2;
  Eigen::VectorXd out(dim);
  for (int j = 0; j < half; ++j) {
    const double freq = std::pow(10.0, 4.0 * j / (half - 1));
    out(j) = std::sin(k * freq);
    out(half + j) = std::cos(k * freq);
  }
  return out;
}

}  // namespace fence
