#include "fence/gaussian.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/rng.hpp"

namespace fence {

Eigen::VectorXd flatten(const Eigen::MatrixXd& grid) {
  Eigen::VectorXd v(grid.size());
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index t = 0; t < grid.cols(); ++t) v(i * grid.cols() + t) = grid(i, t);
  }
  return v;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, Eigen::Index n_nodes, Eigen::Index n_steps) {
  require(v.size() == n_nodes * n_steps, "vector length does not match grid shape");
  Eigen::MatrixXd g(n_nodes, n_steps);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    for (Eigen::Index t = 0; t < n_steps; ++t) g(i, t) = v(i * n_steps + t);
  }
  return g;
}

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)), llt_(cov_) {
  require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(),
          "covariance shape does not match mean");
  if (llt_.info() != Eigen::Success) {
    fail(ErrorCode::InvalidInput, "covariance is not positive definite");
  }
  log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double GaussianDensity::log_pdf(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z = llt_.matrixL().solve(x - mean_);
  return -0.5 * (z.squaredNorm() + log_det_ +
                 static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi));
}

Eigen::VectorXd GaussianDensity::score(const Eigen::VectorXd& x) const {
  return -llt_.solve(x - mean_);
}

GaussianDensity noised(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, double alpha_bar) {
  Eigen::MatrixXd c = alpha_bar * cov;
  c.diagonal().array() += 1.0 - alpha_bar;
  return GaussianDensity(std::sqrt(alpha_bar) * mean, std::move(c));
}

// ---------------------------------------------------------------------------

GaussianOracleWorld::GaussianOracleWorld(Eigen::Index n_nodes, Eigen::Index n_steps,
                                         Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : n_nodes_(n_nodes), n_steps_(n_steps), mean_(std::move(mean)), cov_(std::move(cov)) {
  require(n_nodes >= 1 && n_steps >= 1, "world needs at least one node and one step");
  require(mean_.size() == n_nodes * n_steps, "world mean has the wrong length");
  require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(),
          "world covariance has the wrong shape");
  require(cov_.allFinite(), "world covariance must be finite");
  require((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + cov_.cwiseAbs().maxCoeff()),
          "world covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::InvalidInput, "world covariance is not positive definite");
  }
  chol_lower_ = llt.matrixL();
}

GaussianOracleWorld GaussianOracleWorld::with_observations(const TrafficGrid& grid,
                                                           const MaskMatrix& mask) const {
  require_same_shape(grid, mask);
  require(grid.n_nodes() == n_nodes_ && grid.n_steps() == n_steps_,
          "observation grid does not match world shape");
  GaussianOracleWorld out = *this;
  out.observed_idx_.clear();
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < n_nodes_; ++i) {
    for (Eigen::Index t = 0; t < n_steps_; ++t) {
      if (mask.observed(i, t)) {
        out.observed_idx_.push_back(i * n_steps_ + t);
        vals.push_back(grid(i, t));
      }
    }
  }
  out.observed_val_ = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return out;
}

ConditionalMoments GaussianOracleWorld::conditional_moments() const {
  if (observed_idx_.empty()) return {mean_, cov_};
  const Eigen::Index dim = mean_.size();
  std::vector<bool> is_obs(static_cast<std::size_t>(dim), false);
  for (Eigen::Index o : observed_idx_) is_obs[static_cast<std::size_t>(o)] = true;
  std::vector<Eigen::Index> hidden;
  for (Eigen::Index a = 0; a < dim; ++a) {
    if (!is_obs[static_cast<std::size_t>(a)]) hidden.push_back(a);
  }
  const auto no = static_cast<Eigen::Index>(observed_idx_.size());
  const auto nh = static_cast<Eigen::Index>(hidden.size());

  Eigen::MatrixXd s_oo(no, no);
  Eigen::MatrixXd s_ho(nh, no);
  Eigen::MatrixXd s_hh(nh, nh);
  Eigen::VectorXd r_o(no);
  for (Eigen::Index a = 0; a < no; ++a) {
    r_o(a) = observed_val_(a) - mean_(observed_idx_[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < no; ++b) {
      s_oo(a, b) = cov_(observed_idx_[static_cast<std::size_t>(a)], observed_idx_[static_cast<std::size_t>(b)]);
    }
  }
  for (Eigen::Index a = 0; a < nh; ++a) {
    for (Eigen::Index b = 0; b < no; ++b) {
      s_ho(a, b) = cov_(hidden[static_cast<std::size_t>(a)], observed_idx_[static_cast<std::size_t>(b)]);
    }
    for (Eigen::Index b = 0; b < nh; ++b) {
      s_hh(a, b) = cov_(hidden[static_cast<std::size_t>(a)], hidden[static_cast<std::size_t>(b)]);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(s_oo);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::Numerical, "observed covariance block is singular");
  }
  const Eigen::VectorXd m_h = s_ho * llt.solve(r_o);
  Eigen::MatrixXd c_hh = s_hh - s_ho * llt.solve(s_ho.transpose());
  c_hh = 0.5 * (c_hh + c_hh.transpose()).eval();

  ConditionalMoments out{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
  for (Eigen::Index a = 0; a < no; ++a) out.mean(observed_idx_[static_cast<std::size_t>(a)]) = observed_val_(a);
  for (Eigen::Index a = 0; a < nh; ++a) {
    const Eigen::Index ha = hidden[static_cast<std::size_t>(a)];
    out.mean(ha) = mean_(ha) + m_h(a);
    for (Eigen::Index b = 0; b < nh; ++b) out.cov(ha, hidden[static_cast<std::size_t>(b)]) = c_hh(a, b);
  }
  return out;
}

TrafficGrid GaussianOracleWorld::sample(Rng& rng) const {
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index a = 0; a < z.size(); ++a) z(a) = rng.normal();
  return TrafficGrid(unflatten(mean_ + chol_lower_ * z, n_nodes_, n_steps_));
}

Eigen::VectorXd oracle_uncond_score(const GaussianOracleWorld& world, const Eigen::VectorXd& x_k,
                                    int k, const NoiseSchedule& sched) {
  require(x_k.size() == world.mean().size(), "x_k has the wrong length");
  return noised(world.mean(), world.cov(), sched.alpha_bar(k)).score(x_k);
}

Eigen::VectorXd oracle_cond_score(const GaussianOracleWorld& world, const Eigen::VectorXd& x_k,
                                  int k, const NoiseSchedule& sched) {
  require(x_k.size() == world.mean().size(), "x_k has the wrong length");
  const ConditionalMoments m = world.conditional_moments();
  return noised(m.mean, m.cov, sched.alpha_bar(k)).score(x_k);
}

// ---------------------------------------------------------------------------

GaussianOracleWorld make_gaussian_world(const WorldSpec& spec) {
  require(spec.nodes >= 1 && spec.steps >= 1, "world needs nodes >= 1 and steps >= 1");
  require(spec.rho_s >= 0.0 && spec.rho_s < 1.0, "rho_s must lie in [0, 1)");
  require(spec.rho_t >= 0.0 && spec.rho_t < 1.0, "rho_t must lie in [0, 1)");
  require(std::isfinite(spec.mean), "world mean must be finite");
  const int n = spec.nodes;
  const int t = spec.steps;
  Eigen::MatrixXd spatial(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int d = std::abs(i - j);
      spatial(i, j) = std::pow(spec.rho_s, std::min(d, n - d));
    }
  }
  Eigen::MatrixXd temporal(t, t);
  for (int a = 0; a < t; ++a) {
    for (int b = 0; b < t; ++b) temporal(a, b) = std::pow(spec.rho_t, std::abs(a - b));
  }
  Eigen::MatrixXd cov(n * t, n * t);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cov.block(i * t, j * t, t, t) = spatial(i, j) * temporal;
  }
  return GaussianOracleWorld(n, t, Eigen::VectorXd::Constant(n * t, spec.mean), std::move(cov));
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream ss(value);
  T v{};
  ss >> v;
  if (!ss || !ss.eof()) fail(ErrorCode::Config, "oracle spec: bad value '" + value + "' for " + key);
  return v;
}

}  // namespace

WorldSpec read_world_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open oracle spec " + path);
  WorldSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Config, "oracle spec: expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "nodes") spec.nodes = parse_number<int>(key, value);
    else if (key == "steps") spec.steps = parse_number<int>(key, value);
    else if (key == "rho_s") spec.rho_s = parse_number<double>(key, value);
    else if (key == "rho_t") spec.rho_t = parse_number<double>(key, value);
    else if (key == "mean") spec.mean = parse_number<double>(key, value);
    else if (key == "seed") spec.seed = parse_number<std::uint64_t>(key, value);
    else fail(ErrorCode::Config, "oracle spec: unknown key '" + key + "'");
  }
  return spec;
}

void write_world_spec(const std::string& path, const WorldSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << "nodes = " << spec.nodes << "\nsteps = " << spec.steps
      << "\nrho_s = " << format_double(spec.rho_s) << "\nrho_t = " << format_double(spec.rho_t)
      << "\nmean = " << format_double(spec.mean) << "\nseed = " << spec.seed << '\n';
}

// ---------------------------------------------------------------------------

namespace {

struct MixtureTerms {
  double log_prior;
  double log_cond;
  double log_mix;
};

MixtureTerms mixture_terms(const GaussianDensity& prior, const GaussianDensity& cond, double pi,
                           const Eigen::VectorXd& x) {
  const double lp = prior.log_pdf(x);
  const double lc = cond.log_pdf(x);
  const double a = pi < 1.0 ? std::log1p(-pi) + lp : -std::numeric_limits<double>::infinity();
  const double b = std::log(pi) + lc;
  const double hi = std::max(a, b);
  return {lp, lc, hi + std::log(std::exp(a - hi) + std::exp(b - hi))};
}

double cond_responsibility(const MixtureTerms& m, double pi) {
  return std::exp(std::log(pi) + m.log_cond - m.log_mix);
}

Eigen::VectorXd mixture_score(const GaussianDensity& prior, const GaussianDensity& cond, double pi,
                              const Eigen::VectorXd& x) {
  const MixtureTerms m = mixture_terms(prior, cond, pi, x);
  const double w_cond = cond_responsibility(m, pi);
  const double w_prior =
      pi < 1.0 ? std::exp(std::log1p(-pi) + m.log_prior - m.log_mix) : 0.0;
  return w_prior * prior.score(x) + w_cond * cond.score(x);
}

}  // namespace

ContaminatedScores make_contaminated_scores(const GaussianDensity& prior,
                                            const GaussianDensity& conditional, double pi_true) {
  require(pi_true > 0.0 && pi_true <= 1.0, "pi_true must lie in (0, 1]");
  require(prior.dim() == conditional.dim(), "prior and conditional dimensions differ");
  ContaminatedScores out;
  out.score_cond_contaminated = [prior, conditional, pi_true](const Eigen::VectorXd& x) {
    return mixture_score(prior, conditional, pi_true, x);
  };
  out.score_uncond = [prior](const Eigen::VectorXd& x) { return prior.score(x); };
  out.posterior_ratio = [prior, conditional, pi_true](const Eigen::VectorXd& x) {
    const MixtureTerms m = mixture_terms(prior, conditional, pi_true, x);
    return std::exp(m.log_mix - m.log_prior);
  };
  out.responsibility = [prior, conditional, pi_true](const Eigen::VectorXd& x) {
    return cond_responsibility(mixture_terms(prior, conditional, pi_true, x), pi_true);
  };
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd correlation_affinity(const Eigen::MatrixXd& cov, Eigen::Index n_nodes,
                                     Eigen::Index n_steps) {
  require(cov.rows() == n_nodes * n_steps && cov.cols() == cov.rows(),
          "covariance does not match grid shape");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    for (Eigen::Index j = 0; j < n_nodes; ++j) {
      double acc = 0.0;
      for (Eigen::Index t = 0; t < n_steps; ++t) {
        const Eigen::Index p = i * n_steps + t;
        const Eigen::Index q = j * n_steps + t;
        acc += std::abs(cov(p, q)) / std::sqrt(cov(p, p) * cov(q, q));
      }
      a(i, j) = acc / static_cast<double>(n_steps);
    }
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

OracleBackend::OracleBackend(const GaussianOracleWorld& world, const NoiseSchedule& sched,
                             double pi_true)
    : world_(world), pi_true_(pi_true) {
  require(pi_true > 0.0 && pi_true <= 1.0, "pi_true must lie in (0, 1]");
  const ConditionalMoments cm = world_.conditional_moments();
  const int k_max = sched.n_steps();
  prior_.reserve(static_cast<std::size_t>(k_max));
  cond_.reserve(static_cast<std::size_t>(k_max));
  for (int k = 1; k <= k_max; ++k) {
    const double ab = sched.alpha_bar(k);
    alpha_bar_.push_back(ab);
    prior_.push_back(noised(world_.mean(), world_.cov(), ab));
    cond_.push_back(noised(cm.mean, cm.cov, ab));
    prior_affinity_.push_back(correlation_affinity(prior_.back().cov(), world_.n_nodes(), world_.n_steps()));
    cond_affinity_.push_back(correlation_affinity(cond_.back().cov(), world_.n_nodes(), world_.n_steps()));
  }
}

Prediction OracleBackend::predict(const Eigen::MatrixXd& x_k, int k,
                                  const ConditioningContext& ctx) const {
  require(x_k.rows() == world_.n_nodes() && x_k.cols() == world_.n_steps(),
          "oracle backend: x_k shape does not match world");
  require(k >= 1 && k <= static_cast<int>(prior_.size()), "oracle backend: step out of range");
  const auto idx = static_cast<std::size_t>(k - 1);
  const Eigen::VectorXd x = flatten(x_k);
  Eigen::VectorXd score;
  const Eigen::MatrixXd* affinity;
  if (ctx.is_unconditional) {
    score = prior_[idx].score(x);
    affinity = &prior_affinity_[idx];
  } else {
    score = pi_true_ < 1.0 ? mixture_score(prior_[idx], cond_[idx], pi_true_, x) : cond_[idx].score(x);
    affinity = &cond_affinity_[idx];
  }
  const double s = std::sqrt(1.0 - alpha_bar_[idx]);
  return {unflatten(-s * score, world_.n_nodes(), world_.n_steps()), *affinity};
}

}  // namespace fence
