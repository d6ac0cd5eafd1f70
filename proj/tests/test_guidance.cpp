#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/guidance.hpp"
#include "fence/rng.hpp"

using namespace fence;

namespace {

GuidanceConfig paper() { return GuidanceConfig{}; }

// Straight-line per-node update used as the reference.
Eigen::VectorXd reference_update(const Eigen::VectorXd& logp, double tau, double delta, double sigma2,
                                 const Eigen::MatrixXd& x, const Eigen::MatrixXd& mc, const Eigen::MatrixXd& mu) {
  Eigen::VectorXd out = logp;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double dc = 0.0, du = 0.0;
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      dc += (x(i, t) - mc(i, t)) * (x(i, t) - mc(i, t));
      du += (x(i, t) - mu(i, t)) * (x(i, t) - mu(i, t));
    }
    out(i) = logp(i) - tau / (2.0 * sigma2) * (dc - du) - delta;
  }
  return out;
}

}  // namespace

TEST_CASE("delta calibration") {
  // ln(4/3) / 10, frozen from an arbitrary-precision evaluation
  CHECK(calibrate_delta(paper(), 50) == doctest::Approx(0.028768207245178092744).epsilon(1e-15));
  GuidanceConfig g = paper();
  g.pi = 1.0 / g.lambda_ref;
  CHECK(std::abs(calibrate_delta(g, 50)) < 1e-15);
  g.pi = 0.9;  // lambda_ref > 1 / pi
  CHECK(calibrate_delta(g, 50) < 0.0);
  g = paper();
  g.lambda_ref = 1.0;
  CHECK_THROWS_AS(calibrate_delta(g, 50), Error);
  g.lambda_ref = 0.5;
  CHECK_THROWS_AS(calibrate_delta(g, 50), Error);
}

TEST_CASE("tau calibration") {
  CHECK(calibrate_tau(paper(), 0.028768207245178092744, 1.0) ==
        doctest::Approx(0.0057536414490356185).epsilon(1e-15));
  CHECK(calibrate_tau(paper(), 0.0, 1.0) == 0.0);
  CHECK(calibrate_tau(paper(), -0.03, 0.7) == calibrate_tau(paper(), 0.03, 0.7));
  CHECK_THROWS_AS(calibrate_tau(paper(), 0.03, 0.0), Error);
}

TEST_CASE("tracker calibration reads sigma^2 at round(t1 K)") {
  const NoiseSchedule s = quadratic_schedule(50, 1e-4, 0.5);
  CHECK(step_for_time(0.5, 50) == 25);
  CHECK(step_for_time(1.0, 50) == 50);
  CHECK(step_for_time(0.001, 50) == 1);
  const PosteriorTracker t = PosteriorTracker::calibrated(4, paper(), s);
  CHECK(t.log_posterior.isZero(0.0));
  CHECK(t.delta == doctest::Approx(0.028768207245178092744).epsilon(1e-15));
  CHECK(t.tau == doctest::Approx(0.00066242036758393875).epsilon(1e-12));
  const NoiseSchedule sb = quadratic_schedule(50, 1e-4, 0.5, VarianceMode::Beta);
  CHECK(PosteriorTracker::calibrated(4, paper(), sb).tau == doctest::Approx(0.00071063290567862217).epsilon(1e-12));
  GuidanceConfig one = paper();
  one.pi = 1.0;
  const PosteriorTracker inert = PosteriorTracker::calibrated(4, one, s);
  CHECK(inert.tau == 0.0);
  CHECK(inert.delta == 0.0);
}

TEST_CASE("guidance scale law") {
  CHECK(guidance_scale(0.0, 0.5, 10.0) == 2.0);
  CHECK(guidance_scale(std::log(0.6), 0.5, 10.0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(guidance_scale(std::log(0.6), 0.5, 4.0) == 4.0);
  for (double p : {1e-3, 0.2, 1.0, 7.0, 1e6}) CHECK(guidance_scale(std::log(p), 1.0, 10.0) == 1.0);
  CHECK(guidance_scale_from_ratio(3.0, 1.0) == 1.0);
  for (double p : {1e-9, 0.1, 0.3, 0.5}) CHECK(guidance_scale(std::log(p), 0.5, 10.0) == 10.0);
  CHECK(guidance_scale(-1e300, 0.5, 10.0) == 10.0);
  CHECK(guidance_scale(1e300, 0.5, 10.0) == doctest::Approx(1.0).epsilon(1e-12));  // log p capped at 30
  for (double pi : {0.1, 0.3, 0.5, 0.8}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double p = 1.0 - pi + 0.01; p <= 50.0; p += 0.01) {
      const double l = guidance_scale_from_ratio(p, pi);
      REQUIRE(l < prev);
      prev = l;
    }
    CHECK(guidance_scale_from_ratio(1e9, pi) == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("posterior update") {
  const NoiseSchedule s({0.3, 0.5}, std::vector<double>{0.5, 0.5});
  PosteriorTracker t;
  t.log_posterior = Eigen::VectorXd::Zero(1);
  SUBCASE("plug-in value") {
    t.tau = 1.0;
    t.delta = 0.0;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 2), mc(1, 2), mu(1, 2);
    mc << 1, 0;  // |x - mc|^2 = 1
    mu << 1, 1;  // |x - mu|^2 = 2
    CHECK(posterior_update(t, x, mc, mu, 2, s).log_posterior(0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("equal means accumulate -delta") {
    t.tau = 0.7;
    t.delta = 0.03;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(1, 2), m = Eigen::MatrixXd::Random(1, 2);
    for (int i = 0; i < 10; ++i) t = posterior_update(t, x, m, m, 2, s);
    CHECK(t.log_posterior(0) == doctest::Approx(-0.3).epsilon(1e-14));
  }
  SUBCASE("zero variance step is rejected") {
    const NoiseSchedule z({0.3, 0.5}, std::vector<double>{0.0, 0.5});
    const Eigen::MatrixXd m = Eigen::MatrixXd::Zero(1, 2);
    CHECK_THROWS_AS(posterior_update(t, m, m, m, 1, z), Error);
  }
}

TEST_CASE("posterior update matches the reference on random inputs") {
  const NoiseSchedule s = quadratic_schedule(50, 1e-4, 0.5);
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(5));
    const int tl = 1 + static_cast<int>(rng.below(6));
    const int k = 2 + static_cast<int>(rng.below(49));
    PosteriorTracker t;
    t.log_posterior = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) t.log_posterior(i) = rng.normal();
    t.tau = rng.uniform();
    t.delta = rng.normal() * 0.05;
    Eigen::MatrixXd x(n, tl), mc(n, tl), mu(n, tl);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < tl; ++j) {
        x(i, j) = rng.normal();
        mc(i, j) = rng.normal();
        mu(i, j) = rng.normal();
      }
    }
    const Eigen::VectorXd got = posterior_update(t, x, mc, mu, k, s).log_posterior;
    const Eigen::VectorXd want = reference_update(t.log_posterior, t.tau, t.delta, s.sigma2(k), x, mc, mu);
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("global update is the node average of per-node updates") {
  const NoiseSchedule s = quadratic_schedule(50, 1e-4, 0.5);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 7), mc = Eigen::MatrixXd::Random(5, 7),
                        mu = Eigen::MatrixXd::Random(5, 7);
  PosteriorTracker t = PosteriorTracker::calibrated(5, paper(), s);
  const double global = global_posterior_update(0.0, t.tau, t.delta, x, mc, mu, s.sigma2(30));
  CHECK(global == doctest::Approx(posterior_update(t, x, mc, mu, 30, s).log_posterior.mean()).epsilon(1e-13));
}

TEST_CASE("combine scores") {
  const Eigen::MatrixXd eu = Eigen::MatrixXd::Random(3, 4), ec = Eigen::MatrixXd::Random(3, 4);
  CHECK(combine_scores(eu, ec, Eigen::VectorXd::Ones(3)).isApprox(ec, 1e-15));
  CHECK(combine_scores(eu, ec, Eigen::VectorXd::Zero(3)) == eu);
  CHECK(combine_scores(Eigen::MatrixXd::Zero(3, 4), ec, Eigen::VectorXd::Constant(3, 2.0)).isApprox(2.0 * ec));
  Eigen::VectorXd l(3);
  l << 0.2, 1.7, -0.4;
  const Eigen::MatrixXd avg = 0.5 * (combine_scores(eu, ec, l) + combine_scores(eu, ec, Eigen::VectorXd::Ones(3) - l));
  CHECK(avg.isApprox(combine_scores(eu, ec, Eigen::VectorXd::Constant(3, 0.5)), 1e-14));
  CHECK_THROWS_AS(combine_scores(eu, ec, Eigen::VectorXd::Ones(2)), Error);
  CHECK_THROWS_AS(combine_scores(eu, Eigen::MatrixXd::Zero(3, 3), l), Error);
}

TEST_CASE("guidance gradient norm") {
  const NoiseSchedule s = quadratic_schedule(50, 1e-4, 0.5);
  const Eigen::MatrixXd e = Eigen::MatrixXd::Random(3, 4);
  CHECK(guidance_gradient_norm(e, e, 10, s).isZero(0.0));
  Eigen::MatrixXd d = e;
  d(1, 2) += 0.3;
  const Eigen::VectorXd g = guidance_gradient_norm(e, d, 10, s);
  CHECK(g(1) == doctest::Approx(0.3 / std::sqrt(1.0 - s.alpha_bar(10))).epsilon(1e-12));
  CHECK(g(0) == 0.0);
  Eigen::MatrixXd p = d;
  p.col(0).swap(p.col(3));
  Eigen::MatrixXd q = e;
  q.col(0).swap(q.col(3));
  CHECK(guidance_gradient_norm(q, p, 10, s).isApprox(g, 1e-15));
}

TEST_CASE("guidance config validation") {
  GuidanceConfig g;
  CHECK_NOTHROW(g.validate());
  g.pi = 0.0;
  CHECK_THROWS_AS(g.validate(), Error);
  g = GuidanceConfig{};
  g.lambda_max = 0.5;
  CHECK_THROWS_AS(g.validate(), Error);
  g = GuidanceConfig{};
  g.t0 = 1.0;
  CHECK_THROWS_AS(g.validate(), Error);
}
