#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fence/error.hpp"
#include "fence/metrics.hpp"
#include "fence/rng.hpp"

using namespace fence;

namespace {

// Direct transcription of the quantile-loss average.
double reference_crps(std::vector<double> s, double z) {
  std::sort(s.begin(), s.end());
  double total = 0.0;
  for (int i = 1; i <= 19; ++i) {
    const double a = 0.05 * i;
    const double h = a * (static_cast<double>(s.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double q = s[lo] + (h - std::floor(h)) * (s[hi] - s[lo]);
    total += 2.0 * (a - (z < q ? 1.0 : 0.0)) * (z - q);
  }
  return total / 19.0;
}

}  // namespace

TEST_CASE("point metrics on two entries") {
  Eigen::MatrixXd p(1, 3), t(1, 3), m(1, 3);
  p << 1.0, 5.0, 100.0;
  t << 2.0, 2.0, 0.0;
  m << 1.0, 1.0, 0.0;
  const PointMetrics r = point_metrics(TrafficGrid(p), TrafficGrid(t), MaskMatrix(m));
  CHECK(r.n_evaluated == 2);
  CHECK(r.mae == 2.0);
  CHECK(r.rmse == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(r.mape == doctest::Approx(1.0).epsilon(1e-15));  // (0.5 + 1.5) / 2
}

TEST_CASE("hand-computed pair") {
  Eigen::MatrixXd p(1, 2), t(1, 2);
  p << 1.0, 4.0;
  t << 2.0, 2.0;
  const PointMetrics r = point_metrics(TrafficGrid(p), TrafficGrid(t), MaskMatrix::ones(1, 2));
  CHECK(std::abs(r.mae - 1.5) < 1e-12);
  CHECK(std::abs(r.rmse - std::sqrt(2.5)) < 1e-12);
  CHECK(std::abs(r.mape - 0.75) < 1e-12);
}

TEST_CASE("MAPE of 110 against 100") {
  const PointMetrics r = point_metrics(TrafficGrid(Eigen::MatrixXd::Constant(1, 1, 110.0)),
                                       TrafficGrid(Eigen::MatrixXd::Constant(1, 1, 100.0)), MaskMatrix::ones(1, 1));
  CHECK(r.mape == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(r.mae == 10.0);
  CHECK(r.rmse == 10.0);
}

TEST_CASE("zero-truth guard and empty evaluation") {
  Eigen::MatrixXd t(1, 2);
  t << 0.0, 0.5;
  const PointMetrics r = point_metrics(TrafficGrid(Eigen::MatrixXd::Ones(1, 2)), TrafficGrid(t), MaskMatrix::ones(1, 2));
  CHECK(r.n_mape == 0);
  CHECK(std::isnan(r.mape));
  CHECK(std::isfinite(r.mae));
  CHECK_THROWS_AS(point_metrics(TrafficGrid(t), TrafficGrid(t), MaskMatrix::zeros(1, 2)), Error);
  CHECK_THROWS_AS(point_metrics(TrafficGrid(t), TrafficGrid(t), MaskMatrix::ones(2, 2)), Error);
}

TEST_CASE("MAE never exceeds RMSE and masks are local") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd p(3, 5), t(3, 5), m(3, 5);
    for (int i = 0; i < 15; ++i) {
      p(i) = rng.normal() * 10.0;
      t(i) = rng.normal() * 10.0;
      m(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    m(0) = 1.0;
    const PointMetrics r = point_metrics(TrafficGrid(p), TrafficGrid(t), MaskMatrix(m));
    CHECK(r.mae <= r.rmse * (1.0 + 1e-15));
    Eigen::MatrixXd q = p;
    for (int i = 0; i < 15; ++i) {
      if (m(i) == 0.0) q(i) = 1e6;
    }
    const PointMetrics s = point_metrics(TrafficGrid(q), TrafficGrid(t), MaskMatrix(m));
    CHECK(s.mae == r.mae);
    CHECK(s.rmse == r.rmse);
  }
}

TEST_CASE("per-node metrics") {
  Eigen::MatrixXd p(2, 2), t(2, 2), m(2, 2);
  p << 1, 2, 3, 4;
  t << 2, 2, 3, 4;
  m << 1, 1, 0, 0;
  const std::vector<PointMetrics> r = per_node_metrics(TrafficGrid(p), TrafficGrid(t), MaskMatrix(m));
  REQUIRE(r.size() == 2);
  CHECK(r[0].mae == 0.5);
  CHECK(std::isnan(r[1].mae));
}

TEST_CASE("empirical quantile") {
  const std::vector<double> s = {1.0, 2.0, 3.0, 4.0};
  CHECK(empirical_quantile(s, 0.0) == 1.0);
  CHECK(empirical_quantile(s, 1.0) == 4.0);
  CHECK(empirical_quantile(s, 0.5) == 2.5);
  CHECK(empirical_quantile(s, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
}

TEST_CASE("CRPS of a point mass") {
  CHECK(crps({3.0, 3.0, 3.0}, 3.0) == 0.0);
  // Every quantile is 0; truth 1 gives (2/19) sum a = 1.
  CHECK(crps({0.0, 0.0}, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(crps({1.0}, 1.0), Error);
}

TEST_CASE("CRPS of a standard normal ensemble") {
  Rng rng(99);
  std::vector<double> s(100000);
  for (double& v : s) v = rng.normal();
  // Quantile-grid value with exact normal quantiles, frozen from a
  // high-precision evaluation.
  CHECK(crps(s, 0.0) == doctest::Approx(0.242711).epsilon(0.01));
}

TEST_CASE("CRPS matches the reference and is translation equivariant") {
  Rng rng(7);
  double worst = 0.0, worst_shift = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n);
    for (double& v : s) v = rng.normal() * 3.0;
    const double z = rng.normal() * 3.0;
    const double c = crps(s, z);
    worst = std::max(worst, std::abs(c - reference_crps(s, z)));
    std::vector<double> shifted = s;
    for (double& v : shifted) v += 17.25;
    worst_shift = std::max(worst_shift, std::abs(crps(shifted, z + 17.25) - c));
    CHECK(c >= 0.0);
  }
  CHECK(worst < 1e-9);
  CHECK(worst_shift < 1e-10);
}

TEST_CASE("dataset CRPS") {
  std::vector<TrafficGrid> samples;
  for (double v : {0.0, 0.0}) samples.emplace_back(Eigen::MatrixXd::Constant(2, 2, v));
  Eigen::MatrixXd t = Eigen::MatrixXd::Ones(2, 2);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = m(0, 1) = 1.0;
  const CrpsReport r = dataset_crps(samples, TrafficGrid(t), MaskMatrix(m));
  CHECK(r.n_evaluated == 2);
  CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.per_node(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::isnan(r.per_node(1)));
}
