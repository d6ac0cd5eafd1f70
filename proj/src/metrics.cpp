#include "fence/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fence/error.hpp"

namespace fence {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_shapes(const TrafficGrid& a, const TrafficGrid& b, const MaskMatrix& m) {
  require(a.n_nodes() == b.n_nodes() && a.n_steps() == b.n_steps(),
          "prediction and truth differ in shape");
  require_same_shape(b, m);
}

struct Sums {
  double abs = 0.0, sq = 0.0, pct = 0.0;
  Eigen::Index n = 0, n_pct = 0;

  void add(double pred, double truth) {
    const double e = pred - truth;
    abs += std::abs(e);
    sq += e * e;
    ++n;
    if (std::abs(truth) >= kMapeFloor) {
      pct += std::abs(e) / std::abs(truth);
      ++n_pct;
    }
  }

  PointMetrics finish() const {
    PointMetrics m;
    m.n_evaluated = n;
    m.n_mape = n_pct;
    if (n == 0) {
      m.mae = m.rmse = m.mape = kNaN;
      return m;
    }
    m.mae = abs / static_cast<double>(n);
    m.rmse = std::sqrt(sq / static_cast<double>(n));
    m.mape = n_pct > 0 ? pct / static_cast<double>(n_pct) : kNaN;
    return m;
  }
};

}  // namespace

PointMetrics point_metrics(const TrafficGrid& pred, const TrafficGrid& truth,
                           const MaskMatrix& eval_mask) {
  check_shapes(pred, truth, eval_mask);
  Sums s;
  for (Eigen::Index i = 0; i < truth.n_nodes(); ++i) {
    for (Eigen::Index t = 0; t < truth.n_steps(); ++t) {
      if (eval_mask.observed(i, t)) s.add(pred(i, t), truth(i, t));
    }
  }
  require(s.n > 0, "no entries to evaluate");
  return s.finish();
}

std::vector<PointMetrics> per_node_metrics(const TrafficGrid& pred, const TrafficGrid& truth,
                                           const MaskMatrix& eval_mask) {
  check_shapes(pred, truth, eval_mask);
  std::vector<PointMetrics> out;
  for (Eigen::Index i = 0; i < truth.n_nodes(); ++i) {
    Sums s;
    for (Eigen::Index t = 0; t < truth.n_steps(); ++t) {
      if (eval_mask.observed(i, t)) s.add(pred(i, t), truth(i, t));
    }
    out.push_back(s.finish());
  }
  return out;
}

double empirical_quantile(const std::vector<double>& sorted, double level) {
  require(!sorted.empty(), "quantile of an empty sample");
  require(level >= 0.0 && level <= 1.0, "quantile level must lie in [0, 1]");
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double crps(std::vector<double> samples, double truth) {
  require(samples.size() >= 2, "CRPS needs at least two samples");
  require(std::isfinite(truth), "CRPS truth must be finite");
  for (double v : samples) require(std::isfinite(v), "CRPS samples must be finite");
  std::sort(samples.begin(), samples.end());
  double total = 0.0;
  for (int i = 1; i <= 19; ++i) {
    const double level = 0.05 * i;
    const double q = empirical_quantile(samples, level);
    const double indicator = truth < q ? 1.0 : 0.0;
    total += 2.0 * (level - indicator) * (truth - q);
  }
  return total / 19.0;
}

CrpsReport dataset_crps(const std::vector<TrafficGrid>& samples, const TrafficGrid& truth,
                        const MaskMatrix& eval_mask) {
  require(samples.size() >= 2, "CRPS needs at least two samples");
  for (const TrafficGrid& s : samples) check_shapes(s, truth, eval_mask);
  CrpsReport r;
  r.per_node = Eigen::VectorXd::Constant(truth.n_nodes(), kNaN);
  std::vector<double> draws(samples.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.n_nodes(); ++i) {
    double node_total = 0.0;
    Eigen::Index node_n = 0;
    for (Eigen::Index t = 0; t < truth.n_steps(); ++t) {
      if (!eval_mask.observed(i, t)) continue;
      for (std::size_t s = 0; s < samples.size(); ++s) draws[s] = samples[s](i, t);
      const double c = crps(draws, truth(i, t));
      node_total += c;
      total += c;
      ++node_n;
    }
    if (node_n > 0) r.per_node(i) = node_total / static_cast<double>(node_n);
    r.n_evaluated += node_n;
  }
  require(r.n_evaluated > 0, "no entries to evaluate");
  r.mean = total / static_cast<double>(r.n_evaluated);
  return r;
}

}  // namespace fence
