#pragma once

#include <Eigen/Dense>

#include <vector>

#include "fence/grid.hpp"

namespace fence {

struct PointMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  Eigen::Index n_evaluated = 0;
  Eigen::Index n_mape = 0;  // entries that passed the zero-truth guard
};

/// Entries with |truth| below this are left out of MAPE.
inline constexpr double kMapeFloor = 1.0;

/// Metrics over entries where `eval_mask` is 1. MAPE is a fraction (0.1 for
/// 10%) and is NaN when every evaluated truth falls under the floor.
PointMetrics point_metrics(const TrafficGrid& pred, const TrafficGrid& truth,
                           const MaskMatrix& eval_mask);

/// Linear-interpolation quantile of an ascending sample (the "type 7" rule).
double empirical_quantile(const std::vector<double>& sorted, double level);

/// (1/19) sum_i 2 * QL_{0.05 i}(q_i, truth) with q_i the empirical quantiles
/// of `samples`. Needs at least two samples.
double crps(std::vector<double> samples, double truth);

struct CrpsReport {
  double mean = 0.0;
  Eigen::VectorXd per_node;  // NaN for nodes with nothing evaluated
  Eigen::Index n_evaluated = 0;
};

/// CRPS averaged over entries where `eval_mask` is 1; every grid in
/// `samples` supplies one draw per entry.
CrpsReport dataset_crps(const std::vector<TrafficGrid>& samples, const TrafficGrid& truth,
                        const MaskMatrix& eval_mask);

/// Per-node MAE/RMSE/MAPE; rows with nothing evaluated hold NaN.
std::vector<PointMetrics> per_node_metrics(const TrafficGrid& pred, const TrafficGrid& truth,
                                           const MaskMatrix& eval_mask);

}  // namespace fence
