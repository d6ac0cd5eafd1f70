#pragma once

#include <Eigen/Dense>

#include <optional>

#include "fence/grid.hpp"

namespace fence {

/// Conditioning input of the denoiser. The unconditional context keeps the
/// grid shape but carries no observations; structural priors (node and time
/// embeddings) live in the backend and are applied in both cases.
struct ConditioningContext {
  TrafficGrid observed;  // x^o = x (.) M
  MaskMatrix mask;
  bool is_unconditional = false;

  static ConditioningContext conditional(const TrafficGrid& grid, const MaskMatrix& mask);
  static ConditioningContext unconditional(Eigen::Index n_nodes, Eigen::Index n_steps);
};

struct Prediction {
  Eigen::MatrixXd eps;                 // N x T predicted noise
  std::optional<Eigen::MatrixXd> attn;  // N x N row-stochastic node affinity
};

/// Noise estimator eps(x_k, k, context). Implementations are immutable after
/// construction and `predict` is safe to call concurrently.
class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;
  virtual Prediction predict(const Eigen::MatrixXd& x_k, int k,
                             const ConditioningContext& ctx) const = 0;
};

}  // namespace fence
