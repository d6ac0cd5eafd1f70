#include "fence/denoiser.hpp"

namespace fence {

ConditioningContext ConditioningContext::conditional(const TrafficGrid& grid, const MaskMatrix& mask) {
  return {observed_part(grid, mask), mask, false};
}

ConditioningContext ConditioningContext::unconditional(Eigen::Index n_nodes, Eigen::Index n_steps) {
  return {TrafficGrid::zeros(n_nodes, n_steps), MaskMatrix::zeros(n_nodes, n_steps), true};
}

}  // namespace fence
