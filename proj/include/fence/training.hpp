#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fence/grid.hpp"
#include "fence/network.hpp"

namespace fence {

class NoiseSchedule;

struct TrainConfig {
  int epochs = 150;
  double learning_rate = 2e-3;
  double weight_decay = 1e-6;
  int patience = 20;
  int batch_size = 16;
  /// Learning rate is multiplied by 0.1 at each of these fractions of
  /// `epochs`.
  std::vector<double> lr_milestones = {0.75, 0.9};
  /// Probability that an observed (node, patch) pair is hidden when building
  /// conditional training contexts.
  double remask_rate = 0.5;
  int remask_patch = 12;
  std::uint64_t seed = 0;

  static TrainConfig unconditional_defaults();
  static TrainConfig conditional_defaults();
  void validate() const;
};

struct TrainResult {
  NeuralDenoiser model;  // weights from the best validation epoch
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = -1;
  bool stopped_early = false;
  std::vector<std::string> warnings;
};

/// Called after each epoch with (epoch, train loss, validation loss).
using EpochCallback = std::function<void(int, double, double)>;

/// Stage 1: fit eps with unconditional contexts only.
TrainResult train_unconditional(const NeuralDenoiser& init, const DatasetSplit& data,
                                const NoiseSchedule& sched, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {});

/// Stage 2: continue from stage-1 weights with conditional contexts built by
/// re-masking observed training entries in temporal patches. Starting from
/// untrained weights is allowed and recorded as a warning.
TrainResult finetune_conditional(const NeuralDenoiser& init, const DatasetSplit& data,
                                 const NoiseSchedule& sched, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch = {});

/// Learning rate in effect during `epoch` (0-based).
double scheduled_learning_rate(const TrainConfig& cfg, int epoch);

}  // namespace fence
