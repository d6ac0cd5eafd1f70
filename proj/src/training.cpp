#include "fence/training.hpp"

#include <cmath>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/rng.hpp"

namespace fence {

TrainConfig TrainConfig::unconditional_defaults() {
  TrainConfig c;
  c.epochs = 150;
  c.learning_rate = 2e-3;
  c.weight_decay = 1e-6;
  c.patience = 20;
  return c;
}

TrainConfig TrainConfig::conditional_defaults() {
  TrainConfig c;
  c.epochs = 80;
  c.learning_rate = 1e-3;
  c.weight_decay = 1e-5;
  c.patience = 10;
  return c;
}

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be positive");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
  require(weight_decay >= 0.0, "weight decay must be nonnegative");
  require(patience >= 1, "patience must be positive");
  require(batch_size >= 1, "batch size must be positive");
  require(remask_rate >= 0.0 && remask_rate <= 1.0, "remask rate must lie in [0, 1]");
  require(remask_patch >= 1, "remask patch must be positive");
  for (double m : lr_milestones) require(m > 0.0 && m <= 1.0, "lr milestones must lie in (0, 1]");
}

double scheduled_learning_rate(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (double frac : cfg.lr_milestones) {
    if (epoch >= static_cast<int>(std::floor(frac * cfg.epochs))) lr *= 0.1;
  }
  return lr;
}

namespace {

constexpr std::uint64_t kTrainStream = 0x545241494Eull;  // "TRAIN"
constexpr std::uint64_t kValStream = 0x56414Cull;        // "VAL"

struct Adam {
  std::vector<Eigen::MatrixXd> m, v;
  long step = 0;

  explicit Adam(const std::vector<Eigen::MatrixXd>& params) {
    for (const auto& p : params) {
      m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }

  // L2-coupled weight decay (gradient += wd * param), as in classic Adam.
  void update(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grad,
              double lr, double weight_decay) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Eigen::MatrixXd g = grad[p] + weight_decay * params[p];
      m[p] = b1 * m[p] + (1.0 - b1) * g;
      v[p] = b2 * v[p] + (1.0 - b2) * g.cwiseProduct(g);
      params[p].array() -= lr * (m[p].array() / c1) / ((v[p].array() / c2).sqrt() + eps);
    }
  }
};

MaskMatrix remask(const MaskMatrix& present, double rate, int patch, Rng& rng) {
  Eigen::MatrixXd m = present.entries();
  const Eigen::Index t_len = m.cols();
  const int p_len = static_cast<int>(std::min<Eigen::Index>(patch, t_len));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index start = 0; start < t_len; start += p_len) {
      if (rng.uniform() < rate) {
        for (Eigen::Index t = start; t < std::min<Eigen::Index>(start + p_len, t_len); ++t) m(i, t) = 0.0;
      }
    }
  }
  return MaskMatrix(std::move(m));
}

TrainingExample make_example(const Window& w, bool conditional, const NoiseSchedule& sched,
                             const TrainConfig& cfg, Rng& rng) {
  TrainingExample ex;
  ex.k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.n_steps())));
  ex.noise = standard_normal(w.grid.n_nodes(), w.grid.n_steps(), rng);
  ex.x_k = q_sample(w.grid.values(), ex.k, ex.noise, sched);
  ex.ctx = conditional
               ? ConditioningContext::conditional(w.grid, remask(w.mask, cfg.remask_rate, cfg.remask_patch, rng))
               : ConditioningContext::unconditional(w.grid.n_nodes(), w.grid.n_steps());
  ex.loss_mask = w.mask.entries();
  return ex;
}

double evaluate(const NeuralDenoiser& net, const std::vector<Window>& windows, bool conditional,
                const NoiseSchedule& sched, const TrainConfig& cfg) {
  Rng rng(cfg.seed, kValStream);
  std::vector<TrainingExample> batch;
  double total = 0.0;
  for (const Window& w : windows) {
    batch.assign(1, make_example(w, conditional, sched, cfg, rng));
    total += net.loss(batch, nullptr);
  }
  return total / static_cast<double>(windows.size());
}

TrainResult run_training(const NeuralDenoiser& init, const DatasetSplit& data,
                         const NoiseSchedule& sched, const TrainConfig& cfg, bool conditional,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  if (!init.is_initialized()) fail(ErrorCode::State, "network weights are not initialized");
  require(!data.train.empty(), "training split is empty");
  for (const auto* split : {&data.train, &data.validation}) {
    for (const Window& w : *split) {
      require(w.grid.n_nodes() == init.config().n_nodes && w.grid.n_steps() == init.config().n_steps,
              "training window shape does not match the network configuration");
    }
  }

  TrainResult result;
  result.model = init;
  NeuralDenoiser net = init;
  Adam adam(net.parameters());
  Rng rng(cfg.seed, kTrainStream);
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<Eigen::MatrixXd> grad;
  std::vector<TrainingExample> batch;
  long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    const double lr = scheduled_learning_rate(cfg, epoch);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t b = start; b < end; ++b) {
        batch.push_back(make_example(data.train[order[b]], conditional, sched, cfg, rng));
      }
      const double l = net.loss(batch, &grad);
      ++global_step;
      if (!std::isfinite(l)) {
        fail(ErrorCode::Divergence, "training diverged (loss " + std::to_string(l) + ") at epoch " +
                                        std::to_string(epoch) + ", step " + std::to_string(global_step));
      }
      adam.update(net.mutable_parameters(), grad, lr, cfg.weight_decay);
      epoch_loss += l;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);
    const double val = data.validation.empty() ? epoch_loss
                                               : evaluate(net, data.validation, conditional, sched, cfg);
    if (!std::isfinite(val)) {
      fail(ErrorCode::Divergence, "validation loss is not finite at epoch " + std::to_string(epoch));
    }
    result.train_loss.push_back(epoch_loss);
    result.validation_loss.push_back(val);
    if (on_epoch) on_epoch(epoch, epoch_loss, val);
    if (val < best) {
      best = val;
      since_best = 0;
      result.best_epoch = epoch;
      result.model = net;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }
  result.model.set_stage(conditional ? TrainingStage::Conditional : TrainingStage::Unconditional);
  return result;
}

}  // namespace

TrainResult train_unconditional(const NeuralDenoiser& init, const DatasetSplit& data,
                                const NoiseSchedule& sched, const TrainConfig& cfg,
                                const EpochCallback& on_epoch) {
  return run_training(init, data, sched, cfg, false, on_epoch);
}

TrainResult finetune_conditional(const NeuralDenoiser& init, const DatasetSplit& data,
                                 const NoiseSchedule& sched, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch) {
  std::vector<std::string> warnings;
  if (init.is_initialized() && init.stage() == TrainingStage::Untrained) {
    warnings.emplace_back(
        "conditional fine-tuning started from weights without unconditional pretraining");
  }
  TrainResult r = run_training(init, data, sched, cfg, true, on_epoch);
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  return r;
}

}  // namespace fence
