#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "fence/denoiser.hpp"

namespace fence {

struct NetworkConfig {
  int n_nodes = 0;
  int n_steps = 0;        // window length T
  int channels = 16;      // d
  int heads = 2;
  int layers = 2;
  int step_embed_dim = 128;
  int ff_mult = 2;

  void validate() const;
};

/// Which training stages a set of weights has been through.
enum class TrainingStage { Untrained = 0, Unconditional = 1, Conditional = 2 };

/// One training example: a clean window, its noised version at step k, the
/// drawn noise, the context and the entries that count towards the loss.
struct TrainingExample {
  Eigen::MatrixXd x_k;
  int k = 1;
  Eigen::MatrixXd noise;
  ConditioningContext ctx;
  Eigen::MatrixXd loss_mask;  // 1 = entry contributes to the loss
};

/// Small attention denoiser.
///
/// Each grid entry (i, t) carries a d-dimensional state initialised from the
/// input channels [x_k, x^o, M], a learnable node embedding, a learnable
/// time-slice embedding and a projected sinusoidal step embedding. Every
/// layer applies multi-head temporal attention (over t, per node), multi-head
/// spatial attention (over nodes, per t) and a tanh feed-forward block, each
/// with a residual connection. A linear head maps the state to eps.
///
/// Gradients are computed by an explicit backward pass.
class NeuralDenoiser : public DenoiserBackend {
 public:
  NeuralDenoiser() = default;
  static NeuralDenoiser initialized(const NetworkConfig& config, std::uint64_t seed);

  bool is_initialized() const { return !params_.empty(); }
  const NetworkConfig& config() const { return config_; }
  TrainingStage stage() const { return stage_; }
  void set_stage(TrainingStage stage) { stage_ = stage; }

  Prediction predict(const Eigen::MatrixXd& x_k, int k,
                     const ConditioningContext& ctx) const override;

  /// Mean over the batch of the masked mean squared noise error. When `grad`
  /// is non-null it receives d(loss)/d(param), one matrix per parameter.
  double loss(const std::vector<TrainingExample>& batch, std::vector<Eigen::MatrixXd>* grad) const;

  std::size_t parameter_count() const;
  const std::vector<std::string>& parameter_names() const { return names_; }
  const std::vector<Eigen::MatrixXd>& parameters() const { return params_; }
  std::vector<Eigen::MatrixXd>& mutable_parameters() { return params_; }
  Eigen::MatrixXd& parameter(const std::string& name);

  /// Zeroes the output projection (weights and bias).
  void zero_output_head();

  /// Binary checkpoint: "FNCE", u32 version, then named tensors
  /// (u32 name length, name bytes, u32 rank, u64 dims, little-endian f64
  /// values in row-major order). The architecture is stored as tensor
  /// "config".
  void save(const std::string& path) const;
  static NeuralDenoiser load(const std::string& path);

 private:
  struct Forward;

  void build_parameters();
  std::size_t index_of(const std::string& name) const;
  void forward(const Eigen::MatrixXd& x_k, int k, const ConditioningContext& ctx, Forward& fw,
               bool want_attention) const;
  void backward(const Forward& fw, const Eigen::MatrixXd& d_eps,
                std::vector<Eigen::MatrixXd>& grad) const;

  NetworkConfig config_;
  TrainingStage stage_ = TrainingStage::Untrained;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> params_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace fence
