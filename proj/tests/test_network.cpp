#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/gaussian.hpp"
#include "fence/network.hpp"
#include "fence/rng.hpp"
#include "fence/training.hpp"

using namespace fence;

namespace {

NetworkConfig tiny() {
  NetworkConfig c;
  c.n_nodes = 2;
  c.n_steps = 4;
  c.channels = 8;
  c.heads = 2;
  c.layers = 2;
  c.step_embed_dim = 8;
  c.ff_mult = 2;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fence_net_" + name)).string();
}

std::vector<TrainingExample> sample_batch(Rng& rng) {
  std::vector<TrainingExample> batch;
  for (int b = 0; b < 2; ++b) {
    TrainingExample ex;
    ex.x_k = standard_normal(2, 4, rng);
    ex.noise = standard_normal(2, 4, rng);
    ex.k = 3 + 7 * b;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 4);
    m(0, 1) = m(1, 2) = m(1, 3) = 1.0;
    ex.ctx = b == 0 ? ConditioningContext::conditional(TrafficGrid(standard_normal(2, 4, rng)), MaskMatrix(m))
                    : ConditioningContext::unconditional(2, 4);
    ex.loss_mask = Eigen::MatrixXd::Ones(2, 4);
    ex.loss_mask(1, 0) = 0.0;
    batch.push_back(std::move(ex));
  }
  return batch;
}

DatasetSplit gaussian_split(int nodes, int window, int length, std::uint64_t seed) {
  const GaussianOracleWorld w = make_gaussian_world(WorldSpec{nodes, length, 0.5, 0.8, 0.0, seed});
  Rng rng(seed);
  RawSeries raw{w.sample(rng).values(), MaskMatrix::ones(nodes, length)};
  SplitOptions opt;
  opt.window = window;
  opt.train_stride = 1;
  return make_dataset_split(raw, opt);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(tiny().validate());
  NetworkConfig c = tiny();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny();
  c.step_embed_dim = 7;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny();
  c.n_nodes = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("uninitialized network refuses to run") {
  const NeuralDenoiser net;
  CHECK(!net.is_initialized());
  try {
    (void)net.predict(Eigen::MatrixXd::Zero(2, 4), 1, ConditioningContext::unconditional(2, 4));
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::State);
  }
  CHECK_THROWS_AS(net.save(temp_path("never.fnce")), Error);
}

TEST_CASE("zeroed head predicts zero noise") {
  NeuralDenoiser net = NeuralDenoiser::initialized(tiny(), 1);
  net.zero_output_head();
  Rng rng(2);
  const Prediction p = net.predict(standard_normal(2, 4, rng), 5, ConditioningContext::unconditional(2, 4));
  CHECK(p.eps.isZero(0.0));
}

TEST_CASE("attention summary is row-stochastic") {
  const NeuralDenoiser net = NeuralDenoiser::initialized(tiny(), 3);
  Rng rng(4);
  const Prediction p = net.predict(standard_normal(2, 4, rng), 9, ConditioningContext::unconditional(2, 4));
  REQUIRE(p.attn.has_value());
  CHECK(p.attn->rows() == 2);
  CHECK(p.attn->cols() == 2);
  CHECK((p.attn->array() >= 0.0).all());
  CHECK(p.attn->rowwise().sum().isApprox(Eigen::VectorXd::Ones(2), 1e-12));
  CHECK(p.eps.allFinite());
}

TEST_CASE("predictions are deterministic and shape-checked") {
  const NeuralDenoiser net = NeuralDenoiser::initialized(tiny(), 3);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  const auto ctx = ConditioningContext::unconditional(2, 4);
  CHECK(net.predict(x, 7, ctx).eps == net.predict(x, 7, ctx).eps);
  CHECK_THROWS_AS(net.predict(Eigen::MatrixXd::Zero(3, 4), 7, ctx), Error);
}

TEST_CASE("analytic gradients match central differences") {
  NeuralDenoiser net = NeuralDenoiser::initialized(tiny(), 11);
  // Larger head weights keep interior gradients well above round-off.
  Rng rng(12);
  for (double& v : net.parameter("output.weight").reshaped()) v = 0.5 * rng.normal();
  const std::vector<TrainingExample> batch = sample_batch(rng);
  std::vector<Eigen::MatrixXd> grad;
  net.loss(batch, &grad);
  REQUIRE(grad.size() == net.parameters().size());

  double worst = 0.0;
  std::string worst_name;
  const double h = 1e-5;
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    Eigen::MatrixXd& m = net.mutable_parameters()[p];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = net.loss(batch, nullptr);
      m.data()[i] = saved - h;
      const double down = net.loss(batch, nullptr);
      m.data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double g = grad[p].data()[i];
      const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_name = net.parameter_names()[p];
      }
    }
  }
  INFO("worst parameter: " << worst_name);
  CHECK(worst < 1e-4);
}

TEST_CASE("loss ignores entries outside the loss mask") {
  const NeuralDenoiser net = NeuralDenoiser::initialized(tiny(), 5);
  Rng rng(6);
  std::vector<TrainingExample> batch = sample_batch(rng);
  const double base = net.loss(batch, nullptr);
  batch[0].noise(1, 0) += 100.0;
  CHECK(net.loss(batch, nullptr) == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("checkpoint round trip") {
  NeuralDenoiser net = NeuralDenoiser::initialized(tiny(), 21);
  net.set_stage(TrainingStage::Conditional);
  const std::string p = temp_path("rt.fnce");
  net.save(p);
  const NeuralDenoiser back = NeuralDenoiser::load(p);
  CHECK(back.stage() == TrainingStage::Conditional);
  CHECK(back.config().channels == 8);
  CHECK(back.parameter_names() == net.parameter_names());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) CHECK(back.parameters()[i] == net.parameters()[i]);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  const auto ctx = ConditioningContext::unconditional(2, 4);
  CHECK(back.predict(x, 4, ctx).eps == net.predict(x, 4, ctx).eps);

  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE";
  }
  try {
    NeuralDenoiser::load(p);
    FAIL("expected invalid input");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidInput);
  }
  std::filesystem::remove(p);
  CHECK_THROWS_AS(NeuralDenoiser::load(p), Error);
}

TEST_CASE("learning rate schedule") {
  TrainConfig c = TrainConfig::unconditional_defaults();
  CHECK(c.epochs == 150);
  CHECK(c.learning_rate == 2e-3);
  CHECK(c.weight_decay == 1e-6);
  CHECK(c.patience == 20);
  CHECK(scheduled_learning_rate(c, 0) == 2e-3);
  CHECK(scheduled_learning_rate(c, 111) == 2e-3);
  CHECK(scheduled_learning_rate(c, 112) == doctest::Approx(2e-4).epsilon(1e-14));
  CHECK(scheduled_learning_rate(c, 135) == doctest::Approx(2e-5).epsilon(1e-14));
  const TrainConfig f = TrainConfig::conditional_defaults();
  CHECK(f.epochs == 80);
  CHECK(f.learning_rate == 1e-3);
  CHECK(f.weight_decay == 1e-5);
  CHECK(f.patience == 10);
}

TEST_CASE("training reduces the loss and keeps the best epoch") {
  const DatasetSplit data = gaussian_split(2, 4, 200, 3);
  const NoiseSchedule s = quadratic_schedule(20, 1e-4, 0.5);
  NetworkConfig nc = tiny();
  const NeuralDenoiser init = NeuralDenoiser::initialized(nc, 1);
  TrainConfig cfg = TrainConfig::unconditional_defaults();
  cfg.epochs = 12;
  cfg.batch_size = 8;
  cfg.remask_patch = 2;
  int calls = 0;
  const TrainResult r = train_unconditional(init, data, s, cfg, [&](int, double tl, double vl) {
    ++calls;
    CHECK(std::isfinite(tl));
    CHECK(std::isfinite(vl));
  });
  CHECK(calls == static_cast<int>(r.train_loss.size()));
  CHECK(r.model.stage() == TrainingStage::Unconditional);
  REQUIRE(r.best_epoch >= 0);
  CHECK(r.validation_loss[static_cast<std::size_t>(r.best_epoch)] ==
        *std::min_element(r.validation_loss.begin(), r.validation_loss.end()));
  CHECK(r.train_loss.back() < r.train_loss.front());
  CHECK(r.warnings.empty());

  TrainConfig fc = TrainConfig::conditional_defaults();
  fc.epochs = 3;
  fc.batch_size = 8;
  fc.remask_patch = 2;
  const TrainResult ft = finetune_conditional(r.model, data, s, fc);
  CHECK(ft.model.stage() == TrainingStage::Conditional);
  CHECK(ft.warnings.empty());

  const TrainResult cold = finetune_conditional(init, data, s, fc);
  REQUIRE(cold.warnings.size() == 1);
  CHECK(cold.warnings[0].find("pretraining") != std::string::npos);

  try {
    train_unconditional(NeuralDenoiser{}, data, s, cfg);
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::State);
  }
}

TEST_CASE("training is reproducible") {
  const DatasetSplit data = gaussian_split(2, 4, 120, 9);
  const NoiseSchedule s = quadratic_schedule(20, 1e-4, 0.5);
  TrainConfig cfg = TrainConfig::unconditional_defaults();
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  const NeuralDenoiser init = NeuralDenoiser::initialized(tiny(), 2);
  const TrainResult a = train_unconditional(init, data, s, cfg);
  const TrainResult b = train_unconditional(init, data, s, cfg);
  CHECK(a.train_loss == b.train_loss);
  for (std::size_t i = 0; i < a.model.parameters().size(); ++i) CHECK(a.model.parameters()[i] == b.model.parameters()[i]);
}
