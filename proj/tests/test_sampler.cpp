#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/gaussian.hpp"
#include "fence/rng.hpp"
#include "fence/sampler.hpp"

using namespace fence;

namespace {

struct Fixture {
  NoiseSchedule sched = quadratic_schedule(50, 1e-4, 0.5);
  GaussianOracleWorld world = make_gaussian_world(WorldSpec{4, 6, 0.6, 0.8, 0.0, 0});
  TrafficGrid truth;
  MaskMatrix mask;
  std::unique_ptr<OracleBackend> cond;
  std::unique_ptr<OracleBackend> uncond;

  explicit Fixture(double pi_true = 1.0) {
    Rng rng(1);
    truth = world.sample(rng);
    Eigen::MatrixXd m = Eigen::MatrixXd::Ones(4, 6);
    m.row(2).setZero();
    m(0, 3) = 0.0;
    mask = MaskMatrix(m);
    cond = std::make_unique<OracleBackend>(world.with_observations(truth, mask), sched, pi_true);
    uncond = std::make_unique<OracleBackend>(world, sched);
  }

  ImputationResult run(const ImputeConfig& cfg) const {
    return impute(*cond, *uncond, truth, mask, sched, cfg);
  }
};

std::string read_file(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fence_sampler_" + name)).string();
}

}  // namespace

TEST_CASE("trace covers every step and node") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 1;
  const ImputationResult r = f.run(cfg);
  REQUIRE(r.traces.size() == 200);
  CHECK(r.traces.front().k == 50);
  CHECK(r.traces.back().k == 1);
  CHECK(r.traces.front().log_posterior == 0.0);
  CHECK(r.traces.front().lambda == doctest::Approx(2.0).epsilon(1e-14));
  for (const TraceRecord& t : r.traces) {
    CHECK(t.lambda >= 1.0);
    CHECK(t.lambda <= 10.0);
    CHECK(std::isfinite(t.guidance_norm));
  }
}

TEST_CASE("fixed scale is constant in the trace") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 2;
  cfg.guidance.mode = GuidanceMode::FixedCfg;
  cfg.guidance.fixed_lambda = 1.7;
  const ImputationResult r = f.run(cfg);
  CHECK(r.traces.size() == 400);
  for (const TraceRecord& t : r.traces) CHECK(t.lambda == 1.7);
}

TEST_CASE("global and node aggregation") {
  const Fixture f(0.3);
  ImputeConfig cfg;
  cfg.n_samples = 1;
  cfg.guidance.aggregation = Aggregation::Global;
  const ImputationResult g = f.run(cfg);
  for (std::size_t i = 0; i < g.traces.size(); i += 4) {
    for (std::size_t j = 1; j < 4; ++j) CHECK(g.traces[i + j].lambda == g.traces[i].lambda);
  }
  cfg.guidance.aggregation = Aggregation::Node;
  const ImputationResult n = f.run(cfg);
  bool differs = false;
  for (std::size_t i = 0; i < n.traces.size(); i += 4) {
    for (std::size_t j = 1; j < 4; ++j) differs |= n.traces[i + j].lambda != n.traces[i].lambda;
    for (int j = 0; j < 4; ++j) CHECK(n.traces[i + static_cast<std::size_t>(j)].cluster_id == j);
  }
  CHECK(differs);
}

TEST_CASE("reruns are byte-identical") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 3;
  cfg.seed = 42;
  const std::string a = temp_path("a.csv"), b = temp_path("b.csv"), sa = temp_path("sa.csv"),
                    sb = temp_path("sb.csv");
  emit_trace(f.run(cfg), a, sa);
  emit_trace(f.run(cfg), b, sb);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(sa) == read_file(sb));
  CHECK(read_file(a).rfind("k,node,lambda,log_posterior,guidance_norm,cluster_id\n", 0) == 0);

  const std::vector<TrafficGrid> back = read_samples_csv(sa);
  const ImputationResult r = f.run(cfg);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK((back[i].values() - r.samples[i].values()).cwiseAbs().maxCoeff() < 1e-12);

  const std::string sum = temp_path("sum.csv");
  summarize_trace(a, sum);
  std::istringstream lines(read_file(sum));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "k,mean_lambda,mean_guidance_norm,mean_log_posterior");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 50);
  for (const auto& p : {a, b, sa, sb, sum}) std::filesystem::remove(p);
}

TEST_CASE("different seeds give different samples") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 1;
  cfg.seed = 1;
  const ImputationResult a = f.run(cfg);
  cfg.seed = 2;
  CHECK(!(a.samples[0] == f.run(cfg).samples[0]));
}

TEST_CASE("mode identities") {
  const Fixture f(0.4);
  ImputeConfig cfg;
  cfg.n_samples = 2;
  cfg.guidance.mode = GuidanceMode::FixedCfg;
  cfg.guidance.fixed_lambda = 0.0;
  const ImputationResult zero = f.run(cfg);
  cfg.guidance.mode = GuidanceMode::None;
  const ImputationResult none = f.run(cfg);
  for (std::size_t i = 0; i < 2; ++i) CHECK(zero.samples[i] == none.samples[i]);

  // pi = 1 keeps lambda at exactly 1, which is plain conditional sampling.
  cfg.guidance.mode = GuidanceMode::Fence;
  cfg.guidance.pi = 1.0;
  const ImputationResult fence1 = f.run(cfg);
  cfg.guidance.mode = GuidanceMode::FixedCfg;
  cfg.guidance.fixed_lambda = 1.0;
  const ImputationResult cfg1 = f.run(cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK((fence1.samples[i].values() - cfg1.samples[i].values()).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (const TraceRecord& t : fence1.traces) CHECK(t.lambda == 1.0);
}

TEST_CASE("ensemble mean and thread independence") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 6;
  cfg.seed = 7;
  cfg.threads = 1;
  const ImputationResult one = f.run(cfg);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(4, 6);
  for (const TrafficGrid& s : one.samples) mean += s.values();
  mean /= 6.0;
  CHECK((one.mean_imputation.values() - mean).cwiseAbs().maxCoeff() < 1e-14);
  cfg.threads = 4;
  const ImputationResult four = f.run(cfg);
  for (std::size_t i = 0; i < 6; ++i) CHECK(one.samples[i] == four.samples[i]);
  CHECK(one.mean_imputation == four.mean_imputation);
  CHECK(one.traces.size() == four.traces.size());
}

TEST_CASE("clamp anchoring reproduces observations") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 2;
  cfg.anchoring = Anchoring::Clamp;
  const ImputationResult r = f.run(cfg);
  for (const TrafficGrid& s : r.samples) {
    for (int i = 0; i < 4; ++i) {
      for (int t = 0; t < 6; ++t) {
        if (f.mask.observed(i, t)) CHECK(s(i, t) == f.truth(i, t));
      }
    }
  }
}

TEST_CASE("configuration errors") {
  const Fixture f;
  ImputeConfig cfg;
  cfg.n_samples = 0;
  CHECK_THROWS_AS(f.run(cfg), Error);
  cfg = ImputeConfig{};
  cfg.n_clusters = 5;  // more clusters than nodes
  CHECK_THROWS_AS(f.run(cfg), Error);
  cfg = ImputeConfig{};
  CHECK_THROWS_AS(impute(*f.cond, *f.uncond, f.truth, MaskMatrix::ones(3, 6), f.sched, cfg), Error);
}
