#include "fence/masking.hpp"

#include <cmath>

#include "fence/clustering.hpp"
#include "fence/error.hpp"
#include "fence/rng.hpp"

namespace fence {

namespace {

// Stream ids keep mask draws independent of other consumers of the same seed.
constexpr std::uint64_t kSrTcStream = 0x5352544300000000ull;  // "SRTC"
constexpr std::uint64_t kScTcStream = 0x5343544300000000ull;  // "SCTC"

void fill_patch(Eigen::MatrixXd& m, Eigen::Index node, int patch, int patch_length,
                Eigen::Index length) {
  const Eigen::Index begin = static_cast<Eigen::Index>(patch) * patch_length;
  const Eigen::Index end = std::min<Eigen::Index>(begin + patch_length, length);
  for (Eigen::Index t = begin; t < end; ++t) m(node, t) = 0.0;
}

}  // namespace

std::string to_string(MaskPattern pattern) {
  return pattern == MaskPattern::SrTc ? "SR-TC" : "SC-TC";
}

MaskPattern parse_mask_pattern(const std::string& name) {
  if (name == "SR-TC" || name == "sr-tc" || name == "srtc") return MaskPattern::SrTc;
  if (name == "SC-TC" || name == "sc-tc" || name == "sctc") return MaskPattern::ScTc;
  fail(ErrorCode::InvalidInput, "unknown mask pattern '" + name + "' (expected SR-TC or SC-TC)");
}

void MaskPatternConfig::validate() const {
  require(missing_rate >= 0.0 && missing_rate <= 1.0, "missing rate must lie in [0, 1]");
  require(patch_length >= 1, "patch length must be positive");
  require(n_communities >= 1, "community count must be positive");
}

int patch_count(Eigen::Index length, int patch_length) {
  return static_cast<int>((length + patch_length - 1) / patch_length);
}

MaskMatrix mask_sr_tc(Eigen::Index n_nodes, Eigen::Index length, const MaskPatternConfig& cfg) {
  cfg.validate();
  require(n_nodes >= 1, "node count must be positive");
  require(length >= cfg.patch_length, "series length is shorter than the patch length");
  Rng rng(cfg.seed, kSrTcStream);
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(n_nodes, length);
  const int patches = patch_count(length, cfg.patch_length);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    for (int p = 0; p < patches; ++p) {
      if (rng.uniform() < cfg.missing_rate) fill_patch(m, i, p, cfg.patch_length, length);
    }
  }
  return MaskMatrix(std::move(m));
}

std::vector<int> derive_communities(const GraphSpec& graph, int n_communities, std::uint64_t seed) {
  graph.validate();
  require(n_communities <= graph.n_nodes(),
          "community count " + std::to_string(n_communities) + " exceeds node count " +
              std::to_string(graph.n_nodes()));
  return kmeans(graph.adjacency, n_communities, seed).labels;
}

MaskMatrix mask_sc_tc(const GraphSpec& graph, Eigen::Index length, const MaskPatternConfig& cfg) {
  cfg.validate();
  graph.validate();
  const Eigen::Index n = graph.n_nodes();
  require(length >= cfg.patch_length, "series length is shorter than the patch length");
  std::vector<int> labels;
  int nc = cfg.n_communities;
  if (graph.node_communities) {
    labels = *graph.node_communities;
    nc = graph.n_communities();
  } else {
    require(nc <= n, "community count " + std::to_string(nc) + " exceeds node count " +
                         std::to_string(n));
    labels = derive_communities(graph, nc, cfg.seed);
  }

  Rng rng(cfg.seed, kScTcStream);
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(n, length);
  const int patches = patch_count(length, cfg.patch_length);
  std::vector<bool> masked(static_cast<std::size_t>(nc));
  for (int p = 0; p < patches; ++p) {
    for (int c = 0; c < nc; ++c) masked[static_cast<std::size_t>(c)] = rng.uniform() < cfg.missing_rate;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (masked[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])]) {
        fill_patch(m, i, p, cfg.patch_length, length);
      }
    }
  }
  return MaskMatrix(std::move(m));
}

}  // namespace fence
