#pragma once

#include <cstdint>
#include <string>

#include "fence/grid.hpp"

namespace fence {

enum class MaskPattern {
  SrTc,  // spatially random, temporally contiguous
  ScTc,  // spatially clustered, temporally contiguous
};

std::string to_string(MaskPattern pattern);
MaskPattern parse_mask_pattern(const std::string& name);

struct MaskPatternConfig {
  MaskPattern pattern = MaskPattern::SrTc;
  double missing_rate = 0.8;
  int patch_length = 12;
  int n_communities = 1;  // SC-TC only
  std::uint64_t seed = 0;

  void validate() const;
};

/// Number of temporal patches covering `length` columns; the last one may be
/// shorter than the patch length.
int patch_count(Eigen::Index length, int patch_length);

/// Each (node, patch) pair is missing independently with probability alpha.
MaskMatrix mask_sr_tc(Eigen::Index n_nodes, Eigen::Index length, const MaskPatternConfig& cfg);

/// Each (patch, community) block is missing independently with probability
/// alpha. Communities come from `graph.node_communities`, or from k-means on
/// the adjacency rows when absent.
MaskMatrix mask_sc_tc(const GraphSpec& graph, Eigen::Index length, const MaskPatternConfig& cfg);

/// Community labels from k-means over adjacency rows, seeded.
std::vector<int> derive_communities(const GraphSpec& graph, int n_communities, std::uint64_t seed);

}  // namespace fence
