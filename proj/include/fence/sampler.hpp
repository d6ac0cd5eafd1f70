#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "fence/denoiser.hpp"
#include "fence/grid.hpp"
#include "fence/guidance.hpp"

namespace fence {

class NoiseSchedule;

enum class Anchoring {
  Free,   // observations enter only through conditioning
  Clamp,  // observed entries are replaced by their forward-noised values each step
};

struct ImputeConfig {
  GuidanceConfig guidance;
  int n_clusters = 0;  // 0 = max(1, round(N / 20))
  int recluster_every = 1;
  int kmeans_iters = 20;
  int n_samples = 10;
  std::uint64_t seed = 0;
  Anchoring anchoring = Anchoring::Free;
  int threads = 1;

  void validate() const;
};

/// One row of the per-step trace.
struct TraceRecord {
  int sample = 0;
  int k = 0;
  int node = 0;
  double lambda = 0.0;
  double log_posterior = 0.0;  // value used to compute lambda at step k
  double guidance_norm = 0.0;
  int cluster_id = 0;
};

struct ImputationResult {
  std::vector<TrafficGrid> samples;
  TrafficGrid mean_imputation;
  std::vector<TraceRecord> traces;  // ordered by (sample, step K..1, node)
};

/// Reverse-diffusion imputation with feedback-controlled guidance. Each
/// trajectory uses its own random stream (seed, trajectory index), so results
/// do not depend on `threads`.
ImputationResult impute(const DenoiserBackend& cond, const DenoiserBackend& uncond,
                        const TrafficGrid& observed, const MaskMatrix& mask,
                        const NoiseSchedule& sched, const ImputeConfig& cfg);

/// Writes the trace CSV (`k,node,lambda,log_posterior,guidance_norm,cluster_id`;
/// rows grouped by sample, then step, then node) and a companion samples CSV
/// at `samples_path` (`sample,node,t0,...`). An empty `samples_path` skips it.
void emit_trace(const ImputationResult& result, const std::string& trace_path,
                const std::string& samples_path = {});

/// Reads a samples CSV written by `emit_trace`.
std::vector<TrafficGrid> read_samples_csv(const std::string& path);

/// Per-step averages of lambda and guidance norm over nodes and samples,
/// written as `k,mean_lambda,mean_guidance_norm,mean_log_posterior`.
void summarize_trace(const std::string& trace_path, const std::string& out_path);

}  // namespace fence
