#include "fence/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "fence/clustering.hpp"
#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/rng.hpp"

namespace fence {

void ImputeConfig::validate() const {
  guidance.validate();
  require(n_clusters >= 0, "cluster count must be nonnegative");
  require(recluster_every >= 1, "recluster interval must be positive");
  require(kmeans_iters >= 1, "k-means iteration cap must be positive");
  require(n_samples >= 1, "sample count must be positive");
  require(threads >= 1, "thread count must be positive");
}

namespace {

struct Trajectory {
  Eigen::MatrixXd x0;
  std::vector<TraceRecord> trace;
};

Prediction query(const DenoiserBackend& backend, const Eigen::MatrixXd& x, int k,
                 const ConditioningContext& ctx, const char* which) {
  try {
    Prediction p = backend.predict(x, k, ctx);
    require(p.eps.rows() == x.rows() && p.eps.cols() == x.cols(),
            std::string(which) + " backend returned the wrong shape");
    return p;
  } catch (const Error& e) {
    throw Error(e.code(), std::string(which) + " backend failed at step " + std::to_string(k) + ": " +
                              e.what());
  }
}

Trajectory run_trajectory(const DenoiserBackend& cond, const DenoiserBackend& uncond,
                          const TrafficGrid& observed, const MaskMatrix& mask,
                          const NoiseSchedule& sched, const ImputeConfig& cfg, int sample) {
  const Eigen::Index n = observed.n_nodes();
  const Eigen::Index t_len = observed.n_steps();
  const int k_max = sched.n_steps();
  const GuidanceConfig& g = cfg.guidance;
  const bool feedback = g.mode == GuidanceMode::Fence;
  const int n_clusters = cfg.n_clusters > 0 ? cfg.n_clusters : default_cluster_count(static_cast<int>(n));

  Rng rng(cfg.seed, static_cast<std::uint64_t>(sample));
  const ConditioningContext ctx_c = ConditioningContext::conditional(observed, mask);
  const ConditioningContext ctx_u = ConditioningContext::unconditional(n, t_len);
  PosteriorTracker tracker = PosteriorTracker::calibrated(n, g, sched);
  double global_logp = 0.0;
  ClusterAssignment clusters;
  clusters.n_clusters = 1;
  clusters.labels.assign(static_cast<std::size_t>(n), 0);

  Trajectory out;
  out.trace.reserve(static_cast<std::size_t>(k_max * n));
  Eigen::MatrixXd x = standard_normal(n, t_len, rng);
  Eigen::VectorXd lambda(n);

  for (int k = k_max; k >= 1; --k) {
    const Prediction pc = query(cond, x, k, ctx_c, "conditional");
    const Prediction pu = query(uncond, x, k, ctx_u, "unconditional");

    Eigen::VectorXd trace_logp = Eigen::VectorXd::Zero(n);
    switch (g.mode) {
      case GuidanceMode::FixedCfg: lambda.setConstant(g.fixed_lambda); break;
      case GuidanceMode::None: lambda.setZero(); break;
      case GuidanceMode::Fence:
        if (g.aggregation == Aggregation::Global) {
          lambda.setConstant(guidance_scale(global_logp, g.pi, g.lambda_max));
          trace_logp.setConstant(global_logp);
        } else if (g.aggregation == Aggregation::Node) {
          for (Eigen::Index i = 0; i < n; ++i) {
            lambda(i) = guidance_scale(tracker.log_posterior(i), g.pi, g.lambda_max);
          }
          trace_logp = tracker.log_posterior;
        } else {
          if ((k_max - k) % cfg.recluster_every == 0) {
            const Eigen::MatrixXd features =
                pc.attn ? *pc.attn : (pu.attn ? *pu.attn : Eigen::MatrixXd::Identity(n, n));
            const std::uint64_t kseed =
                mix64(cfg.seed ^ mix64((static_cast<std::uint64_t>(sample) << 20) + static_cast<std::uint64_t>(k)));
            clusters = kmeans(features, n_clusters, kseed, cfg.kmeans_iters);
          }
          lambda = cluster_scales(cluster_log_posterior(tracker.log_posterior, clusters), clusters, g);
          trace_logp = tracker.log_posterior;
        }
        break;
    }

    const Eigen::MatrixXd eps = combine_scores(pu.eps, pc.eps, lambda);
    Eigen::MatrixXd x_prev = reverse_step(reverse_mean(x, eps, k, sched), k, sched, rng);
    const Eigen::VectorXd gnorm = guidance_gradient_norm(pu.eps, pc.eps, k, sched);

    const bool clustered = feedback && g.aggregation == Aggregation::Cluster;
    for (Eigen::Index i = 0; i < n; ++i) {
      out.trace.push_back({sample, k, static_cast<int>(i), lambda(i), trace_logp(i), gnorm(i),
                           clustered ? clusters.labels[static_cast<std::size_t>(i)]
                                     : (g.aggregation == Aggregation::Node && feedback ? static_cast<int>(i) : 0)});
    }

    if (feedback && k > 1) {
      const Eigen::MatrixXd mean_c = reverse_mean(x, pc.eps, k, sched);
      const Eigen::MatrixXd mean_u = reverse_mean(x, pu.eps, k, sched);
      if (g.aggregation == Aggregation::Global) {
        global_logp = global_posterior_update(global_logp, tracker.tau, tracker.delta, x_prev, mean_c,
                                              mean_u, sched.sigma2(k));
      } else {
        tracker = posterior_update(tracker, x_prev, mean_c, mean_u, k, sched);
      }
    }

    if (cfg.anchoring == Anchoring::Clamp) {
      const Eigen::MatrixXd anchor =
          k > 1 ? q_sample(observed.values(), k - 1, standard_normal(n, t_len, rng), sched)
                : observed.values();
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < t_len; ++t) {
          if (mask.observed(i, t)) x_prev(i, t) = anchor(i, t);
        }
      }
    }

    if (!x_prev.allFinite()) {
      fail(ErrorCode::Divergence, "trajectory " + std::to_string(sample) +
                                      " produced non-finite values at step " + std::to_string(k));
    }
    x = std::move(x_prev);
  }
  out.x0 = std::move(x);
  return out;
}

}  // namespace

ImputationResult impute(const DenoiserBackend& cond, const DenoiserBackend& uncond,
                        const TrafficGrid& observed, const MaskMatrix& mask,
                        const NoiseSchedule& sched, const ImputeConfig& cfg) {
  cfg.validate();
  require_same_shape(observed, mask);
  if (cfg.guidance.mode == GuidanceMode::Fence && cfg.guidance.aggregation == Aggregation::Cluster) {
    require(cfg.n_clusters <= observed.n_nodes(),
            "cluster count " + std::to_string(cfg.n_clusters) + " exceeds node count " +
                std::to_string(observed.n_nodes()));
  }

  const int s_total = cfg.n_samples;
  std::vector<Trajectory> runs(static_cast<std::size_t>(s_total));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(s_total));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int s = next++; s < s_total; s = next++) {
      try {
        runs[static_cast<std::size_t>(s)] = run_trajectory(cond, uncond, observed, mask, sched, cfg, s);
      } catch (...) {
        errors[static_cast<std::size_t>(s)] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min(cfg.threads, s_total);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ImputationResult result;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(observed.n_nodes(), observed.n_steps());
  for (Trajectory& r : runs) {
    sum += r.x0;
    result.samples.emplace_back(std::move(r.x0));
    result.traces.insert(result.traces.end(), r.trace.begin(), r.trace.end());
  }
  result.mean_imputation = TrafficGrid(sum / static_cast<double>(s_total));
  return result;
}

void emit_trace(const ImputationResult& result, const std::string& trace_path,
                const std::string& samples_path) {
  require(!result.traces.empty(), "trace is empty");
  std::ofstream out(trace_path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + trace_path);
  out << "k,node,lambda,log_posterior,guidance_norm,cluster_id\n";
  for (const TraceRecord& r : result.traces) {
    out << r.k << ',' << r.node << ',' << format_double(r.lambda) << ','
        << format_double(r.log_posterior) << ',' << format_double(r.guidance_norm) << ','
        << r.cluster_id << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + trace_path);

  if (samples_path.empty()) return;
  std::ofstream so(samples_path, std::ios::binary);
  if (!so) fail(ErrorCode::Io, "cannot write " + samples_path);
  const Eigen::Index t_len = result.samples.front().n_steps();
  so << "sample,node";
  for (Eigen::Index t = 0; t < t_len; ++t) so << ",t" << t;
  so << '\n';
  for (std::size_t s = 0; s < result.samples.size(); ++s) {
    const TrafficGrid& g = result.samples[s];
    for (Eigen::Index i = 0; i < g.n_nodes(); ++i) {
      so << s << ',' << i;
      for (Eigen::Index t = 0; t < t_len; ++t) so << ',' << format_double(g(i, t));
      so << '\n';
    }
  }
  if (!so) fail(ErrorCode::Io, "write failed for " + samples_path);
}

std::vector<TrafficGrid> read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample,node", 0) != 0) {
    fail(ErrorCode::InvalidInput, path + ": not a samples file");
  }
  const auto t_len = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') - 1);
  require(t_len >= 1, path + ": no time columns");
  std::vector<std::vector<std::vector<double>>> rows;  // sample -> node -> values
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    try {
      while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidInput, where + ": malformed number");
    }
    require(cells.size() == t_len + 2, where + ": wrong number of cells");
    const auto s = static_cast<std::size_t>(cells[0]);
    const auto node = static_cast<std::size_t>(cells[1]);
    if (s == rows.size()) rows.emplace_back();
    require(s + 1 == rows.size() && node == rows[s].size(), where + ": rows out of order");
    rows[s].emplace_back(cells.begin() + 2, cells.end());
  }
  require(!rows.empty(), path + ": no samples");
  std::vector<TrafficGrid> out;
  for (const auto& grid : rows) {
    require(grid.size() == rows.front().size(), path + ": samples differ in node count");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(t_len));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      for (std::size_t t = 0; t < t_len; ++t) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = grid[i][t];
    }
    out.emplace_back(std::move(m));
  }
  return out;
}

void summarize_trace(const std::string& trace_path, const std::string& out_path) {
  std::ifstream in(trace_path);
  if (!in) fail(ErrorCode::Io, "cannot open " + trace_path);
  std::string line;
  if (!std::getline(in, line) || line != "k,node,lambda,log_posterior,guidance_norm,cluster_id") {
    fail(ErrorCode::InvalidInput, trace_path + ": not a trace file");
  }
  struct Acc {
    double lambda = 0, norm = 0, logp = 0;
    long count = 0;
  };
  std::map<int, Acc, std::greater<>> by_step;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) fail(ErrorCode::InvalidInput, trace_path + ":" + std::to_string(lineno) + ": expected 6 cells");
    try {
      Acc& a = by_step[std::stoi(cells[0])];
      a.lambda += std::stod(cells[2]);
      a.logp += std::stod(cells[3]);
      a.norm += std::stod(cells[4]);
      ++a.count;
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidInput, trace_path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + out_path);
  out << "k,mean_lambda,mean_guidance_norm,mean_log_posterior\n";
  for (const auto& [k, a] : by_step) {
    const double c = static_cast<double>(a.count);
    out << k << ',' << format_double(a.lambda / c) << ',' << format_double(a.norm / c) << ','
        << format_double(a.logp / c) << '\n';
  }
}

}  // namespace fence
