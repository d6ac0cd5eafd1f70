#include "fence/fence.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/experiment.hpp"
#include "fence/gaussian.hpp"
#include "fence/masking.hpp"
#include "fence/metrics.hpp"
#include "fence/network.hpp"
#include "fence/rng.hpp"
#include "fence/sampler.hpp"
#include "fence/training.hpp"

using namespace fence;

struct fence_grid {
  RawSeries raw;
};
struct fence_mask {
  MaskMatrix mask;
};
struct fence_schedule {
  NoiseSchedule sched;
};
struct fence_world {
  WorldSpec spec;
  GaussianOracleWorld world;
};
struct fence_backend {
  std::unique_ptr<DenoiserBackend> impl;
};
struct fence_result {
  ImputationResult result;
};

namespace {

thread_local std::string g_last_error;

fence_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return FENCE_ERR_INVALID_INPUT;
    case ErrorCode::State: return FENCE_ERR_STATE;
    case ErrorCode::Numerical: return FENCE_ERR_NUMERICAL;
    case ErrorCode::Divergence: return FENCE_ERR_DIVERGENCE;
    case ErrorCode::Io: return FENCE_ERR_IO;
    case ErrorCode::Config: return FENCE_ERR_CONFIG;
  }
  return FENCE_ERR_INTERNAL;
}

template <class F>
fence_status guarded(F&& f) {
  try {
    f();
    return FENCE_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FENCE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FENCE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FENCE_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidInput, std::string(what) + " is NULL");
}

Eigen::MatrixXd from_rows(const double* data, size_t rows, size_t cols) {
  need(data, "data");
  require(rows >= 1 && cols >= 1, "shape must be at least 1 x 1");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i * cols + j];
  }
  return m;
}

void to_rows(const Eigen::MatrixXd& m, double* out) {
  need(out, "output buffer");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i * m.cols() + j] = m(i, j);
  }
}

TrafficGrid grid_of(const fence_grid* g) {
  need(g, "grid");
  return TrafficGrid(g->raw.values);
}

WorldSpec spec_of(const fence_world_spec* s) {
  need(s, "spec");
  WorldSpec w;
  w.nodes = s->nodes;
  w.steps = s->steps;
  w.rho_s = s->rho_s;
  w.rho_t = s->rho_t;
  w.mean = s->mean;
  w.seed = s->seed;
  return w;
}

TrainConfig train_of(const fence_train_config* c) {
  need(c, "train config");
  TrainConfig t;
  t.epochs = c->epochs;
  t.learning_rate = c->learning_rate;
  t.weight_decay = c->weight_decay;
  t.patience = c->patience;
  t.batch_size = c->batch_size;
  t.remask_rate = c->remask_rate;
  t.remask_patch = c->remask_patch;
  t.seed = c->seed;
  return t;
}

DatasetSplit split_of(const fence_grid* series, int window) {
  need(series, "series");
  SplitOptions opt;
  opt.window = window;
  return make_dataset_split(series->raw, opt);
}

void fill_report(const TrainResult& r, fence_train_report* report) {
  if (!report) return;
  report->epochs_run = static_cast<int>(r.train_loss.size());
  report->best_epoch = r.best_epoch;
  report->best_validation_loss =
      r.best_epoch >= 0 ? r.validation_loss[static_cast<size_t>(r.best_epoch)] : std::nan("");
  report->stopped_early = r.stopped_early ? 1 : 0;
  report->warned_untrained_init = r.warnings.empty() ? 0 : 1;
}

EpochCallback callback_of(fence_epoch_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](int epoch, double tl, double vl) { fn(epoch, tl, vl, user); };
}

}  // namespace

extern "C" {

const char* fence_last_error(void) { return g_last_error.c_str(); }

const char* fence_status_name(fence_status status) {
  switch (status) {
    case FENCE_OK: return "ok";
    case FENCE_ERR_INVALID_INPUT: return "invalid input";
    case FENCE_ERR_STATE: return "invalid state";
    case FENCE_ERR_NUMERICAL: return "numerical error";
    case FENCE_ERR_DIVERGENCE: return "divergence";
    case FENCE_ERR_IO: return "i/o error";
    case FENCE_ERR_CONFIG: return "configuration error";
    case FENCE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fence_version(void) { return "0.1.0"; }

fence_status fence_grid_create(size_t n_nodes, size_t n_steps, const double* values, fence_grid** out) {
  return guarded([&] {
    need(out, "out");
    auto g = std::make_unique<fence_grid>();
    g->raw.values = from_rows(values, n_nodes, n_steps);
    require(g->raw.values.allFinite(), "grid values must be finite");
    g->raw.present = MaskMatrix::ones(g->raw.values.rows(), g->raw.values.cols());
    *out = g.release();
  });
}

fence_status fence_grid_read_csv(const char* path, fence_grid** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new fence_grid{read_grid_csv(path)};
  });
}

fence_status fence_grid_write_csv(const fence_grid* grid, const char* path) {
  return guarded([&] {
    need(grid, "grid");
    need(path, "path");
    write_grid_csv(path, grid->raw.values, &grid->raw.present);
  });
}

size_t fence_grid_nodes(const fence_grid* grid) { return grid ? static_cast<size_t>(grid->raw.values.rows()) : 0; }
size_t fence_grid_steps(const fence_grid* grid) { return grid ? static_cast<size_t>(grid->raw.values.cols()) : 0; }

fence_status fence_grid_values(const fence_grid* grid, double* out) {
  return guarded([&] {
    need(grid, "grid");
    to_rows(grid->raw.values, out);
  });
}

fence_status fence_grid_presence(const fence_grid* grid, double* out) {
  return guarded([&] {
    need(grid, "grid");
    to_rows(grid->raw.present.entries(), out);
  });
}

void fence_grid_free(fence_grid* grid) { delete grid; }

void fence_mask_config_default(fence_mask_config* cfg) {
  if (!cfg) return;
  const MaskPatternConfig d;
  cfg->pattern = FENCE_MASK_SR_TC;
  cfg->missing_rate = d.missing_rate;
  cfg->patch_length = d.patch_length;
  cfg->n_communities = d.n_communities;
  cfg->seed = d.seed;
}

fence_status fence_mask_generate(const fence_mask_config* cfg, size_t n_nodes, size_t length,
                                 const double* adjacency, fence_mask** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    require(n_nodes >= 1 && length >= 1, "mask shape must be at least 1 x 1");
    MaskPatternConfig m;
    m.pattern = cfg->pattern == FENCE_MASK_SC_TC ? MaskPattern::ScTc : MaskPattern::SrTc;
    m.missing_rate = cfg->missing_rate;
    m.patch_length = cfg->patch_length;
    m.n_communities = cfg->n_communities;
    m.seed = cfg->seed;
    const auto n = static_cast<Eigen::Index>(n_nodes);
    const auto len = static_cast<Eigen::Index>(length);
    if (m.pattern == MaskPattern::SrTc) {
      *out = new fence_mask{mask_sr_tc(n, len, m)};
      return;
    }
    GraphSpec graph = ring_graph(static_cast<int>(n_nodes));
    if (adjacency) graph.adjacency = from_rows(adjacency, n_nodes, n_nodes);
    *out = new fence_mask{mask_sc_tc(graph, len, m)};
  });
}

fence_status fence_mask_create(size_t n_nodes, size_t n_steps, const double* entries, fence_mask** out) {
  return guarded([&] {
    need(out, "out");
    *out = new fence_mask{MaskMatrix(from_rows(entries, n_nodes, n_steps))};
  });
}

fence_status fence_mask_read_csv(const char* path, fence_mask** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new fence_mask{read_mask_csv(path)};
  });
}

fence_status fence_mask_write_csv(const fence_mask* mask, const char* path) {
  return guarded([&] {
    need(mask, "mask");
    need(path, "path");
    write_mask_csv(path, mask->mask);
  });
}

size_t fence_mask_nodes(const fence_mask* mask) { return mask ? static_cast<size_t>(mask->mask.n_nodes()) : 0; }
size_t fence_mask_steps(const fence_mask* mask) { return mask ? static_cast<size_t>(mask->mask.n_steps()) : 0; }

fence_status fence_mask_entries(const fence_mask* mask, double* out) {
  return guarded([&] {
    need(mask, "mask");
    to_rows(mask->mask.entries(), out);
  });
}

void fence_mask_free(fence_mask* mask) { delete mask; }

fence_status fence_schedule_quadratic(int n_steps, double beta1, double beta_k, fence_variance variance,
                                      fence_schedule** out) {
  return guarded([&] {
    need(out, "out");
    const VarianceMode mode = variance == FENCE_VARIANCE_BETA ? VarianceMode::Beta : VarianceMode::BetaTilde;
    *out = new fence_schedule{quadratic_schedule(n_steps, beta1, beta_k, mode)};
  });
}

int fence_schedule_steps(const fence_schedule* sched) { return sched ? sched->sched.n_steps() : 0; }

fence_status fence_schedule_at(const fence_schedule* sched, int k, double* beta, double* alpha_bar,
                               double* sigma2) {
  return guarded([&] {
    need(sched, "schedule");
    if (beta) *beta = sched->sched.beta(k);
    if (alpha_bar) *alpha_bar = sched->sched.alpha_bar(k);
    if (sigma2) *sigma2 = sched->sched.sigma2(k);
  });
}

void fence_schedule_free(fence_schedule* sched) { delete sched; }

void fence_world_spec_default(fence_world_spec* spec) {
  if (!spec) return;
  const WorldSpec d;
  spec->nodes = d.nodes;
  spec->steps = d.steps;
  spec->rho_s = d.rho_s;
  spec->rho_t = d.rho_t;
  spec->mean = d.mean;
  spec->seed = d.seed;
}

fence_status fence_world_spec_read(const char* path, fence_world_spec* spec) {
  return guarded([&] {
    need(path, "path");
    need(spec, "spec");
    const WorldSpec w = read_world_spec(path);
    spec->nodes = w.nodes;
    spec->steps = w.steps;
    spec->rho_s = w.rho_s;
    spec->rho_t = w.rho_t;
    spec->mean = w.mean;
    spec->seed = w.seed;
  });
}

fence_status fence_world_spec_write(const char* path, const fence_world_spec* spec) {
  return guarded([&] {
    need(path, "path");
    write_world_spec(path, spec_of(spec));
  });
}

fence_status fence_world_create(const fence_world_spec* spec, fence_world** out) {
  return guarded([&] {
    need(out, "out");
    const WorldSpec s = spec_of(spec);
    *out = new fence_world{s, make_gaussian_world(s)};
  });
}

fence_status fence_world_sample(const fence_world* world, int windows, fence_grid** out) {
  return guarded([&] {
    need(world, "world");
    need(out, "out");
    require(windows >= 1, "window count must be positive");
    const Eigen::Index n = world->world.n_nodes();
    const Eigen::Index t_len = world->world.n_steps();
    Eigen::MatrixXd all(n, t_len * windows);
    for (int w = 0; w < windows; ++w) {
      Rng rng(world->spec.seed, static_cast<std::uint64_t>(w));
      all.middleCols(w * t_len, t_len) = world->world.sample(rng).values();
    }
    auto g = std::make_unique<fence_grid>();
    g->raw.values = std::move(all);
    g->raw.present = MaskMatrix::ones(n, t_len * windows);
    *out = g.release();
  });
}

fence_status fence_world_conditional(const fence_world* world, const fence_grid* observed,
                                     const fence_mask* mask, double* mean, double* variance) {
  return guarded([&] {
    need(world, "world");
    need(mask, "mask");
    const GaussianOracleWorld w = world->world.with_observations(grid_of(observed), mask->mask);
    const ConditionalMoments m = w.conditional_moments();
    const Eigen::Index n = w.n_nodes(), t_len = w.n_steps();
    if (mean) to_rows(unflatten(m.mean, n, t_len), mean);
    if (variance) to_rows(unflatten(m.cov.diagonal(), n, t_len), variance);
  });
}

void fence_world_free(fence_world* world) { delete world; }

fence_status fence_backend_oracle(const fence_world* world, const fence_grid* observed,
                                  const fence_mask* mask, const fence_schedule* sched, double pi_true,
                                  fence_backend** out) {
  return guarded([&] {
    need(world, "world");
    need(mask, "mask");
    need(sched, "schedule");
    need(out, "out");
    require(pi_true > 0.0 && pi_true <= 1.0, "pi_true must lie in (0, 1]");
    const TrafficGrid obs = observed_part(grid_of(observed), mask->mask);
    auto b = std::make_unique<fence_backend>();
    b->impl = std::make_unique<OracleBackend>(world->world.with_observations(obs, mask->mask), sched->sched,
                                              pi_true);
    *out = b.release();
  });
}

fence_status fence_backend_load(const char* checkpoint, fence_backend** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    auto b = std::make_unique<fence_backend>();
    b->impl = std::make_unique<NeuralDenoiser>(NeuralDenoiser::load(checkpoint));
    *out = b.release();
  });
}

void fence_backend_free(fence_backend* backend) { delete backend; }

void fence_network_config_default(fence_network_config* cfg) {
  if (!cfg) return;
  const NetworkConfig d;
  cfg->channels = d.channels;
  cfg->heads = d.heads;
  cfg->layers = d.layers;
  cfg->step_embed_dim = d.step_embed_dim;
  cfg->ff_mult = d.ff_mult;
}

void fence_train_config_default(fence_train_config* cfg, int conditional) {
  if (!cfg) return;
  const TrainConfig d = conditional ? TrainConfig::conditional_defaults() : TrainConfig::unconditional_defaults();
  cfg->epochs = d.epochs;
  cfg->learning_rate = d.learning_rate;
  cfg->weight_decay = d.weight_decay;
  cfg->patience = d.patience;
  cfg->batch_size = d.batch_size;
  cfg->remask_rate = d.remask_rate;
  cfg->remask_patch = d.remask_patch;
  cfg->window = 12;
  cfg->seed = d.seed;
}

fence_status fence_train_unconditional(const fence_grid* series, const fence_network_config* net,
                                       const fence_train_config* cfg, const fence_schedule* sched,
                                       const char* checkpoint_out, fence_epoch_fn on_epoch, void* user,
                                       fence_train_report* report) {
  return guarded([&] {
    need(net, "network config");
    need(sched, "schedule");
    need(checkpoint_out, "checkpoint path");
    need(cfg, "train config");
    const DatasetSplit data = split_of(series, cfg->window);
    NetworkConfig nc;
    nc.n_nodes = static_cast<int>(series->raw.values.rows());
    nc.n_steps = cfg->window;
    nc.channels = net->channels;
    nc.heads = net->heads;
    nc.layers = net->layers;
    nc.step_embed_dim = net->step_embed_dim;
    nc.ff_mult = net->ff_mult;
    const TrainResult r = train_unconditional(NeuralDenoiser::initialized(nc, cfg->seed), data, sched->sched,
                                              train_of(cfg), callback_of(on_epoch, user));
    r.model.save(checkpoint_out);
    fill_report(r, report);
  });
}

fence_status fence_finetune_conditional(const fence_grid* series, const char* checkpoint_in,
                                        const fence_train_config* cfg, const fence_schedule* sched,
                                        const char* checkpoint_out, fence_epoch_fn on_epoch, void* user,
                                        fence_train_report* report) {
  return guarded([&] {
    need(checkpoint_in, "input checkpoint");
    need(checkpoint_out, "output checkpoint");
    need(sched, "schedule");
    need(cfg, "train config");
    const NeuralDenoiser init = NeuralDenoiser::load(checkpoint_in);
    require(init.config().n_steps == cfg->window, "checkpoint window length differs from the requested window");
    const DatasetSplit data = split_of(series, cfg->window);
    const TrainResult r = finetune_conditional(init, data, sched->sched, train_of(cfg), callback_of(on_epoch, user));
    r.model.save(checkpoint_out);
    fill_report(r, report);
  });
}

void fence_impute_config_default(fence_impute_config* cfg) {
  if (!cfg) return;
  const ImputeConfig d;
  cfg->mode = FENCE_GUIDANCE_FENCE;
  cfg->fixed_lambda = d.guidance.fixed_lambda;
  cfg->pi = d.guidance.pi;
  cfg->lambda_ref = d.guidance.lambda_ref;
  cfg->t0 = d.guidance.t0;
  cfg->t1 = d.guidance.t1;
  cfg->alpha_scale = d.guidance.alpha_scale;
  cfg->lambda_max = d.guidance.lambda_max;
  cfg->aggregation = FENCE_AGG_CLUSTER;
  cfg->n_clusters = d.n_clusters;
  cfg->recluster_every = d.recluster_every;
  cfg->n_samples = d.n_samples;
  cfg->seed = d.seed;
  cfg->anchoring = FENCE_ANCHOR_FREE;
  cfg->threads = d.threads;
}

fence_status fence_impute(const fence_backend* cond, const fence_backend* uncond, const fence_grid* observed,
                          const fence_mask* mask, const fence_schedule* sched, const fence_impute_config* cfg,
                          fence_result** out) {
  return guarded([&] {
    need(cond, "conditional backend");
    need(uncond, "unconditional backend");
    need(mask, "mask");
    need(sched, "schedule");
    need(cfg, "impute config");
    need(out, "out");
    ImputeConfig c;
    switch (cfg->mode) {
      case FENCE_GUIDANCE_FENCE: c.guidance.mode = GuidanceMode::Fence; break;
      case FENCE_GUIDANCE_FIXED: c.guidance.mode = GuidanceMode::FixedCfg; break;
      case FENCE_GUIDANCE_NONE: c.guidance.mode = GuidanceMode::None; break;
      default: fail(ErrorCode::InvalidInput, "unknown guidance mode");
    }
    switch (cfg->aggregation) {
      case FENCE_AGG_CLUSTER: c.guidance.aggregation = Aggregation::Cluster; break;
      case FENCE_AGG_GLOBAL: c.guidance.aggregation = Aggregation::Global; break;
      case FENCE_AGG_NODE: c.guidance.aggregation = Aggregation::Node; break;
      default: fail(ErrorCode::InvalidInput, "unknown aggregation");
    }
    c.guidance.fixed_lambda = cfg->fixed_lambda;
    c.guidance.pi = cfg->pi;
    c.guidance.lambda_ref = cfg->lambda_ref;
    c.guidance.t0 = cfg->t0;
    c.guidance.t1 = cfg->t1;
    c.guidance.alpha_scale = cfg->alpha_scale;
    c.guidance.lambda_max = cfg->lambda_max;
    c.n_clusters = cfg->n_clusters;
    c.recluster_every = cfg->recluster_every;
    c.n_samples = cfg->n_samples;
    c.seed = cfg->seed;
    c.anchoring = cfg->anchoring == FENCE_ANCHOR_CLAMP ? Anchoring::Clamp : Anchoring::Free;
    c.threads = cfg->threads;
    const TrafficGrid obs = observed_part(grid_of(observed), mask->mask);
    *out = new fence_result{impute(*cond->impl, *uncond->impl, obs, mask->mask, sched->sched, c)};
  });
}

size_t fence_result_samples(const fence_result* result) { return result ? result->result.samples.size() : 0; }

fence_status fence_result_sample(const fence_result* result, size_t index, double* out) {
  return guarded([&] {
    need(result, "result");
    require(index < result->result.samples.size(), "sample index out of range");
    to_rows(result->result.samples[index].values(), out);
  });
}

fence_status fence_result_mean(const fence_result* result, double* out) {
  return guarded([&] {
    need(result, "result");
    to_rows(result->result.mean_imputation.values(), out);
  });
}

size_t fence_result_trace_rows(const fence_result* result) { return result ? result->result.traces.size() : 0; }

fence_status fence_result_trace_row(const fence_result* result, size_t index, fence_trace_row* out) {
  return guarded([&] {
    need(result, "result");
    need(out, "out");
    require(index < result->result.traces.size(), "trace row out of range");
    const TraceRecord& r = result->result.traces[index];
    *out = fence_trace_row{r.sample, r.k, r.node, r.lambda, r.log_posterior, r.guidance_norm, r.cluster_id};
  });
}

fence_status fence_result_write_trace(const fence_result* result, const char* trace_path, const char* samples_path) {
  return guarded([&] {
    need(result, "result");
    need(trace_path, "trace path");
    emit_trace(result->result, trace_path, samples_path ? samples_path : "");
  });
}

void fence_result_free(fence_result* result) { delete result; }

fence_status fence_trace_summarize(const char* trace_path, const char* out_path) {
  return guarded([&] {
    need(trace_path, "trace path");
    need(out_path, "output path");
    summarize_trace(trace_path, out_path);
  });
}

fence_status fence_evaluate(const fence_grid* pred, const fence_grid* truth, const fence_mask* eval_mask,
                            const double* samples, size_t n_samples, fence_metrics* out, double* per_node) {
  return guarded([&] {
    need(eval_mask, "evaluation mask");
    need(out, "out");
    const TrafficGrid p = grid_of(pred);
    const TrafficGrid t = grid_of(truth);
    // Entries absent from the truth file cannot be scored.
    const MaskMatrix eval = eval_mask->mask.intersect(truth->raw.present);
    const PointMetrics pm = point_metrics(p, t, eval);
    const auto nodes = per_node_metrics(p, t, eval);
    std::optional<CrpsReport> cr;
    if (samples && n_samples > 0) {
      const auto rows = static_cast<size_t>(t.n_nodes());
      const auto cols = static_cast<size_t>(t.n_steps());
      std::vector<TrafficGrid> draws;
      for (size_t s = 0; s < n_samples; ++s) draws.emplace_back(from_rows(samples + s * rows * cols, rows, cols));
      cr = dataset_crps(draws, t, eval);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    *out = fence_metrics{pm.mae, pm.rmse, pm.mape, cr ? cr->mean : nan, static_cast<size_t>(pm.n_evaluated)};
    if (per_node) {
      for (size_t i = 0; i < nodes.size(); ++i) {
        per_node[4 * i + 0] = nodes[i].mae;
        per_node[4 * i + 1] = nodes[i].rmse;
        per_node[4 * i + 2] = nodes[i].mape;
        per_node[4 * i + 3] = cr ? cr->per_node(static_cast<Eigen::Index>(i)) : nan;
      }
    }
  });
}

fence_status fence_crps(const double* samples, size_t n, double truth, double* out) {
  return guarded([&] {
    need(samples, "samples");
    need(out, "out");
    *out = crps(std::vector<double>(samples, samples + n), truth);
  });
}

fence_status fence_samples_read_csv(const char* path, double** out, size_t* n_samples, size_t* n_nodes,
                                    size_t* n_steps) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const std::vector<TrafficGrid> grids = read_samples_csv(path);
    const auto rows = static_cast<size_t>(grids.front().n_nodes());
    const auto cols = static_cast<size_t>(grids.front().n_steps());
    auto* buf = static_cast<double*>(std::malloc(sizeof(double) * rows * cols * grids.size()));
    if (!buf) throw std::bad_alloc();
    for (size_t s = 0; s < grids.size(); ++s) to_rows(grids[s].values(), buf + s * rows * cols);
    *out = buf;
    if (n_samples) *n_samples = grids.size();
    if (n_nodes) *n_nodes = rows;
    if (n_steps) *n_steps = cols;
  });
}

void fence_free(void* p) { std::free(p); }

fence_status fence_run_experiment(const char* config_path, const char* output_dir, fence_metrics* out) {
  return guarded([&] {
    need(config_path, "config path");
    need(output_dir, "output directory");
    const ExperimentSummary s = run_experiment(ExperimentConfig::load(config_path), output_dir);
    if (out) *out = fence_metrics{s.mae, s.rmse, s.mape, s.crps, 0};
  });
}

const char* fence_config_reference(void) {
  static const std::string text = config_reference();
  return text.c_str();
}

}  // extern "C"
