// fence-cli: command-line front end over the C API.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fence/fence.h"

namespace {

// Exit codes: 0 ok, 2 config, 3 data, 4 divergence, 1 anything else.
int exit_code(fence_status s) {
  switch (s) {
    case FENCE_OK: return 0;
    case FENCE_ERR_CONFIG: return 2;
    case FENCE_ERR_INVALID_INPUT:
    case FENCE_ERR_IO:
    case FENCE_ERR_STATE: return 3;
    case FENCE_ERR_DIVERGENCE:
    case FENCE_ERR_NUMERICAL: return 4;
    default: return 1;
  }
}

struct Failure {
  fence_status status;
};

void check(fence_status s) {
  if (s != FENCE_OK) throw Failure{s};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Grid = std::unique_ptr<fence_grid, Deleter<fence_grid, fence_grid_free>>;
using Mask = std::unique_ptr<fence_mask, Deleter<fence_mask, fence_mask_free>>;
using Schedule = std::unique_ptr<fence_schedule, Deleter<fence_schedule, fence_schedule_free>>;
using World = std::unique_ptr<fence_world, Deleter<fence_world, fence_world_free>>;
using Backend = std::unique_ptr<fence_backend, Deleter<fence_backend, fence_backend_free>>;
using Result = std::unique_ptr<fence_result, Deleter<fence_result, fence_result_free>>;

Grid read_grid(const std::string& path) {
  fence_grid* g = nullptr;
  check(fence_grid_read_csv(path.c_str(), &g));
  return Grid(g);
}

Mask read_mask(const std::string& path) {
  fence_mask* m = nullptr;
  check(fence_mask_read_csv(path.c_str(), &m));
  return Mask(m);
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ScheduleOpts {
  int steps = 50;
  double beta1 = 1e-4;
  double beta_k = 0.5;
  std::string variance = "beta-tilde";

  void add(CLI::App* app) {
    app->add_option("--diffusion-steps", steps, "diffusion steps K")->capture_default_str();
    app->add_option("--beta1", beta1, "first beta")->capture_default_str();
    app->add_option("--beta-k", beta_k, "last beta")->capture_default_str();
    app->add_option("--variance", variance, "reverse variance")
        ->check(CLI::IsMember({"beta-tilde", "beta"}))
        ->capture_default_str();
  }

  Schedule make() const {
    fence_schedule* s = nullptr;
    check(fence_schedule_quadratic(steps, beta1, beta_k,
                                   variance == "beta" ? FENCE_VARIANCE_BETA : FENCE_VARIANCE_BETA_TILDE, &s));
    return Schedule(s);
  }
};

struct TrainOpts {
  std::string data, out, init;
  fence_train_config cfg{};
  fence_network_config net{};
  bool verbose = false;

  void add(CLI::App* app, bool conditional) {
    fence_train_config_default(&cfg, conditional ? 1 : 0);
    fence_network_config_default(&net);
    app->add_option("--data", data, "grid CSV with the full series")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "checkpoint to write")->required();
    app->add_option("--window", cfg.window, "window length T")->capture_default_str();
    app->add_option("--epochs", cfg.epochs)->capture_default_str();
    app->add_option("--lr", cfg.learning_rate)->capture_default_str();
    app->add_option("--weight-decay", cfg.weight_decay)->capture_default_str();
    app->add_option("--patience", cfg.patience)->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    app->add_option("--seed", cfg.seed)->capture_default_str();
    app->add_flag("--verbose", verbose, "print losses after every epoch");
    if (conditional) {
      app->add_option("--init", init, "stage-1 checkpoint")->required()->check(CLI::ExistingFile);
      app->add_option("--remask-rate", cfg.remask_rate)->capture_default_str();
      app->add_option("--remask-patch", cfg.remask_patch)->capture_default_str();
    } else {
      app->add_option("--channels", net.channels)->capture_default_str();
      app->add_option("--heads", net.heads)->capture_default_str();
      app->add_option("--layers", net.layers)->capture_default_str();
      app->add_option("--step-embed", net.step_embed_dim)->capture_default_str();
      app->add_option("--ff-mult", net.ff_mult)->capture_default_str();
    }
  }
};

void print_epoch(int epoch, double train, double val, void*) {
  std::cerr << "epoch " << epoch << " train " << fmt(train) << " validation " << fmt(val) << '\n';
}

void report_training(const fence_train_report& r, const std::string& out) {
  std::cout << "wrote " << out << " (" << r.epochs_run << " epochs, best " << r.best_epoch << ", validation "
            << fmt(r.best_validation_loss) << (r.stopped_early ? ", stopped early" : "") << ")\n";
  if (r.warned_untrained_init) {
    std::cerr << "warning: conditional fine-tuning started from weights without unconditional pretraining\n";
  }
}

// "fence", "none", "cfg" or "cfg:<lambda>".
void parse_mode(const std::string& text, fence_impute_config& cfg) {
  if (text == "fence") {
    cfg.mode = FENCE_GUIDANCE_FENCE;
  } else if (text == "none") {
    cfg.mode = FENCE_GUIDANCE_NONE;
  } else if (text == "cfg" || text.rfind("cfg:", 0) == 0) {
    cfg.mode = FENCE_GUIDANCE_FIXED;
    cfg.fixed_lambda = 1.0;
    if (text.size() > 4) {
      try {
        std::size_t used = 0;
        cfg.fixed_lambda = std::stod(text.substr(4), &used);
        if (used != text.size() - 4) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw CLI::ValidationError("--mode", "cannot read the scale in '" + text + "'");
      }
    }
  } else {
    throw CLI::ValidationError("--mode", "expected fence, none or cfg:<lambda>, got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-guided diffusion imputation for spatial-temporal grids"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fence_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "sample grids from a Gaussian oracle world");
  fence_world_spec spec{};
  fence_world_spec_default(&spec);
  std::string synth_spec, synth_out, synth_write_spec;
  int synth_windows = 1;
  synth->add_option("--spec", synth_spec, "oracle spec file (overrides the flags below)")->check(CLI::ExistingFile);
  synth->add_option("--nodes", spec.nodes)->capture_default_str();
  synth->add_option("--steps", spec.steps)->capture_default_str();
  synth->add_option("--rho-s", spec.rho_s)->capture_default_str();
  synth->add_option("--rho-t", spec.rho_t)->capture_default_str();
  synth->add_option("--mean", spec.mean)->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--windows", synth_windows, "independent windows placed side by side")->capture_default_str();
  synth->add_option("--out", synth_out, "grid CSV to write")->required();
  synth->add_option("--write-spec", synth_write_spec, "also write the resolved oracle spec here");

  // mask
  auto* mask = app.add_subcommand("mask", "generate an SR-TC or SC-TC observation mask (1 = observed)");
  fence_mask_config mcfg{};
  fence_mask_config_default(&mcfg);
  std::string mask_pattern = "sr-tc", mask_grid, mask_adjacency, mask_out;
  std::size_t mask_nodes = 0, mask_length = 0;
  mask->add_option("--pattern", mask_pattern)->check(CLI::IsMember({"sr-tc", "sc-tc"}))->capture_default_str();
  mask->add_option("--alpha", mcfg.missing_rate, "missing rate")->capture_default_str();
  mask->add_option("--patch", mcfg.patch_length, "patch length")->capture_default_str();
  mask->add_option("--communities", mcfg.n_communities, "communities (sc-tc)")->capture_default_str();
  mask->add_option("--seed", mcfg.seed)->capture_default_str();
  mask->add_option("--grid", mask_grid, "take the shape from this grid CSV")->check(CLI::ExistingFile);
  mask->add_option("--nodes", mask_nodes);
  mask->add_option("--length", mask_length);
  mask->add_option("--adjacency", mask_adjacency, "adjacency CSV (sc-tc; ring graph otherwise)")
      ->check(CLI::ExistingFile);
  mask->add_option("--out", mask_out)->required();

  // training
  auto* tu = app.add_subcommand("train-uncond", "stage 1: train the unconditional denoiser");
  TrainOpts tu_opts;
  ScheduleOpts tu_sched;
  tu_opts.add(tu, false);
  tu_sched.add(tu);
  auto* fc = app.add_subcommand("finetune-cond", "stage 2: fine-tune the conditional denoiser");
  TrainOpts fc_opts;
  ScheduleOpts fc_sched;
  fc_opts.add(fc, true);
  fc_sched.add(fc);

  // impute
  auto* imp = app.add_subcommand("impute", "run guided reverse diffusion over an observed grid");
  fence_impute_config icfg{};
  fence_impute_config_default(&icfg);
  ScheduleOpts imp_sched;
  std::string ck_cond, ck_uncond, oracle_spec, imp_observed, imp_mask, imp_mode = "fence", imp_out, trace_out,
      samples_out, aggregation = "cluster", anchoring = "free";
  double pi_true = 1.0;
  imp->add_option("--checkpoint-cond", ck_cond)->check(CLI::ExistingFile);
  imp->add_option("--checkpoint-uncond", ck_uncond)->check(CLI::ExistingFile);
  imp->add_option("--oracle", oracle_spec, "oracle spec file (closed-form denoiser)")->check(CLI::ExistingFile);
  imp->add_option("--oracle-pi-true", pi_true, "weight of the true conditional in the oracle's conditional score")
      ->capture_default_str();
  imp->add_option("--observed", imp_observed, "grid CSV holding the observations")->required()->check(CLI::ExistingFile);
  imp->add_option("--mask", imp_mask, "mask CSV, 1 = observed")->required()->check(CLI::ExistingFile);
  imp->add_option("--mode", imp_mode, "fence, cfg:<lambda> or none")->capture_default_str();
  imp->add_option("--pi", icfg.pi)->capture_default_str();
  imp->add_option("--lambda-ref", icfg.lambda_ref)->capture_default_str();
  imp->add_option("--t0", icfg.t0)->capture_default_str();
  imp->add_option("--t1", icfg.t1)->capture_default_str();
  imp->add_option("--alpha-scale", icfg.alpha_scale)->capture_default_str();
  imp->add_option("--lambda-max", icfg.lambda_max)->capture_default_str();
  imp->add_option("--clusters", icfg.n_clusters, "0 = max(1, round(N/20))")->capture_default_str();
  imp->add_option("--aggregation", aggregation)->check(CLI::IsMember({"cluster", "global", "node"}))->capture_default_str();
  imp->add_option("--recluster-every", icfg.recluster_every)->capture_default_str();
  imp->add_option("--samples", icfg.n_samples)->capture_default_str();
  imp->add_option("--seed", icfg.seed)->capture_default_str();
  imp->add_option("--threads", icfg.threads)->capture_default_str();
  imp->add_option("--anchoring", anchoring)->check(CLI::IsMember({"free", "clamp"}))->capture_default_str();
  imp->add_option("--out", imp_out, "mean imputation CSV");
  imp->add_option("--trace-out", trace_out, "trace CSV");
  imp->add_option("--samples-out", samples_out, "per-sample grids CSV");
  imp_sched.add(imp);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score an imputation on the entries hidden by the mask");
  std::string ev_pred, ev_truth, ev_mask, ev_eval_mask, ev_samples, ev_out, ev_nodes;
  ev->add_option("--pred", ev_pred, "imputed grid CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", ev_truth, "ground-truth grid CSV")->required()->check(CLI::ExistingFile);
  auto* ev_m = ev->add_option("--mask", ev_mask, "observation mask; hidden entries are scored")->check(CLI::ExistingFile);
  ev->add_option("--eval-mask", ev_eval_mask, "explicit mask of scored entries")->check(CLI::ExistingFile)->excludes(ev_m);
  ev->add_option("--samples", ev_samples, "samples CSV for CRPS")->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "write mae,rmse,mape,crps here instead of stdout");
  ev->add_option("--per-node", ev_nodes, "per-node breakdown CSV");

  // trace
  auto* tr = app.add_subcommand("trace", "per-step averages of a trace CSV");
  std::string tr_in, tr_out;
  tr->add_option("--in", tr_in)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out)->required();

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a config file");
  std::string run_config, run_output = "out";
  run->add_option("--config", run_config)->required()->check(CLI::ExistingFile);
  run->add_option("--output", run_output, "output directory")->capture_default_str();
  run->footer(std::string("Config keys (section.key, default):\n") + fence_config_reference());

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      if (!synth_spec.empty()) check(fence_world_spec_read(synth_spec.c_str(), &spec));
      fence_world* w = nullptr;
      check(fence_world_create(&spec, &w));
      World world(w);
      fence_grid* g = nullptr;
      check(fence_world_sample(world.get(), synth_windows, &g));
      Grid grid(g);
      check(fence_grid_write_csv(grid.get(), synth_out.c_str()));
      if (!synth_write_spec.empty()) check(fence_world_spec_write(synth_write_spec.c_str(), &spec));
    } else if (*mask) {
      std::size_t n = mask_nodes, len = mask_length;
      if (!mask_grid.empty()) {
        const Grid g = read_grid(mask_grid);
        n = fence_grid_nodes(g.get());
        len = fence_grid_steps(g.get());
      }
      if (n == 0 || len == 0) throw CLI::ValidationError("mask", "give --grid or both --nodes and --length");
      mcfg.pattern = mask_pattern == "sc-tc" ? FENCE_MASK_SC_TC : FENCE_MASK_SR_TC;
      std::vector<double> adj;
      if (!mask_adjacency.empty()) {
        const Grid a = read_grid(mask_adjacency);
        adj.resize(fence_grid_nodes(a.get()) * fence_grid_steps(a.get()));
        check(fence_grid_values(a.get(), adj.data()));
        if (adj.size() != n * n) throw CLI::ValidationError("--adjacency", "adjacency must be N x N");
      }
      fence_mask* m = nullptr;
      check(fence_mask_generate(&mcfg, n, len, adj.empty() ? nullptr : adj.data(), &m));
      Mask out(m);
      check(fence_mask_write_csv(out.get(), mask_out.c_str()));
    } else if (*tu || *fc) {
      const bool cond = static_cast<bool>(*fc);
      TrainOpts& o = cond ? fc_opts : tu_opts;
      const Schedule sched = (cond ? fc_sched : tu_sched).make();
      const Grid series = read_grid(o.data);
      fence_train_report report{};
      const fence_epoch_fn cb = o.verbose ? print_epoch : nullptr;
      if (cond) {
        check(fence_finetune_conditional(series.get(), o.init.c_str(), &o.cfg, sched.get(), o.out.c_str(), cb,
                                         nullptr, &report));
      } else {
        check(fence_train_unconditional(series.get(), &o.net, &o.cfg, sched.get(), o.out.c_str(), cb, nullptr,
                                        &report));
      }
      report_training(report, o.out);
    } else if (*imp) {
      parse_mode(imp_mode, icfg);
      icfg.aggregation = aggregation == "global" ? FENCE_AGG_GLOBAL
                         : aggregation == "node" ? FENCE_AGG_NODE
                                                 : FENCE_AGG_CLUSTER;
      icfg.anchoring = anchoring == "clamp" ? FENCE_ANCHOR_CLAMP : FENCE_ANCHOR_FREE;
      const bool neural = !ck_cond.empty() || !ck_uncond.empty();
      if (neural == !oracle_spec.empty()) {
        throw CLI::ValidationError("impute", "give either --oracle or both --checkpoint-cond and --checkpoint-uncond");
      }
      if (neural && (ck_cond.empty() || ck_uncond.empty())) {
        throw CLI::ValidationError("impute", "neural imputation needs both --checkpoint-cond and --checkpoint-uncond");
      }
      const Schedule sched = imp_sched.make();
      const Grid observed = read_grid(imp_observed);
      const Mask m = read_mask(imp_mask);
      Backend cond, uncond;
      if (neural) {
        fence_backend* b = nullptr;
        check(fence_backend_load(ck_cond.c_str(), &b));
        cond.reset(b);
        check(fence_backend_load(ck_uncond.c_str(), &b));
        uncond.reset(b);
      } else {
        fence_world_spec ws{};
        check(fence_world_spec_read(oracle_spec.c_str(), &ws));
        fence_world* w = nullptr;
        check(fence_world_create(&ws, &w));
        const World world(w);
        fence_backend* b = nullptr;
        check(fence_backend_oracle(world.get(), observed.get(), m.get(), sched.get(), pi_true, &b));
        cond.reset(b);
      }
      fence_result* r = nullptr;
      check(fence_impute(cond.get(), uncond ? uncond.get() : cond.get(), observed.get(), m.get(), sched.get(), &icfg,
                         &r));
      const Result result(r);
      if (!imp_out.empty()) {
        std::vector<double> mean(fence_grid_nodes(observed.get()) * fence_grid_steps(observed.get()));
        check(fence_result_mean(result.get(), mean.data()));
        fence_grid* g = nullptr;
        check(fence_grid_create(fence_grid_nodes(observed.get()), fence_grid_steps(observed.get()), mean.data(), &g));
        const Grid mg(g);
        check(fence_grid_write_csv(mg.get(), imp_out.c_str()));
      }
      if (!trace_out.empty() || !samples_out.empty()) {
        if (trace_out.empty()) throw CLI::ValidationError("--samples-out", "needs --trace-out");
        check(fence_result_write_trace(result.get(), trace_out.c_str(),
                                       samples_out.empty() ? nullptr : samples_out.c_str()));
      }
    } else if (*ev) {
      if (ev_mask.empty() == ev_eval_mask.empty()) throw CLI::ValidationError("evaluate", "give --mask or --eval-mask");
      const Grid pred = read_grid(ev_pred);
      const Grid truth = read_grid(ev_truth);
      Mask scored;
      if (!ev_eval_mask.empty()) {
        scored = read_mask(ev_eval_mask);
      } else {
        const Mask obs = read_mask(ev_mask);
        std::vector<double> e(fence_mask_nodes(obs.get()) * fence_mask_steps(obs.get()));
        check(fence_mask_entries(obs.get(), e.data()));
        for (double& v : e) v = 1.0 - v;
        fence_mask* mm = nullptr;
        check(fence_mask_create(fence_mask_nodes(obs.get()), fence_mask_steps(obs.get()), e.data(), &mm));
        scored.reset(mm);
      }
      double* draws = nullptr;
      std::size_t n_draws = 0, sn = 0, st = 0;
      if (!ev_samples.empty()) {
        check(fence_samples_read_csv(ev_samples.c_str(), &draws, &n_draws, &sn, &st));
        if (sn != fence_grid_nodes(truth.get()) || st != fence_grid_steps(truth.get())) {
          fence_free(draws);
          throw CLI::ValidationError("--samples", "sample grids differ in shape from the truth grid");
        }
      }
      std::unique_ptr<double, void (*)(void*)> owned(draws, fence_free);
      const std::size_t n_nodes = fence_grid_nodes(truth.get());
      std::vector<double> per_node(4 * n_nodes);
      fence_metrics m{};
      check(fence_evaluate(pred.get(), truth.get(), scored.get(), draws, n_draws, &m, per_node.data()));
      const std::string line = fmt(m.mae) + "," + fmt(m.rmse) + "," + fmt(m.mape) + "," + fmt(m.crps);
      if (ev_out.empty()) {
        std::cout << line << '\n';
      } else {
        std::ofstream f(ev_out);
        f << "mae,rmse,mape,crps\n" << line << '\n';
        if (!f) throw Failure{FENCE_ERR_IO};
      }
      if (!ev_nodes.empty()) {
        std::ofstream f(ev_nodes);
        f << "node,mae,rmse,mape,crps\n";
        for (std::size_t i = 0; i < n_nodes; ++i) {
          f << i << ',' << fmt(per_node[4 * i]) << ',' << fmt(per_node[4 * i + 1]) << ','
            << fmt(per_node[4 * i + 2]) << ',' << fmt(per_node[4 * i + 3]) << '\n';
        }
        if (!f) throw Failure{FENCE_ERR_IO};
      }
    } else if (*tr) {
      check(fence_trace_summarize(tr_in.c_str(), tr_out.c_str()));
    } else if (*run) {
      fence_metrics m{};
      check(fence_run_experiment(run_config.c_str(), run_output.c_str(), &m));
      std::cout << "mae " << fmt(m.mae) << " rmse " << fmt(m.rmse) << " mape " << fmt(m.mape) << " crps "
                << fmt(m.crps) << "\nreports in " << run_output << '\n';
    }
  } catch (const Failure& f) {
    const char* msg = fence_last_error();
    std::cerr << "error (" << fence_status_name(f.status) << "): " << (*msg ? msg : "write failed") << '\n';
    return exit_code(f.status);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
