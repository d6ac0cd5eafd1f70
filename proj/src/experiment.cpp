#include "fence/experiment.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/gaussian.hpp"
#include "fence/masking.hpp"
#include "fence/metrics.hpp"
#include "fence/network.hpp"
#include "fence/rng.hpp"
#include "fence/sampler.hpp"
#include "fence/training.hpp"

namespace fence {

namespace {

struct KeySpec {
  const char* section;
  const char* key;
  const char* fallback;
  const char* doc;
};

// Order here is the order of config.resolved and of the reference listing.
constexpr KeySpec kKeys[] = {
    {"experiment", "preset", "none", "comma-separated presets: paper-defaults, wo-C, wo-F, none"},
    {"experiment", "seed", "0", "seed for imputation trajectories"},
    {"experiment", "threads", "1", "worker threads for trajectories"},
    {"data", "source", "oracle", "oracle (sample a Gaussian world) or csv"},
    {"data", "path", "", "grid CSV when source = csv"},
    {"data", "window", "12", "window length T when source = csv"},
    {"data", "windows", "1", "test windows drawn when source = oracle"},
    {"data", "train_windows", "64", "training windows drawn when source = oracle and backend = neural"},
    {"oracle", "nodes", "6", "nodes in the Gaussian world"},
    {"oracle", "steps", "12", "time slices per window"},
    {"oracle", "rho_s", "0.6", "spatial correlation per ring hop"},
    {"oracle", "rho_t", "0.8", "temporal correlation per lag"},
    {"oracle", "mean", "0", "constant mean"},
    {"oracle", "seed", "0", "seed for data drawn from the world"},
    {"oracle", "pi_true", "1", "weight of the true conditional inside the conditional oracle score"},
    {"mask", "pattern", "sr-tc", "sr-tc or sc-tc"},
    {"mask", "missing_rate", "0.8", "probability a block is missing"},
    {"mask", "patch_length", "12", "temporal patch length"},
    {"mask", "communities", "1", "node communities for sc-tc"},
    {"mask", "adjacency", "", "adjacency CSV for sc-tc (ring graph when empty)"},
    {"mask", "seed", "0", "mask seed"},
    {"diffusion", "steps", "50", "diffusion steps K"},
    {"diffusion", "beta1", "0.0001", "first beta"},
    {"diffusion", "beta_k", "0.5", "last beta"},
    {"diffusion", "variance", "beta-tilde", "reverse variance: beta-tilde or beta"},
    {"guidance", "mode", "fence", "fence, cfg or none"},
    {"guidance", "lambda", "1", "constant scale when mode = cfg"},
    {"guidance", "pi", "0.5", "prior confidence"},
    {"guidance", "lambda_ref", "1.6", "scale at the activation time"},
    {"guidance", "t0", "0.8", "activation time"},
    {"guidance", "t1", "0.5", "peak time"},
    {"guidance", "alpha_scale", "10", "temperature divisor"},
    {"guidance", "lambda_max", "10", "upper clamp on the scale"},
    {"guidance", "aggregation", "cluster", "cluster, global or node"},
    {"guidance", "clusters", "0", "cluster count (0 = max(1, round(N/20)))"},
    {"guidance", "recluster_every", "1", "steps between re-clustering"},
    {"sampler", "samples", "10", "ensemble size for the point metrics"},
    {"sampler", "crps_samples", "100", "ensemble size for CRPS (0 skips CRPS)"},
    {"sampler", "anchoring", "free", "free or clamp"},
    {"model", "backend", "oracle", "oracle (needs source = oracle) or neural"},
    {"model", "checkpoint_uncond", "", "load this instead of training stage 1"},
    {"model", "checkpoint_cond", "", "load this instead of training stage 2"},
    {"model", "channels", "16", "hidden size d"},
    {"model", "layers", "2", "attention layers"},
    {"model", "heads", "2", "attention heads"},
    {"model", "step_embed_dim", "128", "sinusoidal step embedding size"},
    {"model", "ff_mult", "2", "feed-forward width multiple"},
    {"model", "seed", "0", "weight initialization and training seed"},
    {"train", "uncond_epochs", "150", ""},
    {"train", "uncond_lr", "0.002", ""},
    {"train", "uncond_weight_decay", "0.000001", ""},
    {"train", "uncond_patience", "20", ""},
    {"train", "cond_epochs", "80", ""},
    {"train", "cond_lr", "0.001", ""},
    {"train", "cond_weight_decay", "0.00001", ""},
    {"train", "cond_patience", "10", ""},
    {"train", "batch_size", "16", ""},
    {"train", "remask_rate", "0.5", "chance an observed block is hidden in stage 2"},
};

std::string dotted(const KeySpec& k) { return std::string(k.section) + "." + k.key; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const KeySpec& k : kKeys) values_[dotted(k)] = k.fallback;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> given;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  ExperimentConfig probe;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::Config, where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Config, where + ": expected key = value");
    if (section.empty()) fail(ErrorCode::Config, where + ": key outside any [section]");
    const std::string key = section + "." + trim(line.substr(0, eq));
    if (!probe.values_.count(key)) fail(ErrorCode::Config, where + ": unknown key '" + key + "'");
    if (given.count(key)) fail(ErrorCode::Config, where + ": key '" + key + "' given twice");
    given[key] = trim(line.substr(eq + 1));
  }

  ExperimentConfig cfg;
  if (auto it = given.find("experiment.preset"); it != given.end()) {
    for (const std::string& p : split_list(it->second)) apply_preset(cfg, p);
  }
  for (const auto& [k, v] : given) cfg.values_[k] = v;
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::Config, "unknown key '" + key + "'");
  return it->second;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::Config, "unknown key '" + key + "'");
  it->second = value;
}

double ExperimentConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::Config, "key '" + key + "': expected a number, got '" + s + "'");
  }
  return v;
}

long ExperimentConfig::get_int(const std::string& key) const {
  const std::string& s = get(key);
  long v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    fail(ErrorCode::Config, "key '" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

std::string ExperimentConfig::resolved() const {
  std::ostringstream out;
  std::string section;
  for (const KeySpec& k : kKeys) {
    if (section != k.section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.key << " = " << values_.at(dotted(k)) << '\n';
  }
  return out.str();
}

std::vector<std::string> preset_names() { return {"paper-defaults", "wo-C", "wo-F", "none"}; }

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  if (name == "none") return;
  if (name == "paper-defaults") {
    cfg.set("diffusion.steps", "50");
    cfg.set("diffusion.beta1", "0.0001");
    cfg.set("diffusion.beta_k", "0.5");
    cfg.set("guidance.pi", "0.5");
    cfg.set("guidance.lambda_ref", "1.6");
    cfg.set("guidance.t0", "0.8");
    cfg.set("guidance.t1", "0.5");
    cfg.set("model.channels", "64");
    cfg.set("model.layers", "4");
    cfg.set("model.heads", "8");
  } else if (name == "wo-C") {
    cfg.set("guidance.mode", "fence");
    cfg.set("guidance.aggregation", "cluster");
    cfg.set("guidance.clusters", "1");
  } else if (name == "wo-F") {
    cfg.set("guidance.mode", "cfg");
    cfg.set("guidance.lambda", "1");
  } else {
    fail(ErrorCode::Config, "unknown preset '" + name + "'");
  }
  // Keep the preset list visible in config.resolved.
  const std::string current = cfg.get("experiment.preset");
  cfg.set("experiment.preset", current == "none" ? name : current + "," + name);
}

std::string config_reference() {
  std::ostringstream out;
  for (const KeySpec& k : kKeys) {
    out << dotted(k) << " (" << (*k.fallback ? k.fallback : "\"\"") << ")";
    if (*k.doc) out << "  " << k.doc;
    out << '\n';
  }
  return out.str();
}

namespace {

template <class T>
T pick(const ExperimentConfig& cfg, const std::string& key,
       std::initializer_list<std::pair<const char*, T>> options) {
  const std::string& v = cfg.get(key);
  for (const auto& [name, value] : options) {
    if (v == name) return value;
  }
  std::string allowed;
  for (const auto& o : options) allowed += (allowed.empty() ? "" : ", ") + std::string(o.first);
  fail(ErrorCode::Config, "key '" + key + "': '" + v + "' is not one of " + allowed);
}

int positive(const ExperimentConfig& cfg, const std::string& key, long floor = 1) {
  const long v = cfg.get_int(key);
  if (v < floor) {
    fail(ErrorCode::Config, "key '" + key + "' must be at least " + std::to_string(floor));
  }
  return static_cast<int>(v);
}

std::uint64_t seed_of(const ExperimentConfig& cfg, const std::string& key) {
  const std::string& s = cfg.get(key);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    fail(ErrorCode::Config, "key '" + key + "': expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

// Rng streams for data drawn from the oracle world.
constexpr std::uint64_t kTestStream = 0x54455354;   // "TEST"
constexpr std::uint64_t kTrainStream = 0x54524E;    // "TRN"
constexpr std::uint64_t kCrpsSalt = 0x4352505300000000ull;

Eigen::MatrixXd hconcat(const std::vector<Eigen::MatrixXd>& parts) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Eigen::MatrixXd out(parts.front().rows(), cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p;
    c += p.cols();
  }
  return out;
}

GuidanceConfig guidance_from(const ExperimentConfig& cfg) {
  GuidanceConfig g;
  g.mode = pick<GuidanceMode>(cfg, "guidance.mode",
                              {{"fence", GuidanceMode::Fence}, {"cfg", GuidanceMode::FixedCfg},
                               {"none", GuidanceMode::None}});
  g.fixed_lambda = cfg.get_double("guidance.lambda");
  g.pi = cfg.get_double("guidance.pi");
  g.lambda_ref = cfg.get_double("guidance.lambda_ref");
  g.t0 = cfg.get_double("guidance.t0");
  g.t1 = cfg.get_double("guidance.t1");
  g.alpha_scale = cfg.get_double("guidance.alpha_scale");
  g.lambda_max = cfg.get_double("guidance.lambda_max");
  g.aggregation = pick<Aggregation>(cfg, "guidance.aggregation",
                                    {{"cluster", Aggregation::Cluster},
                                     {"global", Aggregation::Global},
                                     {"node", Aggregation::Node}});
  try {
    g.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("[guidance] ") + e.what());
  }
  return g;
}

struct TestData {
  std::vector<TrafficGrid> truth;    // normalized units
  std::vector<MaskMatrix> present;   // raw presence
  Normalization norm;
  std::optional<GaussianOracleWorld> world;
  DatasetSplit training;             // only filled when a network must be trained
};

TestData load_data(const ExperimentConfig& cfg, bool need_training) {
  TestData d;
  const std::string source = cfg.get("data.source");
  if (source == "oracle") {
    WorldSpec spec;
    spec.nodes = positive(cfg, "oracle.nodes");
    spec.steps = positive(cfg, "oracle.steps");
    spec.rho_s = cfg.get_double("oracle.rho_s");
    spec.rho_t = cfg.get_double("oracle.rho_t");
    spec.mean = cfg.get_double("oracle.mean");
    spec.seed = seed_of(cfg, "oracle.seed");
    d.world = make_gaussian_world(spec);
    Rng rng(spec.seed, kTestStream);
    const int windows = positive(cfg, "data.windows");
    for (int w = 0; w < windows; ++w) {
      d.truth.push_back(d.world->sample(rng));
      d.present.push_back(MaskMatrix::ones(spec.nodes, spec.steps));
    }
    if (need_training) {
      Rng train_rng(spec.seed, kTrainStream);
      const int n_train = positive(cfg, "data.train_windows");
      for (int w = 0; w < n_train; ++w) {
        d.training.train.push_back({d.world->sample(train_rng), MaskMatrix::ones(spec.nodes, spec.steps)});
      }
      for (int w = 0; w < std::max(1, n_train / 4); ++w) {
        d.training.validation.push_back(
            {d.world->sample(train_rng), MaskMatrix::ones(spec.nodes, spec.steps)});
      }
      d.training.window_length = spec.steps;
    }
  } else if (source == "csv") {
    const std::string path = cfg.get("data.path");
    if (path.empty()) fail(ErrorCode::Config, "key 'data.path' is required when data.source = csv");
    const RawSeries raw = read_grid_csv(path);
    SplitOptions opt;
    opt.window = positive(cfg, "data.window");
    DatasetSplit split = make_dataset_split(raw, opt);
    require(!split.test.empty(), "test split of " + path + " holds no complete window");
    d.norm = split.normalization;
    for (const Window& w : split.test) {
      d.truth.push_back(w.grid);
      d.present.push_back(w.mask);
    }
    d.training = std::move(split);
  } else {
    fail(ErrorCode::Config, "key 'data.source': '" + source + "' is not one of oracle, csv");
  }
  return d;
}

MaskMatrix make_mask(const ExperimentConfig& cfg, Eigen::Index n_nodes, Eigen::Index length) {
  MaskPatternConfig m;
  m.pattern = pick<MaskPattern>(cfg, "mask.pattern", {{"sr-tc", MaskPattern::SrTc}, {"sc-tc", MaskPattern::ScTc}});
  m.missing_rate = cfg.get_double("mask.missing_rate");
  m.patch_length = positive(cfg, "mask.patch_length");
  m.n_communities = positive(cfg, "mask.communities");
  m.seed = seed_of(cfg, "mask.seed");
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("[mask] ") + e.what());
  }
  if (m.pattern == MaskPattern::SrTc) return mask_sr_tc(n_nodes, length, m);
  GraphSpec graph = ring_graph(static_cast<int>(n_nodes));
  if (const std::string adj = cfg.get("mask.adjacency"); !adj.empty()) {
    graph.adjacency = read_grid_csv(adj).values;
    require(graph.adjacency.rows() == n_nodes && graph.adjacency.cols() == n_nodes,
            adj + ": adjacency must be " + std::to_string(n_nodes) + " x " + std::to_string(n_nodes));
  }
  return mask_sc_tc(graph, length, m);
}

struct NeuralPair {
  NeuralDenoiser uncond;
  NeuralDenoiser cond;
};

TrainConfig train_config(const ExperimentConfig& cfg, bool conditional) {
  TrainConfig t = conditional ? TrainConfig::conditional_defaults() : TrainConfig::unconditional_defaults();
  const std::string p = conditional ? "train.cond_" : "train.uncond_";
  t.epochs = positive(cfg, p + "epochs");
  t.learning_rate = cfg.get_double(p + "lr");
  t.weight_decay = cfg.get_double(p + "weight_decay");
  t.patience = positive(cfg, p + "patience");
  t.batch_size = positive(cfg, "train.batch_size");
  t.remask_rate = cfg.get_double("train.remask_rate");
  t.remask_patch = positive(cfg, "mask.patch_length");
  t.seed = seed_of(cfg, "model.seed") + (conditional ? 1 : 0);
  try {
    t.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("[train] ") + e.what());
  }
  return t;
}

NeuralPair neural_backends(const ExperimentConfig& cfg, const TestData& data, const NoiseSchedule& sched,
                           const std::string& out_dir, ExperimentSummary& summary) {
  NetworkConfig net;
  net.n_nodes = static_cast<int>(data.truth.front().n_nodes());
  net.n_steps = static_cast<int>(data.truth.front().n_steps());
  net.channels = positive(cfg, "model.channels");
  net.layers = positive(cfg, "model.layers");
  net.heads = positive(cfg, "model.heads");
  net.step_embed_dim = positive(cfg, "model.step_embed_dim", 2);
  net.ff_mult = positive(cfg, "model.ff_mult");
  try {
    net.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("[model] ") + e.what());
  }

  auto check_shape = [&](const NeuralDenoiser& m, const std::string& path) {
    if (m.config().n_nodes != net.n_nodes || m.config().n_steps != net.n_steps) {
      fail(ErrorCode::InvalidInput, path + ": checkpoint shape does not match the data");
    }
  };

  NeuralPair pair;
  const std::string ck_u = cfg.get("model.checkpoint_uncond");
  const std::string ck_c = cfg.get("model.checkpoint_cond");
  if (!ck_u.empty()) {
    pair.uncond = NeuralDenoiser::load(ck_u);
    check_shape(pair.uncond, ck_u);
  } else {
    const auto r = train_unconditional(NeuralDenoiser::initialized(net, seed_of(cfg, "model.seed")),
                                       data.training, sched, train_config(cfg, false));
    pair.uncond = r.model;
    const std::string path = (std::filesystem::path(out_dir) / "model_uncond.fnce").string();
    pair.uncond.save(path);
    summary.written.push_back(path);
  }
  if (!ck_c.empty()) {
    pair.cond = NeuralDenoiser::load(ck_c);
    check_shape(pair.cond, ck_c);
  } else {
    const auto r = finetune_conditional(pair.uncond, data.training, sched, train_config(cfg, true));
    summary.warnings.insert(summary.warnings.end(), r.warnings.begin(), r.warnings.end());
    pair.cond = r.model;
    const std::string path = (std::filesystem::path(out_dir) / "model_cond.fnce").string();
    pair.cond.save(path);
    summary.written.push_back(path);
  }
  return pair;
}

std::string number_or_nan(double v) { return std::isfinite(v) ? format_double(v) : "nan"; }

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg, const std::string& output_dir) {
  namespace fs = std::filesystem;
  ExperimentSummary summary;

  // Validate everything that does not need data first, so typos fail fast.
  const GuidanceConfig guidance = guidance_from(cfg);
  const VarianceMode variance = pick<VarianceMode>(
      cfg, "diffusion.variance", {{"beta-tilde", VarianceMode::BetaTilde}, {"beta", VarianceMode::Beta}});
  const bool neural = pick<bool>(cfg, "model.backend", {{"oracle", false}, {"neural", true}});
  ImputeConfig icfg;
  icfg.guidance = guidance;
  icfg.n_clusters = positive(cfg, "guidance.clusters", 0);
  icfg.recluster_every = positive(cfg, "guidance.recluster_every");
  icfg.n_samples = positive(cfg, "sampler.samples");
  icfg.anchoring = pick<Anchoring>(cfg, "sampler.anchoring", {{"free", Anchoring::Free}, {"clamp", Anchoring::Clamp}});
  icfg.threads = positive(cfg, "experiment.threads");
  const std::uint64_t seed = seed_of(cfg, "experiment.seed");
  const int crps_samples = positive(cfg, "sampler.crps_samples", 0);
  if (crps_samples == 1) fail(ErrorCode::Config, "key 'sampler.crps_samples' must be 0 or at least 2");
  const double pi_true = cfg.get_double("oracle.pi_true");
  if (!(pi_true > 0.0 && pi_true <= 1.0)) fail(ErrorCode::Config, "key 'oracle.pi_true' must lie in (0, 1]");
  const double beta1 = cfg.get_double("diffusion.beta1");
  const double beta_k = cfg.get_double("diffusion.beta_k");
  const int k_steps = positive(cfg, "diffusion.steps", 2);
  if (!(beta1 > 0.0 && beta_k < 1.0 && beta1 <= beta_k)) {
    fail(ErrorCode::Config, "[diffusion] betas must satisfy 0 < beta1 <= beta_k < 1");
  }
  const NoiseSchedule sched = quadratic_schedule(k_steps, beta1, beta_k, variance);
  if (!neural && cfg.get("data.source") != "oracle") {
    fail(ErrorCode::Config, "key 'model.backend' = oracle requires data.source = oracle");
  }

  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + output_dir + ": " + ec.message());
  const auto out = [&](const char* name) { return (fs::path(output_dir) / name).string(); };

  const bool need_training =
      neural && (cfg.get("model.checkpoint_uncond").empty() || cfg.get("model.checkpoint_cond").empty());
  const TestData data = load_data(cfg, need_training);
  const Eigen::Index n = data.truth.front().n_nodes();
  const Eigen::Index t_len = data.truth.front().n_steps();
  const auto n_windows = static_cast<Eigen::Index>(data.truth.size());
  const MaskMatrix full_mask = make_mask(cfg, n, n_windows * t_len);

  std::optional<NeuralPair> nets;
  if (neural) nets = neural_backends(cfg, data, sched, output_dir, summary);

  std::vector<Eigen::MatrixXd> pred_parts, truth_parts, eval_parts;
  std::vector<std::vector<Eigen::MatrixXd>> crps_parts(static_cast<std::size_t>(crps_samples));
  ImputationResult first;
  for (Eigen::Index w = 0; w < n_windows; ++w) {
    const TrafficGrid& truth = data.truth[static_cast<std::size_t>(w)];
    const MaskMatrix& present = data.present[static_cast<std::size_t>(w)];
    const MaskMatrix slice(full_mask.entries().middleCols(w * t_len, t_len));
    const MaskMatrix obs = slice.intersect(present);
    const MaskMatrix eval = slice.complement().intersect(present);
    const TrafficGrid observed = observed_part(truth, obs);

    std::optional<OracleBackend> oracle;
    if (!neural) oracle.emplace(data.world->with_observations(observed, obs), sched, pi_true);
    const DenoiserBackend& cond = neural ? static_cast<const DenoiserBackend&>(nets->cond) : *oracle;
    const DenoiserBackend& uncond = neural ? static_cast<const DenoiserBackend&>(nets->uncond) : *oracle;

    ImputeConfig run = icfg;
    run.seed = mix64(seed + static_cast<std::uint64_t>(w));
    ImputationResult r = impute(cond, uncond, observed, obs, sched, run);
    pred_parts.push_back(denormalize(r.mean_imputation, data.norm.mean, data.norm.std).values());
    truth_parts.push_back(denormalize(truth, data.norm.mean, data.norm.std).values());
    eval_parts.push_back(eval.entries());
    if (crps_samples > 0) {
      ImputeConfig c = run;
      c.seed = run.seed ^ kCrpsSalt;
      c.n_samples = crps_samples;
      const ImputationResult cr = impute(cond, uncond, observed, obs, sched, c);
      for (int s = 0; s < crps_samples; ++s) {
        crps_parts[static_cast<std::size_t>(s)].push_back(
            denormalize(cr.samples[static_cast<std::size_t>(s)], data.norm.mean, data.norm.std).values());
      }
    }
    if (w == 0) first = std::move(r);
  }

  const TrafficGrid pred(hconcat(pred_parts));
  const TrafficGrid truth(hconcat(truth_parts));
  const MaskMatrix eval(hconcat(eval_parts));
  const PointMetrics pm = point_metrics(pred, truth, eval);
  const auto per_node = per_node_metrics(pred, truth, eval);
  std::optional<CrpsReport> cr;
  if (crps_samples > 0) {
    std::vector<TrafficGrid> draws;
    for (const auto& parts : crps_parts) draws.emplace_back(hconcat(parts));
    cr = dataset_crps(draws, truth, eval);
  }
  summary.mae = pm.mae;
  summary.rmse = pm.rmse;
  summary.mape = pm.mape;
  summary.crps = cr ? cr->mean : std::numeric_limits<double>::quiet_NaN();

  {
    std::ofstream f(out("report.csv"), std::ios::binary);
    f << "mae,rmse,mape,crps\n"
      << number_or_nan(pm.mae) << ',' << number_or_nan(pm.rmse) << ',' << number_or_nan(pm.mape) << ','
      << number_or_nan(summary.crps) << '\n';
    if (!f) fail(ErrorCode::Io, "cannot write " + out("report.csv"));
  }
  {
    std::ofstream f(out("report_nodes.csv"), std::ios::binary);
    f << "node,mae,rmse,mape,crps\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      const PointMetrics& m = per_node[static_cast<std::size_t>(i)];
      f << i << ',' << number_or_nan(m.mae) << ',' << number_or_nan(m.rmse) << ','
        << number_or_nan(m.mape) << ','
        << number_or_nan(cr ? cr->per_node(i) : std::numeric_limits<double>::quiet_NaN()) << '\n';
    }
    if (!f) fail(ErrorCode::Io, "cannot write " + out("report_nodes.csv"));
  }
  write_grid_csv(out("imputed.csv"), pred.values());
  emit_trace(first, out("trace.csv"), out("samples.csv"));
  {
    std::ofstream f(out("config.resolved"), std::ios::binary);
    f << cfg.resolved();
    if (!f) fail(ErrorCode::Io, "cannot write " + out("config.resolved"));
  }
  for (const char* name : {"report.csv", "report_nodes.csv", "imputed.csv", "trace.csv", "samples.csv",
                           "config.resolved"}) {
    summary.written.push_back(out(name));
  }
  return summary;
}

}  // namespace fence
