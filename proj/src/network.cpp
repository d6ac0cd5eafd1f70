#include "fence/network.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "fence/diffusion.hpp"
#include "fence/error.hpp"
#include "fence/rng.hpp"

namespace fence {

void NetworkConfig::validate() const {
  require(n_nodes >= 1 && n_steps >= 1, "network needs n_nodes >= 1 and n_steps >= 1");
  require(channels >= 1 && heads >= 1 && channels % heads == 0,
          "channels must be a positive multiple of heads");
  require(layers >= 1, "network needs at least one layer");
  require(step_embed_dim >= 4 && step_embed_dim % 2 == 0, "step embedding dim must be even, >= 4");
  require(ff_mult >= 1, "ff_mult must be positive");
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr std::size_t kInputW = 0;
constexpr std::size_t kInputB = 1;
constexpr std::size_t kNodeEmbed = 2;
constexpr std::size_t kTimeEmbed = 3;
constexpr std::size_t kStepW = 4;
constexpr std::size_t kStepB = 5;
constexpr std::size_t kLayerBase = 6;
constexpr std::size_t kPerLayer = 14;
// Offsets inside a layer block.
constexpr std::size_t kTemporal = 0;  // wq, wk, wv, wo, bo
constexpr std::size_t kSpatial = 5;   // wq, wk, wv, wo, bo
constexpr std::size_t kFfW1 = 10;
constexpr std::size_t kFfB1 = 11;
constexpr std::size_t kFfW2 = 12;
constexpr std::size_t kFfB2 = 13;

std::size_t layer_param(int layer, std::size_t offset) {
  return kLayerBase + static_cast<std::size_t>(layer) * kPerLayer + offset;
}

struct AttnWeights {
  const Mat& wq;
  const Mat& wk;
  const Mat& wv;
  const Mat& wo;
  const Mat& bo;
};

struct AttnCache {
  Mat x, q, k, v, o;
  std::vector<Mat> a;  // one S x S matrix per head
};

void softmax_rows(Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double hi = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - hi).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// y = concat_h(softmax(q_h k_h^T / sqrt(dh)) v_h) wo^T + bo
Mat attend(const Mat& x, const AttnWeights& w, int heads, AttnCache& c) {
  const Eigen::Index d = x.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.x = x;
  c.q = x * w.wq.transpose();
  c.k = x * w.wk.transpose();
  c.v = x * w.wv.transpose();
  c.o.resize(x.rows(), d);
  c.a.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Mat s = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
    softmax_rows(s);
    c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
    c.a[static_cast<std::size_t>(h)] = std::move(s);
  }
  Mat y = c.o * w.wo.transpose();
  y.rowwise() += w.bo.col(0).transpose();
  return y;
}

struct AttnGrads {
  Mat& wq;
  Mat& wk;
  Mat& wv;
  Mat& wo;
  Mat& bo;
};

Mat attend_backward(const AttnCache& c, const Mat& dy, const AttnWeights& w, int heads,
                    AttnGrads g) {
  const Eigen::Index d = c.x.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  g.wo += dy.transpose() * c.o;
  g.bo.col(0) += dy.colwise().sum().transpose();
  const Mat d_o = dy * w.wo;
  Mat dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Mat& a = c.a[static_cast<std::size_t>(h)];
    const auto d_oh = d_o.middleCols(h * dh, dh);
    const Mat da = d_oh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * d_oh;
    // Softmax backward, row by row.
    Mat ds = a.cwiseProduct(da);
    const Vec row_dot = ds.rowwise().sum();
    ds -= a.cwiseProduct(row_dot.replicate(1, a.cols()));
    ds *= scale;
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  g.wq += dq.transpose() * c.x;
  g.wk += dk.transpose() * c.x;
  g.wv += dv.transpose() * c.x;
  return dq * w.wq + dk * w.wk + dv * w.wv;
}

// Rows of the (N*T) x d state belonging to time slice t.
Mat gather_time(const Mat& h, Eigen::Index n_nodes, Eigen::Index n_steps, Eigen::Index t) {
  Mat out(n_nodes, h.cols());
  for (Eigen::Index i = 0; i < n_nodes; ++i) out.row(i) = h.row(i * n_steps + t);
  return out;
}

void scatter_add_time(Mat& h, const Mat& rows, Eigen::Index n_steps, Eigen::Index t) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) h.row(i * n_steps + t) += rows.row(i);
}

// Little-endian primitives for the checkpoint format.
void put_u32(std::ostream& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xFF));
}
void put_u64(std::ostream& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xFF));
}
bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) return false;
  v = 0;
  for (int b = 3; b >= 0; --b) v = (v << 8) | buf[b];
  return true;
}
bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) return false;
  v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | buf[b];
  return true;
}

}  // namespace

struct NeuralDenoiser::Forward {
  struct Layer {
    Mat h_in;
    std::vector<AttnCache> temporal;  // one per node
    std::vector<AttnCache> spatial;   // one per time slice
    Mat h_ff_in;
    Mat ff_act;  // tanh activations
  };
  Mat features;  // (N*T) x 3
  Vec step_emb;
  std::vector<Layer> layers;
  Mat h_out;
  Mat eps;
  Mat attn;
};

NeuralDenoiser NeuralDenoiser::initialized(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  NeuralDenoiser net;
  net.config_ = config;
  net.build_parameters();
  Rng rng(seed, 0x4E4554ull);  // "NET"
  for (std::size_t p = 0; p < net.params_.size(); ++p) {
    Mat& m = net.params_[p];
    const std::string& name = net.names_[p];
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    const bool is_short_bias = name.size() >= 2 && (name.compare(name.size() - 2, 2, "bo") == 0 ||
                                                     name.compare(name.size() - 2, 2, "b1") == 0 ||
                                                     name.compare(name.size() - 2, 2, "b2") == 0);
    if (is_bias || is_short_bias) {
      m.setZero();
      continue;
    }
    double sd = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    if (p == kNodeEmbed || p == kTimeEmbed) sd = 0.1;
    if (name == "output.weight") sd *= 0.1;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = sd * rng.normal();
    }
  }
  return net;
}

void NeuralDenoiser::build_parameters() {
  const int d = config_.channels;
  const int ff = config_.ff_mult * d;
  names_.clear();
  params_.clear();
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    names_.push_back(std::move(name));
    params_.push_back(Mat::Zero(rows, cols));
  };
  add("input.weight", d, 3);
  add("input.bias", d, 1);
  add("node_embed", config_.n_nodes, d);
  add("time_embed", config_.n_steps, d);
  add("step.weight", d, config_.step_embed_dim);
  add("step.bias", d, 1);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* block : {"temporal.", "spatial."}) {
      add(p + block + "wq", d, d);
      add(p + block + "wk", d, d);
      add(p + block + "wv", d, d);
      add(p + block + "wo", d, d);
      add(p + block + "bo", d, 1);
    }
    add(p + "ff.w1", ff, d);
    add(p + "ff.b1", ff, 1);
    add(p + "ff.w2", d, ff);
    add(p + "ff.b2", d, 1);
  }
  add("output.weight", 1, d);
  add("output.bias", 1, 1);
}

std::size_t NeuralDenoiser::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  fail(ErrorCode::InvalidInput, "no parameter named '" + name + "'");
}

Eigen::MatrixXd& NeuralDenoiser::parameter(const std::string& name) { return params_[index_of(name)]; }

std::size_t NeuralDenoiser::parameter_count() const {
  std::size_t n = 0;
  for (const Mat& m : params_) n += static_cast<std::size_t>(m.size());
  return n;
}

void NeuralDenoiser::zero_output_head() {
  if (!is_initialized()) fail(ErrorCode::State, "network weights are not initialized");
  params_[params_.size() - 2].setZero();
  params_.back().setZero();
}

void NeuralDenoiser::forward(const Eigen::MatrixXd& x_k, int k, const ConditioningContext& ctx,
                             Forward& fw, bool want_attention) const {
  const Eigen::Index n = config_.n_nodes;
  const Eigen::Index t_len = config_.n_steps;
  const int heads = config_.heads;

  fw.features.resize(n * t_len, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Eigen::Index r = i * t_len + t;
      fw.features(r, 0) = x_k(i, t);
      fw.features(r, 1) = ctx.is_unconditional ? 0.0 : ctx.observed(i, t);
      fw.features(r, 2) = ctx.is_unconditional ? 0.0 : ctx.mask.entries()(i, t);
    }
  }
  fw.step_emb = step_embedding(k, config_.step_embed_dim);
  const Vec step_vec = params_[kStepW] * fw.step_emb + params_[kStepB].col(0);

  Mat h = fw.features * params_[kInputW].transpose();
  h.rowwise() += (params_[kInputB].col(0) + step_vec).transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      h.row(i * t_len + t) += params_[kNodeEmbed].row(i) + params_[kTimeEmbed].row(t);
    }
  }

  fw.layers.resize(static_cast<std::size_t>(config_.layers));
  for (int l = 0; l < config_.layers; ++l) {
    Forward::Layer& lc = fw.layers[static_cast<std::size_t>(l)];
    lc.h_in = h;

    const AttnWeights tw{params_[layer_param(l, kTemporal + 0)], params_[layer_param(l, kTemporal + 1)],
                         params_[layer_param(l, kTemporal + 2)], params_[layer_param(l, kTemporal + 3)],
                         params_[layer_param(l, kTemporal + 4)]};
    lc.temporal.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      h.middleRows(i * t_len, t_len) +=
          attend(lc.h_in.middleRows(i * t_len, t_len), tw, heads, lc.temporal[static_cast<std::size_t>(i)]);
    }

    const AttnWeights sw{params_[layer_param(l, kSpatial + 0)], params_[layer_param(l, kSpatial + 1)],
                         params_[layer_param(l, kSpatial + 2)], params_[layer_param(l, kSpatial + 3)],
                         params_[layer_param(l, kSpatial + 4)]};
    lc.spatial.resize(static_cast<std::size_t>(t_len));
    const Mat h_mid = h;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Mat y = attend(gather_time(h_mid, n, t_len, t), sw, heads, lc.spatial[static_cast<std::size_t>(t)]);
      scatter_add_time(h, y, t_len, t);
    }

    lc.h_ff_in = h;
    Mat z = h * params_[layer_param(l, kFfW1)].transpose();
    z.rowwise() += params_[layer_param(l, kFfB1)].col(0).transpose();
    lc.ff_act = z.array().tanh().matrix();
    Mat f = lc.ff_act * params_[layer_param(l, kFfW2)].transpose();
    f.rowwise() += params_[layer_param(l, kFfB2)].col(0).transpose();
    h += f;
  }
  fw.h_out = h;

  const Vec out = h * params_[params_.size() - 2].row(0).transpose();
  const double bias = params_.back()(0, 0);
  fw.eps.resize(n, t_len);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) fw.eps(i, t) = out(i * t_len + t) + bias;
  }

  if (want_attention) {
    fw.attn = Mat::Zero(n, n);
    for (const AttnCache& c : fw.layers.back().spatial) {
      for (const Mat& a : c.a) fw.attn += a;
    }
    fw.attn /= static_cast<double>(t_len * heads);
  }
}

void NeuralDenoiser::backward(const Forward& fw, const Eigen::MatrixXd& d_eps,
                              std::vector<Eigen::MatrixXd>& grad) const {
  const Eigen::Index n = config_.n_nodes;
  const Eigen::Index t_len = config_.n_steps;
  const int heads = config_.heads;

  Vec d_out(n * t_len);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) d_out(i * t_len + t) = d_eps(i, t);
  }
  grad[params_.size() - 2].row(0) += (fw.h_out.transpose() * d_out).transpose();
  grad.back()(0, 0) += d_out.sum();
  Mat dh = d_out * params_[params_.size() - 2].row(0);

  for (int l = config_.layers - 1; l >= 0; --l) {
    const Forward::Layer& lc = fw.layers[static_cast<std::size_t>(l)];

    // Feed-forward block: h_out = h_ff_in + tanh(h_ff_in W1^T + b1) W2^T + b2.
    grad[layer_param(l, kFfW2)] += dh.transpose() * lc.ff_act;
    grad[layer_param(l, kFfB2)].col(0) += dh.colwise().sum().transpose();
    Mat dz = (dh * params_[layer_param(l, kFfW2)]).cwiseProduct(
        (1.0 - lc.ff_act.array().square()).matrix());
    grad[layer_param(l, kFfW1)] += dz.transpose() * lc.h_ff_in;
    grad[layer_param(l, kFfB1)].col(0) += dz.colwise().sum().transpose();
    dh += dz * params_[layer_param(l, kFfW1)];

    // Spatial attention block.
    const AttnWeights sw{params_[layer_param(l, kSpatial + 0)], params_[layer_param(l, kSpatial + 1)],
                         params_[layer_param(l, kSpatial + 2)], params_[layer_param(l, kSpatial + 3)],
                         params_[layer_param(l, kSpatial + 4)]};
    AttnGrads sg{grad[layer_param(l, kSpatial + 0)], grad[layer_param(l, kSpatial + 1)],
                 grad[layer_param(l, kSpatial + 2)], grad[layer_param(l, kSpatial + 3)],
                 grad[layer_param(l, kSpatial + 4)]};
    Mat dh_mid = dh;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Mat dy = gather_time(dh, n, t_len, t);
      const Mat dx = attend_backward(lc.spatial[static_cast<std::size_t>(t)], dy, sw, heads, sg);
      scatter_add_time(dh_mid, dx, t_len, t);
    }

    // Temporal attention block.
    const AttnWeights tw{params_[layer_param(l, kTemporal + 0)], params_[layer_param(l, kTemporal + 1)],
                         params_[layer_param(l, kTemporal + 2)], params_[layer_param(l, kTemporal + 3)],
                         params_[layer_param(l, kTemporal + 4)]};
    AttnGrads tg{grad[layer_param(l, kTemporal + 0)], grad[layer_param(l, kTemporal + 1)],
                 grad[layer_param(l, kTemporal + 2)], grad[layer_param(l, kTemporal + 3)],
                 grad[layer_param(l, kTemporal + 4)]};
    dh = dh_mid;
    for (Eigen::Index i = 0; i < n; ++i) {
      dh.middleRows(i * t_len, t_len) += attend_backward(
          lc.temporal[static_cast<std::size_t>(i)], dh_mid.middleRows(i * t_len, t_len), tw, heads, tg);
    }
  }

  // Input embedding.
  grad[kInputW] += dh.transpose() * fw.features;
  const Vec col_sum = dh.colwise().sum().transpose();
  grad[kInputB].col(0) += col_sum;
  grad[kStepB].col(0) += col_sum;
  grad[kStepW] += col_sum * fw.step_emb.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      grad[kNodeEmbed].row(i) += dh.row(i * t_len + t);
      grad[kTimeEmbed].row(t) += dh.row(i * t_len + t);
    }
  }
}

Prediction NeuralDenoiser::predict(const Eigen::MatrixXd& x_k, int k,
                                   const ConditioningContext& ctx) const {
  if (!is_initialized()) fail(ErrorCode::State, "network weights are not initialized");
  require(x_k.rows() == config_.n_nodes && x_k.cols() == config_.n_steps,
          "network input shape does not match its configuration");
  if (!ctx.is_unconditional) {
    require(ctx.observed.n_nodes() == config_.n_nodes && ctx.observed.n_steps() == config_.n_steps,
            "context shape does not match network configuration");
  }
  Forward fw;
  forward(x_k, k, ctx, fw, true);
  return {std::move(fw.eps), std::move(fw.attn)};
}

double NeuralDenoiser::loss(const std::vector<TrainingExample>& batch,
                            std::vector<Eigen::MatrixXd>* grad) const {
  if (!is_initialized()) fail(ErrorCode::State, "network weights are not initialized");
  require(!batch.empty(), "loss needs a non-empty batch");
  if (grad != nullptr) {
    grad->resize(params_.size());
    for (std::size_t p = 0; p < params_.size(); ++p) {
      (*grad)[p] = Mat::Zero(params_[p].rows(), params_[p].cols());
    }
  }
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  Forward fw;
  for (const TrainingExample& ex : batch) {
    forward(ex.x_k, ex.k, ex.ctx, fw, false);
    const double count = ex.loss_mask.sum();
    if (count <= 0.0) continue;
    const Mat diff = (fw.eps - ex.noise).cwiseProduct(ex.loss_mask);
    total += diff.squaredNorm() / count;
    if (grad != nullptr) backward(fw, diff * (2.0 / count * inv_batch), *grad);
  }
  return total * inv_batch;
}

void NeuralDenoiser::save(const std::string& path) const {
  if (!is_initialized()) fail(ErrorCode::State, "cannot save uninitialized network");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint " + path);
  out.write("FNCE", 4);
  put_u32(out, kCheckpointVersion);
  auto write_tensor = [&](const std::string& name, const Mat& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, 2);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  };
  Mat cfg(1, 8);
  cfg << config_.n_nodes, config_.n_steps, config_.channels, config_.heads, config_.layers,
      config_.step_embed_dim, config_.ff_mult, static_cast<double>(stage_);
  write_tensor("config", cfg);
  for (std::size_t p = 0; p < params_.size(); ++p) write_tensor(names_[p], params_[p]);
  if (!out) fail(ErrorCode::Io, "write failed for checkpoint " + path);
}

NeuralDenoiser NeuralDenoiser::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "FNCE") {
    fail(ErrorCode::InvalidInput, path + ": not a FNCE checkpoint");
  }
  std::uint32_t version = 0;
  if (!get_u32(in, version) || version != kCheckpointVersion) {
    fail(ErrorCode::InvalidInput, path + ": unsupported checkpoint version");
  }
  std::vector<std::pair<std::string, Mat>> tensors;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    if (name_len > 4096) fail(ErrorCode::InvalidInput, path + ": corrupt tensor name length");
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!in.read(name.data(), name_len) || !get_u32(in, rank) || rank < 1 || rank > 2) {
      fail(ErrorCode::InvalidInput, path + ": corrupt tensor header");
    }
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r) {
      if (!get_u64(in, dims[r]) || dims[r] > (1u << 24)) {
        fail(ErrorCode::InvalidInput, path + ": corrupt tensor dims");
      }
    }
    const Eigen::Index rows = rank == 2 ? static_cast<Eigen::Index>(dims[0]) : 1;
    const Eigen::Index cols = static_cast<Eigen::Index>(rank == 2 ? dims[1] : dims[0]);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::uint64_t bits = 0;
        if (!get_u64(in, bits)) fail(ErrorCode::InvalidInput, path + ": truncated tensor " + name);
        m(i, j) = std::bit_cast<double>(bits);
      }
    }
    tensors.emplace_back(std::move(name), std::move(m));
  }
  if (tensors.empty() || tensors.front().first != "config" || tensors.front().second.size() != 8) {
    fail(ErrorCode::InvalidInput, path + ": missing config tensor");
  }
  const Mat& c = tensors.front().second;
  NeuralDenoiser net;
  net.config_ = {static_cast<int>(c(0, 0)), static_cast<int>(c(0, 1)), static_cast<int>(c(0, 2)),
                 static_cast<int>(c(0, 3)), static_cast<int>(c(0, 4)), static_cast<int>(c(0, 5)),
                 static_cast<int>(c(0, 6))};
  net.config_.validate();
  net.stage_ = static_cast<TrainingStage>(static_cast<int>(c(0, 7)));
  net.build_parameters();
  std::vector<bool> seen(net.params_.size(), false);
  for (std::size_t t = 1; t < tensors.size(); ++t) {
    const std::size_t p = net.index_of(tensors[t].first);
    Mat& dst = net.params_[p];
    const Mat& src = tensors[t].second;
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      fail(ErrorCode::InvalidInput, path + ": tensor " + tensors[t].first + " has the wrong shape");
    }
    dst = src;
    seen[p] = true;
  }
  for (std::size_t p = 0; p < seen.size(); ++p) {
    if (!seen[p]) fail(ErrorCode::InvalidInput, path + ": missing tensor " + net.names_[p]);
  }
  return net;
}

}  // namespace fence
