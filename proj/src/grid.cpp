#include "fence/grid.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fence/error.hpp"

namespace fence {

TrafficGrid::TrafficGrid(Eigen::MatrixXd values) : values_(std::move(values)) {
  require(values_.rows() >= 1 && values_.cols() >= 1, "traffic grid must be at least 1x1");
  require(values_.allFinite(), "traffic grid contains non-finite entries");
}

TrafficGrid TrafficGrid::zeros(Eigen::Index n_nodes, Eigen::Index n_steps) {
  return TrafficGrid(Eigen::MatrixXd::Zero(n_nodes, n_steps));
}

MaskMatrix::MaskMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  require(entries_.rows() >= 1 && entries_.cols() >= 1, "mask must be at least 1x1");
  for (Eigen::Index i = 0; i < entries_.size(); ++i) {
    const double v = entries_.data()[i];
    require(v == 0.0 || v == 1.0, "mask entries must be 0 or 1");
  }
}

MaskMatrix MaskMatrix::ones(Eigen::Index n_nodes, Eigen::Index n_steps) {
  return MaskMatrix(Eigen::MatrixXd::Ones(n_nodes, n_steps));
}

MaskMatrix MaskMatrix::zeros(Eigen::Index n_nodes, Eigen::Index n_steps) {
  return MaskMatrix(Eigen::MatrixXd::Zero(n_nodes, n_steps));
}

Eigen::Index MaskMatrix::count_observed() const {
  return static_cast<Eigen::Index>(entries_.sum());
}

MaskMatrix MaskMatrix::complement() const {
  return MaskMatrix((1.0 - entries_.array()).matrix());
}

MaskMatrix MaskMatrix::intersect(const MaskMatrix& other) const {
  require(other.entries_.rows() == entries_.rows() && other.entries_.cols() == entries_.cols(),
          "mask shapes differ");
  return MaskMatrix(entries_.cwiseProduct(other.entries_));
}

void require_same_shape(const TrafficGrid& grid, const MaskMatrix& mask) {
  require(grid.n_nodes() == mask.n_nodes() && grid.n_steps() == mask.n_steps(),
          "mask shape does not match grid shape");
}

TrafficGrid observed_part(const TrafficGrid& grid, const MaskMatrix& mask) {
  require_same_shape(grid, mask);
  return TrafficGrid(grid.values().cwiseProduct(mask.entries()));
}

int GraphSpec::n_communities() const {
  if (!node_communities) return 0;
  int hi = -1;
  for (int c : *node_communities) hi = std::max(hi, c);
  return hi + 1;
}

void GraphSpec::validate() const {
  require(adjacency.rows() >= 1 && adjacency.rows() == adjacency.cols(),
          "adjacency must be a non-empty square matrix");
  require(adjacency.allFinite() && (adjacency.array() >= 0.0).all(),
          "adjacency entries must be finite and nonnegative");
  if (node_communities) {
    require(static_cast<Eigen::Index>(node_communities->size()) == adjacency.rows(),
            "community labels must cover every node");
    const int nc = n_communities();
    std::vector<bool> seen(static_cast<std::size_t>(nc), false);
    for (int c : *node_communities) {
      require(c >= 0, "community labels must be nonnegative");
      seen[static_cast<std::size_t>(c)] = true;
    }
    for (bool s : seen) require(s, "community labels must be contiguous from 0");
  }
}

GraphSpec ring_graph(int n_nodes) {
  require(n_nodes >= 1, "ring graph needs at least one node");
  GraphSpec g;
  g.adjacency = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  if (n_nodes > 1) {
    for (int i = 0; i < n_nodes; ++i) {
      g.adjacency(i, (i + 1) % n_nodes) = 1.0;
      g.adjacency((i + 1) % n_nodes, i) = 1.0;
    }
  }
  return g;
}

TrafficGrid normalize(const TrafficGrid& grid, double mean, double std) {
  require(std::isfinite(mean) && std::isfinite(std) && std > 0.0,
          "normalization requires finite mean and std > 0");
  return TrafficGrid(((grid.values().array() - mean) / std).matrix());
}

TrafficGrid denormalize(const TrafficGrid& grid, double mean, double std) {
  require(std::isfinite(mean) && std::isfinite(std) && std > 0.0,
          "normalization requires finite mean and std > 0");
  return TrafficGrid((grid.values().array() * std + mean).matrix());
}

std::vector<TrafficGrid> sliding_windows(const Eigen::MatrixXd& series, Eigen::Index window,
                                         Eigen::Index stride) {
  require(window >= 1, "window length must be positive");
  require(stride >= 1, "window stride must be positive");
  require(series.cols() >= window, "series is shorter than the window length");
  const Eigen::Index count = (series.cols() - window) / stride + 1;
  std::vector<TrafficGrid> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    out.emplace_back(series.middleCols(i * stride, window));
  }
  return out;
}

SplitBounds chronological_bounds(Eigen::Index length) {
  require(length >= 1, "series length must be positive");
  const Eigen::Index train = (length * 6) / 10;
  const Eigen::Index val = (length * 2) / 10;
  return {train, train + val};
}

namespace {

std::vector<Window> windows_of(const RawSeries& raw, const Normalization& norm, Eigen::Index begin,
                               Eigen::Index end, Eigen::Index window, Eigen::Index stride) {
  std::vector<Window> out;
  if (end - begin < window) return out;
  for (Eigen::Index start = begin; start + window <= end; start += stride) {
    const Eigen::MatrixXd present = raw.present.entries().middleCols(start, window);
    Eigen::MatrixXd v = ((raw.values.middleCols(start, window).array() - norm.mean) / norm.std).matrix();
    v = v.cwiseProduct(present);
    out.push_back({TrafficGrid(std::move(v)), MaskMatrix(present)});
  }
  return out;
}

}  // namespace

DatasetSplit make_dataset_split(const RawSeries& raw, const SplitOptions& options) {
  require(raw.values.rows() == raw.present.n_nodes() && raw.values.cols() == raw.present.n_steps(),
          "presence mask does not match series shape");
  const Eigen::Index window = options.window;
  require(window >= 1 && options.train_stride >= 1 && options.eval_stride >= 0,
          "invalid window options");
  const Eigen::Index eval_stride = options.eval_stride == 0 ? window : options.eval_stride;
  const SplitBounds b = chronological_bounds(raw.values.cols());
  require(b.train_end >= window, "training portion is shorter than one window");

  double sum = 0.0;
  double count = 0.0;
  for (Eigen::Index t = 0; t < b.train_end; ++t) {
    for (Eigen::Index i = 0; i < raw.values.rows(); ++i) {
      if (raw.present.observed(i, t)) {
        sum += raw.values(i, t);
        count += 1.0;
      }
    }
  }
  require(count >= 2.0, "training portion has fewer than two present entries");
  const double mean = sum / count;
  double ss = 0.0;
  for (Eigen::Index t = 0; t < b.train_end; ++t) {
    for (Eigen::Index i = 0; i < raw.values.rows(); ++i) {
      if (raw.present.observed(i, t)) ss += (raw.values(i, t) - mean) * (raw.values(i, t) - mean);
    }
  }
  const double std = std::sqrt(ss / count);
  require(std > 0.0, "training data has zero standard deviation");

  DatasetSplit split;
  split.window_length = window;
  split.normalization = {mean, std};
  split.train = windows_of(raw, split.normalization, 0, b.train_end, window, options.train_stride);
  split.validation =
      windows_of(raw, split.normalization, b.train_end, b.validation_end, window, eval_stride);
  split.test =
      windows_of(raw, split.normalization, b.validation_end, raw.values.cols(), window, eval_stride);
  return split;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct CsvTable {
  std::vector<std::vector<std::string>> rows;
  std::size_t cols = 0;
};

CsvTable read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::InvalidInput, path + ": empty file");
  CsvTable table;
  table.cols = split_line(line).size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != table.cols) {
      fail(ErrorCode::InvalidInput, path + ":" + std::to_string(lineno) + ": expected " +
                                        std::to_string(table.cols) + " cells, found " +
                                        std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.rows.empty()) fail(ErrorCode::InvalidInput, path + ": no data rows");
  return table;
}

double parse_cell(const std::string& raw, const std::string& where, bool& missing) {
  const std::string s = trim(raw);
  missing = false;
  if (s.empty() || s == "nan" || s == "NaN" || s == "NAN") {
    missing = true;
    return 0.0;
  }
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(ErrorCode::InvalidInput, where + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

void write_header(std::ostream& out, Eigen::Index cols) {
  for (Eigen::Index t = 0; t < cols; ++t) out << (t ? ",t" : "t") << t;
  out << '\n';
}

}  // namespace

RawSeries read_grid_csv(const std::string& path) {
  const CsvTable table = read_table(path);
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto t = static_cast<Eigen::Index>(table.cols);
  Eigen::MatrixXd values(n, t);
  Eigen::MatrixXd present(n, t);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < t; ++j) {
      bool missing = false;
      values(i, j) = parse_cell(table.rows[i][j], path + ":" + std::to_string(i + 2), missing);
      present(i, j) = missing ? 0.0 : 1.0;
    }
  }
  return {std::move(values), MaskMatrix(std::move(present))};
}

void write_grid_csv(const std::string& path, const Eigen::MatrixXd& values,
                    const MaskMatrix* present) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  write_header(out, values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      if (present == nullptr || present->observed(i, j)) out << format_double(values(i, j));
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

MaskMatrix read_mask_csv(const std::string& path) {
  const CsvTable table = read_table(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(table.rows.size()),
                    static_cast<Eigen::Index>(table.cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const std::string s = trim(table.rows[i][j]);
      if (s == "0") {
        m(i, j) = 0.0;
      } else if (s == "1") {
        m(i, j) = 1.0;
      } else {
        fail(ErrorCode::InvalidInput,
             path + ":" + std::to_string(i + 2) + ": mask cell '" + s + "' is not 0 or 1");
      }
    }
  }
  return MaskMatrix(std::move(m));
}

void write_mask_csv(const std::string& path, const MaskMatrix& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  write_header(out, mask.n_steps());
  for (Eigen::Index i = 0; i < mask.n_nodes(); ++i) {
    for (Eigen::Index j = 0; j < mask.n_steps(); ++j) {
      out << (j ? "," : "") << (mask.observed(i, j) ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path);
}

}  // namespace fence
