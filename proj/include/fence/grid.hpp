#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fence {

/// N x T matrix of finite traffic values (nodes in rows, time slices in
/// columns). Missing entries never live in here; they are described by a
/// companion MaskMatrix.
class TrafficGrid {
 public:
  TrafficGrid() = default;
  explicit TrafficGrid(Eigen::MatrixXd values);
  static TrafficGrid zeros(Eigen::Index n_nodes, Eigen::Index n_steps);

  Eigen::Index n_nodes() const { return values_.rows(); }
  Eigen::Index n_steps() const { return values_.cols(); }
  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(Eigen::Index node, Eigen::Index t) const { return values_(node, t); }

  bool operator==(const TrafficGrid& other) const { return values_ == other.values_; }

 private:
  Eigen::MatrixXd values_;
};

/// {0,1} matrix; 1 = observed.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(Eigen::MatrixXd entries);
  static MaskMatrix ones(Eigen::Index n_nodes, Eigen::Index n_steps);
  static MaskMatrix zeros(Eigen::Index n_nodes, Eigen::Index n_steps);

  Eigen::Index n_nodes() const { return entries_.rows(); }
  Eigen::Index n_steps() const { return entries_.cols(); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  bool observed(Eigen::Index node, Eigen::Index t) const { return entries_(node, t) != 0.0; }
  Eigen::Index count_observed() const;
  /// Elementwise 1 - M.
  MaskMatrix complement() const;
  /// Elementwise product (observed in both).
  MaskMatrix intersect(const MaskMatrix& other) const;

  bool operator==(const MaskMatrix& other) const { return entries_ == other.entries_; }

 private:
  Eigen::MatrixXd entries_;
};

void require_same_shape(const TrafficGrid& grid, const MaskMatrix& mask);

/// x^o = x (.) M
TrafficGrid observed_part(const TrafficGrid& grid, const MaskMatrix& mask);

struct GraphSpec {
  Eigen::MatrixXd adjacency;
  /// Community label per node, values in [0, N_c).
  std::optional<std::vector<int>> node_communities;

  Eigen::Index n_nodes() const { return adjacency.rows(); }
  int n_communities() const;
  void validate() const;
};

/// Unweighted ring graph: node i adjacent to i +/- 1 (mod N).
GraphSpec ring_graph(int n_nodes);

struct Normalization {
  double mean = 0.0;
  double std = 1.0;
};

struct Window {
  TrafficGrid grid;
  MaskMatrix mask;  // 1 where the source value was present
};

struct DatasetSplit {
  std::vector<Window> train;
  std::vector<Window> validation;
  std::vector<Window> test;
  Eigen::Index window_length = 0;
  Normalization normalization;
};

TrafficGrid normalize(const TrafficGrid& grid, double mean, double std);
TrafficGrid denormalize(const TrafficGrid& grid, double mean, double std);

/// Windows of `window` columns starting every `stride` columns.
std::vector<TrafficGrid> sliding_windows(const Eigen::MatrixXd& series, Eigen::Index window,
                                         Eigen::Index stride);

struct SplitBounds {
  Eigen::Index train_end;       // exclusive
  Eigen::Index validation_end;  // exclusive; test runs to the end
};

/// 60/20/20 chronological split with floor rounding; remainder goes to test.
SplitBounds chronological_bounds(Eigen::Index length);

/// Raw series as read from disk: values with missing cells zeroed, plus the
/// presence mask.
struct RawSeries {
  Eigen::MatrixXd values;
  MaskMatrix present;
};

struct SplitOptions {
  Eigen::Index window = 12;
  Eigen::Index train_stride = 1;
  Eigen::Index eval_stride = 0;  // 0 = window length
};

/// Chronological split, normalization from present training entries, and
/// windowing. Raw-missing entries become 0 after normalization with mask 0.
DatasetSplit make_dataset_split(const RawSeries& raw, const SplitOptions& options);

// Dense CSV grid format: header `t0,t1,...`, one row per node. Empty cells and
// `nan` mark raw-missing values.
RawSeries read_grid_csv(const std::string& path);
void write_grid_csv(const std::string& path, const Eigen::MatrixXd& values,
                    const MaskMatrix* present = nullptr);
MaskMatrix read_mask_csv(const std::string& path);
void write_mask_csv(const std::string& path, const MaskMatrix& mask);

std::string format_double(double v);

}  // namespace fence
