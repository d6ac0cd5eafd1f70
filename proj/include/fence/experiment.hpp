#pragma once

#include <map>
#include <string>
#include <vector>

namespace fence {

/// Flat `[section]` / `key = value` configuration. Every key is known in
/// advance; unknown keys, repeated keys and malformed lines are Config errors.
class ExperimentConfig {
 public:
  /// All keys at their built-in defaults.
  ExperimentConfig();

  static ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
  static ExperimentConfig load(const std::string& path);

  /// Value of `section.key`; throws Config for unknown keys.
  const std::string& get(const std::string& dotted) const;
  void set(const std::string& dotted, const std::string& value);

  double get_double(const std::string& dotted) const;
  long get_int(const std::string& dotted) const;

  /// Every key with its value, grouped by section in a fixed order. Feeding
  /// this back through `parse` gives the same configuration.
  std::string resolved() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Names accepted by `experiment.preset` (comma-separated, applied left to
/// right before the file's own keys).
std::vector<std::string> preset_names();
void apply_preset(ExperimentConfig& cfg, const std::string& name);

/// One line per key: `section.key (default) description`.
std::string config_reference();

struct ExperimentSummary {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
  double crps = 0.0;
  std::vector<std::string> written;  // output files
  std::vector<std::string> warnings;
};

/// Runs ingest -> mask -> [train] -> impute -> evaluate and writes
/// report.csv, report_nodes.csv, imputed.csv, trace.csv, samples.csv and
/// config.resolved into `output_dir` (created if missing).
ExperimentSummary run_experiment(const ExperimentConfig& cfg, const std::string& output_dir);

}  // namespace fence
