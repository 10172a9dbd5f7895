#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pll/trainers.hpp"

namespace pll {

/// One replicated comparison: methods x drop fractions x replicates.
///
/// JSON form (all keys optional except "data_dir"):
///   {"data_dir": "...", "methods": ["B0","B1","LE","MT"], "replicates": 5,
///    "seed_base": 0, "drop_fractions": [0.1, 0.2], "val_fraction": 0.15,
///    "output_dir": "results", "workers": 1, "save_runs": true,
///    "f1_threshold": 0.5, "train": { TrainConfig keys }}
struct ExperimentSpec {
  std::filesystem::path data_dir;
  std::vector<Method> methods{Method::B0, Method::B1, Method::LE, Method::MT};
  TrainConfig train;
  std::size_t replicates = 5;
  std::uint64_t seed_base = 0;
  /// Empty means a single run per method without extra label removal.
  std::vector<double> drop_fractions;
  double val_fraction = 0.15;
  std::filesystem::path output_dir = "results";
  std::size_t workers = 1;
  /// Write per-run reports and checkpoints under output_dir/runs.
  bool save_runs = true;
  double f1_threshold = 0.5;

  void validate() const;
  /// Drop fractions actually iterated ({0} when none are given).
  std::vector<double> effective_drop_fractions() const;

  static ExperimentSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
  /// SHA-1 over the fields that influence results (paths and worker count excluded).
  std::string config_hash() const;
};

struct ResultRow {
  std::string run_id;
  Method method = Method::B0;
  double drop_fraction = 0.0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  /// "ok", "failed", or "na" for a metric that could not be computed.
  std::string status;
};

inline constexpr const char* kResultsHeader = "run_id,method,drop_fraction,replicate,seed,metric,value,status";

struct ExperimentOutcome {
  std::vector<ResultRow> rows;
  std::size_t failed_runs = 0;
  std::filesystem::path results_csv;

  int exit_code() const { return failed_runs == 0 ? 0 : 1; }
};

/// Runs the grid, writes results.csv, summary.csv, plot_data.json and
/// provenance.json into spec.output_dir. A failed run is recorded and the
/// remaining runs continue.
ExperimentOutcome run_experiment(const ExperimentSpec& spec);

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);

struct SummaryRow {
  std::string method;
  std::string drop_fraction;
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  /// Sample standard deviation (n - 1); 0 for a single value.
  double std = 0.0;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

/// Groups the "ok" rows of a results CSV by (method, drop_fraction, metric),
/// in order of first appearance.
std::vector<SummaryRow> summarize(const std::filesystem::path& results_csv);
SummaryRow summarize_values(std::vector<double> values);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
/// Per-group replicate values for external box plots.
void write_plot_json(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

struct ValidationReport {
  std::size_t num_clips = 0;
  std::size_t num_classes = 0;
  std::size_t embed_dim = 0;
  std::size_t train_clips = 0;
  std::size_t test_clips = 0;
  std::size_t observed_labels = 0;
  double coverage = 0.0;
  std::size_t fixed_validation_clips = 0;
};

/// Reads and checks the canonical files in dir (plus the optional fixed validation sidecar).
ValidationReport validate_dataset_dir(const std::filesystem::path& dir);

}  // namespace pll
