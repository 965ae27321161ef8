#pragma once

#include <optional>
#include <string>
#include <vector>

#include "idro/dcopf.hpp"
#include "idro/inverse.hpp"

namespace idro {

/// Batch harness reproducing the three recovery tables on one system:
/// radius sweep, line-limit multipliers, and sample-size sweep with a
/// downward scan for the scarce-sample failure regime.
struct ExperimentSpec {
  std::string system_path;
  unsigned long long sample_seed = 7;
  Index sample_size = 100;
  std::vector<double> epsilon_true_grid;  // empty: {0, .01, .05, .1, .2, cap, fail}
  std::vector<double> f_max_multipliers = {0.9, 1.0, 1.1, 3.0, 5.0};
  std::vector<Index> sample_size_grid = {100, 75, 50, 25, 15, 10};
  bool scan_scarce = true;   // scan downward from 25 for a failing size
  Index scan_floor = 1;
  RecoveryConfig recovery;
  std::string output_dir;
  int jobs = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct ExperimentRow {
  double axis = 0.0;  // epsilon_true, multiplier, or sample size
  double epsilon_star = 0.0;
  bool failed = false;
  bool binding_at_star = false;
  int iterations = 0;
  std::string error;  // non-empty when the row errored; the run continues
};

struct ExperimentResult {
  double epsilon_max = 0.0;
  std::vector<ExperimentRow> table1;
  std::vector<ExperimentRow> table2;
  std::vector<ExperimentRow> table3;
  std::vector<ExperimentRow> scarce_scan;
  std::optional<Index> scarce_failure_size;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Writes table1.csv, table2.csv, table3.csv and table3_scan.csv under the
/// spec's output directory (byte-stable for identical inputs and seeds).
void write_experiment_csv(const ExperimentResult& result, const ExperimentSpec& spec);

}  // namespace idro
