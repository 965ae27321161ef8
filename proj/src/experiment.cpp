#include "idro/experiment.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

namespace idro {

namespace {

/// Runs the closures on a fixed-size pool; results land in caller-provided
/// slots, so output order never depends on scheduling.
void run_pool(std::vector<std::function<void()>>& tasks, int jobs) {
  if (jobs <= 0) {
    jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs <= 0) jobs = 2;
  }
  std::atomic<size_t> next{0};
  const auto worker = [&] {
    while (true) {
      const size_t idx = next.fetch_add(1);
      if (idx >= tasks.size()) return;
      tasks[idx]();
    }
  };
  std::vector<std::thread> threads;
  const int n = std::min<int>(jobs, static_cast<int>(tasks.size()));
  threads.reserve(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

ExperimentRow recover_row(const PowerSystem& sys, Index n_samples,
                          unsigned long long seed, double eps_true,
                          const RecoveryConfig& cfg) {
  ExperimentRow row;
  row.axis = eps_true;
  try {
    const DcopfMapping map = to_cc_lp(sys);
    const SampleSet samples = generate_samples(sys, n_samples, seed);
    ForwardOptions gen = cfg.forward;
    gen.classify_binding = false;
    const ForwardSolution fwd = solve_forward(assemble(map.model, samples, eps_true), gen);
    const RecoveryReport rep = recover(map.model, samples, {fwd.x_opt, {}}, cfg);
    row.epsilon_star = rep.epsilon_star;
    row.failed = rep.failed;
    row.binding_at_star = rep.binding_at_star;
    row.iterations = rep.iterations;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

void write_table(const std::filesystem::path& path, const std::string& axis_name,
                 const std::vector<ExperimentRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << axis_name << ",epsilon_star,failed,binding_at_star,iterations,error\n";
  out.precision(12);
  for (const auto& r : rows) {
    out << r.axis << ',' << r.epsilon_star << ',' << (r.failed ? 1 : 0) << ','
        << (r.binding_at_star ? 1 : 0) << ',' << r.iterations << ',' << r.error << "\n";
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  if (system_path.empty()) throw std::invalid_argument("experiment: missing system path");
  if (sample_size < 1) throw std::invalid_argument("experiment: sample size must be >= 1");
  if (f_max_multipliers.empty() || sample_size_grid.empty()) {
    throw std::invalid_argument("experiment: grids must be non-empty");
  }
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const PowerSystem sys = load_system(spec.system_path);

  ExperimentResult result;
  result.epsilon_max =
      epsilon_max(generate_samples(sys, spec.sample_size, spec.sample_seed));

  std::vector<double> grid1 = spec.epsilon_true_grid;
  if (grid1.empty()) {
    grid1 = {0.0, 0.01, 0.05, 0.1, 0.2, result.epsilon_max,
             0.5 * std::max(1.0, 2.0 * result.epsilon_max)};
  }

  result.table1.resize(grid1.size());
  result.table2.resize(spec.f_max_multipliers.size());
  result.table3.resize(spec.sample_size_grid.size());

  std::vector<std::function<void()>> tasks;
  for (size_t i = 0; i < grid1.size(); ++i) {
    tasks.push_back([&, i] {
      result.table1[i] =
          recover_row(sys, spec.sample_size, spec.sample_seed, grid1[i], spec.recovery);
    });
  }
  for (size_t i = 0; i < spec.f_max_multipliers.size(); ++i) {
    tasks.push_back([&, i] {
      PowerSystem scaled = sys;
      scaled.f_max = sys.f_max * spec.f_max_multipliers[i];
      result.table2[i] =
          recover_row(scaled, spec.sample_size, spec.sample_seed, 0.01, spec.recovery);
      result.table2[i].axis = spec.f_max_multipliers[i];
    });
  }
  for (size_t i = 0; i < spec.sample_size_grid.size(); ++i) {
    tasks.push_back([&, i] {
      const Index ns = spec.sample_size_grid[i];
      result.table3[i] = recover_row(sys, ns, spec.sample_seed, 0.01, spec.recovery);
      result.table3[i].axis = static_cast<double>(ns);
    });
  }
  run_pool(tasks, spec.jobs);

  if (spec.scan_scarce) {
    // Downward scan for the first sample size whose recovery degenerates to
    // the cap. Sequential: it stops at the first hit.
    for (Index ns = 24; ns >= spec.scan_floor; --ns) {
      ExperimentRow row = recover_row(sys, ns, spec.sample_seed, 0.01, spec.recovery);
      row.axis = static_cast<double>(ns);
      const bool hit = row.error.empty() && row.failed;
      result.scarce_scan.push_back(std::move(row));
      if (hit) {
        result.scarce_failure_size = ns;
        break;
      }
    }
  }
  return result;
}

void write_experiment_csv(const ExperimentResult& result, const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  const fs::path dir = spec.output_dir.empty() ? fs::path(".") : fs::path(spec.output_dir);
  fs::create_directories(dir);
  write_table(dir / "table1.csv", "epsilon_true", result.table1);
  write_table(dir / "table2.csv", "f_max_multiplier", result.table2);
  write_table(dir / "table3.csv", "n_samples", result.table3);
  if (!result.scarce_scan.empty()) {
    write_table(dir / "table3_scan.csv", "n_samples", result.scarce_scan);
  }
}

}  // namespace idro
