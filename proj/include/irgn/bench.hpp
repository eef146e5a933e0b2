#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irgn/config.hpp"
#include "irgn/forward_operator.hpp"
#include "irgn/irgn.hpp"
#include "irgn/problems.hpp"

namespace irgn::bench {

/// Experiment description. Keys of the configuration file match the field
/// names; see README.md for the schema.
struct ExperimentConfig {
  std::string problem = "diagonal";  ///< "diagonal" or "elliptic"
  std::optional<std::size_t> n;      ///< default 64 (diagonal) / 201 (elliptic)
  double gamma = 0.05;               ///< diagonal nonlinearity
  double p = 2.0;                    ///< diagonal decay sigma_i = i^{-p}
  std::optional<double> rho;         ///< default 1 (diagonal) / 1.8 (elliptic)

  std::string source_form = "power";  ///< "power" (nu-form) or "adjoint" (v-form)
  double nu = 1.0;
  std::optional<double> initial_error;  ///< |x0 - x_dagger|; default fraction * rho
  double initial_error_fraction = 0.125;
  double source_profile = 0.5;
  std::uint64_t source_seed = 1;

  double alpha0 = 1.0;
  double ratio = 2.0;
  double tau = 2.5;
  double c0 = 0.25;
  std::size_t k_max = 60;

  std::vector<double> deltas{1e-2, 1e-3, 1e-4, 1e-5};  ///< relative to |y|
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t seed_offset = 0;

  double cg_tolerance = 1e-12;
  std::optional<std::size_t> cg_max_iterations;

  std::string output = "bench-out";
  std::size_t threads = 0;  ///< 0: hardware concurrency

  std::optional<double> slope_min;
  std::optional<double> slope_max;
  double oracle_ratio_max = 10.0;
  double oracle_spread_max = 10.0;
  double noise_gap_slack = 2.0;
  double residual_factor = 5.0;
  double max_failed_fraction = 0.2;
  double lv_warn = 0.1;

  int lipschitz_samples = 16;
  int bound_samples = 16;
  int power_iters = 50;
  std::uint64_t probe_seed = 2024;
  int selfcheck_points = 20;

  std::size_t x_size() const;
  double radius() const;
  void validate() const;
};

/// Builds a config from parsed key/values; unknown keys are rejected.
ExperimentConfig config_from_table(const ConfigTable& table);
ExperimentConfig load_config(const std::string& path);

/// Everything derived from a config before any noisy run: the rescaled
/// operator with calibrated constants, x_dagger, x0 and exact data.
struct Setup {
  ForwardOperator op;
  GridFunction x_dagger;
  GridFunction x0;
  GridFunction y;
  SourceResult source;
  double y_norm = 0.0;
  double omega_norm = 0.0;  ///< used by the a priori rule
  double apriori_nu = 1.0;
  double l_times_v = 0.0;
  std::vector<std::string> warnings;
};

Setup build_setup(const ExperimentConfig& config);

AlphaSchedule schedule_of(const ExperimentConfig& config);
CgSettings cg_of(const ExperimentConfig& config);

/// Result of one (delta, seed, rule) run.
struct CellResult {
  std::size_t delta_index = 0;
  double delta_rel = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string rule;
  bool failed = false;
  std::string failure;
  std::string stop_reason;
  std::size_t k_stop = 0;
  double error = 0.0;
  double residual = 0.0;
  std::optional<double> stop_functional;
  std::size_t ktilde = 0;
  double oracle_ratio = 0.0;
  double max_noise_gap_ratio = 0.0;
  bool noise_gaps_complete = false;
  std::optional<double> residual_at_stop;
  double residual_min_before_stop = 0.0;
  std::string replay;  ///< empty when the posterior replay holds
  std::optional<IterationTrace> trace;
  std::optional<TheoryDiagnostics> diagnostics;
};

struct Summary {
  std::string command;
  std::string problem;
  std::string source_form;
  double nu = 0.0;
  double theory_exponent = 0.0;
  std::optional<double> slope;
  std::optional<double> slope_stderr;
  std::map<std::string, std::optional<double>> rule_slopes;
  std::vector<double> deltas;         ///< absolute
  std::vector<double> median_errors;  ///< posterior rule, per delta
  std::optional<double> max_oracle_ratio;
  std::optional<double> oracle_spread;
  double max_noise_gap_ratio = 0.0;
  std::optional<double> max_residual_at_stop_over_delta;
  std::optional<double> min_residual_before_stop_over_delta;
  double monotone_stop_fraction = 1.0;
  bool lemma35_pass = true;  ///< noise propagation bound on every run
  bool lemma47_pass = true;  ///< clean residual bounds around the stop
  bool replay_pass = true;
  std::size_t cells_total = 0;
  std::size_t cells_failed = 0;
  double y_norm = 0.0;
  double initial_error = 0.0;
  double v_norm = 0.0;
  double lipschitz = 0.0;
  double l_times_v = 0.0;
  std::map<std::string, bool> verdicts;
  bool passed = true;
  std::vector<std::string> warnings;

  friend bool operator==(const Summary&, const Summary&) = default;
};

struct CleanSummary {
  std::vector<double> alpha, error, residual_half, beta;
};

struct Report {
  std::vector<CellResult> cells;  ///< canonical order: delta index, seed, rule
  Summary summary;
  CleanSummary clean;
};

/// Ordinary least squares slope of log(error) against log(delta) with its
/// standard error (absent with fewer than 3 points).
struct SlopeFit {
  std::optional<double> slope;
  std::optional<double> standard_error;
};
SlopeFit fit_slope(const std::vector<double>& deltas, const std::vector<double>& errors);

/// Median with the mean of the two central values for even counts.
double median(std::vector<double> values);

Report run_rate_experiment(const ExperimentConfig& config);
Report run_oracle_check(const ExperimentConfig& config);
Report run_rule_comparison(const ExperimentConfig& config);

struct Check {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

struct SelfcheckReport {
  std::string problem;
  std::vector<Check> checks;
  bool passed() const;
};

/// Adjoint, Taylor and Lipschitz probes plus the library invariants on the configured problem.
SelfcheckReport selfcheck(const ExperimentConfig& config);

/// Writes results.csv, summary.json, plot.dat and traces/ under `dir`.
void emit_report(const Report& report, const std::string& dir);
void emit_selfcheck(const SelfcheckReport& report, const std::string& dir);

std::string results_csv(const Report& report);
std::string summary_json(const Summary& summary);
Summary parse_summary_json(const std::string& text);

}  // namespace irgn::bench
