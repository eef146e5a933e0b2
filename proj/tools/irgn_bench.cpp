// Benchmark CLI: δ-sweeps, oracle checks, stopping-rule comparison and self-checks.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "irgn/bench.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::int64_t seed_offset = 0;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "experiment config (flat TOML)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opt.out, "output directory (default: config 'output')");
  cmd->add_option("--seed-offset", opt.seed_offset, "added to every noise seed")
      ->check(CLI::NonNegativeNumber);
}

irgn::bench::ExperimentConfig prepare(const Options& opt) {
  irgn::bench::ExperimentConfig config = irgn::bench::load_config(opt.config);
  config.seed_offset += static_cast<std::uint64_t>(opt.seed_offset);
  if (!opt.out.empty()) config.output = opt.out;
  return config;
}

int finish(const irgn::bench::Report& report, const std::string& out) {
  irgn::bench::emit_report(report, out);
  const auto& s = report.summary;
  std::printf("%s: %s\n", s.command.c_str(), s.problem.c_str());
  if (s.slope)
    std::printf("  slope %.4f (stderr %.4f), theory %.4f\n", *s.slope,
                s.slope_stderr.value_or(0.0), s.theory_exponent);
  if (s.max_oracle_ratio)
    std::printf("  oracle ratio max %.4f spread %.4f\n", *s.max_oracle_ratio,
                s.oracle_spread.value_or(0.0));
  std::printf("  cells failed %zu/%zu\n", s.cells_failed, s.cells_total);
  for (const auto& w : s.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  for (const auto& [name, ok] : s.verdicts) std::printf("  %-14s %s\n", name.c_str(), ok ? "pass" : "FAIL");
  std::printf("  output %s\n", out.c_str());
  return s.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IRGN benchmark harness"};
  app.require_subcommand(1);
  Options opt;
  auto* rates = app.add_subcommand("rates", "convergence-rate sweep with the posterior rule");
  auto* oracle = app.add_subcommand("oracle", "oracle-inequality check against the noise-free run");
  auto* rules = app.add_subcommand("rules", "posterior vs discrepancy vs a priori stopping");
  auto* check = app.add_subcommand("selfcheck", "operator probes and library invariants");
  for (auto* cmd : {rates, oracle, rules, check}) add_common(cmd, opt);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = prepare(opt);
    if (rates->parsed()) return finish(irgn::bench::run_rate_experiment(config), config.output);
    if (oracle->parsed()) return finish(irgn::bench::run_oracle_check(config), config.output);
    if (rules->parsed()) return finish(irgn::bench::run_rule_comparison(config), config.output);
    const auto report = irgn::bench::selfcheck(config);
    irgn::bench::emit_selfcheck(report, config.output);
    std::printf("selfcheck: %s\n", report.problem.c_str());
    for (const auto& c : report.checks)
      std::printf("  %-32s %-4s value %.3e limit %.3e\n", c.name.c_str(), c.pass ? "pass" : "FAIL",
                  c.value, c.limit);
    return report.passed() ? 0 : 1;
  } catch (const irgn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
