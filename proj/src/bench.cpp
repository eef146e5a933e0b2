#include "irgn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "irgn/random.hpp"
#include "json.hpp"

namespace irgn::bench {

namespace {

using Json = nlohmann::json;

const std::vector<std::string> kAllRules{"posterior", "discrepancy", "apriori"};

std::uint64_t to_u64(std::int64_t v, const std::string& key) {
  if (v < 0) throw ConfigurationError("config key '" + key + "' must be nonnegative");
  return static_cast<std::uint64_t>(v);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "nan"; }

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

GridFunction ball_sample(const ForwardOperator& op, double max_fraction, std::uint64_t seed) {
  std::mt19937_64 engine(derive_seed(seed, 11));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  GridFunction dir = random_unit(op.x_dim, op.x_weight, derive_seed(seed, 12));
  return *op.domain_center + (max_fraction * op.domain_radius * unif(engine)) * dir;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::size_t ExperimentConfig::x_size() const {
  if (n) return *n;
  return problem == "elliptic" ? 201 : 64;
}

double ExperimentConfig::radius() const {
  if (rho) return *rho;
  return problem == "elliptic" ? 1.8 : 1.0;
}

void ExperimentConfig::validate() const {
  if (problem != "diagonal" && problem != "elliptic")
    throw ConfigurationError("problem must be \"diagonal\" or \"elliptic\"");
  if (source_form != "power" && source_form != "adjoint")
    throw ConfigurationError("source_form must be \"power\" or \"adjoint\"");
  if (source_form == "power" && !(nu > 0.0 && nu <= 2.0))
    throw ConfigurationError("nu must lie in (0, 2]");
  if (deltas.empty()) throw ConfigurationError("deltas must be nonempty");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0)) throw ConfigurationError("deltas must be positive");
    if (i > 0 && !(deltas[i] < deltas[i - 1]))
      throw ConfigurationError("deltas must be strictly decreasing");
  }
  if (seeds.empty()) throw ConfigurationError("seeds must be nonempty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigurationError("seeds must be distinct");
  if (!(initial_error_fraction > 0.0 && initial_error_fraction < 0.25))
    throw ConfigurationError("initial_error_fraction must lie in (0, 0.25)");
  if (initial_error && !(*initial_error > 0.0))
    throw ConfigurationError("initial_error must be positive");
  if (!(max_failed_fraction > 0.0 && max_failed_fraction <= 1.0))
    throw ConfigurationError("max_failed_fraction must lie in (0, 1]");
  if (x_size() < 2) throw ConfigurationError("n must be at least 2");
  if (lipschitz_samples < 1 || bound_samples < 0 || power_iters < 1 || selfcheck_points < 1)
    throw ConfigurationError("sample counts must be positive");
  schedule_of(*this).validate();
  cg_of(*this).validate();
  StopRuleConfig stop;
  stop.tau = tau;
  stop.c0 = c0;
  stop.k_max = k_max;
  stop.validate();
}

ExperimentConfig config_from_table(const ConfigTable& table) {
  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, const ConfigValue&)>;
  const std::map<std::string, Setter> setters{
      {"problem", [&](auto& k, auto& v) { c.problem = v.as_string(k); }},
      {"n", [&](auto& k, auto& v) { c.n = to_u64(v.as_int(k), k); }},
      {"gamma", [&](auto& k, auto& v) { c.gamma = v.as_double(k); }},
      {"p", [&](auto& k, auto& v) { c.p = v.as_double(k); }},
      {"rho", [&](auto& k, auto& v) { c.rho = v.as_double(k); }},
      {"source_form", [&](auto& k, auto& v) { c.source_form = v.as_string(k); }},
      {"nu", [&](auto& k, auto& v) { c.nu = v.as_double(k); }},
      {"initial_error", [&](auto& k, auto& v) { c.initial_error = v.as_double(k); }},
      {"initial_error_fraction",
       [&](auto& k, auto& v) { c.initial_error_fraction = v.as_double(k); }},
      {"source_profile", [&](auto& k, auto& v) { c.source_profile = v.as_double(k); }},
      {"source_seed", [&](auto& k, auto& v) { c.source_seed = to_u64(v.as_int(k), k); }},
      {"alpha0", [&](auto& k, auto& v) { c.alpha0 = v.as_double(k); }},
      {"ratio", [&](auto& k, auto& v) { c.ratio = v.as_double(k); }},
      {"tau", [&](auto& k, auto& v) { c.tau = v.as_double(k); }},
      {"c0", [&](auto& k, auto& v) { c.c0 = v.as_double(k); }},
      {"k_max", [&](auto& k, auto& v) { c.k_max = to_u64(v.as_int(k), k); }},
      {"deltas",
       [&](auto& k, auto& v) {
         c.deltas.clear();
         for (const auto& e : v.as_array(k)) c.deltas.push_back(e.as_double(k));
       }},
      {"seeds",
       [&](auto& k, auto& v) {
         c.seeds.clear();
         for (const auto& e : v.as_array(k)) c.seeds.push_back(to_u64(e.as_int(k), k));
       }},
      {"seed_offset", [&](auto& k, auto& v) { c.seed_offset = to_u64(v.as_int(k), k); }},
      {"cg_tolerance", [&](auto& k, auto& v) { c.cg_tolerance = v.as_double(k); }},
      {"cg_max_iterations",
       [&](auto& k, auto& v) { c.cg_max_iterations = to_u64(v.as_int(k), k); }},
      {"output", [&](auto& k, auto& v) { c.output = v.as_string(k); }},
      {"threads", [&](auto& k, auto& v) { c.threads = to_u64(v.as_int(k), k); }},
      {"slope_min", [&](auto& k, auto& v) { c.slope_min = v.as_double(k); }},
      {"slope_max", [&](auto& k, auto& v) { c.slope_max = v.as_double(k); }},
      {"oracle_ratio_max", [&](auto& k, auto& v) { c.oracle_ratio_max = v.as_double(k); }},
      {"oracle_spread_max", [&](auto& k, auto& v) { c.oracle_spread_max = v.as_double(k); }},
      {"noise_gap_slack", [&](auto& k, auto& v) { c.noise_gap_slack = v.as_double(k); }},
      {"residual_factor", [&](auto& k, auto& v) { c.residual_factor = v.as_double(k); }},
      {"max_failed_fraction",
       [&](auto& k, auto& v) { c.max_failed_fraction = v.as_double(k); }},
      {"lv_warn", [&](auto& k, auto& v) { c.lv_warn = v.as_double(k); }},
      {"lipschitz_samples",
       [&](auto& k, auto& v) { c.lipschitz_samples = static_cast<int>(v.as_int(k)); }},
      {"bound_samples",
       [&](auto& k, auto& v) { c.bound_samples = static_cast<int>(v.as_int(k)); }},
      {"power_iters", [&](auto& k, auto& v) { c.power_iters = static_cast<int>(v.as_int(k)); }},
      {"probe_seed", [&](auto& k, auto& v) { c.probe_seed = to_u64(v.as_int(k), k); }},
      {"selfcheck_points",
       [&](auto& k, auto& v) { c.selfcheck_points = static_cast<int>(v.as_int(k)); }},
  };
  for (const auto& [key, value] : table) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigurationError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  try {
    return config_from_table(load_flat_toml(path));
  } catch (const ConfigurationError& e) {
    throw ConfigurationError(path + ": " + e.what());
  }
}

AlphaSchedule schedule_of(const ExperimentConfig& config) {
  return {config.alpha0, config.ratio};
}

CgSettings cg_of(const ExperimentConfig& config) {
  CgSettings cg;
  cg.rel_tolerance = config.cg_tolerance;
  cg.max_iterations = config.cg_max_iterations;
  return cg;
}

// ---------------------------------------------------------------------------
// Setup

Setup build_setup(const ExperimentConfig& config) {
  config.validate();
  const std::size_t n = config.x_size();
  const double rho = config.radius();

  ForwardOperator base =
      config.problem == "elliptic"
          ? elliptic_forward(EllipticProblem::standard(n, rho), config.bound_samples,
                             config.probe_seed)
          : diagonal_forward(DiagonalProblem::power_law(n, config.p, config.gamma, rho));
  ForwardOperator op = rescale(base, config.alpha0);
  calibrate_lipschitz(op, config.lipschitz_samples, config.probe_seed, config.power_iters);

  const GridFunction x_dagger = *op.domain_center;
  const SourceForm form =
      config.source_form == "adjoint" ? SourceForm::kAdjointRange : SourceForm::kFractionalPower;
  SourceSpec spec{form, config.nu,
                  spectral_source_element(op, x_dagger, form, config.source_profile,
                                          config.source_seed)};
  const double target = config.initial_error.value_or(config.initial_error_fraction * rho);
  SourceResult source = make_scaled_source(op, x_dagger, spec, target);

  GridFunction y = op.eval(x_dagger);
  const double y_norm = norm(y);
  if (!(y_norm > 0.0)) throw DegenerateProblemError("build_setup: exact data is zero");

  Setup s{op, x_dagger, source.x0, y, source, y_norm, source.source_norm,
          form == SourceForm::kAdjointRange ? 1.0 : config.nu,
          op.lipschitz_estimate * source.v_norm, {}};
  if (s.l_times_v > config.lv_warn) {
    std::ostringstream msg;
    msg << "L*|v| = " << s.l_times_v << " exceeds " << config.lv_warn
        << "; the smallness assumption of the convergence theory may fail";
    s.warnings.push_back(msg.str());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Statistics

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigurationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

SlopeFit fit_slope(const std::vector<double>& deltas, const std::vector<double>& errors) {
  if (deltas.size() != errors.size()) throw StructuralError("fit_slope: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i] > 0.0 && errors[i] > 0.0 && std::isfinite(errors[i])) {
      xs.push_back(std::log(deltas[i]));
      ys.push_back(std::log(errors[i]));
    }
  }
  SlopeFit fit;
  const std::size_t m = xs.size();
  if (m < 2) return fit;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(m);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(m);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) return fit;
  const double slope = sxy / sxx;
  fit.slope = slope;
  if (m >= 3) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = ys[i] - (my + slope * (xs[i] - mx));
      ssr += r * r;
    }
    fit.standard_error = std::sqrt(ssr / static_cast<double>(m - 2) / sxx);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

/// True when no clean iterate beyond the reference can attain the oracle infimum:
/// delta/sqrt(alpha_k) grows with k, and the gap to the best recorded term grows
/// with delta, so checking the smallest delta suffices for the whole sweep.
bool oracle_horizon_reached(const CleanReference& ref, double delta_min) {
  const auto& recs = ref.trace.records;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < recs.size(); ++k)
    best = std::min(best, ref.error[k] + delta_min / std::sqrt(recs[k].alpha));
  const double next_alpha = recs.back().alpha / ref.trace.schedule.ratio;
  return delta_min / std::sqrt(next_alpha) >= best;
}

Report run_sweep(const ExperimentConfig& config, const std::vector<std::string>& rules,
                 const std::string& command) {
  config.validate();
  const Setup setup = build_setup(config);
  const AlphaSchedule schedule = schedule_of(config);
  const CgSettings cg = cg_of(config);
  const double v_norm = setup.source.v_norm;

  std::vector<std::uint64_t> seeds = config.seeds;
  std::sort(seeds.begin(), seeds.end());

  Report report;
  for (std::size_t i = 0; i < config.deltas.size(); ++i)
    for (std::uint64_t seed : seeds)
      for (const std::string& rule : rules) {
        CellResult cell;
        cell.delta_index = i;
        cell.delta_rel = config.deltas[i];
        cell.delta = config.deltas[i] * setup.y_norm;
        cell.seed = seed;
        cell.rule = rule;
        cell.ktilde = ktilde_index(schedule, cell.delta, v_norm, config.c0);
        report.cells.push_back(std::move(cell));
      }

  parallel_for(report.cells.size(), config.threads, [&](std::size_t idx) {
    CellResult& cell = report.cells[idx];
    try {
      const GridFunction y_delta = add_noise(
          setup.y, {cell.delta, derive_seed(cell.seed + config.seed_offset, cell.delta_index)});
      StopRuleConfig stop;
      stop.tau = config.tau;
      stop.c0 = config.c0;
      stop.k_max = config.k_max;
      stop.rule = parse_stop_rule(cell.rule);
      stop.observe_until = std::min(cell.ktilde, config.k_max);
      if (stop.rule == StopRule::kApriori)
        stop.apriori_index =
            apriori_stop_index(schedule, cell.delta, setup.omega_norm, setup.apriori_nu);
      IterationTrace trace =
          run(setup.op, setup.x0, y_delta, cell.delta, schedule, stop, cg, setup.x_dagger);
      cell.stop_reason = to_string(trace.stop_reason);
      cell.k_stop = trace.stop_index;
      cell.error = *trace.stopped().error_norm;
      cell.residual = trace.stopped().residual_norm;
      cell.stop_functional = trace.stopped().stop_functional;
      cell.replay = verify_posterior_trace(trace);
      if (trace.stop_reason != StopReason::kRuleFired) {
        cell.failed = true;
        cell.failure = std::string("run ended with ") + to_string(trace.stop_reason);
      }
      cell.trace = std::move(trace);
    } catch (const Error& e) {
      cell.failed = true;
      cell.failure = e.what();
    }
  });

  // One noise-free run serves every cell; it is extended only as far as the
  // diagnostics need (deep alpha_k push CG towards its rounding floor).
  const double delta_min = config.deltas.back() * setup.y_norm;
  std::size_t k_last = 0;
  for (const CellResult& cell : report.cells) {
    k_last = std::max(k_last, cell.ktilde);
    if (cell.trace) k_last = std::max(k_last, cell.trace->records.size() - 1);
  }
  k_last = std::min(k_last, config.k_max);
  CleanReference clean =
      make_clean_reference(setup.op, setup.x_dagger, setup.x0, schedule, k_last, cg, true);
  while (k_last < config.k_max && !oracle_horizon_reached(clean, delta_min)) {
    k_last = std::min(config.k_max, k_last + 4);
    clean = make_clean_reference(setup.op, setup.x_dagger, setup.x0, schedule, k_last, cg, true);
  }
  for (std::size_t k = 0; k < clean.trace.records.size(); ++k) {
    report.clean.alpha.push_back(clean.trace.records[k].alpha);
    report.clean.error.push_back(clean.error[k]);
    report.clean.residual_half.push_back(clean.residual_half[k]);
    report.clean.beta.push_back(clean.beta[k]);
  }

  parallel_for(report.cells.size(), config.threads, [&](std::size_t idx) {
    CellResult& cell = report.cells[idx];
    if (!cell.trace) return;
    try {
      TheoryDiagnostics d = theory_diagnostics(*cell.trace, clean, v_norm, config.c0);
      cell.oracle_ratio = d.oracle_ratio;
      cell.max_noise_gap_ratio = d.max_noise_gap_ratio;
      cell.noise_gaps_complete = d.noise_gaps_complete;
      cell.residual_at_stop = d.residual_at_stop;
      cell.residual_min_before_stop = d.residual_min_before_stop;
      cell.diagnostics = std::move(d);
    } catch (const Error& e) {
      cell.failed = true;
      cell.failure = e.what();
    }
  });

  // Aggregation over the canonical cell order.
  Summary& s = report.summary;
  s.command = command;
  s.problem = setup.op.name;
  s.source_form = config.source_form;
  s.nu = config.source_form == "adjoint" ? 1.0 : config.nu;
  s.theory_exponent = s.nu / (1.0 + s.nu);
  s.cells_total = report.cells.size();
  s.y_norm = setup.y_norm;
  s.initial_error = setup.source.achieved_norm;
  s.v_norm = v_norm;
  s.lipschitz = setup.op.lipschitz_estimate;
  s.l_times_v = setup.l_times_v;
  s.warnings = setup.warnings;
  for (double d : config.deltas) s.deltas.push_back(d * setup.y_norm);

  double oracle_max = 0.0, oracle_min = std::numeric_limits<double>::infinity();
  double at_stop_max = 0.0, before_min = std::numeric_limits<double>::infinity();
  bool any_posterior = false;
  std::size_t monotone_pairs = 0, monotone_ok = 0;
  for (const CellResult& cell : report.cells) {
    if (cell.failed) {
      ++s.cells_failed;
      continue;
    }
    if (!cell.replay.empty()) s.replay_pass = false;
    if (cell.rule != "posterior") continue;
    any_posterior = true;
    oracle_max = std::max(oracle_max, cell.oracle_ratio);
    if (cell.oracle_ratio > 0.0) oracle_min = std::min(oracle_min, cell.oracle_ratio);
    s.max_noise_gap_ratio = std::max(s.max_noise_gap_ratio, cell.max_noise_gap_ratio);
    if (!cell.noise_gaps_complete || cell.max_noise_gap_ratio > config.noise_gap_slack)
      s.lemma35_pass = false;
    if (cell.residual_at_stop) {
      at_stop_max = std::max(at_stop_max, *cell.residual_at_stop / cell.delta);
      if (*cell.residual_at_stop > config.residual_factor * cell.delta) s.lemma47_pass = false;
    } else {
      s.lemma47_pass = false;
    }
    if (cell.k_stop > 0) {
      before_min = std::min(before_min, cell.residual_min_before_stop / cell.delta);
      if (cell.residual_min_before_stop < cell.delta / config.residual_factor)
        s.lemma47_pass = false;
    }
  }
  if (any_posterior) {
    s.max_oracle_ratio = oracle_max;
    if (std::isfinite(oracle_min)) s.oracle_spread = oracle_max / oracle_min;
    s.max_residual_at_stop_over_delta = at_stop_max;
    if (std::isfinite(before_min)) s.min_residual_before_stop_over_delta = before_min;
  }

  // Stopping index monotonicity in delta, per seed.
  for (std::size_t idx = 0; idx < report.cells.size(); ++idx) {
    const CellResult& a = report.cells[idx];
    if (a.failed || a.rule != "posterior") continue;
    for (const CellResult& b : report.cells) {
      if (b.failed || b.rule != "posterior" || b.seed != a.seed ||
          b.delta_index != a.delta_index + 1)
        continue;
      ++monotone_pairs;
      if (b.k_stop >= a.k_stop) ++monotone_ok;
    }
  }
  if (monotone_pairs > 0)
    s.monotone_stop_fraction =
        static_cast<double>(monotone_ok) / static_cast<double>(monotone_pairs);

  for (const std::string& rule : rules) {
    std::vector<double> ds, meds;
    for (std::size_t i = 0; i < config.deltas.size(); ++i) {
      std::vector<double> errs;
      for (const CellResult& cell : report.cells)
        if (!cell.failed && cell.rule == rule && cell.delta_index == i)
          errs.push_back(cell.error);
      if (errs.empty()) continue;
      ds.push_back(s.deltas[i]);
      meds.push_back(median(errs));
    }
    const SlopeFit fit = fit_slope(ds, meds);
    s.rule_slopes[rule] = fit.slope;
    if (rule == rules.front()) {
      s.slope = fit.slope;
      s.slope_stderr = fit.standard_error;
      s.median_errors = meds;
      if (meds.size() != s.deltas.size()) s.median_errors.clear();
    }
  }

  const bool cells_ok = static_cast<double>(s.cells_failed) <
                        config.max_failed_fraction * static_cast<double>(s.cells_total);
  s.verdicts["cells"] = cells_ok;
  s.verdicts["replay"] = s.replay_pass;
  if (command == "rates") {
    s.verdicts["noise_propagation"] = s.lemma35_pass;
    s.verdicts["residual_bounds"] = s.lemma47_pass;
    if (config.slope_min || config.slope_max) {
      bool ok = s.slope.has_value();
      if (ok && config.slope_min) ok = *s.slope >= *config.slope_min;
      if (ok && config.slope_max) ok = *s.slope <= *config.slope_max;
      s.verdicts["slope"] = ok;
    }
  } else if (command == "oracle") {
    s.verdicts["oracle_max"] = s.max_oracle_ratio && *s.max_oracle_ratio <= config.oracle_ratio_max;
    s.verdicts["oracle_spread"] =
        s.oracle_spread && *s.oracle_spread <= config.oracle_spread_max;
  }
  s.passed = std::all_of(s.verdicts.begin(), s.verdicts.end(),
                         [](const auto& kv) { return kv.second; });
  return report;
}

}  // namespace

Report run_rate_experiment(const ExperimentConfig& config) {
  if (config.deltas.size() < 2) throw ConfigurationError("rate fit needs at least 2 deltas");
  return run_sweep(config, {"posterior"}, "rates");
}

Report run_oracle_check(const ExperimentConfig& config) {
  return run_sweep(config, {"posterior"}, "oracle");
}

Report run_rule_comparison(const ExperimentConfig& config) {
  return run_sweep(config, kAllRules, "rules");
}

// ---------------------------------------------------------------------------
// Self-check

bool SelfcheckReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

namespace {

/// Max-norm error of the state solve against u = sin(pi t) (c = 0) on n interior nodes.
double elliptic_state_error(std::size_t n) {
  const double h = 1.0 / static_cast<double>(n + 1);
  std::vector<double> f(n), c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    f[i] = M_PI * M_PI * std::sin(M_PI * static_cast<double>(i + 1) * h);
  const EllipticProblem prob = EllipticProblem::with_data(n, f, c, 0.1);
  const GridFunction u = elliptic_solve_state(prob, prob.c_dagger);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    err = std::max(err, std::abs(u[i] - std::sin(M_PI * static_cast<double>(i + 1) * h)));
  return err;
}

/// alpha res^T W (alpha I + (wy/wx) J J^T)^{-1} res in Y coordinates.
double dense_functional(const Eigen::MatrixXd& jac, double wx, double wy,
                        const GridFunction& res, double alpha) {
  const auto m = static_cast<Eigen::Index>(res.size());
  Eigen::Map<const Eigen::VectorXd> r(res.values().data(), m);
  Eigen::MatrixXd system = (wy / wx) * jac * jac.transpose();
  system.diagonal().array() += alpha;
  const Eigen::VectorXd z = system.ldlt().solve(r);
  return alpha * wy * r.dot(z);
}

}  // namespace

SelfcheckReport selfcheck(const ExperimentConfig& config) {
  const Setup setup = build_setup(config);
  const ForwardOperator& op = setup.op;
  SelfcheckReport report;
  report.problem = op.name;
  const int points = config.selfcheck_points;

  double adjoint_worst = 0.0;
  double taylor_worst = 0.0;
  for (int i = 0; i < points; ++i) {
    const auto base = derive_seed(config.probe_seed + 17, static_cast<std::uint64_t>(i));
    const GridFunction x = ball_sample(op, 0.5, base);
    adjoint_worst = std::max(adjoint_worst, adjoint_check(op, x, 4, derive_seed(base, 1)));
    std::mt19937_64 engine(derive_seed(base, 2));
    std::uniform_real_distribution<double> unif(0.05, 0.5);
    GridFunction h = random_unit(op.x_dim, op.x_weight, derive_seed(base, 3));
    h *= unif(engine) * op.domain_radius;
    const TaylorCheck t = taylor_remainder_check(op, x, h);
    if (t.bound > 0.0) taylor_worst = std::max(taylor_worst, t.remainder_norm / t.bound);
  }
  report.checks.push_back({"adjoint_consistency", adjoint_worst, 1e-10, adjoint_worst <= 1e-10});
  report.checks.push_back({"taylor_remainder_over_bound", taylor_worst, 1.5, taylor_worst <= 1.5});

  const double probe =
      lipschitz_probe(op, config.lipschitz_samples, config.probe_seed + 1, config.power_iters);
  report.checks.push_back(
      {"lipschitz_probe_over_estimate", probe / op.lipschitz_estimate, 1.0 + 1e-9,
       probe > 0.0 && probe <= op.lipschitz_estimate * (1.0 + 1e-9)});

  const AlphaSchedule schedule = schedule_of(config);
  const CgSettings cg = cg_of(config);
  {
    StopRuleConfig stop;
    stop.rule = StopRule::kNone;
    stop.k_max = 10;
    const IterationTrace t = run(op, setup.x_dagger, setup.y, 0.0, schedule, stop, cg);
    double worst = 0.0;
    for (const auto& r : t.records)
      worst = std::max({worst, r.residual_norm, distance(r.iterate, setup.x_dagger)});
    report.checks.push_back({"noise_free_fixed_point", worst, 1e-12, worst <= 1e-12});
  }
  {
    const Eigen::MatrixXd jac = dense_jacobian(op, setup.x0);
    const GridFunction res = op.eval(setup.x0) - setup.y;
    const Linearization lin = op.linearize(setup.x0);
    double worst = 0.0;
    double alpha = schedule.alpha0;
    for (int k = 0; k <= 20; k += 1, alpha /= schedule.ratio) {
      if (k % 5 != 0) continue;
      const double dense = dense_functional(jac, op.x_weight, op.y_weight, res, alpha);
      const double free = residual_functional(lin, res, alpha, cg);
      worst = std::max(worst, std::abs(free - dense) / std::max(dense, 1e-300));
    }
    report.checks.push_back({"functional_vs_dense", worst, 1e-8, worst <= 1e-8});
  }
  {
    double worst = 0.0;
    for (std::size_t k = 1; k <= config.k_max; ++k) {
      const double prev = schedule.alpha(k - 1);
      worst = std::max(worst, std::abs(schedule.alpha(k) * schedule.ratio - prev) / prev);
    }
    report.checks.push_back({"schedule_recurrence", worst, 4e-16, worst <= 4e-16});
  }
  if (config.problem == "elliptic") {
    const double e1 = elliptic_state_error(31);
    const double e2 = elliptic_state_error(63);
    const double e3 = elliptic_state_error(127);
    const double r1 = e1 / e2, r2 = e2 / e3;
    report.checks.push_back({"state_convergence_ratio_31_63", r1, 4.0, std::abs(r1 - 4.0) <= 0.8});
    report.checks.push_back(
        {"state_convergence_ratio_63_127", r2, 4.0, std::abs(r2 - 4.0) <= 0.8});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

std::string results_csv(const Report& report) {
  std::ostringstream out;
  out << "delta,seed,rule,k_stop,error,residual,stop_functional,ktilde,oracle_ratio\n";
  for (const CellResult& c : report.cells) {
    out << fmt(c.delta) << ',' << c.seed << ',' << c.rule << ',';
    if (c.failed) {
      out << "-1,nan,nan,nan," << c.ktilde << ",nan\n";
      continue;
    }
    out << c.k_stop << ',' << fmt(c.error) << ',' << fmt(c.residual) << ','
        << fmt(c.stop_functional) << ',' << c.ktilde << ',' << fmt(c.oracle_ratio) << '\n';
  }
  return out.str();
}

namespace {

Json opt_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? Json(*v) : Json(nullptr);
}

std::optional<double> opt_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string trace_csv(const CellResult& cell, const Report& report) {
  std::ostringstream out;
  out << "k,alpha,delta,tau,residual_norm,stop_functional,error_norm,cg_iterations,clean_error,"
         "noise_gap,noise_bound,clean_residual_half,accepted\n";
  const IterationTrace& t = *cell.trace;
  for (const IterationRecord& r : t.records) {
    const bool have_clean = r.k < report.clean.error.size();
    std::optional<double> gap, bound;
    if (cell.diagnostics)
      for (const NoiseGap& g : cell.diagnostics->noise_gaps)
        if (g.k == r.k) {
          gap = g.gap;
          bound = g.bound;
        }
    out << r.k << ',' << fmt(r.alpha) << ',' << fmt(t.delta) << ',' << fmt(t.stop.tau) << ','
        << fmt(r.residual_norm) << ',' << fmt(r.stop_functional) << ',' << fmt(r.error_norm) << ','
        << r.cg_iterations << ','
        << (have_clean ? fmt(report.clean.error[r.k]) : std::string("nan")) << ',' << fmt(gap)
        << ',' << fmt(bound) << ','
        << (have_clean ? fmt(report.clean.residual_half[r.k]) : std::string("nan")) << ','
        << (r.k == t.stop_index ? 1 : 0) << '\n';
  }
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace

std::string summary_json(const Summary& s) {
  Json j;
  j["command"] = s.command;
  j["problem"] = s.problem;
  j["source_form"] = s.source_form;
  j["nu"] = s.nu;
  j["theory_exponent"] = s.theory_exponent;
  j["slope"] = opt_json(s.slope);
  j["slope_stderr"] = opt_json(s.slope_stderr);
  Json slopes = Json::object();
  for (const auto& [rule, v] : s.rule_slopes) slopes[rule] = opt_json(v);
  j["rule_slopes"] = slopes;
  j["deltas"] = s.deltas;
  j["median_errors"] = s.median_errors;
  j["max_oracle_ratio"] = opt_json(s.max_oracle_ratio);
  j["oracle_spread"] = opt_json(s.oracle_spread);
  j["max_noise_gap_ratio"] = s.max_noise_gap_ratio;
  j["max_residual_at_stop_over_delta"] = opt_json(s.max_residual_at_stop_over_delta);
  j["min_residual_before_stop_over_delta"] = opt_json(s.min_residual_before_stop_over_delta);
  j["monotone_stop_fraction"] = s.monotone_stop_fraction;
  j["lemma35_pass"] = s.lemma35_pass;
  j["lemma47_pass"] = s.lemma47_pass;
  j["replay_pass"] = s.replay_pass;
  j["cells_total"] = s.cells_total;
  j["cells_failed"] = s.cells_failed;
  j["y_norm"] = s.y_norm;
  j["initial_error"] = s.initial_error;
  j["v_norm"] = s.v_norm;
  j["lipschitz"] = s.lipschitz;
  j["l_times_v"] = s.l_times_v;
  j["verdicts"] = s.verdicts;
  j["passed"] = s.passed;
  j["warnings"] = s.warnings;
  return j.dump(2) + "\n";
}

Summary parse_summary_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw StructuralError(std::string("summary JSON: ") + e.what());
  }
  Summary s;
  s.command = j.at("command").get<std::string>();
  s.problem = j.at("problem").get<std::string>();
  s.source_form = j.at("source_form").get<std::string>();
  s.nu = j.at("nu").get<double>();
  s.theory_exponent = j.at("theory_exponent").get<double>();
  s.slope = opt_from(j.at("slope"));
  s.slope_stderr = opt_from(j.at("slope_stderr"));
  for (const auto& [rule, v] : j.at("rule_slopes").items()) s.rule_slopes[rule] = opt_from(v);
  s.deltas = j.at("deltas").get<std::vector<double>>();
  s.median_errors = j.at("median_errors").get<std::vector<double>>();
  s.max_oracle_ratio = opt_from(j.at("max_oracle_ratio"));
  s.oracle_spread = opt_from(j.at("oracle_spread"));
  s.max_noise_gap_ratio = j.at("max_noise_gap_ratio").get<double>();
  s.max_residual_at_stop_over_delta = opt_from(j.at("max_residual_at_stop_over_delta"));
  s.min_residual_before_stop_over_delta = opt_from(j.at("min_residual_before_stop_over_delta"));
  s.monotone_stop_fraction = j.at("monotone_stop_fraction").get<double>();
  s.lemma35_pass = j.at("lemma35_pass").get<bool>();
  s.lemma47_pass = j.at("lemma47_pass").get<bool>();
  s.replay_pass = j.at("replay_pass").get<bool>();
  s.cells_total = j.at("cells_total").get<std::size_t>();
  s.cells_failed = j.at("cells_failed").get<std::size_t>();
  s.y_norm = j.at("y_norm").get<double>();
  s.initial_error = j.at("initial_error").get<double>();
  s.v_norm = j.at("v_norm").get<double>();
  s.lipschitz = j.at("lipschitz").get<double>();
  s.l_times_v = j.at("l_times_v").get<double>();
  s.verdicts = j.at("verdicts").get<std::map<std::string, bool>>();
  s.passed = j.at("passed").get<bool>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  return s;
}

void emit_report(const Report& report, const std::string& dir) {
  const std::filesystem::path root(dir);
  make_dirs(root / "traces");
  write_file(root / "results.csv", results_csv(report));
  write_file(root / "summary.json", summary_json(report.summary));

  std::ostringstream plot;
  plot << "# log10_delta log10_median_error\n";
  for (std::size_t i = 0; i < report.summary.median_errors.size(); ++i)
    plot << fmt(std::log10(report.summary.deltas[i])) << ' '
         << fmt(std::log10(report.summary.median_errors[i])) << '\n';
  write_file(root / "plot.dat", plot.str());

  std::ostringstream clean;
  clean << "k,alpha,error,residual_half,beta\n";
  for (std::size_t k = 0; k < report.clean.alpha.size(); ++k)
    clean << k << ',' << fmt(report.clean.alpha[k]) << ',' << fmt(report.clean.error[k]) << ','
          << fmt(report.clean.residual_half[k]) << ',' << fmt(report.clean.beta[k]) << '\n';
  write_file(root / "traces" / "clean.csv", clean.str());

  for (const CellResult& cell : report.cells) {
    if (!cell.trace) continue;
    std::ostringstream name;
    name << "d" << cell.delta_index << "_s" << cell.seed << "_" << cell.rule << ".csv";
    write_file(root / "traces" / name.str(), trace_csv(cell, report));
  }
}

void emit_selfcheck(const SelfcheckReport& report, const std::string& dir) {
  const std::filesystem::path root(dir);
  make_dirs(root);
  Json j;
  j["problem"] = report.problem;
  Json checks = Json::array();
  for (const Check& c : report.checks)
    checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"pass", c.pass}});
  j["checks"] = checks;
  j["passed"] = report.passed();
  write_file(root / "selfcheck.json", j.dump(2) + "\n");
}

}  // namespace irgn::bench
