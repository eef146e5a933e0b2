#include "irgn/irgn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace irgn {

namespace {

constexpr std::size_t kIndexSearchLimit = 100000;

std::size_t first_index_below(const AlphaSchedule& schedule, double threshold,
                              const char* context) {
  schedule.validate();
  double alpha = schedule.alpha0;
  for (std::size_t k = 0; k < kIndexSearchLimit; ++k) {
    if (alpha <= threshold) return k;
    alpha /= schedule.ratio;
  }
  std::ostringstream msg;
  msg << context << ": threshold " << threshold << " not reached by the schedule";
  throw NumericError(msg.str());
}

struct StepResult {
  GridFunction next;
  std::size_t cg_iterations;
};

StepResult step_with(const Linearization& lin, const GridFunction& x_k, const GridFunction& x0,
                     const GridFunction& residual, double alpha, const CgSettings& cg) {
  GridFunction rhs = lin.adjoint(residual);
  require_same_space(rhs, x_k, "irgn_step: F'(x)* output");
  rhs.add_scaled(alpha, x_k - x0);
  CgResult solve = cg_solve(normal_operator_x(lin), alpha, rhs, cg);
  return {x_k - solve.solution, solve.iterations};
}

struct Evaluation {
  GridFunction residual;
  Linearization lin;
  IterationRecord record;
};

template <class Fn>
auto observed(bool observing, bool& truncated, Fn&& fn) -> std::optional<decltype(fn())> {
  if (!observing) return fn();
  try {
    return fn();
  } catch (const Error&) {
    truncated = true;
    return std::nullopt;
  }
}

}  // namespace

double AlphaSchedule::alpha(std::size_t k) const {
  validate();
  double a = alpha0;
  for (std::size_t i = 0; i < k; ++i) a /= ratio;
  return a;
}

void AlphaSchedule::validate() const {
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0))
    throw ConfigurationError("AlphaSchedule: alpha0 must be positive and finite");
  if (!(ratio > 1.0) || !std::isfinite(ratio))
    throw ConfigurationError("AlphaSchedule: ratio must be finite and > 1");
}

const char* to_string(StopRule rule) {
  switch (rule) {
    case StopRule::kPosterior: return "posterior";
    case StopRule::kDiscrepancy: return "discrepancy";
    case StopRule::kApriori: return "apriori";
    case StopRule::kNone: return "none";
  }
  return "unknown";
}

StopRule parse_stop_rule(const std::string& text) {
  for (StopRule r : {StopRule::kPosterior, StopRule::kDiscrepancy, StopRule::kApriori,
                     StopRule::kNone})
    if (text == to_string(r)) return r;
  throw ConfigurationError("unknown stopping rule '" + text + "'");
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kRuleFired: return "rule_fired";
    case StopReason::kKMaxReached: return "k_max_reached";
    case StopReason::kDomainViolation: return "domain_violation";
  }
  return "unknown";
}

void StopRuleConfig::validate() const {
  if (!(tau > 2.0) || !std::isfinite(tau)) throw ConfigurationError("stop rule: tau must be > 2");
  if (!(c0 > 0.0 && c0 < tau - 2.0))
    throw ConfigurationError("stop rule: c0 must lie in (0, tau - 2)");
  if (k_max == 0) throw ConfigurationError("stop rule: k_max must be positive");
  if (rule == StopRule::kApriori && !apriori_index)
    throw ConfigurationError("stop rule: a priori rule needs an index");
}

GridFunction irgn_step(const ForwardOperator& problem, const GridFunction& x_k,
                       const GridFunction& x0, const GridFunction& y_data, double alpha,
                       const CgSettings& cg) {
  if (!(alpha > 0.0)) throw ConfigurationError("irgn_step: alpha must be positive");
  require_same_space(x_k, x0, "irgn_step: x_k vs x0");
  problem.require_in_domain(x_k, "irgn_step");
  const GridFunction residual = problem.eval(x_k) - y_data;
  return step_with(problem.linearize(x_k), x_k, x0, residual, alpha, cg).next;
}

double residual_functional(const Linearization& lin, const GridFunction& residual, double alpha,
                           const CgSettings& cg) {
  if (!(alpha > 0.0)) throw ConfigurationError("stopping functional: alpha must be positive");
  const CgResult solve = cg_solve(normal_operator_y(lin), alpha, residual, cg);
  return std::max(0.0, alpha * inner(residual, solve.solution));
}

double stopping_functional(const ForwardOperator& problem, const GridFunction& x,
                           const GridFunction& y_delta, double alpha, const CgSettings& cg) {
  const GridFunction residual = problem.eval(x) - y_delta;
  return residual_functional(problem.linearize(x), residual, alpha, cg);
}

IterationTrace run(const ForwardOperator& problem, const GridFunction& x0,
                   const GridFunction& y_data, double delta, const AlphaSchedule& schedule,
                   const StopRuleConfig& stop, const CgSettings& cg,
                   const std::optional<GridFunction>& x_dagger) {
  schedule.validate();
  stop.validate();
  cg.validate();
  if (!(delta >= 0.0) || !std::isfinite(delta))
    throw ConfigurationError("run: delta must be finite and nonnegative");
  if ((stop.rule == StopRule::kPosterior || stop.rule == StopRule::kDiscrepancy) && delta == 0.0)
    throw ConfigurationError("run: a posteriori rules need delta > 0");
  if (x0.size() != problem.x_dim || x0.weight() != problem.x_weight)
    throw StructuralError("run: x0 is not an element of X");
  if (y_data.size() != problem.y_dim || y_data.weight() != problem.y_weight)
    throw StructuralError("run: data is not an element of Y");
  if (x_dagger) require_same_space(*x_dagger, x0, "run: x_dagger vs x0");
  problem.require_in_domain(x0, "run: initial guess");

  IterationTrace trace;
  trace.delta = delta;
  trace.problem_id = problem.name;
  trace.schedule = schedule;
  trace.stop = stop;
  trace.cg = cg;

  const double tau2d2 = stop.tau * stop.tau * delta * delta;
  const bool want_functional = stop.rule != StopRule::kNone;
  bool stopped = false;
  GridFunction x = x0;
  double alpha = schedule.alpha0;

  for (std::size_t k = 0;; ++k) {
    // Past the stopping index a solver failure only shortens the observation.
    auto evaluation = observed(stopped, trace.observation_truncated, [&] {
      GridFunction residual = problem.eval(x) - y_data;
      Linearization lin = problem.linearize(x);
      IterationRecord rec{k, alpha, x, norm(residual), std::nullopt, std::nullopt, 0};
      if (want_functional) rec.stop_functional = residual_functional(lin, residual, alpha, cg);
      if (x_dagger) rec.error_norm = distance(x, *x_dagger);
      return Evaluation{std::move(residual), std::move(lin), std::move(rec)};
    });
    if (!evaluation) break;
    IterationRecord& rec = evaluation->record;

    if (!stopped) {
      bool fires = false;
      switch (stop.rule) {
        case StopRule::kPosterior: fires = *rec.stop_functional <= tau2d2; break;
        case StopRule::kDiscrepancy: fires = rec.residual_norm <= stop.tau * delta; break;
        case StopRule::kApriori: fires = k == *stop.apriori_index; break;
        case StopRule::kNone: break;
      }
      if (fires) {
        stopped = true;
        trace.stop_index = k;
        trace.stop_reason = StopReason::kRuleFired;
      }
    }
    trace.records.push_back(std::move(rec));

    if (stopped && k >= stop.observe_until.value_or(0)) break;
    if (!stopped && k >= stop.k_max) {
      trace.stop_index = k;
      trace.stop_reason = StopReason::kKMaxReached;
      break;
    }

    auto step = observed(stopped, trace.observation_truncated, [&] {
      return step_with(evaluation->lin, x, x0, evaluation->residual, alpha, cg);
    });
    if (!step) break;
    trace.records.back().cg_iterations = step->cg_iterations;
    if (!step->next.all_finite() || !problem.in_domain(step->next)) {
      if (stopped) {
        trace.observation_truncated = true;
      } else {
        trace.stop_index = k;
        trace.stop_reason = StopReason::kDomainViolation;
      }
      break;
    }
    x = std::move(step->next);
    alpha /= schedule.ratio;
  }
  return trace;
}

std::size_t apriori_stop_index(const AlphaSchedule& schedule, double delta, double omega_norm,
                               double nu) {
  if (!(delta > 0.0) || !(omega_norm > 0.0))
    throw ConfigurationError("apriori_stop_index: delta and |omega| must be positive");
  if (!(nu > 0.0 && nu <= 2.0)) throw ConfigurationError("apriori_stop_index: nu must lie in (0,2]");
  const double threshold = std::pow(delta / omega_norm, 2.0 / (1.0 + nu));
  return first_index_below(schedule, threshold, "apriori_stop_index");
}

std::size_t ktilde_index(const AlphaSchedule& schedule, double delta, double v_norm, double c0) {
  if (!(delta > 0.0) || !(c0 > 0.0))
    throw ConfigurationError("ktilde_index: delta and c0 must be positive");
  if (!(v_norm >= 0.0)) throw ConfigurationError("ktilde_index: |v| must be nonnegative");
  if (v_norm == 0.0) return 0;
  return first_index_below(schedule, c0 * delta / v_norm, "ktilde_index");
}

double beta_k(const ForwardOperator& problem, const GridFunction& x_dagger,
              const GridFunction& x0, double alpha, const CgSettings& cg) {
  if (!(alpha > 0.0)) throw ConfigurationError("beta_k: alpha must be positive");
  const GridFunction e0 = x0 - x_dagger;
  const CgResult solve = cg_solve(normal_operator_x(problem.linearize(x_dagger)), alpha, e0, cg);
  return alpha * norm(solve.solution);
}

namespace {

CleanReference complete_reference(const ForwardOperator& problem, const GridFunction& x_dagger,
                                  IterationTrace trace, const CgSettings& cg, bool with_beta) {
  CleanReference ref{std::move(trace), x_dagger, problem.eval(x_dagger), {}, {}, {}};
  const Linearization at_solution = problem.linearize(x_dagger);
  const GridFunction& x0 = ref.trace.records.front().iterate;
  for (const IterationRecord& rec : ref.trace.records) {
    ref.error.push_back(distance(rec.iterate, x_dagger));
    const GridFunction residual = problem.eval(rec.iterate) - ref.y;
    ref.residual_half.push_back(std::sqrt(residual_functional(at_solution, residual, rec.alpha, cg)));
    if (with_beta) ref.beta.push_back(beta_k(problem, x_dagger, x0, rec.alpha, cg));
  }
  return ref;
}

}  // namespace

CleanReference make_clean_reference(const ForwardOperator& problem, const GridFunction& x_dagger,
                                    const GridFunction& x0, const AlphaSchedule& schedule,
                                    std::size_t k_last, const CgSettings& cg, bool with_beta) {
  StopRuleConfig stop;
  stop.rule = StopRule::kNone;
  stop.k_max = std::max<std::size_t>(k_last, 1);
  IterationTrace trace =
      run(problem, x0, problem.eval(x_dagger), 0.0, schedule, stop, cg, x_dagger);
  if (trace.stop_reason == StopReason::kDomainViolation)
    throw DomainError("make_clean_reference: noise-free iterate left the ball");
  if (trace.records.size() > k_last + 1)
    trace.records.erase(trace.records.begin() + static_cast<std::ptrdiff_t>(k_last + 1),
                        trace.records.end());
  return complete_reference(problem, x_dagger, std::move(trace), cg, with_beta);
}

TheoryDiagnostics theory_diagnostics(const IterationTrace& noisy, const CleanReference& clean,
                                     double v_norm, double c0) {
  if (noisy.records.empty() || clean.trace.records.empty())
    throw StructuralError("theory_diagnostics: empty trace");
  if (noisy.schedule.alpha0 != clean.trace.schedule.alpha0 ||
      noisy.schedule.ratio != clean.trace.schedule.ratio)
    throw StructuralError("theory_diagnostics: traces use different schedules");
  if (!noisy.records.front().iterate.same_space(clean.x_dagger) ||
      noisy.records.front().iterate != clean.trace.records.front().iterate)
    throw StructuralError("theory_diagnostics: traces start from different initial guesses");

  TheoryDiagnostics d;
  d.stop_index = noisy.stop_index;
  const double delta = noisy.delta;
  const auto& cr = clean.trace.records;
  const auto& nr = noisy.records;
  d.degenerate = clean.error.front() == 0.0;

  // Noise propagation up to ktilde.
  if (delta > 0.0) {
    d.ktilde = ktilde_index(noisy.schedule, delta, v_norm, c0);
    const std::size_t avail = std::min(nr.size(), cr.size());
    d.noise_gaps_complete = d.ktilde < avail;
    for (std::size_t k = 0; k <= d.ktilde && k < avail; ++k) {
      const double gap = distance(nr[k].iterate, cr[k].iterate);
      const double bound = delta / std::sqrt(nr[k].alpha);
      d.noise_gaps.push_back({k, gap, bound});
      d.max_noise_gap_ratio = std::max(d.max_noise_gap_ratio, gap / bound);
    }
  } else {
    for (std::size_t k = 0; k < std::min(nr.size(), cr.size()); ++k)
      d.noise_gaps.push_back({k, distance(nr[k].iterate, cr[k].iterate), 0.0});
    d.noise_gaps_complete = true;
  }

  // Clean residual quantity around the stopping index.
  const std::size_t ks = noisy.stop_index;
  if (ks < clean.residual_half.size()) d.residual_at_stop = clean.residual_half[ks];
  d.residual_min_before_stop = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ks && k < clean.residual_half.size(); ++k)
    d.residual_min_before_stop = std::min(d.residual_min_before_stop, clean.residual_half[k]);

  for (std::size_t k = 0; k < clean.beta.size(); ++k)
    d.error_beta_ratio.push_back(clean.beta[k] > 0.0 ? clean.error[k] / clean.beta[k]
                                                     : (clean.error[k] == 0.0 ? 0.0 : INFINITY));

  // Oracle inequality.
  d.stop_error = distance(noisy.stopped().iterate, clean.x_dagger);
  d.oracle_infimum = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cr.size(); ++k) {
    const double value = clean.error[k] + delta / std::sqrt(cr[k].alpha);
    if (value < d.oracle_infimum) {
      d.oracle_infimum = value;
      d.oracle_argmin = k;
    }
  }
  d.oracle_ratio = d.oracle_infimum > 0.0 ? d.stop_error / d.oracle_infimum : 0.0;
  return d;
}

TheoryDiagnostics theory_diagnostics(const IterationTrace& noisy, const IterationTrace& clean,
                                     const ForwardOperator& problem, const GridFunction& x_dagger,
                                     double v_norm, double c0, const CgSettings& cg) {
  if (clean.records.empty()) throw StructuralError("theory_diagnostics: empty clean trace");
  const CleanReference ref = complete_reference(problem, x_dagger, clean, cg, true);
  return theory_diagnostics(noisy, ref, v_norm, c0);
}

std::string verify_posterior_trace(const IterationTrace& trace) {
  std::ostringstream msg;
  if (trace.stop.rule != StopRule::kPosterior) return "";
  const double threshold = trace.stop.tau * trace.stop.tau * trace.delta * trace.delta;
  const std::size_t upto = trace.stop_reason == StopReason::kRuleFired
                               ? trace.stop_index
                               : trace.stop_index + 1;  // rule never fired on the recorded range
  if (trace.stop_index >= trace.records.size()) return "stop_index beyond recorded range";
  for (std::size_t k = 0; k < upto; ++k) {
    const auto& f = trace.records[k].stop_functional;
    if (!f) {
      msg << "k=" << k << ": stopping functional not recorded";
      return msg.str();
    }
    if (!(*f > threshold)) {
      msg << "k=" << k << ": functional " << *f << " <= tau^2 delta^2 = " << threshold
          << " before the recorded stop " << trace.stop_index;
      return msg.str();
    }
  }
  if (trace.stop_reason == StopReason::kRuleFired) {
    const auto& f = trace.records[trace.stop_index].stop_functional;
    if (!f || !(*f <= threshold)) {
      msg << "k=" << trace.stop_index << ": functional at the stop exceeds tau^2 delta^2 = "
          << threshold;
      return msg.str();
    }
  }
  return "";
}

}  // namespace irgn
