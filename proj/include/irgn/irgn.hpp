#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "irgn/forward_operator.hpp"
#include "irgn/hilbert.hpp"

namespace irgn {

/// Geometric schedule alpha_k = alpha0 * ratio^{-k}, generated by the
/// recurrence alpha_{k+1} = alpha_k / ratio.
struct AlphaSchedule {
  double alpha0 = 1.0;
  double ratio = 2.0;

  double alpha(std::size_t k) const;
  void validate() const;
};

enum class StopRule {
  kPosterior,    ///< alpha <res, (alpha I + F'F'*)^{-1} res> <= tau^2 delta^2
  kDiscrepancy,  ///< |res| <= tau delta
  kApriori,      ///< fixed index N_delta
  kNone,         ///< run to k_max (noise-free reference runs)
};

const char* to_string(StopRule rule);
/// Accepts "posterior", "discrepancy", "apriori", "none".
StopRule parse_stop_rule(const std::string& text);

struct StopRuleConfig {
  double tau = 2.5;
  double c0 = 0.25;
  std::size_t k_max = 60;
  StopRule rule = StopRule::kPosterior;
  /// Required by kApriori.
  std::optional<std::size_t> apriori_index;
  /// Keep iterating after the rule fires, up to this index, so that
  /// diagnostics can look past the stopping index. Records beyond
  /// stop_index never change the stopping decision.
  std::optional<std::size_t> observe_until;

  /// Requires tau > 2 and 0 < c0 < tau - 2.
  void validate() const;
};

struct IterationRecord {
  std::size_t k = 0;
  double alpha = 0.0;
  GridFunction iterate;
  double residual_norm = 0.0;
  std::optional<double> stop_functional;
  std::optional<double> error_norm;
  /// CG iterations of the step from this iterate to the next (0 if no step was taken).
  std::size_t cg_iterations = 0;
};

enum class StopReason { kRuleFired, kKMaxReached, kDomainViolation };

const char* to_string(StopReason reason);

struct IterationTrace {
  std::vector<IterationRecord> records;
  /// Index of the accepted iterate: the rule's index, the last iterate at
  /// k_max, or the last admissible iterate before a domain violation.
  std::size_t stop_index = 0;
  StopReason stop_reason = StopReason::kKMaxReached;
  double delta = 0.0;
  std::string problem_id;
  AlphaSchedule schedule;
  StopRuleConfig stop;
  CgSettings cg;
  /// A domain violation ended the observation phase (after stop_index).
  bool observation_truncated = false;

  const IterationRecord& stopped() const { return records.at(stop_index); }
};

/// One IRGN step x_{k+1} = x_k - (alpha I + F'(x_k)*F'(x_k))^{-1}
/// [F'(x_k)*(F(x_k) - y) + alpha (x_k - x0)].
GridFunction irgn_step(const ForwardOperator& problem, const GridFunction& x_k,
                       const GridFunction& x0, const GridFunction& y_data, double alpha,
                       const CgSettings& cg = {});

/// alpha <res, (alpha I + F'(x)F'(x)*)^{-1} res> with res = F(x) - y_delta.
double stopping_functional(const ForwardOperator& problem, const GridFunction& x,
                           const GridFunction& y_delta, double alpha, const CgSettings& cg = {});

/// Same quadratic form for a given residual and frozen linearization.
double residual_functional(const Linearization& lin, const GridFunction& residual, double alpha,
                           const CgSettings& cg = {});

/// Runs the iteration from x0, evaluating the configured rule at each iterate
/// before stepping (so a stop at k = 0 is possible). Error norms are recorded
/// when x_dagger is given. Throws DomainError if x0 itself is inadmissible.
IterationTrace run(const ForwardOperator& problem, const GridFunction& x0,
                   const GridFunction& y_data, double delta, const AlphaSchedule& schedule,
                   const StopRuleConfig& stop, const CgSettings& cg = {},
                   const std::optional<GridFunction>& x_dagger = std::nullopt);

/// min{k : alpha_k <= (delta/|omega|)^{2/(1+nu)}}.
std::size_t apriori_stop_index(const AlphaSchedule& schedule, double delta, double omega_norm,
                               double nu);

/// min{k : alpha_k <= c0 delta / |v|}; 0 when v_norm == 0.
std::size_t ktilde_index(const AlphaSchedule& schedule, double delta, double v_norm, double c0);

/// |alpha (alpha I + F'(x_dagger)*F'(x_dagger))^{-1} (x0 - x_dagger)|.
double beta_k(const ForwardOperator& problem, const GridFunction& x_dagger,
              const GridFunction& x0, double alpha, const CgSettings& cg = {});

/// Noise-free quantities shared by every noisy run of one configuration.
struct CleanReference {
  IterationTrace trace;  ///< rule kNone, delta 0
  GridFunction x_dagger;
  GridFunction y;  ///< F(x_dagger)
  std::vector<double> error;  ///< |x_k - x_dagger|
  /// sqrt(alpha_k <F(x_k)-y, (alpha_k I + F'(x_dagger)F'(x_dagger)*)^{-1}(F(x_k)-y)>)
  std::vector<double> residual_half;
  std::vector<double> beta;  ///< beta_k, empty unless requested
};

/// Noise-free run from x0 for k = 0..k_last plus the derived per-k quantities.
CleanReference make_clean_reference(const ForwardOperator& problem, const GridFunction& x_dagger,
                                    const GridFunction& x0, const AlphaSchedule& schedule,
                                    std::size_t k_last, const CgSettings& cg = {},
                                    bool with_beta = false);

struct NoiseGap {
  std::size_t k = 0;
  double gap = 0.0;    ///< |x_k^delta - x_k|
  double bound = 0.0;  ///< delta / sqrt(alpha_k)
};

struct TheoryDiagnostics {
  std::size_t stop_index = 0;
  std::size_t ktilde = 0;
  /// Entries for k <= ktilde available in both traces.
  std::vector<NoiseGap> noise_gaps;
  bool noise_gaps_complete = false;  ///< every k <= ktilde was available
  double max_noise_gap_ratio = 0.0;  ///< max gap / bound
  /// Clean residual quantity at k_delta and its minimum over k < k_delta
  /// (infinity when k_delta = 0).
  std::optional<double> residual_at_stop;
  double residual_min_before_stop = 0.0;
  /// |e_k| / beta_k over the clean trace (empty unless beta was computed).
  std::vector<double> error_beta_ratio;
  double stop_error = 0.0;
  double oracle_infimum = 0.0;
  std::size_t oracle_argmin = 0;
  double oracle_ratio = 0.0;
  /// x0 == x_dagger: every error is zero and the ratios carry no information.
  bool degenerate = false;
};

/// Compares a noisy trace (recorded with error norms) against the clean reference.
/// Throws StructuralError if the traces do not belong to the same schedule/space.
TheoryDiagnostics theory_diagnostics(const IterationTrace& noisy, const CleanReference& clean,
                                     double v_norm, double c0);

/// Convenience overload that builds the clean reference from trace_clean.
TheoryDiagnostics theory_diagnostics(const IterationTrace& noisy, const IterationTrace& clean,
                                     const ForwardOperator& problem, const GridFunction& x_dagger,
                                     double v_norm, double c0, const CgSettings& cg = {});

/// Replays the posterior-rule definition on a recorded trace: functional > tau^2 delta^2
/// before stop_index and <= tau^2 delta^2 at it. Returns an empty string when the trace
/// is consistent, otherwise a description of the first violation.
std::string verify_posterior_trace(const IterationTrace& trace);

}  // namespace irgn
