#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irgn/forward_operator.hpp"
#include "irgn/hilbert.hpp"

namespace irgn {

// ---------------------------------------------------------------------------
// Tridiagonal solves

/// LU factorization of a tridiagonal matrix (Thomas algorithm), reusable
/// across right-hand sides. Rejects zero or negative pivots, so successful
/// construction on a symmetric matrix certifies positive definiteness.
class TridiagonalFactor {
 public:
  /// lower/upper have n-1 entries, diag has n.
  TridiagonalFactor(std::vector<double> lower, std::vector<double> diag,
                    std::vector<double> upper);

  std::size_t size() const noexcept { return pivots_.size(); }
  std::vector<double> solve(std::span<const double> rhs) const;
  /// y = T x with the original (unfactored) coefficients.
  std::vector<double> multiply(std::span<const double> x) const;

 private:
  std::vector<double> lower_, diag_, upper_;
  std::vector<double> pivots_;  // modified diagonal
};

// ---------------------------------------------------------------------------
// Elliptic coefficient identification: -u'' + c u = f on (0,1), u(0)=u(1)=0

struct EllipticProblem {
  std::size_t n = 0;  ///< interior nodes, mesh size h = 1/(n+1)
  GridFunction f;
  GridFunction c_dagger;
  double rho = 0.0;

  double mesh() const { return 1.0 / static_cast<double>(n + 1); }
  /// Node t_i = i h, i = 1..n.
  double node(std::size_t i) const { return static_cast<double>(i + 1) * mesh(); }

  /// Smallest eigenvalue of the discrete Dirichlet Laplacian, 4/h^2 sin^2(pi h/2).
  double laplacian_min_eigenvalue() const;
  /// Largest radius for which A(c) >= lambda_min/2 holds on the whole L2 ball
  /// around c_dagger (discrete bound |u|_inf^2 <= |Du| |u|).
  double admissible_radius() const;

  /// f(t) = pi^2 sin(pi t) + 10, c_dagger(t) = 1 + t(1-t). Throws
  /// ConfigurationError when rho exceeds admissible_radius().
  static EllipticProblem standard(std::size_t n, double rho);
  /// Same grid with caller-chosen data (validated like standard()).
  static EllipticProblem with_data(std::size_t n, std::vector<double> f,
                                   std::vector<double> c_dagger, double rho);
};

/// Tridiagonal factorization of A(c) = tridiag(-1/h^2, 2/h^2 + c_i, -1/h^2).
/// Throws AdmissibilityError on a non-positive pivot.
TridiagonalFactor elliptic_system(const EllipticProblem& problem, const GridFunction& c);

/// State u(c) solving A(c) u = f.
GridFunction elliptic_solve_state(const EllipticProblem& problem, const GridFunction& c);

/// F(c) = u(c) with F'(c)h = -A(c)^{-1}(h u(c)) and F'(c)*w = -u(c) A(c)^{-1} w on
/// X = Y = L2(0,1) (weight h). Domain ball B_rho(c_dagger). scale_alpha0 is set from
/// estimate_derivative_bound(); lipschitz_estimate is left at 0 for probing.
ForwardOperator elliptic_forward(const EllipticProblem& problem, int bound_samples = 16,
                                 std::uint64_t seed = 2024);

// ---------------------------------------------------------------------------
// Diagonal benchmark: F(x)_i = sigma_i (x_i + gamma/2 x_i^2)

struct DiagonalProblem {
  std::vector<double> sigma;  ///< positive, nonincreasing
  double gamma = 0.0;
  GridFunction x_dagger;
  double rho = 1.0;

  std::size_t n() const { return sigma.size(); }

  /// sigma_i = i^{-p}, x_dagger = 1.
  static DiagonalProblem power_law(std::size_t n, double p, double gamma, double rho);
};

/// Closed-form operator (Euclidean weight 1). lipschitz_estimate = gamma max sigma and
/// scale_alpha0 = (max_i sigma_i (1 + gamma (|x_dagger_i| + rho)))^2, both exact.
ForwardOperator diagonal_forward(const DiagonalProblem& problem);

/// F(x) = M x between spaces with weights wx, wy (adjoint (wy/wx) M^T). No ball;
/// scale_alpha0 = |M|^2 in the weighted operator norm.
ForwardOperator linear_forward(const Eigen::MatrixXd& matrix, double x_weight = 1.0,
                               double y_weight = 1.0);

// ---------------------------------------------------------------------------
// Source conditions

enum class SourceForm {
  /// x0 - x_dagger = (F'(x_dagger)* F'(x_dagger))^{nu/2} omega
  kFractionalPower,
  /// x0 - x_dagger = F'(x_dagger)* v, v projected onto the closure of range F'(x_dagger)
  kAdjointRange,
};

struct SourceSpec {
  SourceForm form = SourceForm::kFractionalPower;
  double nu = 1.0;  ///< only used by kFractionalPower, must lie in (0, 2]
  /// omega (in X) for kFractionalPower, v (in Y) for kAdjointRange.
  GridFunction element;
};

struct SourceResult {
  GridFunction x0;
  double achieved_norm = 0.0;  ///< |x0 - x_dagger|
  double source_norm = 0.0;    ///< |omega| or |P v|
  double v_norm = 0.0;         ///< |v| for the minimal-norm v with x0 - x_dagger = F'(x_dagger)* v
};

/// Builds x0 from the dense SVD of F'(x_dagger) (weighted), with the numerical null
/// space cut at sigma_max * 1e-10. Throws ConfigurationError if 4 |x0 - x_dagger| >= rho.
SourceResult make_source_initial_guess(const ForwardOperator& problem,
                                       const GridFunction& x_dagger, const SourceSpec& spec);

/// Source element with coefficients (random sign) * j^{-profile} in the singular
/// basis of F'(x_dagger) (right singular vectors for omega, left for v), ordered
/// by decreasing singular value. Unit norm.
GridFunction spectral_source_element(const ForwardOperator& problem, const GridFunction& x_dagger,
                                     SourceForm form, double profile, std::uint64_t seed);

/// Scales `spec.element` so that |x0 - x_dagger| = target_error_norm and builds x0.
SourceResult make_scaled_source(const ForwardOperator& problem, const GridFunction& x_dagger,
                                SourceSpec spec, double target_error_norm);

// ---------------------------------------------------------------------------
// Noise

struct NoiseSpec {
  double delta = 0.0;
  std::uint64_t seed = 0;
};

/// y + delta * g / |g| with g seeded Gaussian; |y_delta - y| = delta up to round-off.
GridFunction add_noise(const GridFunction& y, const NoiseSpec& spec);

}  // namespace irgn
