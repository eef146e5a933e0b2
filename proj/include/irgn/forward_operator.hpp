#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "irgn/hilbert.hpp"

namespace irgn {

/// F'(x) frozen at one point: the derivative action h -> F'(x)h and its
/// adjoint w -> F'(x)*w with respect to the weighted inner products.
struct Linearization {
  LinearMap apply;
  LinearMap adjoint;
};

/// Nonlinear forward map F: B_rho(center) ⊂ X -> Y together with the
/// constants that the convergence theory refers to.
///
/// `scale_alpha0` is the bound in |F'(x)| <= sqrt(scale_alpha0) over the
/// ball; `lipschitz_estimate` is L in |F'(x) - F'(z)| <= L |x - z|.
/// `scale` records the factor applied by rescale(), so data y must be
/// multiplied by the same factor.
///
/// Instances are immutable once built and may be shared between threads:
/// every callable must be free of side effects.
struct ForwardOperator {
  using EvalFn = std::function<GridFunction(const GridFunction&)>;
  using LinearizeFn = std::function<Linearization(const GridFunction&)>;

  std::string name;
  std::size_t x_dim = 0;
  std::size_t y_dim = 0;
  double x_weight = 1.0;
  double y_weight = 1.0;
  EvalFn eval_fn;
  LinearizeFn linearize_fn;
  std::optional<GridFunction> domain_center;
  double domain_radius = 0.0;
  double lipschitz_estimate = 0.0;
  double scale_alpha0 = 0.0;
  double scale = 1.0;

  GridFunction eval(const GridFunction& x) const;
  Linearization linearize(const GridFunction& x) const;
  GridFunction derivative_apply(const GridFunction& x, const GridFunction& h) const;
  GridFunction adjoint_apply(const GridFunction& x, const GridFunction& w) const;

  GridFunction zero_x() const { return GridFunction(x_dim, x_weight); }
  GridFunction zero_y() const { return GridFunction(y_dim, y_weight); }

  /// True when no ball is configured or |x - center| <= radius (with a
  /// relative round-off allowance of 1e-12).
  bool in_domain(const GridFunction& x) const;
  /// Throws DomainError when !in_domain(x).
  void require_in_domain(const GridFunction& x, const char* context) const;
};

/// Composite X-space operator h -> F'(x)* F'(x) h.
LinearMap normal_operator_x(const Linearization& lin);
/// Composite Y-space operator w -> F'(x) F'(x)* w.
LinearMap normal_operator_y(const Linearization& lin);

/// Dense matrix of F'(x) in nodal coordinates: column j is F'(x) e_j.
/// Guarded by x_dim <= 2000 (CapacityError beyond).
Eigen::MatrixXd dense_jacobian(const ForwardOperator& problem, const GridFunction& x);

/// Max over `trials` random (h, w) of |<F'(x)h, w> - <h, F'(x)*w>| / (|F'(x)h| |w| + 1e-300).
/// Odd trials bias w towards F'(x)h so that sign errors in the adjoint cannot hide.
double adjoint_check(const ForwardOperator& problem, const GridFunction& x, int trials,
                     std::uint64_t seed);

struct TaylorCheck {
  double remainder_norm;  ///< |F(x+h) - F(x) - F'(x)h|
  double bound;           ///< (L/2) |h|^2 with L = lipschitz_estimate
};

TaylorCheck taylor_remainder_check(const ForwardOperator& problem, const GridFunction& x,
                                   const GridFunction& h);

/// Lower bound on the Lipschitz constant of F' over the ball from `samples`
/// random pairs. Even samples use Gaussian directions, odd samples sweep
/// canonical directions so that axis-aligned curvature is always probed.
/// Does not modify `problem`; see calibrate_lipschitz().
double lipschitz_probe(const ForwardOperator& problem, int samples, std::uint64_t seed,
                       int power_iters = 50);

/// Runs lipschitz_probe and raises problem.lipschitz_estimate if the probe is larger.
double calibrate_lipschitz(ForwardOperator& problem, int samples, std::uint64_t seed,
                           int power_iters = 50);

/// Sampled estimate of sup |F'(x)| over the ball: the center, the two points
/// center ± radius * 1/|1|, and `samples` random points on the sphere.
double estimate_derivative_bound(const ForwardOperator& problem, int samples, std::uint64_t seed,
                                 int power_iters = 50);

/// Wraps `problem` as s*F with s = sqrt(target_alpha0 / problem.scale_alpha0), so that
/// the result satisfies |F'(x)| <= sqrt(target_alpha0). Data must be scaled by the
/// returned operator's `scale` / problem.scale. Returns an unmodified copy when s == 1.
ForwardOperator rescale(const ForwardOperator& problem, double target_alpha0);

}  // namespace irgn
