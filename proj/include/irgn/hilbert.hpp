#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "irgn/errors.hpp"

namespace irgn {

/// Element of a discretized Hilbert space: nodal values plus a constant
/// quadrature weight. The inner product is weight * sum_i u_i v_i, so a
/// uniform grid on (0,1) uses weight = h and Euclidean problems use 1.
///
/// Construction rejects empty vectors, non-positive weights and non-finite
/// values. Binary operations require both operands to live in the same
/// space (same length and bit-identical weight).
class GridFunction {
 public:
  /// Zero vector of length n.
  GridFunction(std::size_t n, double weight);
  GridFunction(std::vector<double> values, double weight);

  static GridFunction zeros_like(const GridFunction& other) {
    return GridFunction(other.size(), other.weight());
  }
  /// Canonical basis vector e_j (value 1 at index j).
  static GridFunction basis(std::size_t n, double weight, std::size_t j);

  std::size_t size() const noexcept { return values_.size(); }
  double weight() const noexcept { return weight_; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  bool same_space(const GridFunction& other) const noexcept {
    return size() == other.size() && weight() == other.weight();
  }
  bool all_finite() const noexcept;

  GridFunction& operator+=(const GridFunction& other);
  GridFunction& operator-=(const GridFunction& other);
  GridFunction& operator*=(double scalar);
  /// this += a * x
  GridFunction& add_scaled(double a, const GridFunction& x);

  friend bool operator==(const GridFunction&, const GridFunction&) = default;

 private:
  std::vector<double> values_;
  double weight_;
};

GridFunction operator+(GridFunction lhs, const GridFunction& rhs);
GridFunction operator-(GridFunction lhs, const GridFunction& rhs);
GridFunction operator*(double scalar, GridFunction v);
GridFunction operator*(GridFunction v, double scalar);

/// Pointwise product; used by multiplication operators such as h -> h*u.
GridFunction hadamard(const GridFunction& a, const GridFunction& b);

/// Throws StructuralError unless u and v share length and weight.
void require_same_space(const GridFunction& u, const GridFunction& v, const char* context);

double inner(const GridFunction& u, const GridFunction& v);
double norm(const GridFunction& u);
double distance(const GridFunction& u, const GridFunction& v);

/// Matrix-free linear map between grid-function spaces.
using LinearMap = std::function<GridFunction(const GridFunction&)>;

struct CgSettings {
  double rel_tolerance = 1e-12;
  /// Unset means 10 * n for an n-dimensional system.
  std::optional<std::size_t> max_iterations;

  std::size_t iteration_limit(std::size_t n) const { return max_iterations.value_or(10 * n); }
  void validate() const;
};

struct CgResult {
  GridFunction solution;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Solves (alpha I + op) z = rhs by conjugate gradients in the weighted inner
/// product of rhs. `op` must be self-adjoint and positive semi-definite; the
/// shift is kept separate so one operator handle serves every alpha.
///
/// The returned relative residual is the true residual |(alpha z + op z) - rhs| / |rhs|,
/// recomputed at the end (with residual replacement restarts when the recursive
/// estimate drifts). Throws SolverError if the tolerance is not met within the
/// iteration limit and StructuralError if op produces non-finite output.
CgResult cg_solve(const LinearMap& op, double alpha, const GridFunction& rhs,
                  const CgSettings& settings = {});

/// Estimate of the largest singular value of `forward` (an operator on an
/// n-dimensional space with quadrature weight `weight_in`), from `iterations`
/// power steps on adjoint∘forward started at a seeded random unit vector.
/// The estimate is the largest Rayleigh-Ritz value over the Krylov space of
/// the power iterates, which makes it a lower bound that is nondecreasing in
/// `iterations`. Returns 0 for the zero operator.
double power_iteration_norm(const LinearMap& forward, const LinearMap& adjoint, std::size_t dim_in,
                            double weight_in, int iterations, std::uint64_t seed);

}  // namespace irgn
