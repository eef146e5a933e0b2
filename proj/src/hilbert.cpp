#include "irgn/hilbert.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "irgn/random.hpp"

namespace irgn {
namespace {

void check_construction(std::size_t n, double weight) {
  if (n == 0) throw StructuralError("GridFunction: length must be at least 1");
  if (!(weight > 0.0) || !std::isfinite(weight))
    throw StructuralError("GridFunction: weight must be positive and finite");
}

}  // namespace

GridFunction::GridFunction(std::size_t n, double weight) : values_(n, 0.0), weight_(weight) {
  check_construction(n, weight);
}

GridFunction::GridFunction(std::vector<double> values, double weight)
    : values_(std::move(values)), weight_(weight) {
  check_construction(values_.size(), weight_);
  if (!all_finite()) throw StructuralError("GridFunction: values must be finite");
}

GridFunction GridFunction::basis(std::size_t n, double weight, std::size_t j) {
  GridFunction e(n, weight);
  if (j >= n) throw StructuralError("GridFunction::basis: index out of range");
  e[j] = 1.0;
  return e;
}

bool GridFunction::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_space(const GridFunction& u, const GridFunction& v, const char* context) {
  if (!u.same_space(v)) {
    std::ostringstream msg;
    msg << context << ": space mismatch (n=" << u.size() << ", w=" << u.weight()
        << " vs n=" << v.size() << ", w=" << v.weight() << ")";
    throw StructuralError(msg.str());
  }
}

GridFunction& GridFunction::operator+=(const GridFunction& other) {
  require_same_space(*this, other, "operator+=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
  require_same_space(*this, other, "operator-=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

GridFunction& GridFunction::operator*=(double scalar) {
  for (double& v : values_) v *= scalar;
  return *this;
}

GridFunction& GridFunction::add_scaled(double a, const GridFunction& x) {
  require_same_space(*this, x, "add_scaled");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
  return *this;
}

GridFunction operator+(GridFunction lhs, const GridFunction& rhs) { return lhs += rhs; }
GridFunction operator-(GridFunction lhs, const GridFunction& rhs) { return lhs -= rhs; }
GridFunction operator*(double scalar, GridFunction v) { return v *= scalar; }
GridFunction operator*(GridFunction v, double scalar) { return v *= scalar; }

GridFunction hadamard(const GridFunction& a, const GridFunction& b) {
  require_same_space(a, b, "hadamard");
  GridFunction out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

double inner(const GridFunction& u, const GridFunction& v) {
  require_same_space(u, v, "inner");
  const auto a = u.values();
  const auto b = v.values();
  return u.weight() * std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(const GridFunction& u) { return std::sqrt(inner(u, u)); }

double distance(const GridFunction& u, const GridFunction& v) { return norm(u - v); }

void CgSettings::validate() const {
  if (!(rel_tolerance > 0.0 && rel_tolerance < 1.0))
    throw ConfigurationError("CgSettings: rel_tolerance must lie in (0,1)");
  if (max_iterations && *max_iterations < 1)
    throw ConfigurationError("CgSettings: max_iterations must be >= 1");
}

CgResult cg_solve(const LinearMap& op, double alpha, const GridFunction& rhs,
                  const CgSettings& settings) {
  settings.validate();
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw StructuralError("cg_solve: shift alpha must be finite and nonnegative");
  if (!rhs.all_finite()) throw StructuralError("cg_solve: right-hand side is not finite");

  const auto shifted = [&](const GridFunction& p) {
    GridFunction q = op(p);
    require_same_space(q, p, "cg_solve operator output");
    if (!q.all_finite()) throw StructuralError("cg_solve: operator produced non-finite values");
    q.add_scaled(alpha, p);
    return q;
  };

  GridFunction x = GridFunction::zeros_like(rhs);
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) return {std::move(x), 0, 0.0};

  const std::size_t limit = settings.iteration_limit(rhs.size());
  const double tol = settings.rel_tolerance * rhs_norm;
  constexpr int kMaxRestarts = 8;

  GridFunction r = rhs;
  std::size_t iterations = 0;
  double last_true = rhs_norm;
  for (int restart = 0;; ++restart) {
    GridFunction p = r;
    double rr = inner(r, r);
    while (std::sqrt(rr) > tol && iterations < limit) {
      const GridFunction q = shifted(p);
      const double pq = inner(p, q);
      if (!(pq > 0.0)) break;  // curvature lost: system is singular along p
      const double step = rr / pq;
      x.add_scaled(step, p);
      r.add_scaled(-step, q);
      const double rr_next = inner(r, r);
      p *= rr_next / rr;
      p += r;
      rr = rr_next;
      ++iterations;
    }

    r = rhs - shifted(x);
    const double true_norm = norm(r);
    if (true_norm <= tol) return {std::move(x), iterations, true_norm / rhs_norm};
    const bool stalled = true_norm >= last_true;
    if (iterations >= limit || restart == kMaxRestarts || stalled) {
      std::ostringstream msg;
      msg << "cg_solve: no convergence after " << iterations
          << " iterations (relative residual " << true_norm / rhs_norm << ", alpha " << alpha
          << ")";
      throw SolverError(msg.str(), true_norm / rhs_norm);
    }
    last_true = true_norm;
  }
}

double power_iteration_norm(const LinearMap& forward, const LinearMap& adjoint, std::size_t dim_in,
                            double weight_in, int iterations, std::uint64_t seed) {
  if (iterations < 1) throw ConfigurationError("power_iteration_norm: iterations must be >= 1");

  std::vector<GridFunction> basis;
  basis.push_back(random_unit(dim_in, weight_in, seed));
  std::vector<double> diag;
  std::vector<double> offdiag;
  double scale = 0.0;

  for (int j = 0; j < iterations; ++j) {
    const GridFunction& q = basis.back();
    GridFunction w = adjoint(forward(q));
    require_same_space(w, q, "power_iteration_norm");
    if (!w.all_finite()) throw StructuralError("power_iteration_norm: non-finite operator output");

    const double a = inner(q, w);
    diag.push_back(a);
    scale = std::max(scale, std::abs(a));
    if (j + 1 == iterations || basis.size() == dim_in) break;

    // Two passes of full reorthogonalization keep the Ritz values clean.
    for (int pass = 0; pass < 2; ++pass)
      for (const GridFunction& b : basis) w.add_scaled(-inner(b, w), b);
    const double beta = norm(w);
    if (beta <= 1e-13 * scale || beta == 0.0) break;  // invariant subspace reached
    scale = std::max(scale, beta);
    offdiag.push_back(beta);
    w *= 1.0 / beta;
    basis.push_back(std::move(w));
  }

  const auto m = static_cast<Eigen::Index>(diag.size());
  Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(diag.data(), m);
  Eigen::VectorXd e(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index i = 0; i + 1 < m; ++i) e[i] = offdiag[static_cast<std::size_t>(i)];
  double top = d[0];
  if (m > 1) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
      throw NumericError("power_iteration_norm: tridiagonal eigen-solve failed");
    top = solver.eigenvalues().maxCoeff();
  }
  return std::sqrt(std::max(top, 0.0));
}

}  // namespace irgn
