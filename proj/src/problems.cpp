#include "irgn/problems.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "irgn/random.hpp"

namespace irgn {

// ---------------------------------------------------------------------------
// TridiagonalFactor

TridiagonalFactor::TridiagonalFactor(std::vector<double> lower, std::vector<double> diag,
                                     std::vector<double> upper)
    : lower_(std::move(lower)), diag_(std::move(diag)), upper_(std::move(upper)) {
  const std::size_t n = diag_.size();
  if (n == 0 || lower_.size() + 1 != n || upper_.size() + 1 != n)
    throw StructuralError("TridiagonalFactor: inconsistent band lengths");
  pivots_.resize(n);
  pivots_[0] = diag_[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (!(pivots_[i - 1] > 0.0)) break;
    pivots_[i] = diag_[i] - lower_[i - 1] * upper_[i - 1] / pivots_[i - 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(pivots_[i] > 0.0) || !std::isfinite(pivots_[i])) {
      std::ostringstream msg;
      msg << "TridiagonalFactor: non-positive pivot " << pivots_[i] << " at row " << i;
      throw AdmissibilityError(msg.str());
    }
  }
}

std::vector<double> TridiagonalFactor::solve(std::span<const double> rhs) const {
  const std::size_t n = size();
  if (rhs.size() != n) throw StructuralError("TridiagonalFactor::solve: size mismatch");
  std::vector<double> x(rhs.begin(), rhs.end());
  for (std::size_t i = 1; i < n; ++i) x[i] -= lower_[i - 1] / pivots_[i - 1] * x[i - 1];
  x[n - 1] /= pivots_[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (x[i] - upper_[i] * x[i + 1]) / pivots_[i];
  return x;
}

std::vector<double> TridiagonalFactor::multiply(std::span<const double> x) const {
  const std::size_t n = size();
  if (x.size() != n) throw StructuralError("TridiagonalFactor::multiply: size mismatch");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = diag_[i] * x[i];
    if (i > 0) y[i] += lower_[i - 1] * x[i - 1];
    if (i + 1 < n) y[i] += upper_[i] * x[i + 1];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Elliptic problem

double EllipticProblem::laplacian_min_eigenvalue() const {
  const double h = mesh();
  const double s = std::sin(std::numbers::pi * h / 2.0);
  return 4.0 / (h * h) * s * s;
}

double EllipticProblem::admissible_radius() const {
  const double lmin = laplacian_min_eigenvalue();
  const auto cv = c_dagger.values();
  const double cmin = *std::min_element(cv.begin(), cv.end());
  const double root = std::sqrt(lmin);
  return std::min(2.0 * root, (0.5 * lmin + cmin) / root);
}

EllipticProblem EllipticProblem::with_data(std::size_t n, std::vector<double> f,
                                           std::vector<double> c_dagger, double rho) {
  if (n < 2) throw ConfigurationError("EllipticProblem: need at least 2 interior nodes");
  if (f.size() != n || c_dagger.size() != n)
    throw ConfigurationError("EllipticProblem: data length must equal n");
  const double h = 1.0 / static_cast<double>(n + 1);
  EllipticProblem p{n, GridFunction(std::move(f), h), GridFunction(std::move(c_dagger), h), rho};
  const double rmax = p.admissible_radius();
  if (!(rho > 0.0) || !(rho <= rmax)) {
    std::ostringstream msg;
    msg << "EllipticProblem: rho=" << rho << " must lie in (0, " << rmax
        << "] to keep A(c) positive definite on the ball";
    throw ConfigurationError(msg.str());
  }
  return p;
}

EllipticProblem EllipticProblem::standard(std::size_t n, double rho) {
  const double h = 1.0 / static_cast<double>(n + 1);
  std::vector<double> f(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i + 1) * h;
    f[i] = std::numbers::pi * std::numbers::pi * std::sin(std::numbers::pi * t) + 10.0;
    c[i] = 1.0 + t * (1.0 - t);
  }
  return with_data(n, std::move(f), std::move(c), rho);
}

TridiagonalFactor elliptic_system(const EllipticProblem& problem, const GridFunction& c) {
  if (c.size() != problem.n) throw StructuralError("elliptic_system: coefficient length != n");
  const double h = problem.mesh();
  const double off = -1.0 / (h * h);
  std::vector<double> diag(problem.n);
  for (std::size_t i = 0; i < problem.n; ++i) diag[i] = 2.0 / (h * h) + c[i];
  return TridiagonalFactor(std::vector<double>(problem.n - 1, off), std::move(diag),
                           std::vector<double>(problem.n - 1, off));
}

namespace {

GridFunction solve_with(const TridiagonalFactor& factor, const GridFunction& rhs) {
  return GridFunction(factor.solve(rhs.values()), rhs.weight());
}

}  // namespace

GridFunction elliptic_solve_state(const EllipticProblem& problem, const GridFunction& c) {
  const TridiagonalFactor factor = elliptic_system(problem, c);
  GridFunction u = solve_with(factor, problem.f);
  GridFunction residual(factor.multiply(u.values()), problem.f.weight());
  residual -= problem.f;
  const double fn = norm(problem.f);
  if (fn > 0.0 && norm(residual) > 1e-10 * fn)
    throw NumericError("elliptic_solve_state: state residual above 1e-10");
  return u;
}

ForwardOperator elliptic_forward(const EllipticProblem& problem, int bound_samples,
                                 std::uint64_t seed) {
  const auto data = std::make_shared<const EllipticProblem>(problem);
  const double h = problem.mesh();

  ForwardOperator op;
  {
    std::ostringstream name;
    name << "elliptic(n=" << problem.n << ",rho=" << problem.rho << ")";
    op.name = name.str();
  }
  op.x_dim = op.y_dim = problem.n;
  op.x_weight = op.y_weight = h;
  op.eval_fn = [data](const GridFunction& c) { return elliptic_solve_state(*data, c); };
  op.linearize_fn = [data](const GridFunction& c) {
    auto factor = std::make_shared<const TridiagonalFactor>(elliptic_system(*data, c));
    auto u = std::make_shared<const GridFunction>(solve_with(*factor, data->f));
    return Linearization{
        [factor, u](const GridFunction& dc) {
          GridFunction out = solve_with(*factor, hadamard(dc, *u));
          return out *= -1.0;
        },
        [factor, u](const GridFunction& w) {
          GridFunction out = hadamard(*u, solve_with(*factor, w));
          return out *= -1.0;
        }};
  };
  op.domain_center = problem.c_dagger;
  op.domain_radius = problem.rho;
  const double bound = estimate_derivative_bound(op, bound_samples, seed);
  op.scale_alpha0 = bound * bound;
  return op;
}

// ---------------------------------------------------------------------------
// Diagonal problem

DiagonalProblem DiagonalProblem::power_law(std::size_t n, double p, double gamma, double rho) {
  if (n == 0) throw ConfigurationError("DiagonalProblem: n must be positive");
  if (!(gamma >= 0.0)) throw ConfigurationError("DiagonalProblem: gamma must be >= 0");
  if (!(rho > 0.0)) throw ConfigurationError("DiagonalProblem: rho must be positive");
  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = std::pow(static_cast<double>(i + 1), -p);
  return {std::move(sigma), gamma, GridFunction(std::vector<double>(n, 1.0), 1.0), rho};
}

ForwardOperator diagonal_forward(const DiagonalProblem& problem) {
  const std::size_t n = problem.n();
  if (problem.x_dagger.size() != n)
    throw ConfigurationError("diagonal_forward: x_dagger length != n");
  const auto sigma = std::make_shared<const std::vector<double>>(problem.sigma);
  const double gamma = problem.gamma;

  ForwardOperator op;
  {
    std::ostringstream name;
    name << "diagonal(n=" << n << ",gamma=" << gamma << ",rho=" << problem.rho << ")";
    op.name = name.str();
  }
  op.x_dim = op.y_dim = n;
  op.x_weight = op.y_weight = 1.0;
  op.eval_fn = [sigma, gamma](const GridFunction& x) {
    GridFunction y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = (*sigma)[i] * (x[i] + 0.5 * gamma * x[i] * x[i]);
    return y;
  };
  op.linearize_fn = [sigma, gamma](const GridFunction& x) {
    auto slope = std::make_shared<std::vector<double>>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) (*slope)[i] = (*sigma)[i] * (1.0 + gamma * x[i]);
    const auto multiply = [slope](const GridFunction& v) {
      GridFunction out = v;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*slope)[i];
      return out;
    };
    return Linearization{multiply, multiply};
  };
  op.domain_center = problem.x_dagger;
  op.domain_radius = problem.rho;

  double sigma_max = 0.0;
  double bound = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sigma_max = std::max(sigma_max, problem.sigma[i]);
    bound = std::max(bound,
                     problem.sigma[i] * (1.0 + gamma * (std::abs(problem.x_dagger[i]) + problem.rho)));
  }
  op.lipschitz_estimate = gamma * sigma_max;
  op.scale_alpha0 = bound * bound;
  return op;
}

ForwardOperator linear_forward(const Eigen::MatrixXd& matrix, double x_weight, double y_weight) {
  const auto m = std::make_shared<const Eigen::MatrixXd>(matrix);
  ForwardOperator op;
  op.name = "linear";
  op.x_dim = static_cast<std::size_t>(matrix.cols());
  op.y_dim = static_cast<std::size_t>(matrix.rows());
  op.x_weight = x_weight;
  op.y_weight = y_weight;
  op.eval_fn = [m, y_weight](const GridFunction& x) {
    Eigen::Map<const Eigen::VectorXd> xv(x.values().data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd y = (*m) * xv;
    return GridFunction(std::vector<double>(y.data(), y.data() + y.size()), y_weight);
  };
  const double ratio = y_weight / x_weight;
  op.linearize_fn = [m, x_weight, y_weight, ratio](const GridFunction&) {
    return Linearization{
        [m, y_weight](const GridFunction& h) {
          Eigen::Map<const Eigen::VectorXd> hv(h.values().data(),
                                              static_cast<Eigen::Index>(h.size()));
          const Eigen::VectorXd y = (*m) * hv;
          return GridFunction(std::vector<double>(y.data(), y.data() + y.size()), y_weight);
        },
        [m, x_weight, ratio](const GridFunction& w) {
          Eigen::Map<const Eigen::VectorXd> wv(w.values().data(),
                                              static_cast<Eigen::Index>(w.size()));
          const Eigen::VectorXd x = ratio * (m->transpose() * wv);
          return GridFunction(std::vector<double>(x.data(), x.data() + x.size()), x_weight);
        }};
  };
  if (matrix.size() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(std::sqrt(ratio) * matrix);
    const double top = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
    op.scale_alpha0 = top * top;
  }
  return op;
}

// ---------------------------------------------------------------------------
// Source conditions

namespace {

/// SVD of the weight-normalized Jacobian sqrt(wy/wx) J, whose Euclidean SVD is
/// the SVD of F'(x_dagger) between the weighted spaces.
struct WeightedSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
  double cut = 0.0;
};

WeightedSvd weighted_svd(const ForwardOperator& problem, const GridFunction& x_dagger) {
  const Eigen::MatrixXd jac = dense_jacobian(problem, x_dagger);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(std::sqrt(problem.y_weight / problem.x_weight) * jac,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("source construction: SVD failed");
  WeightedSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV(), 0.0};
  out.cut = out.s.size() > 0 ? out.s[0] * 1e-10 : 0.0;
  return out;
}

Eigen::Map<const Eigen::VectorXd> as_eigen(const GridFunction& g) {
  return {g.values().data(), static_cast<Eigen::Index>(g.size())};
}

GridFunction from_eigen(const Eigen::VectorXd& v, double weight) {
  return GridFunction(std::vector<double>(v.data(), v.data() + v.size()), weight);
}

SourceResult build_source(const ForwardOperator& problem, const GridFunction& x_dagger,
                          const SourceSpec& spec) {
  const WeightedSvd svd = weighted_svd(problem, x_dagger);
  const Eigen::Index k = svd.s.size();
  Eigen::VectorXd delta_x;
  SourceResult result{x_dagger, 0.0, 0.0, 0.0};

  if (spec.form == SourceForm::kFractionalPower) {
    if (!(spec.nu > 0.0 && spec.nu <= 2.0))
      throw ConfigurationError("source: nu must lie in (0, 2]");
    if (spec.element.size() != problem.x_dim || spec.element.weight() != problem.x_weight)
      throw StructuralError("source: omega must be an element of X");
    const Eigen::VectorXd coeff = svd.v.transpose() * as_eigen(spec.element);
    Eigen::VectorXd scaled(k), v_coeff = Eigen::VectorXd::Zero(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      scaled[j] = std::pow(svd.s[j], spec.nu) * coeff[j];
      if (svd.s[j] > svd.cut) v_coeff[j] = std::pow(svd.s[j], spec.nu - 1.0) * coeff[j];
    }
    delta_x = svd.v * scaled;
    result.source_norm = norm(spec.element);
    result.v_norm = std::sqrt(problem.x_weight) * v_coeff.norm();
  } else {
    if (spec.element.size() != problem.y_dim || spec.element.weight() != problem.y_weight)
      throw StructuralError("source: v must be an element of Y");
    Eigen::VectorXd coeff = svd.u.transpose() * as_eigen(spec.element);
    for (Eigen::Index j = 0; j < k; ++j)
      if (!(svd.s[j] > svd.cut)) coeff[j] = 0.0;
    const Eigen::VectorXd projected = svd.u * coeff;
    delta_x = std::sqrt(problem.y_weight / problem.x_weight) *
              (svd.v * svd.s.cwiseProduct(coeff));
    result.source_norm = std::sqrt(problem.y_weight) * projected.norm();
    result.v_norm = result.source_norm;
  }
  result.x0 += from_eigen(delta_x, problem.x_weight);
  result.achieved_norm = distance(result.x0, x_dagger);
  return result;
}

void check_ball(const ForwardOperator& problem, const SourceResult& result) {
  if (problem.domain_center && !(4.0 * result.achieved_norm < problem.domain_radius)) {
    std::ostringstream msg;
    msg << "source: |x0 - x_dagger| = " << result.achieved_norm
        << " violates rho > 4 |x0 - x_dagger| (rho = " << problem.domain_radius
        << "); choose a smaller source norm";
    throw ConfigurationError(msg.str());
  }
}

}  // namespace

SourceResult make_source_initial_guess(const ForwardOperator& problem,
                                       const GridFunction& x_dagger, const SourceSpec& spec) {
  SourceResult result = build_source(problem, x_dagger, spec);
  check_ball(problem, result);
  return result;
}

GridFunction spectral_source_element(const ForwardOperator& problem, const GridFunction& x_dagger,
                                     SourceForm form, double profile, std::uint64_t seed) {
  const WeightedSvd svd = weighted_svd(problem, x_dagger);
  const Eigen::Index k = svd.s.size();
  std::mt19937_64 engine(seed);
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd coeff(k);
  for (Eigen::Index j = 0; j < k; ++j)
    coeff[j] = (coin(engine) ? 1.0 : -1.0) * std::pow(static_cast<double>(j + 1), -profile);
  GridFunction element = form == SourceForm::kFractionalPower
                             ? from_eigen(svd.v * coeff, problem.x_weight)
                             : from_eigen(svd.u * coeff, problem.y_weight);
  return element *= 1.0 / norm(element);
}

SourceResult make_scaled_source(const ForwardOperator& problem, const GridFunction& x_dagger,
                                SourceSpec spec, double target_error_norm) {
  if (!(target_error_norm >= 0.0))
    throw ConfigurationError("make_scaled_source: target norm must be nonnegative");
  const SourceResult unit = build_source(problem, x_dagger, spec);
  if (unit.achieved_norm == 0.0) {
    if (target_error_norm == 0.0) return unit;
    throw DegenerateProblemError("make_scaled_source: source element maps to zero");
  }
  spec.element *= target_error_norm / unit.achieved_norm;
  return make_source_initial_guess(problem, x_dagger, spec);
}

// ---------------------------------------------------------------------------
// Noise

GridFunction add_noise(const GridFunction& y, const NoiseSpec& spec) {
  if (!(spec.delta > 0.0)) throw ConfigurationError("add_noise: delta must be positive");
  for (std::uint64_t attempt = 0;; ++attempt) {
    const GridFunction g = gaussian_vector(y.size(), y.weight(), spec.seed + attempt);
    const double len = norm(g);
    if (len > 0.0) return y + (spec.delta / len) * g;
  }
}

}  // namespace irgn
