#include "irgn/forward_operator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "irgn/random.hpp"

namespace irgn {

GridFunction ForwardOperator::eval(const GridFunction& x) const {
  if (x.size() != x_dim || x.weight() != x_weight)
    throw StructuralError(name + ": eval argument is not in X");
  return eval_fn(x);
}

Linearization ForwardOperator::linearize(const GridFunction& x) const {
  if (x.size() != x_dim || x.weight() != x_weight)
    throw StructuralError(name + ": linearization point is not in X");
  return linearize_fn(x);
}

GridFunction ForwardOperator::derivative_apply(const GridFunction& x, const GridFunction& h) const {
  return linearize(x).apply(h);
}

GridFunction ForwardOperator::adjoint_apply(const GridFunction& x, const GridFunction& w) const {
  return linearize(x).adjoint(w);
}

bool ForwardOperator::in_domain(const GridFunction& x) const {
  if (!domain_center) return true;
  return distance(x, *domain_center) <= domain_radius * (1.0 + 1e-12);
}

void ForwardOperator::require_in_domain(const GridFunction& x, const char* context) const {
  if (!in_domain(x)) {
    std::ostringstream msg;
    msg << context << ": point at distance " << distance(x, *domain_center)
        << " from the center leaves the ball of radius " << domain_radius;
    throw DomainError(msg.str());
  }
}

LinearMap normal_operator_x(const Linearization& lin) {
  return [lin](const GridFunction& h) { return lin.adjoint(lin.apply(h)); };
}

LinearMap normal_operator_y(const Linearization& lin) {
  return [lin](const GridFunction& w) { return lin.apply(lin.adjoint(w)); };
}

Eigen::MatrixXd dense_jacobian(const ForwardOperator& problem, const GridFunction& x) {
  constexpr std::size_t kMaxDim = 2000;
  if (problem.x_dim > kMaxDim || problem.y_dim > kMaxDim)
    throw CapacityError("dense_jacobian: dimension exceeds the dense-assembly guard of 2000");
  const Linearization lin = problem.linearize(x);
  Eigen::MatrixXd jac(problem.y_dim, problem.x_dim);
  for (std::size_t j = 0; j < problem.x_dim; ++j) {
    const GridFunction col = lin.apply(GridFunction::basis(problem.x_dim, problem.x_weight, j));
    for (std::size_t i = 0; i < problem.y_dim; ++i)
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  return jac;
}

double adjoint_check(const ForwardOperator& problem, const GridFunction& x, int trials,
                     std::uint64_t seed) {
  const Linearization lin = problem.linearize(x);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto s = derive_seed(seed, static_cast<std::uint64_t>(t));
    const GridFunction h = gaussian_vector(problem.x_dim, problem.x_weight, s);
    const GridFunction jh = lin.apply(h);
    GridFunction w = gaussian_vector(problem.y_dim, problem.y_weight, derive_seed(s, 1));
    if (t % 2 == 1 && norm(jh) > 0.0) w.add_scaled(norm(w) / norm(jh), jh);
    const double lhs = inner(jh, w);
    const double rhs = inner(h, lin.adjoint(w));
    worst = std::max(worst, std::abs(lhs - rhs) / (norm(jh) * norm(w) + 1e-300));
  }
  return worst;
}

TaylorCheck taylor_remainder_check(const ForwardOperator& problem, const GridFunction& x,
                                   const GridFunction& h) {
  problem.require_in_domain(x, "taylor_remainder_check(x)");
  const GridFunction xh = x + h;
  problem.require_in_domain(xh, "taylor_remainder_check(x+h)");
  GridFunction rem = problem.eval(xh);
  rem -= problem.eval(x);
  rem -= problem.derivative_apply(x, h);
  const double hn = norm(h);
  return {norm(rem), 0.5 * problem.lipschitz_estimate * hn * hn};
}

namespace {

/// Point in the closed ball: center + radius * fraction * direction.
GridFunction ball_point(const ForwardOperator& problem, const GridFunction& direction,
                        double fraction) {
  GridFunction p = problem.domain_center ? *problem.domain_center : problem.zero_x();
  p.add_scaled(problem.domain_radius * fraction, direction);
  return p;
}

void require_ball(const ForwardOperator& problem, const char* context) {
  if (!problem.domain_center || !(problem.domain_radius > 0.0))
    throw ConfigurationError(std::string(context) + ": domain center and radius must be set");
}

}  // namespace

double lipschitz_probe(const ForwardOperator& problem, int samples, std::uint64_t seed,
                       int power_iters) {
  require_ball(problem, "lipschitz_probe");
  const std::size_t n = problem.x_dim;
  const double w = problem.x_weight;
  const double unit_len = std::sqrt(w);  // |e_j| in the weighted norm
  double best = 0.0;
  for (int s = 0; s < samples; ++s) {
    const auto base = derive_seed(seed, static_cast<std::uint64_t>(s));
    std::mt19937_64 engine(derive_seed(base, 7));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // x in the half ball, z = x + step * d with step <= radius/2, so both stay inside.
    const GridFunction x = ball_point(problem, random_unit(n, w, derive_seed(base, 1)),
                                      0.5 * unif(engine));
    GridFunction d = (s % 2 == 1)
                         ? GridFunction::basis(n, w, static_cast<std::size_t>(s / 2) % n) *
                               (1.0 / unit_len)
                         : random_unit(n, w, derive_seed(base, 2));
    const double step = 0.5 * problem.domain_radius * std::max(unif(engine), 1e-3);
    const GridFunction z = x + step * d;

    const Linearization lx = problem.linearize(x);
    const Linearization lz = problem.linearize(z);
    const LinearMap diff = [&](const GridFunction& k) { return lx.apply(k) - lz.apply(k); };
    const LinearMap diff_adj = [&](const GridFunction& v) {
      return lx.adjoint(v) - lz.adjoint(v);
    };
    const double op_norm =
        power_iteration_norm(diff, diff_adj, n, w, power_iters, derive_seed(base, 3));
    best = std::max(best, op_norm / distance(x, z));
  }
  return best;
}

double calibrate_lipschitz(ForwardOperator& problem, int samples, std::uint64_t seed,
                           int power_iters) {
  const double probe = lipschitz_probe(problem, samples, seed, power_iters);
  problem.lipschitz_estimate = std::max(problem.lipschitz_estimate, probe);
  return probe;
}

double estimate_derivative_bound(const ForwardOperator& problem, int samples, std::uint64_t seed,
                                 int power_iters) {
  require_ball(problem, "estimate_derivative_bound");
  const std::size_t n = problem.x_dim;
  const double w = problem.x_weight;
  const auto norm_at = [&](const GridFunction& x, std::uint64_t s) {
    const Linearization lin = problem.linearize(x);
    return power_iteration_norm(lin.apply, lin.adjoint, n, w, power_iters, s);
  };

  GridFunction flat(std::vector<double>(n, 1.0), w);
  flat *= 1.0 / norm(flat);
  double best = norm_at(*problem.domain_center, derive_seed(seed, 0));
  best = std::max(best, norm_at(ball_point(problem, flat, 1.0), derive_seed(seed, 1)));
  best = std::max(best, norm_at(ball_point(problem, flat, -1.0), derive_seed(seed, 2)));
  for (int s = 0; s < samples; ++s) {
    const auto base = derive_seed(seed, 100 + static_cast<std::uint64_t>(s));
    best = std::max(best, norm_at(ball_point(problem, random_unit(n, w, base), 1.0),
                                  derive_seed(base, 1)));
  }
  return best;
}

ForwardOperator rescale(const ForwardOperator& problem, double target_alpha0) {
  if (!(target_alpha0 > 0.0)) throw ConfigurationError("rescale: target_alpha0 must be positive");
  if (!(problem.scale_alpha0 > 0.0))
    throw DegenerateProblemError("rescale: derivative norm bound is zero; nothing to scale");
  const double s = std::sqrt(target_alpha0 / problem.scale_alpha0);
  if (s == 1.0) return problem;

  ForwardOperator out = problem;
  out.eval_fn = [inner_eval = problem.eval_fn, s](const GridFunction& x) {
    return inner_eval(x) *= s;
  };
  out.linearize_fn = [inner_lin = problem.linearize_fn, s](const GridFunction& x) {
    Linearization base = inner_lin(x);
    return Linearization{
        [apply = base.apply, s](const GridFunction& h) { return apply(h) *= s; },
        [adj = base.adjoint, s](const GridFunction& w) { return adj(w) *= s; }};
  };
  out.lipschitz_estimate = problem.lipschitz_estimate * s;
  out.scale_alpha0 = target_alpha0;
  out.scale = problem.scale * s;
  return out;
}

}  // namespace irgn
