#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "irgn/problems.hpp"
#include "irgn/random.hpp"

using namespace irgn;
using std::numbers::pi;

namespace {

/// Max-norm error of the state for constant c = kappa with f = (pi^2 + kappa) sin(pi t).
double sine_state_error(std::size_t n, double kappa) {
  std::vector<double> f(n), c(n, kappa);
  const double h = 1.0 / static_cast<double>(n + 1);
  for (std::size_t i = 0; i < n; ++i) f[i] = (pi * pi + kappa) * std::sin(pi * (i + 1) * h);
  const EllipticProblem p = EllipticProblem::with_data(n, f, c, 0.1);
  const GridFunction u = elliptic_solve_state(p, p.c_dagger);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(u[i] - std::sin(pi * p.node(i))));
  return err;
}

}  // namespace

TEST(Tridiagonal, SolveMatchesDense) {
  const std::vector<double> lo{-1.0, 0.5, 2.0}, di{4.0, 5.0, 6.0, 7.0}, up{1.0, -2.0, 0.3};
  const TridiagonalFactor t(lo, di, up);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 4; ++i) m(i, i) = di[i];
  for (int i = 0; i < 3; ++i) {
    m(i + 1, i) = lo[i];
    m(i, i + 1) = up[i];
  }
  const std::vector<double> b{1.0, -2.0, 3.0, 0.5};
  const std::vector<double> x = t.solve(b);
  const Eigen::VectorXd ref = m.lu().solve(Eigen::Map<const Eigen::VectorXd>(b.data(), 4));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x[i], ref[i], 1e-14);
  const std::vector<double> back = t.multiply(x);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(back[i], b[i], 1e-14);
}

TEST(Tridiagonal, NonPositivePivotRejected) {
  EXPECT_THROW(TridiagonalFactor({-1.0}, {1.0, 1.0}, {-1.0}), AdmissibilityError);
  EXPECT_THROW(TridiagonalFactor({}, {-1.0}, {}), AdmissibilityError);
  EXPECT_THROW(TridiagonalFactor({1.0, 1.0}, {1.0, 1.0}, {1.0}), StructuralError);
}

TEST(EllipticState, SineSolutionWithZeroCoefficient) {
  EXPECT_LE(sine_state_error(199, 0.0), 1e-3);
}

TEST(EllipticState, ZeroSourceGivesZeroState) {
  const EllipticProblem p = EllipticProblem::with_data(50, std::vector<double>(50, 0.0),
                                                       std::vector<double>(50, 1.0), 0.5);
  const GridFunction u = elliptic_solve_state(p, p.c_dagger);
  EXPECT_EQ(norm(u), 0.0);
}

TEST(EllipticState, SecondOrderConvergence) {
  for (double kappa : {0.0, 3.0}) {
    const double e1 = sine_state_error(49, kappa);
    const double e2 = sine_state_error(99, kappa);
    const double e3 = sine_state_error(199, kappa);
    EXPECT_NEAR(e1 / e2, 4.0, 0.8) << "kappa " << kappa;
    EXPECT_NEAR(e2 / e3, 4.0, 0.8) << "kappa " << kappa;
  }
}

TEST(EllipticState, ResidualBelowTolerance) {
  const EllipticProblem p = EllipticProblem::standard(201, 1.8);
  const GridFunction c = p.c_dagger + 1.7 * random_unit(p.n, p.mesh(), 4);
  const GridFunction u = elliptic_solve_state(p, c);
  GridFunction res(elliptic_system(p, c).multiply(u.values()), p.mesh());
  res -= p.f;
  EXPECT_LE(norm(res), 1e-10 * norm(p.f));
}

TEST(EllipticProblemTest, StandardData) {
  const EllipticProblem p = EllipticProblem::standard(9, 1.0);
  EXPECT_DOUBLE_EQ(p.mesh(), 0.1);
  EXPECT_NEAR(p.f[4], pi * pi * std::sin(pi * 0.5) + 10.0, 1e-14);
  EXPECT_NEAR(p.c_dagger[4], 1.25, 1e-15);
  EXPECT_NEAR(p.laplacian_min_eigenvalue(), 400.0 * std::pow(std::sin(pi * 0.05), 2), 1e-12);
}

TEST(EllipticProblemTest, RadiusGuard) {
  const EllipticProblem p = EllipticProblem::standard(201, 1.0);
  EXPECT_GT(p.admissible_radius(), 1.8);
  EXPECT_THROW(EllipticProblem::standard(201, 2.0 * p.admissible_radius()), ConfigurationError);
  EXPECT_THROW(EllipticProblem::standard(201, 0.0), ConfigurationError);
}

TEST(EllipticProblemTest, WholeBallIsAdmissible) {
  const EllipticProblem p = EllipticProblem::standard(201, 1.8);
  // Pointwise-worst direction: a spike at one node.
  for (std::size_t j : {0, 100, 200}) {
    GridFunction c = p.c_dagger;
    c.add_scaled(-1.8 / std::sqrt(p.mesh()), GridFunction::basis(p.n, p.mesh(), j));
    EXPECT_NO_THROW(elliptic_system(p, c));
  }
  GridFunction flat(std::vector<double>(p.n, -1.8), p.mesh());
  EXPECT_NO_THROW(elliptic_system(p, p.c_dagger + flat));
}

TEST(EllipticProblemTest, InadmissibleCoefficient) {
  const EllipticProblem p = EllipticProblem::standard(51, 1.0);
  const GridFunction c(std::vector<double>(51, -100.0), p.mesh());
  EXPECT_THROW(elliptic_solve_state(p, c), AdmissibilityError);
}

TEST(EllipticForward, DerivativeMatchesFiniteDifferences) {
  const EllipticProblem p = EllipticProblem::standard(101, 1.8);
  const ForwardOperator op = elliptic_forward(p);
  const GridFunction c = p.c_dagger;
  const GridFunction h = random_unit(p.n, p.mesh(), 3);
  const GridFunction jh = op.derivative_apply(c, h);
  const auto fd_error = [&](double t) {
    GridFunction q = op.eval(c + t * h) - op.eval(c);
    q *= 1.0 / t;
    return distance(q, jh);
  };
  const double e1 = fd_error(1e-3), e2 = fd_error(5e-4);
  EXPECT_NEAR(e1 / e2, 2.0, 0.1);
  EXPECT_EQ(norm(op.derivative_apply(c, GridFunction::zeros_like(h))), 0.0);
}

TEST(EllipticForward, ConstantsPopulated) {
  const ForwardOperator op = elliptic_forward(EllipticProblem::standard(101, 1.8));
  EXPECT_GT(op.scale_alpha0, 0.0);
  EXPECT_EQ(op.lipschitz_estimate, 0.0);
  EXPECT_EQ(op.x_weight, 1.0 / 102.0);
  EXPECT_LE(adjoint_check(op, *op.domain_center, 4, 1), 1e-10);
}

TEST(DiagonalForward, ZeroCurvatureIsLinear) {
  const DiagonalProblem p = DiagonalProblem::power_law(8, 1.0, 0.0, 1.0);
  const ForwardOperator op = diagonal_forward(p);
  const GridFunction x = gaussian_vector(8, 1.0, 5);
  const GridFunction y = op.eval(x);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(y[i], p.sigma[i] * x[i]);
  EXPECT_EQ(op.lipschitz_estimate, 0.0);
}

TEST(DiagonalForward, EvalFormulaAndAdjoint) {
  const DiagonalProblem p = DiagonalProblem::power_law(16, 2.0, 0.05, 1.0);
  const ForwardOperator op = diagonal_forward(p);
  const GridFunction y = op.eval(p.x_dagger);
  for (std::size_t i = 0; i < 16; ++i)
    EXPECT_DOUBLE_EQ(y[i], std::pow(i + 1.0, -2.0) * (1.0 + 0.025));
  EXPECT_LE(adjoint_check(op, p.x_dagger, 6, 2), 1e-14);
  EXPECT_DOUBLE_EQ(op.scale_alpha0, std::pow(1.0 + 0.05 * 2.0, 2));
}

TEST(Source, DiagonalNuTwoClosedForm) {
  DiagonalProblem p{{2.0, 1.0, 0.5}, 0.0, GridFunction(3, 1.0), 20.0};
  const ForwardOperator op = diagonal_forward(p);
  const SourceResult r = make_source_initial_guess(
      op, p.x_dagger, {SourceForm::kFractionalPower, 2.0, GridFunction::basis(3, 1.0, 0)});
  EXPECT_NEAR(r.x0[0], 4.0, 1e-12);
  EXPECT_NEAR(r.x0[1], 0.0, 1e-12);
  EXPECT_NEAR(r.x0[2], 0.0, 1e-12);
  EXPECT_NEAR(r.achieved_norm, 4.0, 1e-12);
}

TEST(Source, ZeroOmegaKeepsExactSolution) {
  const DiagonalProblem p = DiagonalProblem::power_law(10, 2.0, 0.05, 1.0);
  const ForwardOperator op = diagonal_forward(p);
  const SourceResult r =
      make_source_initial_guess(op, p.x_dagger, {SourceForm::kFractionalPower, 1.0, GridFunction(10, 1.0)});
  EXPECT_EQ(r.x0, p.x_dagger);
  EXPECT_EQ(r.achieved_norm, 0.0);
}

TEST(Source, FractionalPowerMatchesComponentwise) {
  DiagonalProblem p = DiagonalProblem::power_law(20, 1.5, 0.0, 50.0);
  const ForwardOperator op = diagonal_forward(p);
  for (double nu : {0.5, 1.0, 1.7, 2.0}) {
    const GridFunction omega = gaussian_vector(20, 1.0, 77);
    const SourceResult r =
        make_source_initial_guess(op, p.x_dagger, {SourceForm::kFractionalPower, nu, omega});
    for (std::size_t i = 0; i < 20; ++i)
      EXPECT_NEAR(r.x0[i] - p.x_dagger[i], std::pow(p.sigma[i], nu) * omega[i], 1e-10);
  }
}

TEST(Source, AdjointFormLiesInRange) {
  // Rank-2 map from R^4 (weight 0.5) to R^5 (weight 2).
  Eigen::MatrixXd m(5, 4);
  m << 1, 2, 0, 1, 0, 1, 1, 0, 1, 3, 1, 1, 2, 4, 0, 2, 1, 1, 1, 1;
  m.row(4) = m.row(0) + m.row(1);
  m.col(3) = m.col(0) - m.col(2);
  ForwardOperator op = linear_forward(m, 0.5, 2.0);
  const GridFunction xd(4, 0.5);
  const GridFunction v = gaussian_vector(5, 2.0, 12);
  const SourceResult r = make_source_initial_guess(op, xd, {SourceForm::kAdjointRange, 1.0, v});
  const GridFunction d = r.x0 - xd;

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const double cut = svd.singularValues()[0] * 1e-10;
  Eigen::Map<const Eigen::VectorXd> dv(d.values().data(), 4);
  for (Eigen::Index j = 0; j < 4; ++j)
    if (svd.singularValues()[j] <= cut) EXPECT_LE(std::abs(svd.matrixV().col(j).dot(dv)), 1e-10);

  // x0 - x_dagger = F'* v = (wy/wx) M^T v; the null-space part of v contributes nothing.
  Eigen::Map<const Eigen::VectorXd> vv(v.values().data(), 5);
  const Eigen::VectorXd expect = 4.0 * m.transpose() * vv;
  EXPECT_LE((dv - expect).norm(), 1e-10 * expect.norm());
  EXPECT_LE(r.source_norm, norm(v));
}

TEST(Source, EllipticScaledToTarget) {
  const EllipticProblem p = EllipticProblem::standard(201, 1.8);
  const ForwardOperator op = rescale(elliptic_forward(p), 1.0);
  const GridFunction omega =
      spectral_source_element(op, p.c_dagger, SourceForm::kFractionalPower, 0.5, 1);
  EXPECT_NEAR(norm(omega), 1.0, 1e-14);
  const SourceResult r =
      make_scaled_source(op, p.c_dagger, {SourceForm::kFractionalPower, 1.0, omega}, 1.8 / 8);
  EXPECT_NEAR(r.achieved_norm, 1.8 / 8, 1e-12);
  EXPECT_NEAR(distance(r.x0, p.c_dagger), 1.8 / 8, 1e-12);
  EXPECT_GT(r.v_norm, 0.0);
}

TEST(Source, BallViolationRejected) {
  const DiagonalProblem p = DiagonalProblem::power_law(8, 1.0, 0.05, 1.0);
  const ForwardOperator op = diagonal_forward(p);
  const GridFunction omega = GridFunction::basis(8, 1.0, 0);
  EXPECT_THROW(make_scaled_source(op, p.x_dagger, {SourceForm::kFractionalPower, 1.0, omega}, 0.3),
               ConfigurationError);
  EXPECT_THROW(make_source_initial_guess(op, p.x_dagger, {SourceForm::kFractionalPower, 2.5, omega}),
               ConfigurationError);
}

TEST(Source, VNormOfFractionalPower) {
  // nu = 1 on a diagonal map: x0 - x_dagger = s * omega = F'* omega, so |v| = |omega|.
  DiagonalProblem p = DiagonalProblem::power_law(6, 1.0, 0.0, 50.0);
  const ForwardOperator op = diagonal_forward(p);
  const GridFunction omega = gaussian_vector(6, 1.0, 3);
  const SourceResult r =
      make_source_initial_guess(op, p.x_dagger, {SourceForm::kFractionalPower, 1.0, omega});
  EXPECT_NEAR(r.v_norm, norm(omega), 1e-12);
  EXPECT_NEAR(r.source_norm, norm(omega), 1e-15);
}

TEST(Noise, ExactLevelAndDeterminism) {
  const GridFunction y({1.0, 0.0}, 1.0);
  for (std::uint64_t seed : {0u, 1u, 99u})
    EXPECT_NEAR(distance(add_noise(y, {0.1, seed}), y), 0.1, 1e-15);
  EXPECT_EQ(add_noise(y, {0.1, 5}), add_noise(y, {0.1, 5}));
  const GridFunction a = add_noise(y, {0.1, 5}), b = add_noise(y, {0.1, 6});
  EXPECT_NE(a, b);
  EXPECT_NEAR(distance(b, y), 0.1, 1e-15);
  EXPECT_THROW(add_noise(y, {0.0, 1}), ConfigurationError);
}
