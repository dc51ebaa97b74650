#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "avgmart/linear_analytics.hpp"
#include "avgmart/model.hpp"
#include "oracles.hpp"

namespace {

using namespace avgmart;

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Eigen::MatrixXd drift_ab(double alpha, double beta) {
  return (Eigen::MatrixXd(2, 2) << alpha, -alpha, -1.0, 1.0 + beta).finished();
}

TEST(Spectrum, ReferenceCases) {
  const auto s0 = eigenvalues_two_timescale(1, 0);
  EXPECT_NEAR(s0.lambda0, 0.0, 1e-15);
  EXPECT_NEAR(s0.alpha_lambda1, 2.0, 1e-15);
  const auto s1 = eigenvalues_two_timescale(2, 1);
  EXPECT_NEAR(s1.lambda0, 2.0 - std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(s1.alpha_lambda1, 2.0 + std::sqrt(2.0), 1e-14);
  const auto s2 = eigenvalues_two_timescale(100, 1);
  EXPECT_NEAR(s2.lambda0, 0.99, 0.005);
  EXPECT_EQ(oracle::error_kind([] { eigenvalues_two_timescale(0, 1); }),
            ErrorKind::NonpositiveParameter);
}

TEST(Spectrum, TraceAndDeterminant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(0.5, 100.0), ub(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const double a = ua(rng), b = ub(rng);
    const auto s = eigenvalues_two_timescale(a, b);
    const double trace = a + 1.0 + b, det = a * b;
    EXPECT_LE(std::abs(s.lambda0 + s.alpha_lambda1 - trace), 1e-10 * trace);
    EXPECT_LE(std::abs(s.lambda0 * s.alpha_lambda1 - det), 1e-10 * std::max(1.0, det));
  }
}

TEST(ExpmNegAt, IdentityAtZero) {
  const auto e = expm_neg_At(3.0, 0.5, 0.0);
  EXPECT_LT((e.matrix - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_DOUBLE_EQ(e.coeffs.c0, 1.0);
  EXPECT_DOUBLE_EQ(e.coeffs.c1, 0.0);
}

TEST(ExpmNegAt, ProjectsOntoKernelForLargeTime) {
  const auto e = expm_neg_At(1.0, 0.0, 40.0);
  EXPECT_LT((e.matrix - Eigen::Matrix2d::Constant(0.5)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExpmNegAt, AgreesWithSeriesOracle) {
  const Eigen::MatrixXd ref = oracle::expm_series(-drift_ab(2, 1) * 0.3);
  EXPECT_LT((expm_neg_At(2, 1, 0.3).matrix - ref).cwiseAbs().maxCoeff(), 1e-10);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ua(0.5, 100.0), ub(0.0, 5.0), ut(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double a = ua(rng), b = ub(rng), t = ut(rng);
    const Eigen::MatrixXd oracle_value = oracle::expm_series(-drift_ab(a, b) * t);
    EXPECT_LT((expm_neg_At(a, b, t).matrix - oracle_value).cwiseAbs().maxCoeff(), 1e-10)
        << a << " " << b << " " << t;
  }
}

TEST(ExpmNegAt, CoefficientRelations) {
  const auto e = expm_neg_At(4.0, 2.0, 0.7);
  EXPECT_NEAR(e.coeffs.c2, 4.0 * (e.coeffs.c0 - e.coeffs.c1), 1e-15);
  EXPECT_EQ(oracle::error_kind([] { expm_neg_At(1, 1, -1.0); }), ErrorKind::TimeOrder);
}

TEST(Propagator, MatchesSeriesOracleOnRandomModels) {
  std::mt19937_64 rng(5);
  for (int n : {1, 2, 3, 4}) {
    const LinearModel m = oracle::random_dissipative(rng, n);
    const LinearPropagator prop(m);
    for (double u : {0.0, 0.1, 1.3}) {
      EXPECT_LT((prop.expm(u) - oracle::expm_series(-m.A * u)).cwiseAbs().maxCoeff(), 1e-10);
      // Block exponential: [[-A, I], [0, 0]] u has top-right int_0^u e^{-Av} dv.
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
      block.topLeftCorner(n, n) = -m.A * u;
      block.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n) * u;
      const Eigen::MatrixXd integral = oracle::expm_series(block).topRightCorner(n, n);
      EXPECT_LT((prop.integral(u) - integral).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Propagator, CovarianceSolvesLyapunovOde) {
  // d/du C(u) = Q - A C - C A^T, checked by a central difference.
  std::mt19937_64 rng(8);
  const LinearModel m = oracle::random_dissipative(rng, 3);
  const LinearPropagator prop(m);
  const double u = 0.8, h = 1e-5;
  const Eigen::MatrixXd C = prop.covariance(u);
  const Eigen::MatrixXd dC = (prop.covariance(u + h) - prop.covariance(u - h)) / (2.0 * h);
  const Eigen::MatrixXd rhs = m.Sigma * m.Sigma.transpose() - m.A * C - C * m.A.transpose();
  EXPECT_LT((dC - rhs).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(prop.covariance(0.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Propagator, IllConditionedFallback) {
  // A Jordan block has a defective eigenvector matrix.
  const LinearModel m = make_linear_model((Eigen::MatrixXd(2, 2) << 1, 1, 0, 1).finished(),
                                          Eigen::MatrixXd::Identity(2, 2));
  const LinearPropagator prop(m);
  EXPECT_FALSE(prop.uses_spectral_route());
  EXPECT_LT((prop.expm(0.9) - oracle::expm_series(-m.A * 0.9)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Evolution, ReferenceValues) {
  // f = x - y on the alpha-only pair: P_t f = (x - y) e^{-(alpha + 1) t}.
  const LinearModel pair = make_two_timescale(1, 1, 1, 1, 1);
  const auto f = AffineObservable::constant(vec({1.0, -1.0}));
  const auto g = evolution_affine(pair, f, 0.0, std::log(2.0));
  EXPECT_NEAR(g(0.0, vec({4.0, 0.0})), 1.0, 1e-14);
  const auto same = evolution_affine(pair, f, 0.5, 0.5);
  EXPECT_EQ(same.constant_weight(), f.constant_weight());
  const LinearModel ou = make_ou(1.0, std::numbers::sqrt2);
  const auto x = AffineObservable::constant(vec({1.0}));
  EXPECT_NEAR(evolution_affine(ou, x, 0.0, 1.0).constant_weight()(0), 0.36787944117144233, 1e-15);
  EXPECT_EQ(oracle::error_kind([&] { evolution_affine(ou, x, 1.0, 0.5); }), ErrorKind::TimeOrder);
  EXPECT_EQ(oracle::error_kind([&] { evolution_affine(pair, x, 0.0, 0.5); }),
            ErrorKind::ShapeMismatch);
}

TEST(Evolution, SemigroupProperty) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const LinearModel m = oracle::random_dissipative(rng, 3);
  const auto f = AffineObservable::time_dependent(
      3, [](double t) { return vec({std::cos(t), 1.0, t}); }, [](double t) { return t * t; });
  for (int i = 0; i < 20; ++i) {
    double s = 2.0 * u01(rng), u = 2.0 * u01(rng), t = 2.0 * u01(rng);
    if (s > u) std::swap(s, u);
    if (u > t) std::swap(u, t);
    if (s > u) std::swap(s, u);
    const auto direct = evolution_affine(m, f, s, t);
    const auto composed = evolution_affine(m, evolution_affine(m, f, u, t), s, u);
    EXPECT_LT((direct.constant_weight() - composed.constant_weight()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(direct.offset(s), composed.offset(s), 1e-12);
  }
}

TEST(Gradient, ReferenceValues) {
  const LinearModel ou = make_ou(1.0, std::numbers::sqrt2);
  const auto x = AffineObservable::constant(vec({1.0}));
  EXPECT_NEAR(gradient_evolution(ou, x, 0.0, 1.0)(0), std::numbers::sqrt2 * std::exp(-1.0), 1e-15);
  const LinearModel unit = make_linear_model(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  const auto f = AffineObservable::constant(vec({0.3, -2.0}));
  EXPECT_EQ(gradient_evolution(unit, f, 0.4, 0.4), f.constant_weight());
}

TEST(Gradient, AgreesWithFiniteDifferences) {
  std::mt19937_64 rng(17);
  const LinearModel m = oracle::random_dissipative(rng, 3);
  const auto f = AffineObservable::constant(vec({1.0, -0.5, 2.0}), 0.7);
  const double s = 0.2, t = 1.1, h = 1e-5;
  const auto pf = evolution_affine(m, f, s, t);
  const Eigen::VectorXd x = vec({0.4, -1.0, 0.25});
  Eigen::VectorXd grad(3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Eigen::VectorXd up = x, down = x;
    up(i) += h;
    down(i) -= h;
    grad(i) = (pf(s, up) - pf(s, down)) / (2.0 * h);
  }
  const Eigen::VectorXd expected = m.Sigma.transpose() * grad;
  EXPECT_LT((gradient_evolution(m, f, s, t) - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ROperator, ReferenceValues) {
  const LinearModel ou = make_ou(1.0, 1.0);
  const auto x = AffineObservable::constant(vec({1.0}));
  EXPECT_NEAR(r_operator_affine(ou, x, 0.0, 1.0)(0.0, vec({1.0})), 1.0 - std::exp(-1.0), 1e-15);
  const auto zero = r_operator_affine(ou, AffineObservable::constant(vec({2.0}), 3.0), 0.7, 0.7);
  EXPECT_EQ(zero(0.7, vec({5.0})), 0.0);
  const LinearModel pair = make_two_timescale(1, 1, 1, 1, 1);
  const auto diff = AffineObservable::constant(vec({1.0, -1.0}));
  EXPECT_NEAR(r_operator_affine(pair, diff, 0.0, 1.0)(0.0, vec({2.0, 0.0})),
              1.0 - std::exp(-2.0), 1e-14);
}

TEST(ROperator, MatchesSimpsonQuadratureOfEvolution) {
  std::mt19937_64 rng(19);
  const LinearModel m = oracle::random_dissipative(rng, 2);
  const Eigen::VectorXd x = vec({0.6, -0.3});
  const double t = 0.25, T = 1.5;
  const std::vector<AffineObservable> observables = {
      AffineObservable::constant(vec({1.0, 2.0}), -0.5),
      AffineObservable::time_dependent(
          2, [](double s) { return vec({std::sin(s), 1.0}); }, [](double s) { return std::exp(-s); })};
  for (const auto& f : observables) {
    const double quad = oracle::simpson(
        [&](double s) { return evolution_affine(m, f, t, s)(t, x); }, t, T, 1000);
    EXPECT_NEAR(r_operator_affine(m, f, t, T)(t, x), quad, 1e-9);
  }
}

TEST(Poisson, OuResolvent) {
  const LinearModel ou = make_ou(2.0, 1.0);
  const auto sol = poisson_resolvent(ou, AffineObservable::constant(vec({1.0})), 30.0);
  EXPECT_NEAR(sol.g.constant_weight()(0), 0.5, 1e-15);
  EXPECT_LE(sol.residual, 1e-15);
  EXPECT_NEAR(sol.truncated_weight(0), 0.5, 1e-10);
}

TEST(Poisson, RandomDissipativeModels) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const LinearModel m = oracle::random_dissipative(rng, 1 + i % 4);
    Eigen::VectorXd w(m.dim());
    for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = g(rng);
    const auto sol = poisson_resolvent(m, AffineObservable::constant(w), 60.0);
    EXPECT_LE(sol.residual, 1e-10);
  }
}

TEST(Poisson, Errors) {
  const auto f = AffineObservable::constant(vec({1.0, 0.0}));
  EXPECT_EQ(oracle::error_kind([&] { poisson_resolvent(make_linear_ab(1, 0), f, 10.0); }),
            ErrorKind::NonDissipative);
  EXPECT_EQ(oracle::error_kind([&] {
              poisson_resolvent(make_linear_ab(1, 1), AffineObservable::constant(vec({1.0, 0.0}), 1.0), 10.0);
            }),
            ErrorKind::InvalidArgument);
}

}  // namespace
