#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "avgmart/martingale.hpp"
#include "avgmart/simulate.hpp"
#include "oracles.hpp"

namespace {

using namespace avgmart;

constexpr double kOuQv = 0.33618248144915658;  // 2 iint e^{-(s-t)} (1 - e^{-2t}) on [0, 1]

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

LinearModel ou() { return make_ou(1.0, std::numbers::sqrt2); }
AffineObservable identity() { return AffineObservable::constant(vec({1.0})); }

TEST(MartingalePath, ZeroProviderGivesZeroMartingale) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 50);
  const Trajectory t = euler_maruyama_path(ou(), grid, vec({1.0}), 1, 0);
  const auto provider = GradRProvider::user_supplied(
      [](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1).eval(); });
  const MartingaleRecord rec = martingale_path(t, provider);
  for (std::size_t k = 0; k < rec.M.size(); ++k) {
    EXPECT_EQ(rec.M[k], 0.0);
    EXPECT_EQ(rec.QV[k], 0.0);
  }
  EXPECT_TRUE(rec.R.empty());
  EXPECT_EQ(provider.provenance(), GradRProvider::Provenance::UserSupplied);
}

TEST(MartingalePath, BadProviderRaisesDomainError) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 5);
  const Trajectory t = euler_maruyama_path(ou(), grid, vec({1.0}), 1, 0);
  const auto nan_provider = GradRProvider::user_supplied([](double, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(1, std::numeric_limits<double>::quiet_NaN()).eval();
  });
  EXPECT_EQ(oracle::error_kind([&] { martingale_path(t, nan_provider); }),
            ErrorKind::ProviderDomainError);
  const auto wrong_shape = GradRProvider::user_supplied(
      [](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(2).eval(); });
  EXPECT_EQ(oracle::error_kind([&] { martingale_path(t, wrong_shape); }),
            ErrorKind::ProviderDomainError);
}

TEST(MartingalePath, AnalyticProviderOffGridMatchesTable) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 10);
  const auto provider = GradRProvider::analytic_linear(ou(), identity(), grid);
  EXPECT_EQ(provider.provenance(), GradRProvider::Provenance::AnalyticLinear);
  const double t = 0.3;
  EXPECT_NEAR(provider(t, vec({0.0}))(0), std::numbers::sqrt2 * (1.0 - std::exp(-0.7)), 1e-14);
  EXPECT_NEAR(provider(0.35, vec({0.0}))(0), std::numbers::sqrt2 * (1.0 - std::exp(-0.65)), 1e-14);
}

TEST(Decomposition, ResidualVanishesAtStart) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 100);
  const Trajectory t = euler_maruyama_path(ou(), grid, vec({1.3}), 2, 0);
  const auto provider = GradRProvider::analytic_linear(ou(), identity(), grid);
  const double est = expected_time_integral(ou(), identity(), vec({1.3}), 0.0, 1.0);
  const auto residual = decomposition_residual(t, identity(), martingale_path(t, provider), est);
  EXPECT_EQ(residual[0], 0.0);
  EXPECT_NEAR(est, 1.3 * (1.0 - std::exp(-1.0)), 1e-15);
}

TEST(Decomposition, ConstantObservableHasNoMartingale) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 100);
  const auto c = AffineObservable::constant(vec({0.0}), 2.5);
  const Trajectory t = euler_maruyama_path(ou(), grid, vec({1.0}), 3, 0);
  const auto rec = martingale_path(t, GradRProvider::analytic_linear(ou(), c, grid));
  const auto residual =
      decomposition_residual(t, c, rec, expected_time_integral(ou(), c, vec({1.0}), 0.0, 1.0));
  for (std::size_t k = 0; k < rec.M.size(); ++k) {
    EXPECT_EQ(rec.M[k], 0.0);
    EXPECT_NEAR(residual[k], 0.0, 1e-13);
  }
}

TEST(Decomposition, QuadraticVariationIsNondecreasing) {
  const LinearModel m = make_two_timescale(4, 1, 1, 1, 1);
  const TimeGrid grid = make_time_grid(0.0, 1.0, 200);
  const auto f = AffineObservable::time_dependent(
      2, [](double t) { return vec({std::cos(5.0 * t), 1.0}); }, [](double) { return 0.0; });
  const auto provider = GradRProvider::analytic_linear(m, f, grid);
  for (std::size_t p = 0; p < 5; ++p) {
    const auto rec = martingale_path(euler_maruyama_path(m, grid, vec({1, 0}), 4, p), provider);
    for (std::size_t k = 1; k < rec.QV.size(); ++k) EXPECT_GE(rec.QV[k], rec.QV[k - 1]);
  }
}

TEST(Decomposition, MaxResidualIsFirstOrder) {
  auto max_residual = [](std::size_t steps) {
    const TimeGrid grid = make_time_grid(0.0, 1.0, steps);
    const auto summaries = simulate_path_summaries(ou(), identity(), vec({1.0}), grid, 200, 9);
    double worst = 0.0;
    for (const auto& s : summaries) worst = std::max(worst, s.max_residual);
    return worst;
  };
  const double coarse = max_residual(250), fine = max_residual(500);
  EXPECT_LT(coarse, 5.0 / 250.0);
  EXPECT_GT(coarse / fine, 1.4);
  EXPECT_LT(coarse / fine, 2.8);
}

TEST(Decomposition, MartingaleIncrementsUncorrelatedWithPast) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 100);
  const auto provider = GradRProvider::analytic_linear(ou(), identity(), grid);
  const auto samples = map_paths(ou(), grid, vec({0.5}), 10000, 12, [&](const Trajectory& t) {
    const auto rec = martingale_path(t, provider);
    return std::pair(rec.M[100] - rec.M[50], std::tanh(t.states(25, 0)));
  });
  std::vector<double> inc, past;
  for (const auto& [a, b] : samples) {
    inc.push_back(a);
    past.push_back(b);
  }
  const auto cov = numerics::sample_covariance(inc, past);
  EXPECT_LT(std::abs(cov.value), 3.0 * cov.se);
}

TEST(Decomposition, IsometryAndMixingIdentity) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 500);
  const auto paths = simulate_path_summaries(ou(), identity(), vec({1.0}), grid, 10000, 31);
  std::vector<double> m, qv;
  for (const auto& p : paths) {
    m.push_back(p.M_T);
    qv.push_back(p.QV_T);
  }
  const auto mm = numerics::sample_moments(m);
  EXPECT_LT(std::abs(mm.variance - numerics::sample_moments(qv).mean), 3.0 * mm.variance_se);
  const MixingIdentity mix = mixing_identity(ou(), identity(), paths, grid);
  EXPECT_NEAR(mix.lhs, kOuQv, 1e-8 * kOuQv);
  EXPECT_NEAR(mix.rhs, kOuQv, 1e-8 * kOuQv);
  EXPECT_LT(std::abs(mix.mc_rhs - mix.rhs), 3.0 * mix.mc_se + 10.0 * grid.dt());
}

TEST(Decomposition, ShortHorizonLimits) {
  EXPECT_EQ(expected_quadratic_variation(ou(), identity(), 0.0, 0.0), 0.0);
  EXPECT_EQ(covariance_double_integral(ou(), identity(), 0.0, 0.0), 0.0);
  EXPECT_LT(expected_quadratic_variation(ou(), identity(), 0.0, 1e-3), 1e-8);
  EXPECT_LT(covariance_double_integral(ou(), identity(), 0.0, 1e-3), 1e-8);
}

TEST(Centered, EndpointsVanish) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 100);
  const LinearModel m = make_two_timescale(3, 1, 2, 1, 1);
  const auto f = AffineObservable::constant(vec({1.0, 2.0}), -1.0);
  const Trajectory t = euler_maruyama_path(m, grid, vec({1.0, -1.0}), 5, 0);
  const auto d = centered_decomposition(m, t, f);
  EXPECT_NEAR(d.Z.front(), 0.0, 1e-14);
  EXPECT_EQ(d.Z.back(), 0.0);
  EXPECT_EQ(d.M.front(), 0.0);
}

TEST(CarreDuChamp, ReferenceValues) {
  const LinearModel unit = make_linear_model(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  const auto e1 = AffineObservable::constant(vec({1.0, 0.0}));
  const auto e2 = AffineObservable::constant(vec({0.0, 1.0}));
  EXPECT_DOUBLE_EQ(carre_du_champ(unit, e1, e1, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(carre_du_champ(unit, e1, e2, 0.0), 0.0);
  for (double alpha : {1.0, 7.0}) {
    const auto diff = AffineObservable::constant(vec({1.0, -1.0}));
    EXPECT_NEAR(carre_du_champ(make_two_timescale(alpha, 1, 1, 1, 1), diff, diff, 0.0),
                0.5 * (alpha + 1.0), 1e-14);
  }
}

TEST(PathwiseSup, ConstantObservableIsTrivial) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 50);
  const auto c = AffineObservable::constant(vec({0.0}), 1.0);
  const Ensemble e = simulate_ensemble(ou(), grid, vec({1.0}), 20, 4);
  const auto check = pathwise_sup_check(ou(), e, c);
  EXPECT_EQ(check.lhs, 0.0);
  EXPECT_EQ(check.rhs, 0.0);
}

TEST(PathwiseSup, OuInequalityHolds) {
  const TimeGrid grid = make_time_grid(0.0, 1.0, 1000);
  const auto paths = simulate_path_summaries(ou(), identity(), vec({1.0}), grid, 2000, 6);
  const auto check = pathwise_sup_check(ou(), identity(), paths, grid);
  EXPECT_NEAR(check.qv_term, 2.0 * std::sqrt(kOuQv), 1e-8);
  EXPECT_NEAR(check.qv_term, 1.1596249, 1e-7);
  EXPECT_TRUE(check.holds());
}

}  // namespace
