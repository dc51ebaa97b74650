#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "avgmart/error.hpp"
#include "avgmart/linear_analytics.hpp"
#include "avgmart/model.hpp"
#include "avgmart/numerics.hpp"
#include "avgmart/simulate.hpp"

namespace avgmart {

/// Series of M_t^{T,f}, <M>_t, R_t^T f(X_t) and int_0^t f ds along one path.
/// S is a left-point Riemann sum; R and S are empty when the provider has
/// no observable attached.
struct MartingaleRecord {
  TimeGrid grid;
  std::vector<double> M;
  std::vector<double> QV;
  std::vector<double> R;
  std::vector<double> S;
};

/// Source of the martingale integrand sigma(s, x)^T grad R_s^T f(x).
///
/// analytic_linear() tabulates the exact integrand of a linear model on a
/// grid and also carries f and R so the full decomposition can be filled in.
/// user_supplied() wraps any callable; the library does not estimate
/// semigroup gradients for nonlinear models.
class GradRProvider {
 public:
  enum class Provenance { AnalyticLinear, UserSupplied };
  using GradFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
  using ScalarFn = std::function<double(double, const Eigen::VectorXd&)>;

  static GradRProvider analytic_linear(const LinearModel& model, const AffineObservable& f,
                                       const TimeGrid& grid) {
    GradRProvider p;
    p.provenance_ = Provenance::AnalyticLinear;
    auto schedule = std::make_shared<const RSchedule>(r_schedule(model, f, grid));
    auto prop = std::make_shared<const LinearPropagator>(model);
    const double T = grid.node(grid.n_steps());
    p.schedule_ = schedule;
    p.grad_ = [schedule, prop, f, T, sigma = model.Sigma](double t, const Eigen::VectorXd&) {
      if (auto k = node_index(schedule->grid, t)) return Eigen::VectorXd(schedule->sigma_grad[*k]);
      return Eigen::VectorXd(sigma.transpose() * r_operator_affine(*prop, f, t, T).constant_weight());
    };
    p.observable_ = [f](double t, const Eigen::VectorXd& x) { return f(t, x); };
    p.remainder_ = [schedule, prop, f, T](double t, const Eigen::VectorXd& x) {
      if (auto k = node_index(schedule->grid, t)) return schedule->value(*k, x.data());
      return r_operator_affine(*prop, f, t, T)(t, x);
    };
    return p;
  }

  static GradRProvider user_supplied(GradFn sigma_grad, ScalarFn observable = {},
                                     ScalarFn remainder = {}) {
    GradRProvider p;
    p.provenance_ = Provenance::UserSupplied;
    p.grad_ = std::move(sigma_grad);
    p.observable_ = std::move(observable);
    p.remainder_ = std::move(remainder);
    return p;
  }

  Provenance provenance() const noexcept { return provenance_; }
  Eigen::VectorXd operator()(double t, const Eigen::VectorXd& x) const { return grad_(t, x); }
  bool has_observable() const noexcept { return static_cast<bool>(observable_); }
  bool has_remainder() const noexcept { return static_cast<bool>(remainder_); }
  double observable(double t, const Eigen::VectorXd& x) const { return observable_(t, x); }
  double remainder(double t, const Eigen::VectorXd& x) const { return remainder_(t, x); }

  /// Tabulated schedule when the provider is analytic and built on `grid`.
  const RSchedule* schedule_for(const TimeGrid& grid) const {
    return schedule_ && schedule_->grid == grid ? schedule_.get() : nullptr;
  }

 private:
  static std::optional<std::size_t> node_index(const TimeGrid& grid, double t) {
    const double pos = (t - grid.t0()) / grid.dt();
    const double k = std::round(pos);
    if (k < 0 || k > static_cast<double>(grid.n_steps()) || std::abs(pos - k) > 1e-9) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(k);
  }

  Provenance provenance_ = Provenance::UserSupplied;
  GradFn grad_;
  ScalarFn observable_;
  ScalarFn remainder_;
  std::shared_ptr<const RSchedule> schedule_;
};

/// Itô (left-point) construction of M, <M>, and when available S and R.
inline MartingaleRecord martingale_path(const Trajectory& traj, const GradRProvider& provider) {
  const TimeGrid& grid = traj.grid;
  const std::size_t n = grid.n_nodes();
  const double dt = grid.dt();
  MartingaleRecord rec{grid, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), {}, {}};
  const RSchedule* table = provider.schedule_for(grid);
  const bool fill = provider.has_observable() && provider.has_remainder();
  if (fill) {
    rec.R.assign(n, 0.0);
    rec.S.assign(n, 0.0);
  }

  Eigen::VectorXd x(traj.states.cols());
  Eigen::VectorXd g;
  for (std::size_t k = 0; k < n; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    x = traj.states.row(row).transpose();
    const double t = grid.node(k);
    if (fill) rec.R[k] = table ? table->value(k, x.data()) : provider.remainder(t, x);
    if (k + 1 == n) break;

    g = table ? table->sigma_grad[k] : provider(t, x);
    if (g.size() != traj.noise_increments.cols() || !g.allFinite()) {
      throw Error(ErrorKind::ProviderDomainError,
                  "provider returned a non-finite or mis-shaped integrand at t = " +
                      std::to_string(t));
    }
    double dm = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) dm += g(j) * traj.noise_increments(row, j);
    rec.M[k + 1] = rec.M[k] + dm;
    rec.QV[k + 1] = rec.QV[k] + g.squaredNorm() * dt;
    if (fill) rec.S[k + 1] = rec.S[k] + provider.observable(t, x) * dt;
  }
  return rec;
}

/// E int_0^T f(s, X_s) ds = R_0^T f(x0) for a linear model.
inline double expected_time_integral(const LinearModel& model, const AffineObservable& f,
                                     const Eigen::VectorXd& x0, double t0, double T) {
  return r_operator_affine(model, f, t0, T)(t0, x0);
}

/// residual[k] = S_k + R_k - E S_T - M_k, with S recomputed from f.
inline std::vector<double> decomposition_residual(const Trajectory& traj,
                                                  const AffineObservable& f,
                                                  const MartingaleRecord& record,
                                                  double expected_integral) {
  const std::size_t n = traj.grid.n_nodes();
  detail::require(record.M.size() == n && record.R.size() == n, ErrorKind::ShapeMismatch,
                  "record does not match the trajectory grid or lacks R");
  std::vector<double> residual(n);
  double S = 0.0;
  Eigen::VectorXd x(traj.states.cols());
  for (std::size_t k = 0; k < n; ++k) {
    residual[k] = S + record.R[k] - expected_integral - record.M[k];
    x = traj.states.row(static_cast<Eigen::Index>(k)).transpose();
    S += f(traj.grid.node(k), x) * traj.grid.dt();
  }
  return residual;
}

/// f0(t, x) = f(t, x) - P_{0,t} f(x0); same gradient as f, mean zero along the path.
inline AffineObservable centered_observable(const LinearModel& model, const AffineObservable& f,
                                            const Eigen::VectorXd& x0, double t0 = 0.0) {
  detail::require(f.has_constant_weight(), ErrorKind::InvalidArgument,
                  "centering is implemented for constant weights");
  auto prop = std::make_shared<const LinearPropagator>(model);
  const Eigen::VectorXd w = f.constant_weight();
  return AffineObservable::with_offset(
      w, [prop, w, x0, t0](double s) { return -w.dot(prop->expm(s - t0) * x0); });
}

/// Tabulated pieces of the centred decomposition int_0^t f0 ds = M_t - Z_t.
struct CenteredSchedules {
  GradRProvider martingale;
  RSchedule centered_remainder;  // Z_k = R_{t_k}^T f0 (X_k)
};

inline CenteredSchedules centered_schedules(const LinearModel& model, const AffineObservable& f,
                                            const Eigen::VectorXd& x0, const TimeGrid& grid) {
  return {GradRProvider::analytic_linear(model, f, grid),
          r_schedule(model, centered_observable(model, f, x0, grid.t0()), grid)};
}

struct CenteredDecomposition {
  std::vector<double> M;
  std::vector<double> Z;
};

inline CenteredDecomposition centered_decomposition(const Trajectory& traj,
                                                    const CenteredSchedules& schedules) {
  const MartingaleRecord rec = martingale_path(traj, schedules.martingale);
  std::vector<double> Z(traj.grid.n_nodes());
  for (std::size_t k = 0; k < Z.size(); ++k) {
    Z[k] = schedules.centered_remainder.value(k, traj.states.row(static_cast<Eigen::Index>(k)).data());
  }
  return {rec.M, std::move(Z)};
}

inline CenteredDecomposition centered_decomposition(const LinearModel& model,
                                                    const Trajectory& traj,
                                                    const AffineObservable& f) {
  const Eigen::VectorXd x0 = traj.states.row(0).transpose();
  return centered_decomposition(traj, centered_schedules(model, f, x0, traj.grid));
}

/// Gamma_t(f, g) = 1/2 grad f . Sigma Sigma^T grad g for affine f, g.
inline double carre_du_champ(const LinearModel& model, const AffineObservable& f,
                             const AffineObservable& g, double t) {
  detail::require_observable_dim(model, f);
  detail::require_observable_dim(model, g);
  const Eigen::VectorXd wf = f.weight(t), wg = g.weight(t);
  return 0.5 * (model.Sigma.transpose() * wf).dot(model.Sigma.transpose() * wg);
}

/// E<M^{T,f}>_T = int_0^T |Sigma^T grad R_t^T f|^2 dt by Gauss-Legendre quadrature.
inline double expected_quadratic_variation(const LinearModel& model, const AffineObservable& f,
                                           double t0, double T, int panels = 64) {
  detail::require_observable_dim(model, f);
  if (T <= t0) return 0.0;
  const LinearPropagator prop(model);
  return numerics::gauss_legendre(
      [&](double t) {
        const Eigen::VectorXd g =
            model.Sigma.transpose() * r_operator_affine(prop, f, t, T).constant_weight();
        return g.squaredNorm();
      },
      t0, T, panels);
}

/// 2 iint_{t <= s} Cov(f(t, X_t), f(s, X_s)) ds dt from the analytic
/// covariance Cov(X_s, X_t) = e^{-A(s-t)} Var(X_t), deterministic X_0.
inline double covariance_double_integral(const LinearModel& model, const AffineObservable& f,
                                         double t0, double T, int panels = 32) {
  detail::require_observable_dim(model, f);
  if (T <= t0) return 0.0;
  const LinearPropagator prop(model);
  return 2.0 * numerics::gauss_legendre(
                   [&](double t) {
                     const Eigen::VectorXd left = prop.covariance(t - t0) * f.weight(t);
                     return numerics::gauss_legendre(
                         [&](double s) {
                           return left.dot(prop.expm(s - t).transpose() * f.weight(s));
                         },
                         t, T, panels);
                   },
                   t0, T, panels);
}

/// Per-path quantities used by the Monte Carlo checks of the decomposition.
struct PathSummary {
  double M_T = 0.0;
  double QV_T = 0.0;
  double S_T = 0.0;            // left-point int_0^T f ds
  double max_residual = 0.0;   // max_k |S_k + R_k - E S_T - M_k|
  double sup_M_minus_Z = 0.0;  // max_k |M_k - Z_k|
  double sup_Z = 0.0;          // max_k |Z_k|
};

inline PathSummary summarize_path(const Trajectory& traj, const AffineObservable& f,
                                  const CenteredSchedules& schedules, double expected_integral) {
  const MartingaleRecord rec = martingale_path(traj, schedules.martingale);
  const std::vector<double> residual = decomposition_residual(traj, f, rec, expected_integral);
  PathSummary out;
  const std::size_t last = rec.M.size() - 1;
  out.M_T = rec.M[last];
  out.QV_T = rec.QV[last];
  out.S_T = rec.S[last];
  for (std::size_t k = 0; k <= last; ++k) {
    const double Z =
        schedules.centered_remainder.value(k, traj.states.row(static_cast<Eigen::Index>(k)).data());
    out.max_residual = std::max(out.max_residual, std::abs(residual[k]));
    out.sup_M_minus_Z = std::max(out.sup_M_minus_Z, std::abs(rec.M[k] - Z));
    out.sup_Z = std::max(out.sup_Z, std::abs(Z));
  }
  return out;
}

/// Streams an ensemble of the linear model and summarizes each path.
inline std::vector<PathSummary> simulate_path_summaries(const LinearModel& model,
                                                        const AffineObservable& f,
                                                        const Eigen::VectorXd& x0,
                                                        const TimeGrid& grid, std::size_t n_paths,
                                                        std::uint64_t master_seed,
                                                        ParallelOptions options = {}) {
  const CenteredSchedules schedules = centered_schedules(model, f, x0, grid);
  const double est = expected_time_integral(model, f, x0, grid.t0(), grid.node(grid.n_steps()));
  return map_paths(
      model, grid, x0, n_paths, master_seed,
      [&](const Trajectory& traj) { return summarize_path(traj, f, schedules, est); }, options);
}

struct MixingIdentity {
  double lhs = 0.0;     // E<M>_T by quadrature of the martingale integrand
  double rhs = 0.0;     // 2 iint Cov by quadrature of the analytic covariance
  double mc_rhs = 0.0;  // sample variance of S_T (= discrete double sum of sample covariances)
  double mc_se = 0.0;
};

inline MixingIdentity mixing_identity(const LinearModel& model, const AffineObservable& f,
                                      const std::vector<PathSummary>& paths, const TimeGrid& grid) {
  MixingIdentity out;
  const double T = grid.node(grid.n_steps());
  out.lhs = expected_quadratic_variation(model, f, grid.t0(), T);
  out.rhs = covariance_double_integral(model, f, grid.t0(), T);
  std::vector<double> s(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) s[i] = paths[i].S_T;
  const auto m = numerics::sample_moments(s);
  out.mc_rhs = m.variance;
  out.mc_se = m.variance_se;
  return out;
}

inline MixingIdentity mixing_identity(const LinearModel& model, const AffineObservable& f,
                                      const Eigen::VectorXd& x0, const TimeGrid& grid,
                                      std::size_t n_paths, std::uint64_t seed,
                                      ParallelOptions options = {}) {
  return mixing_identity(model, f,
                         simulate_path_summaries(model, f, x0, grid, n_paths, seed, options), grid);
}

/// E sup_t |M_t - Z_t| against 2 sqrt(E<M>_T) + E sup_t |Z_t| (grid sups).
struct PathwiseSupCheck {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double rhs_se = 0.0;
  double qv_term = 0.0;  // 2 sqrt(E<M>_T)

  /// Upper 3-SE bound of lhs below the lower 3-SE bound of rhs.
  bool holds() const { return lhs + 3.0 * lhs_se < rhs - 3.0 * rhs_se; }
};

inline PathwiseSupCheck pathwise_sup_check(const LinearModel& model, const AffineObservable& f,
                                           const std::vector<PathSummary>& paths,
                                           const TimeGrid& grid) {
  detail::require(!paths.empty(), ErrorKind::EmptyEnsemble, "no paths");
  std::vector<double> lhs(paths.size()), sup_z(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    lhs[i] = paths[i].sup_M_minus_Z;
    sup_z[i] = paths[i].sup_Z;
  }
  const auto ml = numerics::sample_moments(lhs);
  const auto mz = numerics::sample_moments(sup_z);
  PathwiseSupCheck out;
  out.qv_term =
      2.0 * std::sqrt(expected_quadratic_variation(model, f, grid.t0(), grid.node(grid.n_steps())));
  out.lhs = ml.mean;
  out.lhs_se = ml.mean_se;
  out.rhs = out.qv_term + mz.mean;
  out.rhs_se = mz.mean_se;
  return out;
}

inline PathwiseSupCheck pathwise_sup_check(const LinearModel& model, const Ensemble& ensemble,
                                           const AffineObservable& f) {
  const TimeGrid& grid = ensemble.grid();
  const Eigen::VectorXd x0 = ensemble.trajectories.front().states.row(0).transpose();
  const CenteredSchedules schedules = centered_schedules(model, f, x0, grid);
  const double est = expected_time_integral(model, f, x0, grid.t0(), grid.node(grid.n_steps()));
  std::vector<PathSummary> paths;
  paths.reserve(ensemble.size());
  for (const auto& traj : ensemble.trajectories) {
    paths.push_back(summarize_path(traj, f, schedules, est));
  }
  return pathwise_sup_check(model, f, paths, grid);
}

}  // namespace avgmart
