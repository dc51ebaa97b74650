#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "avgmart/error.hpp"
#include "avgmart/linear_analytics.hpp"
#include "avgmart/model.hpp"
#include "avgmart/numerics.hpp"
#include "avgmart/simulate.hpp"

namespace avgmart {

/// Exponential gradient decay |Sigma^T grad P_{s,t} f| <= C_t e^{-lambda_t (t - s)}.
struct GradientBound {
  std::function<double(double)> C;
  std::function<double(double)> lambda;
  std::string validity;
};

inline GradientBound constant_gradient_bound(double C, double lambda, std::string validity = {}) {
  detail::require(C > 0.0 && lambda > 0.0, ErrorKind::NonpositiveParameter,
                  "gradient bound constants must be > 0");
  return {[C](double) { return C; }, [lambda](double) { return lambda; }, std::move(validity)};
}

/// Gradient bound for a linear model and an observable with Lipschitz
/// constant lip: lambda is the smallest eigenvalue of (A + A^T) / 2 and
/// C = ||Sigma||_2 * lip.
inline GradientBound ou_gradient_bound(const LinearModel& model, double lip) {
  detail::require(lip > 0.0, ErrorKind::NonpositiveParameter, "Lipschitz constant must be > 0");
  const Eigen::MatrixXd sym = 0.5 * (model.A + model.A.transpose());
  const double lambda = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff();
  detail::require(lambda > 0.0, ErrorKind::NonDissipative,
                  "symmetric part of the drift matrix must be positive definite");
  const double sigma_norm =
      Eigen::JacobiSVD<Eigen::MatrixXd>(model.Sigma).singularValues()(0);
  detail::require(sigma_norm > 0.0, ErrorKind::NonpositiveParameter,
                  "diffusion matrix must be nonzero");
  return constant_gradient_bound(sigma_norm * lip, lambda, "affine observables of a linear model");
}

/// V_T = (1/T) int_0^T (C_t (1 - e^{-lambda_t (T - t)}) / lambda_t)^2 dt.
inline double variance_proxy(const GradientBound& bound, double T) {
  detail::require(std::isfinite(T) && T > 0.0, ErrorKind::NonpositiveHorizon, "T must be > 0");
  auto integrand = [&](double t) {
    const double c = bound.C(t);
    const double lam = bound.lambda(t);
    detail::require(c > 0.0 && lam > 0.0, ErrorKind::NonpositiveParameter,
                    "gradient bound constants must be > 0 on [0, T]");
    const double v = c * numerics::one_minus_exp_over(lam, T - t);
    return v * v;
  };
  return numerics::adaptive_simpson(integrand, 0.0, T, 1e-10) / T;
}

namespace detail {

inline void require_tail_inputs(double R, double T, double V_T) {
  require(std::isfinite(V_T) && V_T > 0.0, ErrorKind::NonpositiveVariance, "V_T must be > 0");
  require(std::isfinite(T) && T > 0.0, ErrorKind::NonpositiveHorizon, "T must be > 0");
  require(R >= 0.0, ErrorKind::InvalidArgument, "R must be >= 0");
}

}  // namespace detail

inline double log_gaussian_tail(double R, double T, double V_T) {
  detail::require_tail_inputs(R, T, V_T);
  return -R * R * T / V_T;
}

/// exp(-R^2 T / V_T), kept inside (0, 1].
inline double gaussian_tail(double R, double T, double V_T) {
  return std::max(std::exp(log_gaussian_tail(R, T, V_T)), std::numeric_limits<double>::min());
}

/// exp(-R^2 T / (2 V_T)): the tail obtained when the exponential-moment
/// bound E exp(s M_T) <= exp(s^2 T V_T / 2) is optimised over s.
inline double chernoff_gaussian_tail(double R, double T, double V_T) {
  detail::require_tail_inputs(R, T, V_T);
  return std::max(std::exp(-R * R * T / (2.0 * V_T)), std::numeric_limits<double>::min());
}

/// exp(-(lambda sqrt(T) R / (C lip (1 - e^{-lambda T})) - W1_0 / sqrt(T))^2),
/// or 1 when the bracket is negative.
inline double w1_deviation_bound(double C, double lambda, double lip, double T, double R,
                                 double W1_0) {
  detail::require(C > 0.0 && lambda > 0.0 && lip > 0.0 && T > 0.0, ErrorKind::NonpositiveParameter,
                  "C, lambda, Lip(f) and T must be > 0");
  detail::require(R >= 0.0 && W1_0 >= 0.0, ErrorKind::NonpositiveParameter,
                  "R and W1_0 must be >= 0");
  const double root_T = std::sqrt(T);
  const double inner = lambda * root_T * R / (C * lip * -std::expm1(-lambda * T)) - W1_0 / root_T;
  if (inner < 0.0) return 1.0;
  return std::exp(-inner * inner);
}

/// W1(delta_{x0}, N(mean, var)) = E|G - x0|, the folded-normal mean.
inline double w1_point_to_gaussian(double x0, double mean, double var) {
  detail::require(var >= 0.0, ErrorKind::NegativeVariance, "variance must be >= 0");
  const double d = std::abs(x0 - mean);
  if (var == 0.0) return d;
  const double s = std::sqrt(var);
  const double z = d / s;
  return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * z * z) +
         d * std::erf(z / std::numbers::sqrt2);
}

/// W1 distance from delta_{x0} to the stationary law N(0, sigma^2 / (2 kappa))
/// of a one-dimensional OU model.
inline double ou_stationary_w1(const LinearModel& model, double x0) {
  detail::require(model.dim() == 1, ErrorKind::ShapeMismatch, "needs a one-dimensional model");
  const double kappa = model.A(0, 0);
  detail::require(kappa > 0.0, ErrorKind::NonDissipative, "kappa must be > 0");
  const double q = model.Sigma.row(0).squaredNorm();
  return w1_point_to_gaussian(x0, 0.0, q / (2.0 * kappa));
}

struct TailPoint {
  double R = 0.0;
  double bound = 0.0;
  double empirical = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool violation = false;  // the whole confidence interval lies above the bound
};

struct ConcentrationReport {
  double T = 0.0;
  double V_T = 0.0;
  std::size_t n_paths = 0;
  std::vector<TailPoint> points;

  bool all_pass() const {
    return std::none_of(points.begin(), points.end(), [](const TailPoint& p) { return p.violation; });
  }
};

/// Compares the upper tail frequencies of `averages` with bound(R) on each R,
/// using Wilson intervals at normal quantile z (95% by default).
inline ConcentrationReport empirical_tail(const std::vector<double>& averages,
                                          const std::vector<double>& R_grid,
                                          const std::function<double(double)>& bound,
                                          double z = 1.959963984540054) {
  detail::require(!averages.empty(), ErrorKind::EmptyEnsemble, "no samples");
  ConcentrationReport report;
  report.n_paths = averages.size();
  report.points.reserve(R_grid.size());
  for (double R : R_grid) {
    const auto exceed = static_cast<std::size_t>(
        std::count_if(averages.begin(), averages.end(), [R](double a) { return a > R; }));
    const auto ci = numerics::wilson_interval(exceed, averages.size(), z);
    TailPoint p;
    p.R = R;
    p.bound = bound(R);
    p.empirical = ci.estimate;
    p.ci_low = ci.low;
    p.ci_high = ci.high;
    p.violation = ci.low > p.bound;
    report.points.push_back(p);
  }
  return report;
}

inline ConcentrationReport empirical_tail(const std::vector<double>& averages,
                                          const std::vector<double>& R_grid, double T,
                                          double V_T, double z = 1.959963984540054) {
  auto report = empirical_tail(
      averages, R_grid, [T, V_T](double R) { return gaussian_tail(R, T, V_T); }, z);
  report.T = T;
  report.V_T = V_T;
  return report;
}

/// Centring data for (1/T) int (f(t, X_t) - E f(t, X_t)) dt on a grid:
/// per-node weights and exact means of f along the mean path from x0.
class CenteredAverager {
 public:
  CenteredAverager(const LinearModel& model, const AffineObservable& f, const Eigen::VectorXd& x0,
                   const TimeGrid& grid)
      : grid_(grid) {
    detail::require(f.dim() == model.dim(), ErrorKind::ShapeMismatch,
                    "observable dimension must match the model");
    const LinearPropagator prop(model);
    weights_.resize(grid.n_steps());
    offsets_.resize(grid.n_steps());
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
      const double t = grid.node(k);
      weights_[k] = f.weight(t);
      // f(t, X_t) - E f(t, X_t) = w . (X_t - mean_t); the offset cancels.
      offsets_[k] = -weights_[k].dot(prop.expm(t - grid.t0()) * x0);
    }
  }

  double operator()(const Trajectory& traj) const {
    numerics::CompensatedSum sum;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const auto row = traj.states.row(static_cast<Eigen::Index>(k));
      sum += weights_[k].dot(row.transpose()) + offsets_[k];
    }
    return sum.value() * grid_.dt() / (grid_.T() - grid_.t0());
  }

 private:
  TimeGrid grid_;
  std::vector<Eigen::VectorXd> weights_;
  std::vector<double> offsets_;
};

/// Left-point centred time averages of f over every path of an ensemble.
inline std::vector<double> centered_time_averages(const LinearModel& model,
                                                  const Ensemble& ensemble,
                                                  const AffineObservable& f) {
  detail::require(ensemble.size() > 0, ErrorKind::EmptyEnsemble, "ensemble is empty");
  const Eigen::VectorXd x0 = ensemble.trajectories.front().states.row(0).transpose();
  const CenteredAverager averager(model, f, x0, ensemble.grid());
  std::vector<double> out;
  out.reserve(ensemble.size());
  for (const auto& traj : ensemble.trajectories) out.push_back(averager(traj));
  return out;
}

/// Same quantity, simulated path by path without keeping the ensemble.
inline std::vector<double> simulate_centered_time_averages(
    const LinearModel& model, const AffineObservable& f, const Eigen::VectorXd& x0,
    const TimeGrid& grid, std::size_t n_paths, std::uint64_t master_seed,
    ParallelOptions options = {}) {
  const CenteredAverager averager(model, f, x0, grid);
  return map_paths(model, grid, x0, n_paths, master_seed, averager, options);
}

inline ConcentrationReport empirical_tail(const LinearModel& model, const Ensemble& ensemble,
                                          const AffineObservable& f,
                                          const std::vector<double>& R_grid, double V_T) {
  const TimeGrid& grid = ensemble.grid();
  return empirical_tail(centered_time_averages(model, ensemble, f), R_grid, grid.T() - grid.t0(),
                        V_T);
}

/// n evenly spaced points on (0, R_max].
inline std::vector<double> tail_grid(double R_max, std::size_t n) {
  detail::require(R_max > 0.0 && n >= 1, ErrorKind::InvalidArgument,
                  "need R_max > 0 and at least one point");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = R_max * static_cast<double>(i + 1) / static_cast<double>(n);
  }
  return out;
}

}  // namespace avgmart
