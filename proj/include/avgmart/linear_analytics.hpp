#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "avgmart/error.hpp"
#include "avgmart/model.hpp"
#include "avgmart/numerics.hpp"

namespace avgmart {

// ---------------------------------------------------------------------------
// Two-timescale drift A = [[alpha, -alpha], [-1, 1 + beta]]
// ---------------------------------------------------------------------------

/// Eigenvalues (lambda0, alpha * lambda1) of the two-timescale drift matrix.
struct Spectrum2TS {
  double lambda0 = 0.0;
  double alpha_lambda1 = 0.0;
  double discriminant = 0.0;
};

inline Spectrum2TS eigenvalues_two_timescale(double alpha, double beta) {
  detail::require(std::isfinite(alpha) && alpha > 0.0, ErrorKind::NonpositiveParameter,
                  "alpha must be > 0");
  detail::require(std::isfinite(beta) && beta >= 0.0, ErrorKind::NonpositiveParameter,
                  "beta must be >= 0");
  const double s = alpha + beta + 1.0;
  // (alpha - (1 + beta))^2 + 4 alpha: same value as s^2 - 4 alpha beta without
  // the cancellation.
  const double disc = (alpha - (1.0 + beta)) * (alpha - (1.0 + beta)) + 4.0 * alpha;
  const double root = std::sqrt(disc);
  Spectrum2TS spectrum;
  spectrum.discriminant = disc;
  spectrum.alpha_lambda1 = 0.5 * (s + root);
  // Small root from the product of roots (= det A = alpha beta).
  spectrum.lambda0 = alpha * beta / spectrum.alpha_lambda1;
  return spectrum;
}

/// Coefficients of e^{-At} = c0 I - (c1 / alpha) A, with c2 = alpha (c0 - c1).
struct ExpmCoeffs {
  double c0 = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

struct ExpmNegAt {
  Eigen::Matrix2d matrix;
  ExpmCoeffs coeffs;
};

inline ExpmNegAt expm_neg_At(double alpha, double beta, double t) {
  detail::require(std::isfinite(t) && t >= 0.0, ErrorKind::TimeOrder, "t must be >= 0");
  const Spectrum2TS spectrum = eigenvalues_two_timescale(alpha, beta);
  const double gap = spectrum.alpha_lambda1 - spectrum.lambda0;
  // (1 - e^{-gap t}) / gap, equal to t in the confluent limit.
  const double phi = numerics::one_minus_exp_over(gap, t);
  const double e0 = std::exp(-spectrum.lambda0 * t);

  ExpmCoeffs c;
  c.c0 = e0 * (1.0 + spectrum.lambda0 * phi);
  c.c1 = alpha * e0 * phi;
  c.c2 = alpha * (c.c0 - c.c1);

  Eigen::Matrix2d A;
  A << alpha, -alpha, -1.0, 1.0 + beta;
  ExpmNegAt out;
  out.matrix = c.c0 * Eigen::Matrix2d::Identity() - (c.c1 / alpha) * A;
  out.coeffs = c;
  return out;
}

// ---------------------------------------------------------------------------
// General linear models
// ---------------------------------------------------------------------------

/// Closed-form propagators of dX = -A X dt + Sigma dB:
///   expm(u)       = e^{-Au}
///   integral(u)   = int_0^u e^{-Av} dv
///   covariance(u) = int_0^u e^{-Av} Q e^{-A^T v} dv,  Q = Sigma Sigma^T
/// Evaluated through the eigendecomposition A = V diag(lambda) V^{-1}; when V
/// is ill-conditioned (cond > 1e8) everything goes through Pade
/// scaling-and-squaring of augmented block matrices instead.
class LinearPropagator {
 public:
  static constexpr double kConditionLimit = 1e8;

  explicit LinearPropagator(const LinearModel& model)
      : A_(model.A), Q_(model.Sigma * model.Sigma.transpose()) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(A_);
    if (solver.info() == Eigen::Success) {
      lambda_ = solver.eigenvalues();
      V_ = solver.eigenvectors();
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V_);
      const auto& sv = svd.singularValues();
      const double smallest = sv(sv.size() - 1);
      condition_ = smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
    } else {
      condition_ = std::numeric_limits<double>::infinity();
    }
    spectral_ = condition_ <= kConditionLimit;
    if (spectral_) {
      Vinv_ = V_.inverse();
      Qtilde_ = Vinv_ * Q_.cast<std::complex<double>>() * Vinv_.transpose();
    } else {
      lambda_ = A_.eigenvalues();
    }
  }

  Eigen::Index dim() const noexcept { return A_.rows(); }
  const Eigen::VectorXcd& eigenvalues() const noexcept { return lambda_; }
  double eigenvector_condition() const noexcept { return condition_; }
  bool uses_spectral_route() const noexcept { return spectral_; }

  double min_real_eigenvalue() const { return lambda_.real().minCoeff(); }

  Eigen::MatrixXd expm(double u) const {
    if (!spectral_) return (-A_ * u).exp();
    Eigen::VectorXcd d(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) d(i) = std::exp(-lambda_(i) * u);
    return (V_ * d.asDiagonal() * Vinv_).real();
  }

  Eigen::MatrixXd integral(double u) const {
    if (!spectral_) {
      const Eigen::Index n = dim();
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
      M.topLeftCorner(n, n) = -A_ * u;
      M.topRightCorner(n, n) = Eigen::MatrixXd::Identity(n, n) * u;
      return M.exp().topRightCorner(n, n);
    }
    Eigen::VectorXcd d(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) d(i) = numerics::one_minus_exp_over(lambda_(i), u);
    return (V_ * d.asDiagonal() * Vinv_).real();
  }

  Eigen::MatrixXd covariance(double u) const {
    const Eigen::Index n = dim();
    if (!spectral_) {
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * n, 2 * n);
      M.topLeftCorner(n, n) = -A_ * u;
      M.topRightCorner(n, n) = Q_ * u;
      M.bottomRightCorner(n, n) = A_.transpose() * u;
      const Eigen::MatrixXd E = M.exp();
      return E.topRightCorner(n, n) * E.topLeftCorner(n, n).transpose();
    }
    Eigen::MatrixXcd inner(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        inner(i, j) = Qtilde_(i, j) * numerics::one_minus_exp_over(lambda_(i) + lambda_(j), u);
      }
    }
    Eigen::MatrixXd out = (V_ * inner * V_.transpose()).real();
    return 0.5 * (out + out.transpose());
  }

 private:
  Eigen::MatrixXd A_;
  Eigen::MatrixXd Q_;
  Eigen::VectorXcd lambda_;
  Eigen::MatrixXcd V_;
  Eigen::MatrixXcd Vinv_;
  Eigen::MatrixXcd Qtilde_;
  double condition_ = 0.0;
  bool spectral_ = false;
};

/// E[X_t | X_0 = x0] for the centred linear model.
inline Eigen::VectorXd linear_mean(const LinearModel& model, const Eigen::VectorXd& x0, double t) {
  return LinearPropagator(model).expm(t) * x0;
}

/// Var(X_t) for a deterministic initial state.
inline Eigen::MatrixXd linear_covariance(const LinearModel& model, double t) {
  return LinearPropagator(model).covariance(t);
}

namespace detail {

inline void require_observable_dim(const LinearModel& model, const AffineObservable& f) {
  require(f.dim() == model.dim(), ErrorKind::ShapeMismatch,
          "observable dimension does not match the model");
}

inline void require_time_order(double s, double t) {
  require(std::isfinite(s) && std::isfinite(t) && t >= s, ErrorKind::TimeOrder,
          "need t >= s");
}

inline constexpr int kOffsetPanels = 64;

}  // namespace detail

/// P_{s,t} f for affine f: x -> w(t) . e^{-A(t-s)} x + c(t).
inline AffineObservable evolution_affine(const LinearPropagator& prop, const AffineObservable& f,
                                         double s, double t) {
  detail::require_time_order(s, t);
  if (s == t) return f;
  const Eigen::VectorXd w = prop.expm(t - s).transpose() * f.weight(t);
  return AffineObservable::constant(w, f.offset(t));
}

inline AffineObservable evolution_affine(const LinearModel& model, const AffineObservable& f,
                                         double s, double t) {
  detail::require_observable_dim(model, f);
  return evolution_affine(LinearPropagator(model), f, s, t);
}

/// Sigma^T grad P_{s,t} f, which does not depend on the state.
inline Eigen::VectorXd gradient_evolution(const LinearModel& model, const LinearPropagator& prop,
                                          const AffineObservable& f, double s, double t) {
  detail::require_time_order(s, t);
  return model.Sigma.transpose() * (prop.expm(t - s).transpose() * f.weight(t));
}

inline Eigen::VectorXd gradient_evolution(const LinearModel& model, const AffineObservable& f,
                                          double s, double t) {
  detail::require_observable_dim(model, f);
  return gradient_evolution(model, LinearPropagator(model), f, s, t);
}

/// R_t^T f = int_t^T P_{t,s} f ds for affine f, returned as an affine
/// observable in x.
inline AffineObservable r_operator_affine(const LinearPropagator& prop, const AffineObservable& f,
                                          double t, double T) {
  detail::require_time_order(t, T);
  const double span = T - t;
  Eigen::VectorXd weight;
  if (f.has_constant_weight()) {
    weight = prop.integral(span).transpose() * f.constant_weight();
  } else {
    weight = numerics::gauss_legendre(
        [&](double s) -> Eigen::VectorXd {
          return prop.expm(s - t).transpose() * f.weight(s);
        },
        t, T, detail::kOffsetPanels);
  }
  double offset = 0.0;
  if (span > 0.0) {
    offset = f.has_constant_offset()
                 ? f.offset(t) * span
                 : numerics::gauss_legendre([&](double s) { return f.offset(s); }, t, T,
                                            detail::kOffsetPanels);
  }
  return AffineObservable::constant(std::move(weight), offset);
}

inline AffineObservable r_operator_affine(const LinearModel& model, const AffineObservable& f,
                                          double t, double T) {
  detail::require_observable_dim(model, f);
  return r_operator_affine(LinearPropagator(model), f, t, T);
}

/// R_{t_k}^T f tabulated on every node of a grid (T = grid end), with the
/// state-independent martingale integrand Sigma^T grad R_{t_k}^T f.
struct RSchedule {
  TimeGrid grid;
  std::vector<Eigen::VectorXd> weights;
  std::vector<double> offsets;
  std::vector<Eigen::VectorXd> sigma_grad;

  double value(std::size_t k, const double* x) const {
    const auto& w = weights[k];
    double v = offsets[k];
    for (Eigen::Index i = 0; i < w.size(); ++i) v += w(i) * x[i];
    return v;
  }
};

/// Backward recursion R_{t_k} = int_{t_k}^{t_{k+1}} P_{t_k,s} f ds + P_{t_k,t_{k+1}} R_{t_{k+1}},
/// with each panel integrated by 8-point Gauss-Legendre; the constant-weight
/// case uses the closed form directly.
inline RSchedule r_schedule(const LinearModel& model, const AffineObservable& f,
                            const TimeGrid& grid) {
  detail::require_observable_dim(model, f);
  const LinearPropagator prop(model);
  const std::size_t n = grid.n_nodes();
  RSchedule out{grid, std::vector<Eigen::VectorXd>(n), std::vector<double>(n),
                std::vector<Eigen::VectorXd>(n)};
  const double T = grid.node(grid.n_steps());
  const Eigen::MatrixXd step = prop.expm(grid.dt());
  out.weights[n - 1] = Eigen::VectorXd::Zero(model.dim());
  out.offsets[n - 1] = 0.0;
  numerics::CompensatedSum offset_acc;
  for (std::size_t k = n - 1; k-- > 0;) {
    const double a = grid.node(k), b = grid.node(k + 1);
    if (f.has_constant_weight()) {
      out.weights[k] = prop.integral(T - a).transpose() * f.constant_weight();
    } else {
      const Eigen::VectorXd panel = numerics::gauss_legendre(
          [&](double s) -> Eigen::VectorXd { return prop.expm(s - a).transpose() * f.weight(s); },
          a, b, 1);
      out.weights[k] = panel + step.transpose() * out.weights[k + 1];
    }
    offset_acc += f.has_constant_offset()
                      ? f.offset(a) * (b - a)
                      : numerics::gauss_legendre([&](double s) { return f.offset(s); }, a, b, 1);
    out.offsets[k] = offset_acc.value();
  }
  for (std::size_t k = 0; k < n; ++k) out.sigma_grad[k] = model.Sigma.transpose() * out.weights[k];
  return out;
}

/// Solution g = R^infty f of the Poisson equation -L g = f.
struct PoissonSolution {
  AffineObservable g;
  /// max |A^T w_g - w_f|, the algebraic residual of -L g = f.
  double residual = 0.0;
  /// Weight of int_0^{truncation_T} P_s f ds by quadrature, for cross-checking.
  Eigen::VectorXd truncated_weight;
};

inline PoissonSolution poisson_resolvent(const LinearModel& model, const AffineObservable& f,
                                         double truncation_T) {
  detail::require_observable_dim(model, f);
  detail::require(f.has_constant_weight() && f.has_constant_offset(), ErrorKind::InvalidArgument,
                  "the resolvent needs a time-independent observable");
  detail::require(truncation_T > 0.0, ErrorKind::NonpositiveHorizon,
                  "truncation horizon must be positive");
  const LinearPropagator prop(model);
  const double scale = std::max(1.0, model.A.cwiseAbs().maxCoeff());
  detail::require(prop.min_real_eigenvalue() > 64.0 * std::numeric_limits<double>::epsilon() * scale,
                  ErrorKind::NonDissipative,
                  "drift has an eigenvalue with non-positive real part");
  // A stable linear model has stationary mean 0, so only centred f has a finite resolvent.
  detail::require(f.offset(0.0) == 0.0, ErrorKind::InvalidArgument,
                  "offset must be zero for the resolvent to converge");

  const Eigen::VectorXd& w = f.constant_weight();
  const Eigen::VectorXd wg = model.A.transpose().partialPivLu().solve(w);
  const double residual = (model.A.transpose() * wg - w).cwiseAbs().maxCoeff();
  const Eigen::VectorXd truncated = numerics::gauss_legendre(
      [&](double s) -> Eigen::VectorXd { return prop.expm(s).transpose() * w; }, 0.0,
      truncation_T, 256);
  return {AffineObservable::constant(wg, 0.0), residual, truncated};
}

}  // namespace avgmart
