#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "avgmart/error.hpp"

namespace avgmart {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform time grid t_k = t0 + k dt on [t0, T].
class TimeGrid {
 public:
  TimeGrid(double t0, double T, std::size_t n_steps) : t0_(t0), T_(T), n_steps_(n_steps) {
    detail::require(std::isfinite(t0) && std::isfinite(T) && T > t0,
                    ErrorKind::NonpositiveInterval, "grid needs T > t0");
    detail::require(n_steps >= 1, ErrorKind::ZeroSteps, "grid needs at least one step");
    dt_ = (T - t0) / static_cast<double>(n_steps);
  }

  double t0() const noexcept { return t0_; }
  double T() const noexcept { return T_; }
  std::size_t n_steps() const noexcept { return n_steps_; }
  std::size_t n_nodes() const noexcept { return n_steps_ + 1; }
  double dt() const noexcept { return dt_; }
  double node(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }

  std::vector<double> nodes() const {
    std::vector<double> out(n_nodes());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = node(k);
    return out;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.t0_ == b.t0_ && a.T_ == b.T_ && a.n_steps_ == b.n_steps_;
  }

 private:
  double t0_;
  double T_;
  std::size_t n_steps_;
  double dt_;
};

inline TimeGrid make_time_grid(double t0, double T, std::size_t n_steps) {
  return TimeGrid(t0, T, n_steps);
}

/// Grid whose step is the closest uniform step to `dt` that tiles [t0, T].
inline TimeGrid make_time_grid_dt(double t0, double T, double dt) {
  detail::require(dt > 0.0 && std::isfinite(dt), ErrorKind::NonpositiveParameter,
                  "dt must be positive");
  detail::require(T > t0, ErrorKind::NonpositiveInterval, "grid needs T > t0");
  const double steps = std::round((T - t0) / dt);
  return TimeGrid(t0, T, static_cast<std::size_t>(std::max(steps, 1.0)));
}

/// Linear SDE dX = -A X dt + Sigma dB, with Sigma of shape n x m.
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd Sigma;
  std::vector<std::string> labels;

  Eigen::Index dim() const noexcept { return A.rows(); }
  Eigen::Index noise_dim() const noexcept { return Sigma.cols(); }

  Eigen::VectorXd drift(double /*t*/, const Eigen::VectorXd& x) const { return -A * x; }
  const Eigen::MatrixXd& diffusion(double /*t*/, const Eigen::VectorXd& /*x*/) const {
    return Sigma;
  }
};

inline LinearModel make_linear_model(Eigen::MatrixXd A, Eigen::MatrixXd Sigma,
                                     std::vector<std::string> labels = {}) {
  detail::require(A.rows() >= 1 && A.rows() == A.cols(), ErrorKind::ShapeMismatch,
                  "drift matrix must be square and non-empty");
  detail::require(Sigma.rows() == A.rows() && Sigma.cols() >= 1, ErrorKind::ShapeMismatch,
                  "diffusion matrix must have one row per state component");
  detail::require(A.allFinite() && Sigma.allFinite(), ErrorKind::InvalidArgument,
                  "model matrices must be finite");
  detail::require(labels.empty() || labels.size() == static_cast<std::size_t>(A.rows()),
                  ErrorKind::ShapeMismatch, "one label per component");
  return LinearModel{std::move(A), std::move(Sigma), std::move(labels)};
}

/// Scalar OU process dX = -kappa X dt + sigma dB.
inline LinearModel make_ou(double kappa, double sigma) {
  detail::require(std::isfinite(kappa) && std::isfinite(sigma) && sigma >= 0.0,
                  ErrorKind::NonpositiveParameter, "OU needs finite kappa and sigma >= 0");
  return make_linear_model(Eigen::MatrixXd::Constant(1, 1, kappa),
                           Eigen::MatrixXd::Constant(1, 1, sigma), {"X"});
}

/// Fast/slow pair with the fast component X accelerated by alpha:
///   dX = -alpha kX (X - Y) dt + sqrt(alpha) sX dB^X
///   dY = -kY (Y - X) dt + sY dB^Y
inline LinearModel make_two_timescale(double alpha, double kappaX, double kappaY, double sigmaX,
                                      double sigmaY) {
  for (double p : {alpha, kappaX, kappaY, sigmaX, sigmaY}) {
    detail::require(std::isfinite(p) && p > 0.0, ErrorKind::NonpositiveParameter,
                    "two-timescale parameters must be strictly positive");
  }
  Eigen::MatrixXd A(2, 2);
  A << alpha * kappaX, -alpha * kappaX, -kappaY, kappaY;
  Eigen::MatrixXd Sigma = Eigen::MatrixXd::Zero(2, 2);
  Sigma(0, 0) = std::sqrt(alpha) * sigmaX;
  Sigma(1, 1) = sigmaY;
  return make_linear_model(std::move(A), std::move(Sigma), {"X", "Y"});
}

/// Fast/slow pair with an extra restoring force -beta Y on the slow component.
inline LinearModel make_linear_ab(double alpha, double beta) {
  detail::require(std::isfinite(alpha) && alpha > 0.0, ErrorKind::NonpositiveParameter,
                  "alpha must be > 0");
  detail::require(std::isfinite(beta) && beta >= 0.0, ErrorKind::NonpositiveParameter,
                  "beta must be >= 0");
  Eigen::MatrixXd A(2, 2);
  A << alpha, -alpha, -1.0, 1.0 + beta;
  Eigen::MatrixXd Sigma = Eigen::MatrixXd::Zero(2, 2);
  Sigma(0, 0) = std::sqrt(alpha);
  Sigma(1, 1) = 1.0;
  return make_linear_model(std::move(A), std::move(Sigma), {"X", "Y"});
}

/// SDE with arbitrary coefficients b(t, x) and sigma(t, x).
struct GeneralModel {
  Eigen::Index state_dim = 0;
  Eigen::Index noise_components = 0;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> drift_fn;
  std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> diffusion_fn;

  Eigen::Index dim() const noexcept { return state_dim; }
  Eigen::Index noise_dim() const noexcept { return noise_components; }
  Eigen::VectorXd drift(double t, const Eigen::VectorXd& x) const { return drift_fn(t, x); }
  Eigen::MatrixXd diffusion(double t, const Eigen::VectorXd& x) const {
    return diffusion_fn(t, x);
  }
};

/// f(t, x) = w(t) . x + c(t). Constant parts are stored as values so the
/// linear analytics can use closed forms for them.
class AffineObservable {
 public:
  using WeightFn = std::function<Eigen::VectorXd(double)>;
  using OffsetFn = std::function<double(double)>;

  static AffineObservable constant(Eigen::VectorXd w, double c = 0.0) {
    AffineObservable f;
    f.dim_ = w.size();
    f.const_weight_ = std::move(w);
    f.const_offset_ = c;
    return f;
  }

  static AffineObservable with_offset(Eigen::VectorXd w, OffsetFn c) {
    AffineObservable f;
    f.dim_ = w.size();
    f.const_weight_ = std::move(w);
    f.offset_fn_ = std::move(c);
    return f;
  }

  static AffineObservable time_dependent(Eigen::Index dim, WeightFn w, OffsetFn c) {
    AffineObservable f;
    f.dim_ = dim;
    f.weight_fn_ = std::move(w);
    f.offset_fn_ = std::move(c);
    return f;
  }

  Eigen::Index dim() const noexcept { return dim_; }
  bool has_constant_weight() const noexcept { return const_weight_.has_value(); }
  bool has_constant_offset() const noexcept { return const_offset_.has_value(); }

  Eigen::VectorXd weight(double t) const {
    return const_weight_ ? *const_weight_ : weight_fn_(t);
  }
  const Eigen::VectorXd& constant_weight() const { return *const_weight_; }
  double offset(double t) const { return const_offset_ ? *const_offset_ : offset_fn_(t); }

  double operator()(double t, const Eigen::VectorXd& x) const {
    return const_weight_ ? const_weight_->dot(x) + offset(t) : weight_fn_(t).dot(x) + offset(t);
  }

 private:
  AffineObservable() = default;

  Eigen::Index dim_ = 0;
  std::optional<Eigen::VectorXd> const_weight_;
  std::optional<double> const_offset_;
  WeightFn weight_fn_;
  OffsetFn offset_fn_;
};

/// One discretised sample path with the Brownian increments that drove it.
struct Trajectory {
  TimeGrid grid;
  RowMatrix states;             // (n_steps + 1) x n
  RowMatrix noise_increments;   // n_steps x m, row k is Delta B_k
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;

  Eigen::VectorXd state(std::size_t k) const { return states.row(static_cast<Eigen::Index>(k)); }

  /// B_{t_k}, the Brownian path rebuilt from the stored increments.
  double brownian(std::size_t k, Eigen::Index component) const {
    double b = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      b += noise_increments(static_cast<Eigen::Index>(j), component);
    }
    return b;
  }
};

struct Ensemble {
  std::vector<Trajectory> trajectories;
  std::string model_description;
  std::uint64_t master_seed = 0;

  std::size_t size() const noexcept { return trajectories.size(); }
  const TimeGrid& grid() const {
    detail::require(!trajectories.empty(), ErrorKind::EmptyEnsemble, "ensemble has no paths");
    return trajectories.front().grid;
  }
};

}  // namespace avgmart
