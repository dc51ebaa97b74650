#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "avgmart/error.hpp"
#include "avgmart/model.hpp"
#include "avgmart/rng.hpp"

namespace avgmart {

/// Thread count for path-parallel loops; 0 means hardware concurrency.
/// Results never depend on this value.
struct ParallelOptions {
  unsigned threads = 0;

  unsigned resolved() const {
    if (threads != 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

/// Noise components whose increments are identical in both coupled models.
struct CouplingSpec {
  std::vector<Eigen::Index> shared_components;
};

namespace detail {

inline void require_finite_x0(const Eigen::VectorXd& x0, Eigen::Index dim) {
  require(x0.size() == dim, ErrorKind::ShapeMismatch, "initial state has the wrong dimension");
  require(x0.allFinite(), ErrorKind::InvalidArgument, "initial state must be finite");
}

/// Fills row k of `increments` with sqrt(dt) * N(0, I) draws from `stream`.
inline void draw_increments(const GaussianStream& stream, const TimeGrid& grid,
                            RowMatrix& increments) {
  const double scale = std::sqrt(grid.dt());
  for (Eigen::Index k = 0; k < increments.rows(); ++k) {
    std::span<double> row(increments.row(k).data(), static_cast<std::size_t>(increments.cols()));
    stream.fill(static_cast<std::uint64_t>(k), row);
    for (double& v : row) v *= scale;
  }
}

inline void euler_step(const LinearModel& model, double /*t*/, double dt, const double* x,
                       const double* dB, double* next) {
  const Eigen::Index n = model.dim();
  const Eigen::Index m = model.noise_dim();
  for (Eigen::Index i = 0; i < n; ++i) {
    double drift = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) drift -= model.A(i, j) * x[j];
    double noise = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) noise += model.Sigma(i, j) * dB[j];
    next[i] = x[i] + drift * dt + noise;
  }
}

inline void euler_step(const GeneralModel& model, double t, double dt, const double* x,
                       const double* dB, double* next) {
  const Eigen::Index n = model.dim();
  const Eigen::Map<const Eigen::VectorXd> xv(x, n);
  const Eigen::Map<const Eigen::VectorXd> dBv(dB, model.noise_dim());
  const Eigen::VectorXd state = xv;
  const Eigen::VectorXd b = model.drift(t, state);
  const Eigen::MatrixXd s = model.diffusion(t, state);
  require(b.size() == n && s.rows() == n && s.cols() == model.noise_dim(),
          ErrorKind::ShapeMismatch, "model callables returned the wrong shape");
  Eigen::Map<Eigen::VectorXd>(next, n) = state + b * dt + s * dBv;
}

template <class Model>
void integrate(const Model& model, Trajectory& traj) {
  const TimeGrid& grid = traj.grid;
  const Eigen::Index n = model.dim();
  const double dt = grid.dt();
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const double* x = traj.states.row(row).data();
    double* next = traj.states.row(row + 1).data();
    euler_step(model, grid.node(k), dt, x, traj.noise_increments.row(row).data(), next);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isfinite(next[i])) {
        std::ostringstream msg;
        msg << "state became non-finite at step " << k + 1;
        throw Error(ErrorKind::NonFiniteState, msg.str(), traj.path_index);
      }
    }
  }
}

template <class Model>
Trajectory empty_trajectory(const Model& model, const TimeGrid& grid, const Eigen::VectorXd& x0,
                            std::uint64_t seed, std::uint64_t path_index) {
  Trajectory traj{grid,
                  RowMatrix(static_cast<Eigen::Index>(grid.n_nodes()), model.dim()),
                  RowMatrix(static_cast<Eigen::Index>(grid.n_steps()), model.noise_dim()),
                  seed, path_index};
  traj.states.row(0) = x0.transpose();
  return traj;
}

inline void validate_coupling(Eigen::Index noise_a, Eigen::Index noise_b,
                              const CouplingSpec& coupling) {
  std::vector<Eigen::Index> seen;
  for (Eigen::Index c : coupling.shared_components) {
    require(c >= 0 && c < noise_a && c < noise_b, ErrorKind::CouplingShapeMismatch,
            "shared component index outside a model's noise dimension");
    require(std::find(seen.begin(), seen.end(), c) == seen.end(),
            ErrorKind::CouplingShapeMismatch, "duplicate shared component");
    seen.push_back(c);
  }
}

/// Runs body(i) for i in [0, n) on several threads. Each worker walks its
/// indices in increasing order and stops at its first failure, so rethrowing
/// the failure with the smallest index is schedule independent.
template <class Body>
void parallel_for_paths(std::size_t n, ParallelOptions options, Body&& body) {
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(options.resolved(), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i, 0u);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> failed_at(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          body(i, w);
        } catch (...) {
          errors[w] = std::current_exception();
          failed_at[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  const auto first = std::min_element(failed_at.begin(), failed_at.end()) - failed_at.begin();
  if (errors[static_cast<std::size_t>(first)]) {
    std::rethrow_exception(errors[static_cast<std::size_t>(first)]);
  }
}

}  // namespace detail

/// Euler-Maruyama path driven by caller-supplied increments (row k = Delta B_k).
template <class Model>
Trajectory euler_maruyama_from_increments(const Model& model, const TimeGrid& grid,
                                          const Eigen::VectorXd& x0, const RowMatrix& increments,
                                          std::uint64_t seed = 0, std::uint64_t path_index = 0) {
  detail::require_finite_x0(x0, model.dim());
  detail::require(increments.rows() == static_cast<Eigen::Index>(grid.n_steps()) &&
                      increments.cols() == model.noise_dim(),
                  ErrorKind::ShapeMismatch, "increments must be n_steps x noise_dim");
  Trajectory traj = detail::empty_trajectory(model, grid, x0, seed, path_index);
  traj.noise_increments = increments;
  detail::integrate(model, traj);
  return traj;
}

/// Left-point Euler-Maruyama path whose noise is stream (seed, path_index).
template <class Model>
Trajectory euler_maruyama_path(const Model& model, const TimeGrid& grid, const Eigen::VectorXd& x0,
                               std::uint64_t seed, std::uint64_t path_index) {
  detail::require_finite_x0(x0, model.dim());
  Trajectory traj = detail::empty_trajectory(model, grid, x0, seed, path_index);
  detail::draw_increments(GaussianStream(seed, path_index), grid, traj.noise_increments);
  detail::integrate(model, traj);
  return traj;
}

/// Applies fn to every path of an ensemble without storing the ensemble.
/// Returns fn's results in path order.
template <class Model, class Fn>
auto map_paths(const Model& model, const TimeGrid& grid, const Eigen::VectorXd& x0,
               std::size_t n_paths, std::uint64_t master_seed, Fn&& fn,
               ParallelOptions options = {})
    -> std::vector<std::invoke_result_t<Fn&, const Trajectory&>> {
  using Result = std::invoke_result_t<Fn&, const Trajectory&>;
  detail::require(n_paths >= 1, ErrorKind::EmptyEnsemble, "need at least one path");
  detail::require_finite_x0(x0, model.dim());
  std::vector<Result> results(n_paths);
  const unsigned workers = options.resolved();
  std::vector<Trajectory> buffers;
  buffers.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    buffers.push_back(detail::empty_trajectory(model, grid, x0, master_seed, 0));
  }
  detail::parallel_for_paths(n_paths, options, [&](std::size_t i, unsigned w) {
    Trajectory& traj = buffers[w];
    traj.path_index = i;
    detail::draw_increments(GaussianStream(master_seed, i), grid, traj.noise_increments);
    detail::integrate(model, traj);
    results[i] = fn(static_cast<const Trajectory&>(traj));
  });
  return results;
}

template <class Model>
Ensemble simulate_ensemble(const Model& model, const TimeGrid& grid, const Eigen::VectorXd& x0,
                           std::size_t n_paths, std::uint64_t master_seed,
                           ParallelOptions options = {}) {
  Ensemble ensemble;
  ensemble.master_seed = master_seed;
  ensemble.model_description = "dim=" + std::to_string(model.dim()) +
                               " noise_dim=" + std::to_string(model.noise_dim());
  auto paths = map_paths(
      model, grid, x0, n_paths, master_seed,
      [](const Trajectory& t) { return std::optional<Trajectory>(t); }, options);
  ensemble.trajectories.reserve(n_paths);
  for (auto& p : paths) ensemble.trajectories.push_back(std::move(*p));
  return ensemble;
}

/// Coupled counterpart of map_paths: model_b reuses model_a's increments on
/// the shared components and draws the rest from an independent stream.
template <class ModelA, class ModelB, class Fn>
auto map_coupled_paths(const ModelA& model_a, const ModelB& model_b, const TimeGrid& grid,
                       const Eigen::VectorXd& x0_a, const Eigen::VectorXd& x0_b,
                       const CouplingSpec& coupling, std::size_t n_paths,
                       std::uint64_t master_seed, Fn&& fn, ParallelOptions options = {})
    -> std::vector<std::invoke_result_t<Fn&, const Trajectory&, const Trajectory&>> {
  using Result = std::invoke_result_t<Fn&, const Trajectory&, const Trajectory&>;
  detail::validate_coupling(model_a.noise_dim(), model_b.noise_dim(), coupling);
  detail::require(n_paths >= 1, ErrorKind::EmptyEnsemble, "need at least one path");
  detail::require_finite_x0(x0_a, model_a.dim());
  detail::require_finite_x0(x0_b, model_b.dim());

  const Eigen::Index m_b = model_b.noise_dim();
  std::vector<bool> shared(static_cast<std::size_t>(m_b), false);
  for (Eigen::Index c : coupling.shared_components) shared[static_cast<std::size_t>(c)] = true;
  std::vector<std::uint32_t> private_components;
  for (Eigen::Index c = 0; c < m_b; ++c) {
    if (!shared[static_cast<std::size_t>(c)]) private_components.push_back(static_cast<std::uint32_t>(c));
  }

  std::vector<Result> results(n_paths);
  const unsigned workers = options.resolved();
  std::vector<std::pair<Trajectory, Trajectory>> buffers;
  buffers.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    buffers.emplace_back(detail::empty_trajectory(model_a, grid, x0_a, master_seed, 0),
                         detail::empty_trajectory(model_b, grid, x0_b, master_seed, 0));
  }
  const double scale = std::sqrt(grid.dt());
  detail::parallel_for_paths(n_paths, options, [&](std::size_t i, unsigned w) {
    auto& [a, b] = buffers[w];
    a.path_index = b.path_index = i;
    detail::draw_increments(GaussianStream(master_seed, i, 0), grid, a.noise_increments);
    const GaussianStream own(master_seed, i, 1);
    for (Eigen::Index k = 0; k < b.noise_increments.rows(); ++k) {
      for (Eigen::Index c : coupling.shared_components) {
        b.noise_increments(k, c) = a.noise_increments(k, c);
      }
      for (std::uint32_t c : private_components) {
        b.noise_increments(k, c) = scale * own.normal(static_cast<std::uint64_t>(k), c);
      }
    }
    detail::integrate(model_a, a);
    detail::integrate(model_b, b);
    results[i] = fn(static_cast<const Trajectory&>(a), static_cast<const Trajectory&>(b));
  });
  return results;
}

template <class ModelA, class ModelB>
std::pair<Ensemble, Ensemble> simulate_coupled(const ModelA& model_a, const ModelB& model_b,
                                               const TimeGrid& grid, const Eigen::VectorXd& x0_a,
                                               const Eigen::VectorXd& x0_b,
                                               const CouplingSpec& coupling,
                                               std::uint64_t master_seed, std::size_t n_paths,
                                               ParallelOptions options = {}) {
  auto pairs = map_coupled_paths(
      model_a, model_b, grid, x0_a, x0_b, coupling, n_paths, master_seed,
      [](const Trajectory& a, const Trajectory& b) {
        return std::optional<std::pair<Trajectory, Trajectory>>(std::in_place, a, b);
      },
      options);
  std::pair<Ensemble, Ensemble> out;
  out.first.master_seed = out.second.master_seed = master_seed;
  out.first.model_description = "coupled:a";
  out.second.model_description = "coupled:b";
  for (auto& p : pairs) {
    out.first.trajectories.push_back(std::move(p->first));
    out.second.trajectories.push_back(std::move(p->second));
  }
  return out;
}

/// Sample mean and variance of the state at selected grid nodes.
struct NodeMoments {
  std::vector<std::size_t> nodes;
  Eigen::MatrixXd mean;         // nodes x dim
  Eigen::MatrixXd mean_se;
  Eigen::MatrixXd variance;     // unbiased
  Eigen::MatrixXd variance_se;
};

/// `rows` + 1 nodes spread evenly over the grid, first and last included.
inline std::vector<std::size_t> spread_nodes(const TimeGrid& grid, std::size_t rows) {
  std::vector<std::size_t> out;
  const std::size_t n = grid.n_steps();
  const std::size_t r = std::max<std::size_t>(1, std::min(rows, n));
  for (std::size_t j = 0; j <= r; ++j) out.push_back(j * n / r);
  return out;
}

template <class Model>
NodeMoments node_moments(const Model& model, const TimeGrid& grid, const Eigen::VectorXd& x0,
                         std::size_t n_paths, std::uint64_t master_seed,
                         const std::vector<std::size_t>& nodes, ParallelOptions options = {}) {
  const Eigen::Index dim = model.dim();
  for (std::size_t k : nodes) {
    detail::require(k <= grid.n_steps(), ErrorKind::InvalidArgument, "node outside the grid");
  }
  const auto samples = map_paths(
      model, grid, x0, n_paths, master_seed,
      [&](const Trajectory& traj) {
        std::vector<double> v;
        v.reserve(nodes.size() * static_cast<std::size_t>(dim));
        for (std::size_t k : nodes) {
          for (Eigen::Index c = 0; c < dim; ++c) v.push_back(traj.states(static_cast<Eigen::Index>(k), c));
        }
        return v;
      },
      options);
  const auto rows = static_cast<Eigen::Index>(nodes.size());
  NodeMoments out{nodes, Eigen::MatrixXd(rows, dim), Eigen::MatrixXd(rows, dim),
                  Eigen::MatrixXd(rows, dim), Eigen::MatrixXd(rows, dim)};
  std::vector<double> column(samples.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      const auto idx = static_cast<std::size_t>(r * dim + c);
      for (std::size_t i = 0; i < samples.size(); ++i) column[i] = samples[i][idx];
      const auto m = numerics::sample_moments(column);
      out.mean(r, c) = m.mean;
      out.mean_se(r, c) = m.mean_se;
      out.variance(r, c) = m.variance;
      out.variance_se(r, c) = m.variance_se;
    }
  }
  return out;
}

}  // namespace avgmart
