#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "avgmart/error.hpp"
#include "avgmart/numerics.hpp"

namespace avgmart {

/// Time-indexed function on a finite state space: row n holds f_n(x).
using ChainFunction = Eigen::MatrixXd;

/// Finite-state, time-inhomogeneous Markov chain on times 0..N.
struct ChainModel {
  int n_states = 0;
  int N = 0;
  std::vector<Eigen::MatrixXd> transitions;  // transitions[n] = P_{n,n+1}
  ChainFunction f;                           // (N + 1) x n_states
  Eigen::VectorXd mu0;
};

struct ChainPath {
  std::vector<int> states;  // x_0 .. x_N
  double probability = 0.0;
};

inline void validate_chain(const ChainModel& chain) {
  using detail::require;
  require(chain.n_states >= 1, ErrorKind::InvalidChain, "n_states must be positive");
  require(chain.N >= 1, ErrorKind::InvalidChain, "horizon N must be positive");
  require(chain.transitions.size() == static_cast<std::size_t>(chain.N), ErrorKind::InvalidChain,
          "need exactly N transition matrices");
  for (std::size_t n = 0; n < chain.transitions.size(); ++n) {
    const auto& P = chain.transitions[n];
    require(P.rows() == chain.n_states && P.cols() == chain.n_states, ErrorKind::InvalidChain,
            "transition " + std::to_string(n) + " has the wrong shape");
    require(P.allFinite() && P.minCoeff() >= 0.0, ErrorKind::InvalidChain,
            "transition " + std::to_string(n) + " has negative or non-finite entries");
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      require(std::abs(P.row(r).sum() - 1.0) <= 1e-12, ErrorKind::InvalidChain,
              "transition " + std::to_string(n) + " row " + std::to_string(r) +
                  " does not sum to 1");
    }
  }
  require(chain.f.rows() == chain.N + 1 && chain.f.cols() == chain.n_states,
          ErrorKind::InvalidChain, "f must be (N + 1) x n_states");
  require(chain.f.allFinite(), ErrorKind::InvalidChain, "f must be finite");
  require(chain.mu0.size() == chain.n_states && chain.mu0.minCoeff() >= 0.0 &&
              std::abs(chain.mu0.sum() - 1.0) <= 1e-12,
          ErrorKind::InvalidChain, "mu0 must be a probability vector");
}

namespace detail {

inline void require_index_order(bool ok, const char* what) {
  require(ok, ErrorKind::IndexOrder, what);
}

/// y = P v with compensated inner products.
inline Eigen::VectorXd apply(const Eigen::MatrixXd& P, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(P.rows());
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    numerics::CompensatedSum s;
    for (Eigen::Index j = 0; j < P.cols(); ++j) s += P(i, j) * v(j);
    out(i) = s.value();
  }
  return out;
}

/// table[m][j] = P_{j,m} f_m for 0 <= j <= m < horizon.
inline std::vector<std::vector<Eigen::VectorXd>> propagation_table(const ChainModel& chain,
                                                                   int horizon) {
  std::vector<std::vector<Eigen::VectorXd>> table(static_cast<std::size_t>(horizon));
  for (int m = 0; m < horizon; ++m) {
    auto& col = table[static_cast<std::size_t>(m)];
    col.resize(static_cast<std::size_t>(m) + 1);
    col[static_cast<std::size_t>(m)] = chain.f.row(m).transpose();
    for (int j = m - 1; j >= 0; --j) {
      col[static_cast<std::size_t>(j)] =
          apply(chain.transitions[static_cast<std::size_t>(j)], col[static_cast<std::size_t>(j) + 1]);
    }
  }
  return table;
}

/// Gamma of two time-indexed functions over one step with kernel P:
/// P(f_next g_next) - f_now P g_next - g_now P f_next + f_now g_now.
inline Eigen::VectorXd gamma_rows(const Eigen::MatrixXd& P, const Eigen::VectorXd& f_now,
                                  const Eigen::VectorXd& f_next, const Eigen::VectorXd& g_now,
                                  const Eigen::VectorXd& g_next) {
  const Eigen::VectorXd pfg = apply(P, f_next.cwiseProduct(g_next));
  const Eigen::VectorXd pg = apply(P, g_next);
  const Eigen::VectorXd pf = apply(P, f_next);
  Eigen::VectorXd out(P.rows());
  for (Eigen::Index x = 0; x < P.rows(); ++x) {
    numerics::CompensatedSum s;
    s += pfg(x);
    s += -f_now(x) * pg(x);
    s += -g_now(x) * pf(x);
    s += f_now(x) * g_now(x);
    out(x) = s.value();
  }
  return out;
}

}  // namespace detail

/// P_{m,n} = P_{m,m+1} ... P_{n-1,n}; the identity when m == n.
inline Eigen::MatrixXd compose_transitions(const ChainModel& chain, int m, int n) {
  detail::require_index_order(0 <= m && m <= n && n <= chain.N, "need 0 <= m <= n <= N");
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(chain.n_states, chain.n_states);
  for (int j = m; j < n; ++j) {
    const auto& P = chain.transitions[static_cast<std::size_t>(j)];
    Eigen::MatrixXd next(out.rows(), P.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      for (Eigen::Index c = 0; c < P.cols(); ++c) {
        numerics::CompensatedSum s;
        for (Eigen::Index k = 0; k < out.cols(); ++k) s += out(r, k) * P(k, c);
        next(r, c) = s.value();
      }
    }
    out = std::move(next);
  }
  return out;
}

/// R_n^N f = sum_{m=n}^{N-1} P_{n,m} f_m as a vector over states.
inline Eigen::VectorXd r_discrete(const ChainModel& chain, int n, int horizon) {
  detail::require_index_order(0 <= n && n <= horizon && horizon <= chain.N,
                              "need 0 <= n <= N <= chain horizon");
  Eigen::VectorXd r = Eigen::VectorXd::Zero(chain.n_states);
  for (int m = horizon - 1; m >= n; --m) {
    r = chain.f.row(m).transpose() + detail::apply(chain.transitions[static_cast<std::size_t>(m)], r);
  }
  return r;
}

inline Eigen::VectorXd r_discrete(const ChainModel& chain, int n) {
  return r_discrete(chain, n, chain.N);
}

/// Increments M_n - M_{n-1} = sum_{m=n}^{N-1} P_{n,m} f(X_n) - P_{n-1,m} f(X_{n-1}),
/// for n = 1..N (entry n - 1).
inline std::vector<double> martingale_increments(const ChainModel& chain, const ChainPath& path) {
  detail::require(path.states.size() == static_cast<std::size_t>(chain.N) + 1,
                  ErrorKind::ShapeMismatch, "path must visit times 0..N");
  for (int s : path.states) {
    detail::require(s >= 0 && s < chain.n_states, ErrorKind::InvalidArgument,
                    "path state out of range");
  }
  const auto table = detail::propagation_table(chain, chain.N);
  std::vector<double> inc(static_cast<std::size_t>(chain.N));
  for (int n = 1; n <= chain.N; ++n) {
    const int x_now = path.states[static_cast<std::size_t>(n)];
    const int x_prev = path.states[static_cast<std::size_t>(n) - 1];
    numerics::CompensatedSum s;
    for (int m = n; m < chain.N; ++m) {
      const auto& col = table[static_cast<std::size_t>(m)];
      s += col[static_cast<std::size_t>(n)](x_now);
      s += -col[static_cast<std::size_t>(n) - 1](x_prev);
    }
    inc[static_cast<std::size_t>(n) - 1] = s.value();
  }
  return inc;
}

/// Discrete carre du champ Gamma_n(f, g) in the algebraic form
/// P_{n,n+1}(fg) - f_n P_{n,n+1} g - g_n P_{n,n+1} f + f_n g_n.
inline Eigen::VectorXd gamma_discrete(const ChainModel& chain, const ChainFunction& f,
                                      const ChainFunction& g, int n) {
  detail::require_index_order(0 <= n && n < chain.N, "need 0 <= n < N");
  detail::require(f.rows() > n + 1 && g.rows() > n + 1 && f.cols() == chain.n_states &&
                      g.cols() == chain.n_states,
                  ErrorKind::ShapeMismatch, "functions must cover times n and n + 1");
  return detail::gamma_rows(chain.transitions[static_cast<std::size_t>(n)], f.row(n).transpose(),
                            f.row(n + 1).transpose(), g.row(n).transpose(),
                            g.row(n + 1).transpose());
}

/// The same quantity as the one-step conditional sum
/// E[(f_{n+1}(X_{n+1}) - f_n(x)) (g_{n+1}(X_{n+1}) - g_n(x)) | X_n = x].
inline Eigen::VectorXd gamma_discrete_conditional(const ChainModel& chain, const ChainFunction& f,
                                                  const ChainFunction& g, int n) {
  detail::require_index_order(0 <= n && n < chain.N, "need 0 <= n < N");
  const auto& P = chain.transitions[static_cast<std::size_t>(n)];
  Eigen::VectorXd out(chain.n_states);
  for (int x = 0; x < chain.n_states; ++x) {
    numerics::CompensatedSum s;
    for (int y = 0; y < chain.n_states; ++y) {
      s += P(x, y) * (f(n + 1, y) - f(n, x)) * (g(n + 1, y) - g(n, x));
    }
    out(x) = s.value();
  }
  return out;
}

/// Predictable quadratic variation increment E[(M_n - M_{n-1})^2 | X_{n-1} = x]
/// of M^{N,f}, in closed form through Gamma_{n-1}:
///   2 sum_{n <= m < k <= N-1} Gamma(P_{.,m} f, P_{.,k} f) + sum_{m=n}^{N-1} Gamma(P_{.,m} f).
inline Eigen::VectorXd qv_discrete(const ChainModel& chain, int n, int horizon) {
  detail::require_index_order(1 <= n && n <= horizon && horizon <= chain.N,
                              "need 1 <= n <= N <= chain horizon");
  const auto table = detail::propagation_table(chain, horizon);
  const auto& P = chain.transitions[static_cast<std::size_t>(n) - 1];
  const auto now = static_cast<std::size_t>(n) - 1;
  const auto next = static_cast<std::size_t>(n);
  std::vector<numerics::CompensatedSum> acc(static_cast<std::size_t>(chain.n_states));
  for (int m = n; m < horizon; ++m) {
    const auto& hm = table[static_cast<std::size_t>(m)];
    for (int k = m; k < horizon; ++k) {
      const auto& hk = table[static_cast<std::size_t>(k)];
      const Eigen::VectorXd gam = detail::gamma_rows(P, hm[now], hm[next], hk[now], hk[next]);
      const double weight = (k == m) ? 1.0 : 2.0;
      for (int x = 0; x < chain.n_states; ++x) acc[static_cast<std::size_t>(x)] += weight * gam(x);
    }
  }
  Eigen::VectorXd out(chain.n_states);
  for (int x = 0; x < chain.n_states; ++x) out(x) = acc[static_cast<std::size_t>(x)].value();
  return out;
}

/// First two conditional moments of the martingale increment at step n,
/// by summing over the one-step outcomes y of X_n given X_{n-1} = x and
/// using Delta M_n = R_n(y) - R_{n-1}(x) + f_{n-1}(x).
struct IncrementMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd second;
};

inline IncrementMoments increment_moments(const ChainModel& chain, int n, int horizon) {
  detail::require_index_order(1 <= n && n <= horizon && horizon <= chain.N,
                              "need 1 <= n <= N <= chain horizon");
  const Eigen::VectorXd r_prev = r_discrete(chain, n - 1, horizon);
  const Eigen::VectorXd r_now = r_discrete(chain, n, horizon);
  const auto& P = chain.transitions[static_cast<std::size_t>(n) - 1];
  IncrementMoments out{Eigen::VectorXd(chain.n_states), Eigen::VectorXd(chain.n_states)};
  for (int x = 0; x < chain.n_states; ++x) {
    numerics::CompensatedSum m1, m2;
    for (int y = 0; y < chain.n_states; ++y) {
      const double d = r_now(y) - r_prev(x) + chain.f(n - 1, x);
      m1 += P(x, y) * d;
      m2 += P(x, y) * d * d;
    }
    out.mean(x) = m1.value();
    out.second(x) = m2.value();
  }
  return out;
}

inline constexpr double kMaxEnumeratedPaths = 1e6;

/// Visits every path of positive probability in lexicographic order.
inline void enumerate_paths(const ChainModel& chain, const std::function<void(const ChainPath&)>& visit) {
  detail::require(std::pow(static_cast<double>(chain.n_states), chain.N) <= kMaxEnumeratedPaths,
                  ErrorKind::StateSpaceTooLarge, "n_states^N exceeds the enumeration guard");
  ChainPath path;
  path.states.assign(static_cast<std::size_t>(chain.N) + 1, 0);
  std::vector<double> prefix(static_cast<std::size_t>(chain.N) + 1, 0.0);
  // Depth-first over prefixes, pruning zero-probability branches.
  std::function<void(int)> descend = [&](int depth) {
    if (depth == chain.N) {
      path.probability = prefix[static_cast<std::size_t>(depth)];
      visit(path);
      return;
    }
    const auto& P = chain.transitions[static_cast<std::size_t>(depth)];
    const int x = path.states[static_cast<std::size_t>(depth)];
    for (int y = 0; y < chain.n_states; ++y) {
      const double p = prefix[static_cast<std::size_t>(depth)] * P(x, y);
      if (p == 0.0) continue;
      path.states[static_cast<std::size_t>(depth) + 1] = y;
      prefix[static_cast<std::size_t>(depth) + 1] = p;
      descend(depth + 1);
    }
  };
  for (int x0 = 0; x0 < chain.n_states; ++x0) {
    if (chain.mu0(x0) == 0.0) continue;
    path.states[0] = x0;
    prefix[0] = chain.mu0(x0);
    descend(0);
  }
}

/// Exact E[functional(X_0..X_N)] by summing over all paths.
inline double enumerate_expectation(const ChainModel& chain,
                                    const std::function<double(const ChainPath&)>& functional) {
  numerics::CompensatedSum total;
  enumerate_paths(chain, [&](const ChainPath& p) { total += p.probability * functional(p); });
  return total.value();
}

}  // namespace avgmart
