#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "avgmart/error.hpp"

namespace avgmart::numerics {

/// Neumaier-compensated running sum. Order of additions still matters for the
/// last bit, so reductions over paths always add in path-index order.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// (1 - e^{-rate u}) / rate, continuous at rate = 0 where it equals u.
inline double one_minus_exp_over(double rate, double u) {
  if (rate == 0.0) return u;
  return -std::expm1(-rate * u) / rate;
}

/// Complex counterpart of one_minus_exp_over, used for eigen-decomposed
/// propagators. A short series takes over where cancellation would bite.
inline std::complex<double> one_minus_exp_over(std::complex<double> rate, double u) {
  const std::complex<double> z = rate * u;
  if (std::abs(z) < 1e-5) {
    // u (1 - z/2 + z^2/6 - z^3/24)
    return u * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0);
  }
  return (1.0 - std::exp(-z)) / rate;
}

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr std::array<double, 4> kGaussNodes = {
    0.18343464249564980494, 0.52553240991632898582, 0.79666647741362673959,
    0.96028985649753623168};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.36268378337836198297, 0.31370664587788728734, 0.22238103445337447054,
    0.10122853629037625915};

/// Composite 8-point Gauss-Legendre quadrature of a scalar or Eigen-valued
/// integrand over [a, b] with `panels` equal panels.
template <class F>
auto gauss_legendre(F&& f, double a, double b, int panels = 16) {
  const double h = (b - a) / panels;
  using Value = std::decay_t<decltype(f(a))>;
  Value total = f(a) * 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    const double half = 0.5 * h;
    for (std::size_t i = 0; i < kGaussNodes.size(); ++i) {
      const double dx = half * kGaussNodes[i];
      total += (f(mid - dx) + f(mid + dx)) * (kGaussWeights[i] * half);
    }
  }
  return total;
}

/// Composite Simpson rule with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / panels;
  CompensatedSum odd, even;
  for (int i = 1; i < panels; ++i) {
    const double v = f(a + i * h);
    (i % 2 ? odd : even) += v;
  }
  return h / 3.0 * (f(a) + f(b) + 4.0 * odd.value() + 2.0 * even.value());
}

/// Simpson with panel doubling until successive estimates agree to `rel_tol`.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double rel_tol = 1e-10,
                        int start_panels = 64, int max_panels = 1 << 22) {
  double previous = simpson(f, a, b, start_panels);
  for (int n = 2 * start_panels; n <= max_panels; n *= 2) {
    const double current = simpson(f, a, b, n);
    if (std::abs(current - previous) <= rel_tol * std::abs(current) ||
        std::abs(current - previous) < 1e-300) {
      return current;
    }
    previous = current;
  }
  return previous;
}

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse standard normal CDF, Wichura's algorithm AS 241 (PPND16).
/// Relative accuracy about 1e-16 on (0, 1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "normal_quantile needs p in (0, 1)");
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
              67265.770927008700853) * r + 45921.953931549871457) * r +
            13731.693765509461125) * r + 1971.5909503065514427) * r +
          133.14166789178437745) * r + 3.387132872796366608);
    const double den =
        (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
              39307.89580009271061) * r + 21213.794301586595867) * r +
            5394.1960214247511077) * r + 687.1870074920579083) * r +
          42.313330701600911252) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
              0.24178072517745061177) * r + 1.27045825245236838258) * r +
            3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
              0.0151986665636164571966) * r + 0.14810397642748007459) * r +
            0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              0.0012426609473880784386) * r + 0.026532189526576123093) * r +
            0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
              1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
            0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

/// Sample moments with standard errors of the mean and of the variance.
struct SampleMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double mean_se = 0.0;
  double variance_se = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

inline SampleMoments sample_moments(std::span<const double> xs) {
  SampleMoments m;
  m.n = xs.size();
  if (m.n == 0) throw Error(ErrorKind::EmptyEnsemble, "no samples");
  CompensatedSum s1;
  for (double x : xs) s1 += x;
  m.mean = s1.value() / static_cast<double>(m.n);
  CompensatedSum s2, s3, s4;
  for (double x : xs) {
    const double d = x - m.mean;
    const double d2 = d * d;
    s2 += d2;
    s3 += d2 * d;
    s4 += d2 * d2;
  }
  const double n = static_cast<double>(m.n);
  const double m2 = s2.value() / n;
  const double m3 = s3.value() / n;
  const double m4 = s4.value() / n;
  m.variance = m.n > 1 ? s2.value() / (n - 1.0) : 0.0;
  m.mean_se = std::sqrt(m.variance / n);
  m.variance_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
  if (m2 > 0.0) {
    m.skewness = m3 / std::pow(m2, 1.5);
    m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return m;
}

/// Sample covariance of paired samples with the standard error of the
/// estimate (spread of the centred products).
struct CovarianceEstimate {
  double value = 0.0;
  double se = 0.0;
};

inline CovarianceEstimate sample_covariance(std::span<const double> xs,
                                            std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorKind::ShapeMismatch, "covariance needs paired samples");
  }
  if (xs.size() < 2) throw Error(ErrorKind::EmptyEnsemble, "covariance needs two samples");
  const double n = static_cast<double>(xs.size());
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx.value() / n, my = sy.value() / n;
  std::vector<double> products(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) products[i] = (xs[i] - mx) * (ys[i] - my);
  const SampleMoments pm = sample_moments(products);
  return {pm.mean * n / (n - 1.0), pm.mean_se};
}

/// Wilson score interval for a binomial proportion.
struct ProportionInterval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
};

inline ProportionInterval wilson_interval(std::size_t successes, std::size_t trials,
                                          double z = 1.959963984540054) {
  if (trials == 0) throw Error(ErrorKind::EmptyEnsemble, "no trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {p, std::clamp(centre - half, 0.0, p), std::clamp(centre + half, p, 1.0)};
}

}  // namespace avgmart::numerics
