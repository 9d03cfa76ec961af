#pragma once

// Small numerical kernels shared by the solvers: tridiagonal solves,
// monotone interpolation, quadrature helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace feshbach::detail {

/// Thomas algorithm. `sub[i]` couples row i to i-1 (sub[0] unused), `sup[i]`
/// couples row i to i+1 (sup[n-1] unused). `rhs` is overwritten with the
/// solution. Works for real and complex T.
template <class T, class U>
void solve_tridiagonal(std::span<const U> sub, std::span<const U> diag, std::span<const U> sup,
                       std::span<T> rhs, std::vector<U>& scratch) {
  const std::size_t n = diag.size();
  scratch.resize(n);
  U denom = diag[0];
  scratch[0] = sup[0] / denom;
  rhs[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - sub[i] * scratch[i - 1];
    if (i + 1 < n) scratch[i] = sup[i] / denom;
    rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch[i] * rhs[i + 1];
}

template <class T, class U>
void solve_tridiagonal(const std::vector<U>& sub, const std::vector<U>& diag,
                       const std::vector<U>& sup, std::vector<T>& rhs) {
  std::vector<U> scratch;
  solve_tridiagonal<T, U>(std::span<const U>(sub), std::span<const U>(diag),
                          std::span<const U>(sup), std::span<T>(rhs), scratch);
}

/// LU factors of a constant tridiagonal matrix with constant bands, reused
/// across many right-hand sides.
template <class U>
class ConstantTridiagonal {
 public:
  ConstantTridiagonal() = default;
  ConstantTridiagonal(std::size_t n, U off, U diag) : off_(off), c_(n), inv_(n) {
    U denom = diag;
    inv_[0] = U(1) / denom;
    c_[0] = off * inv_[0];
    for (std::size_t i = 1; i < n; ++i) {
      denom = diag - off * c_[i - 1];
      inv_[i] = U(1) / denom;
      c_[i] = off * inv_[i];
    }
  }

  std::size_t size() const { return c_.size(); }

  template <class T>
  void solve(std::span<T> rhs) const {
    const std::size_t n = c_.size();
    rhs[0] = rhs[0] * inv_[0];
    for (std::size_t i = 1; i < n; ++i) rhs[i] = (rhs[i] - off_ * rhs[i - 1]) * inv_[i];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c_[i] * rhs[i + 1];
  }

 private:
  U off_{};
  std::vector<U> c_;
  std::vector<U> inv_;
};

/// Index of the interval [x[i], x[i+1]] containing v for increasing x,
/// clamped to the valid range.
inline std::size_t locate(std::span<const double> x, double v) {
  if (v <= x.front()) return 0;
  if (v >= x.back()) return x.size() - 2;
  auto it = std::upper_bound(x.begin(), x.end(), v);
  return static_cast<std::size_t>(it - x.begin()) - 1;
}

inline double lerp_at(std::span<const double> x, std::span<const double> y, double v) {
  const std::size_t i = locate(x, v);
  const double h = x[i + 1] - x[i];
  const double w = std::clamp((v - x[i]) / h, 0.0, 1.0);
  return y[i] + w * (y[i + 1] - y[i]);
}

/// Fritsch-Carlson monotone cubic Hermite interpolant on increasing knots.
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("Pchip: need >= 2 matching knots");
    d_.assign(n, 0.0);
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      if (!(h[i] > 0.0)) throw std::invalid_argument("Pchip: knots must increase");
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (delta[i - 1] * delta[i] <= 0.0) continue;
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double operator()(double v) const {
    const std::size_t i = locate(x_, v);
    const double h = x_[i + 1] - x_[i];
    const double t = std::clamp((v - x_[i]) / h, 0.0, 1.0);
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] +
           (-2 * t3 + 3 * t2) * y_[i + 1] + (t3 - t2) * h * d_[i + 1];
  }

  double derivative(double v) const {
    const std::size_t i = locate(x_, v);
    const double h = x_[i + 1] - x_[i];
    const double t = std::clamp((v - x_[i]) / h, 0.0, 1.0);
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * y_[i] + (6 * t - 6 * t2) * y_[i + 1]) / h +
           (3 * t2 - 4 * t + 1) * d_[i] + (3 * t2 - 2 * t) * d_[i + 1];
  }

  const std::vector<double>& knots() const { return x_; }

 private:
  static double end_slope(double h0, double h1, double d0, double d1) {
    double d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(d) > std::abs(3 * d0)) return 3 * d0;
    return d;
  }

  std::vector<double> x_, y_, d_;
};

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return acc;
}

/// Ordinary least-squares slope and intercept of y on x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i];
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  return f;
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  v.back() = b;
  return v;
}

inline double mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace feshbach::detail
