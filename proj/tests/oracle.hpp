#pragma once

// Independent double-precision reference implementations used by the tests.
// Everything here is plain loops over std::vector and never calls the
// library's tensor operations.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "yoto/tensor.hpp"

namespace oracle {

using Mat = std::vector<double>;  // row-major

inline Mat to_mat(const yoto::Tensor& t) { return Mat(t.data().begin(), t.data().end()); }

// a [m,k] * b [k,n]
inline Mat matmul(const Mat& a, const Mat& b, std::size_t m, std::size_t k, std::size_t n) {
  Mat c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

inline double gelu(double x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// x [m,in] -> gelu(x w1 + b1) w2 + b2
inline Mat mlp(const Mat& x, std::size_t m, const yoto::Tensor& w1, const yoto::Tensor& b1, const yoto::Tensor& w2,
               const yoto::Tensor& b2) {
  const std::size_t in = w1.dim(0), hid = w1.dim(1), out = w2.dim(1);
  Mat h = matmul(x, to_mat(w1), m, in, hid);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < hid; ++j) h[i * hid + j] = gelu(h[i * hid + j] + b1.at(j));
  Mat y = matmul(h, to_mat(w2), m, hid, out);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < out; ++j) y[i * out + j] += b2.at(j);
  return y;
}

// Full attention softmax(q k^T / sqrt(d) + mask) v where allowed(i, j) == false
// contributes -inf. q [lq,d], k,v [lk,d].
template <class Allowed>
Mat masked_attention(const Mat& q, const Mat& k, const Mat& v, std::size_t lq, std::size_t lk, std::size_t d,
                     Allowed allowed) {
  Mat out(lq * d, 0.0);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> s(lk);
  for (std::size_t i = 0; i < lq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < lk; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      s[j] = allowed(i, j) ? dot * inv : -std::numeric_limits<double>::infinity();
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (std::size_t j = 0; j < lk; ++j) {
      s[j] = std::exp(s[j] - mx);  // exp(-inf) == 0
      z += s[j];
    }
    for (std::size_t j = 0; j < lk; ++j)
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] += s[j] / z * v[j * d + c];
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : std::numeric_limits<double>::infinity();
}

template <class T>
double max_abs_diff(std::span<const T> a, const Mat& b) {
  Mat av(a.begin(), a.end());
  return max_abs_diff(std::span<const double>(av), std::span<const double>(b));
}

// Pearson correlation written out term by term.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Ranks of distinct values, 1-based, by counting smaller elements.
inline std::vector<double> distinct_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t smaller = 0;
    for (double v : x) smaller += v < x[i];
    r[i] = static_cast<double>(smaller + 1);
  }
  return r;
}

}  // namespace oracle
