#pragma once

// Row-wise building blocks shared by the packed forward pass and incremental
// decoding. Each forward has a matching backward.

#include <cmath>

#include "adlab/policy.hpp"

namespace adlab::ops {

inline constexpr double kRmsEps = 1e-5;

// y = g * x / sqrt(mean(x^2) + eps), row by row.
inline void rmsnorm_forward(const Matrix& x, const RowVector& gain, Matrix& y, Eigen::VectorXd& inv_rms) {
  const auto n = x.rows();
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  inv_rms.resize(n);
  y.resize(n, x.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    inv_rms(r) = 1.0 / std::sqrt(x.row(r).squaredNorm() * inv_d + kRmsEps);
    y.row(r) = x.row(r).cwiseProduct(gain) * inv_rms(r);
  }
}

// dx = inv * (g . dy) - x * inv^3 / d * sum(g . dy . x); dgain accumulates.
inline void rmsnorm_backward(const Matrix& dy, const Matrix& x, const Eigen::VectorXd& inv_rms,
                             const RowVector& gain, Matrix& dx, RowVector& dgain) {
  const auto n = x.rows();
  const double inv_d = 1.0 / static_cast<double>(x.cols());
  dx.resize(n, x.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const double inv = inv_rms(r);
    const RowVector gdy = dy.row(r).cwiseProduct(gain);
    dgain += dy.row(r).cwiseProduct(x.row(r)) * inv;
    const double proj = gdy.dot(x.row(r));
    dx.row(r) = gdy * inv - x.row(r) * (inv * inv * inv * inv_d * proj);
  }
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline void gelu_forward(const Matrix& u, Matrix& z) {
  z = u.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); });
}

inline void gelu_backward(const Matrix& u, const Matrix& dz, Matrix& du) {
  du.resize(u.rows(), u.cols());
  const double* up = u.data();
  const double* gp = dz.data();
  double* out = du.data();
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double v = up[i];
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double deriv = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    out[i] = gp[i] * deriv;
  }
}

}  // namespace adlab::ops
