#pragma once

#include <functional>
#include <random>

#include <Eigen/Dense>

#include "kflqr/linalg.h"

namespace kflqr {
namespace testing {

inline Matrix RandomMatrix(int rows, int cols, std::mt19937_64& rng,
                           double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
  }
  return m;
}

inline Vector RandomVector(int n, std::mt19937_64& rng, double scale = 1.0) {
  return RandomMatrix(n, 1, rng, scale);
}

inline Vector UniformVector(int n, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

/// Central-difference Jacobian of f at x.
inline Matrix FiniteDifferenceJacobian(
    const std::function<Vector(const Vector&)>& f, const Vector& x,
    double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    j.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline double MaxAbs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace testing
}  // namespace kflqr
