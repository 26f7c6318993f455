#include "kflqr/linalg.h"

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "kflqr/error.h"

namespace kflqr {
namespace linalg {

void RequireSquare(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw Error("dimension", std::string(what) + " must be square, got " +
                                 std::to_string(m.rows()) + "x" +
                                 std::to_string(m.cols()));
  }
}

void RequireFinite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error("non_finite", std::string(what) + " has non-finite entries");
  }
}

Matrix Expm(const Matrix& m) {
  RequireSquare(m, "expm argument");
  RequireFinite(m, "expm argument");
  const Eigen::Index n = m.rows();
  if (n == 0) return m;

  // Degree-13 Padé coefficients.
  static constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0,  129060195264000.0,   10559470521600.0,
      670442572800.0,      33522128640.0,       1323241920.0,
      40840800.0,          960960.0,            16380.0,
      182.0,               1.0};

  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  }
  const Matrix a = m / std::ldexp(1.0, squarings);
  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;

  const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) +
                         b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident;
  const Matrix u = a * u_inner;
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 +
                   b[4] * a4 + b[2] * a2 + b[0] * ident;

  Matrix result = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) result = result * result;
  return result;
}

DiscretePair Discretize(const Matrix& a, const Matrix& b, double dt) {
  RequireSquare(a, "A");
  Require(b.rows() == a.rows(), "dimension",
          "B must have as many rows as A");
  Require(dt > 0.0 && std::isfinite(dt), "validation", "dt must be > 0");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  Matrix augmented = Matrix::Zero(n + m, n + m);
  augmented.topLeftCorner(n, n) = a * dt;
  augmented.topRightCorner(n, m) = b * dt;
  const Matrix e = Expm(augmented);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, m)};
}

Matrix SolveLinear(const Matrix& a, const Matrix& b) {
  RequireSquare(a, "A");
  Require(b.rows() == a.rows(), "dimension",
          "right-hand side row count must match A");
  const Eigen::Index n = a.rows();
  Matrix lu = a;
  std::vector<Eigen::Index> perm(n);
  Matrix x = b;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index pivot;
    const double magnitude = lu.col(k).tail(n - k).cwiseAbs().maxCoeff(&pivot);
    pivot += k;
    if (magnitude < 1e-14) {
      throw Error("singular_matrix",
                  "pivot magnitude " + std::to_string(magnitude) +
                      " below 1e-14 in column " + std::to_string(k));
    }
    if (pivot != k) {
      lu.row(k).swap(lu.row(pivot));
      x.row(k).swap(x.row(pivot));
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double factor = lu(i, k) / lu(k, k);
      lu(i, k) = factor;
      lu.row(i).tail(n - k - 1) -= factor * lu.row(k).tail(n - k - 1);
      x.row(i) -= factor * x.row(k);
    }
  }
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    x.row(k) -= lu.row(k).tail(n - k - 1) * x.bottomRows(n - k - 1);
    x.row(k) /= lu(k, k);
  }
  return x;
}

double LogAbsDet(const Matrix& m) {
  RequireSquare(m, "matrix");
  Eigen::PartialPivLU<Matrix> lu(m);
  const auto& packed = lu.matrixLU();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double d = std::abs(packed(i, i));
    if (d == 0.0) return -std::numeric_limits<double>::infinity();
    sum += std::log(d);
  }
  return sum;
}

SignResult MatrixSign(const Matrix& m, double tol, int max_iterations) {
  RequireSquare(m, "sign argument");
  RequireFinite(m, "sign argument");
  const Eigen::Index n = m.rows();
  SignResult out;
  Matrix z = m;
  double previous_change = std::numeric_limits<double>::infinity();
  for (int k = 0; k < max_iterations; ++k) {
    Eigen::PartialPivLU<Matrix> lu(z);
    const double log_det = LogAbsDet(z);
    const double rcond = lu.rcond();
    if (!std::isfinite(log_det) || rcond < 1e-15) {
      throw Error("singular_matrix",
                  "sign iteration hit a singular iterate (eigenvalue on the "
                  "imaginary axis)");
    }
    const double c = std::exp(log_det / static_cast<double>(n));
    const Matrix next = 0.5 * (z / c + c * lu.inverse());
    const double change = (next - z).norm();
    const double scale = z.norm();
    z = next;
    out.iterations = k + 1;
    if (!z.allFinite()) break;
    if (change <= tol * scale) {
      out.converged = true;
      break;
    }
    // Rounding floor: the quadratic phase has ended without reaching tol.
    if (change <= 1e-7 * scale && change >= 0.5 * previous_change) {
      out.converged = true;
      break;
    }
    previous_change = change;
  }
  out.sign = std::move(z);
  return out;
}

bool IsHurwitz(const Matrix& m) {
  RequireSquare(m, "matrix");
  if (m.rows() == 0) return true;
  try {
    const SignResult s = MatrixSign(m);
    if (!s.converged) return false;
    const Matrix ident = Matrix::Identity(m.rows(), m.cols());
    return (s.sign + ident).norm() <=
           1e-6 * std::sqrt(static_cast<double>(m.rows()));
  } catch (const Error&) {
    return false;
  }
}

namespace {

Matrix CheckedSymmetric(const Matrix& m, const char* what) {
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym >= 1e-12) {
    throw Error("validation", std::string(what) +
                                  " is not symmetric (max asymmetry " +
                                  std::to_string(asym) + ")");
  }
  return 0.5 * (m + m.transpose());
}

}  // namespace

double CareResidual(const Matrix& a, const Matrix& b, const Matrix& q,
                    const Matrix& r, const Matrix& p) {
  const Matrix g = b * r.llt().solve(b.transpose());
  return (a.transpose() * p + p * a - p * g * p + q).norm();
}

Matrix SolveCare(const Matrix& a, const Matrix& b, const Matrix& q_in,
                 const Matrix& r_in, CareDiagnostics* diagnostics) {
  RequireSquare(a, "A");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.cols();
  Require(b.rows() == n, "dimension", "B must have as many rows as A");
  Require(q_in.rows() == n && q_in.cols() == n, "dimension",
          "Q must match the size of A");
  Require(r_in.rows() == m && r_in.cols() == m, "dimension",
          "R must be m x m with m the input count");
  RequireFinite(a, "A");
  RequireFinite(b, "B");
  RequireFinite(q_in, "Q");
  RequireFinite(r_in, "R");
  const Matrix q = CheckedSymmetric(q_in, "Q");
  const Matrix r = CheckedSymmetric(r_in, "R");
  Eigen::LLT<Matrix> r_llt(r);
  Require(r_llt.info() == Eigen::Success, "validation",
          "R must be positive definite");

  const Matrix g = b * r_llt.solve(b.transpose());
  Matrix h(2 * n, 2 * n);
  h << a, -g, -q, -a.transpose();

  SignResult s;
  try {
    s = MatrixSign(h);
  } catch (const Error&) {
    throw Error("care_unsolvable",
                "Hamiltonian has eigenvalues on the imaginary axis");
  }
  if (!s.converged) {
    throw Error("care_unsolvable",
                "sign iteration stagnated after " +
                    std::to_string(s.iterations) + " iterations");
  }

  // The stable invariant subspace span[I; P] is the kernel of sign(H) + I.
  const Matrix& w = s.sign;
  const Matrix ident = Matrix::Identity(n, n);
  Matrix lhs(2 * n, n);
  Matrix rhs(2 * n, n);
  lhs << w.topRightCorner(n, n), w.bottomRightCorner(n, n) + ident;
  rhs << -(w.topLeftCorner(n, n) + ident), -w.bottomLeftCorner(n, n);

  Eigen::JacobiSVD<Matrix> svd(lhs, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double condition =
      sv(n - 1) > 0.0 ? sv(0) / sv(n - 1)
                      : std::numeric_limits<double>::infinity();
  if (!(condition < 1e12)) {
    throw Error("care_unsolvable",
                "stable subspace is rank deficient (condition " +
                    std::to_string(condition) +
                    "); (A, B) is not numerically stabilizable");
  }
  Matrix p = svd.solve(rhs);
  p = (0.5 * (p + p.transpose())).eval();

  if (diagnostics != nullptr) {
    diagnostics->sign_iterations = s.iterations;
    diagnostics->subspace_condition = condition;
    diagnostics->residual = CareResidual(a, b, q, r, p);
  }
  return p;
}

}  // namespace linalg
}  // namespace kflqr
