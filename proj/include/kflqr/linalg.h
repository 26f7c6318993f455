#pragma once

#include <Eigen/Dense>

namespace kflqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/// Throws a "dimension" error unless `m` is square.
void RequireSquare(const Matrix& m, const char* what);

/// Throws a "non_finite" error if any entry is NaN or Inf.
void RequireFinite(const Matrix& m, const char* what);

/// Matrix exponential by the degree-13 Padé approximant with scaling and
/// squaring; the argument is scaled by 2^-s until its 1-norm is at most 0.5.
Matrix Expm(const Matrix& m);

struct DiscretePair {
  Matrix a_d;
  Matrix b_d;
};

/// Exact zero-order-hold discretization from the exponential of the augmented
/// generator dt·[[A, B], [0, 0]]. Well defined for singular A.
DiscretePair Discretize(const Matrix& a, const Matrix& b, double dt);

/// Partial-pivot LU solve of A X = B. Throws "singular_matrix" when a pivot
/// magnitude falls below 1e-14.
Matrix SolveLinear(const Matrix& a, const Matrix& b);

/// log|det M| via partial-pivot LU; -inf for exactly singular input.
double LogAbsDet(const Matrix& m);

struct SignResult {
  Matrix sign;
  int iterations = 0;
  bool converged = false;
};

/// Newton iteration for the matrix sign function with determinant scaling.
/// Stops when ‖Z_{k+1} − Z_k‖_F ≤ tol·‖Z_k‖_F or after max_iterations.
/// Throws "singular_matrix" if an iterate becomes singular (eigenvalue on the
/// imaginary axis).
SignResult MatrixSign(const Matrix& m, double tol = 1e-12,
                      int max_iterations = 100);

/// True iff every eigenvalue of `m` has strictly negative real part, decided
/// by checking sign(m) = −I. No eigensolver is involved.
bool IsHurwitz(const Matrix& m);

struct CareDiagnostics {
  int sign_iterations = 0;
  /// Condition number of the stacked subspace block the solution is read
  /// from. Large values indicate (A, B) is close to losing stabilizability.
  double subspace_condition = 0.0;
  /// ‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F of the returned P.
  double residual = 0.0;
};

/// Stabilizing solution of AᵀP + PA − PBR⁻¹BᵀP + Q = 0 by the matrix sign
/// function of the Hamiltonian [[A, −BR⁻¹Bᵀ], [−Q, −Aᵀ]].
///
/// Q and R must be symmetric; asymmetry below 1e-12 is symmetrized, anything
/// larger is rejected with a "validation" error. Throws "care_unsolvable" when
/// the sign iteration stagnates or the stable subspace does not have full rank.
Matrix SolveCare(const Matrix& a, const Matrix& b, const Matrix& q,
                 const Matrix& r, CareDiagnostics* diagnostics = nullptr);

/// ‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F.
double CareResidual(const Matrix& a, const Matrix& b, const Matrix& q,
                    const Matrix& r, const Matrix& p);

}  // namespace linalg
}  // namespace kflqr
