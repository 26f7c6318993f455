#pragma once

#include <map>
#include <optional>
#include <vector>

#include "kflqr/linalg.h"

namespace kflqr {

/// Exponent vector α of the monomial y^α = Π y_j^{α_j}.
using MultiIndex = std::vector<int>;

/// One nonzero contribution of the latent matrix to the lifted matrix:
/// A_lift(row, col) += coef · A_underline(i, j).
struct LiftCoefficient {
  int row;
  int col;
  int i;
  int j;
  double coef;
};

/// All monomials of total degree 1..p̄ in `dim` variables, ordered by degree
/// and, within a degree, lexicographically descending in the exponents
/// (d = 2: y1^k, y1^{k-1} y2, ..., y2^k). The constant monomial is excluded.
class MonomialBasis {
 public:
  MonomialBasis(int dim, int max_degree);

  int dim() const { return dim_; }
  int max_degree() const { return max_degree_; }
  int size() const { return static_cast<int>(indices_.size()); }

  const std::vector<MultiIndex>& indices() const { return indices_; }
  const MultiIndex& index(int i) const { return indices_[i]; }
  int degree(int i) const { return degrees_[i]; }

  /// Position of `alpha` in the basis, if present.
  std::optional<int> IndexOf(const MultiIndex& alpha) const;

  /// Position of α_i − e_j, or -1 when that is the constant monomial.
  /// Only meaningful when α_i[j] > 0.
  int Lowered(int i, int j) const { return lowered_[i * dim_ + j]; }

  /// Sparse pattern of the linear map A_underline -> A_lift.
  const std::vector<LiftCoefficient>& lift_pattern() const {
    return lift_pattern_;
  }

  bool operator==(const MonomialBasis& other) const {
    return dim_ == other.dim_ && max_degree_ == other.max_degree_;
  }

 private:
  int dim_;
  int max_degree_;
  std::vector<MultiIndex> indices_;
  std::vector<int> degrees_;
  std::map<MultiIndex, int> position_;
  std::vector<int> lowered_;
  std::vector<LiftCoefficient> lift_pattern_;
};

/// z[i] = y^{α_i}.
Vector Lift(const Vector& y, const MonomialBasis& basis);

/// The matrix with d/dt y^[p̄] = A_lift y^[p̄] along ẏ = A_underline y.
/// Block diagonal by total degree and linear in A_underline.
Matrix LiftedMatrix(const Matrix& a_underline, const MonomialBasis& basis);

/// J[i][j] = ∂ y^{α_i} / ∂ y_j.
Matrix LiftJacobian(const Vector& y, const MonomialBasis& basis);

}  // namespace kflqr
