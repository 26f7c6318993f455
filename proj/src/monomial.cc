#include "kflqr/monomial.h"

#include "kflqr/error.h"

namespace kflqr {

namespace {

// Exponent vectors of total degree `degree` in descending lexicographic order.
void EnumerateDegree(int dim, int degree, int position, MultiIndex& current,
                     std::vector<MultiIndex>& out) {
  if (position == dim - 1) {
    current[position] = degree;
    out.push_back(current);
    return;
  }
  for (int e = degree; e >= 0; --e) {
    current[position] = e;
    EnumerateDegree(dim, degree - e, position + 1, current, out);
  }
}

}  // namespace

MonomialBasis::MonomialBasis(int dim, int max_degree)
    : dim_(dim), max_degree_(max_degree) {
  Require(dim >= 1, "validation", "monomial basis needs dim >= 1");
  Require(max_degree >= 1, "validation", "monomial basis needs p_bar >= 1");
  MultiIndex scratch(dim, 0);
  for (int k = 1; k <= max_degree; ++k) {
    EnumerateDegree(dim, k, 0, scratch, indices_);
  }
  for (int i = 0; i < size(); ++i) {
    position_.emplace(indices_[i], i);
    int total = 0;
    for (int e : indices_[i]) total += e;
    degrees_.push_back(total);
  }

  lowered_.assign(static_cast<size_t>(size()) * dim, -1);
  for (int i = 0; i < size(); ++i) {
    for (int j = 0; j < dim; ++j) {
      if (indices_[i][j] == 0 || degrees_[i] == 1) continue;
      MultiIndex lower = indices_[i];
      --lower[j];
      lowered_[i * dim + j] = position_.at(lower);
    }
  }

  // d/dt y^α = Σ_i α_i y^{α − e_i} ẏ_i = Σ_{i,j} α_i A_ij y^{α − e_i + e_j}.
  for (int row = 0; row < size(); ++row) {
    const MultiIndex& alpha = indices_[row];
    for (int i = 0; i < dim; ++i) {
      if (alpha[i] == 0) continue;
      for (int j = 0; j < dim; ++j) {
        MultiIndex target = alpha;
        --target[i];
        ++target[j];
        lift_pattern_.push_back(
            {row, position_.at(target), i, j, static_cast<double>(alpha[i])});
      }
    }
  }
}

std::optional<int> MonomialBasis::IndexOf(const MultiIndex& alpha) const {
  auto it = position_.find(alpha);
  if (it == position_.end()) return std::nullopt;
  return it->second;
}

Vector Lift(const Vector& y, const MonomialBasis& basis) {
  Require(y.size() == basis.dim(), "dimension",
          "latent vector length does not match the basis");
  Vector z(basis.size());
  for (int i = 0; i < basis.size(); ++i) {
    if (basis.degree(i) == 1) {
      for (int j = 0; j < basis.dim(); ++j) {
        if (basis.index(i)[j] == 1) z(i) = y(j);
      }
      continue;
    }
    // Any variable present in α_i gives a parent already computed.
    for (int j = 0; j < basis.dim(); ++j) {
      if (basis.index(i)[j] > 0) {
        z(i) = z(basis.Lowered(i, j)) * y(j);
        break;
      }
    }
  }
  return z;
}

Matrix LiftedMatrix(const Matrix& a_underline, const MonomialBasis& basis) {
  Require(a_underline.rows() == basis.dim() &&
              a_underline.cols() == basis.dim(),
          "dimension", "latent matrix must be dim x dim");
  Matrix out = Matrix::Zero(basis.size(), basis.size());
  for (const LiftCoefficient& c : basis.lift_pattern()) {
    out(c.row, c.col) += c.coef * a_underline(c.i, c.j);
  }
  return out;
}

Matrix LiftJacobian(const Vector& y, const MonomialBasis& basis) {
  const Vector z = Lift(y, basis);
  Matrix jac = Matrix::Zero(basis.size(), basis.dim());
  for (int i = 0; i < basis.size(); ++i) {
    for (int j = 0; j < basis.dim(); ++j) {
      const int e = basis.index(i)[j];
      if (e == 0) continue;
      const int lower = basis.Lowered(i, j);
      jac(i, j) = e * (lower < 0 ? 1.0 : z(lower));
    }
  }
  return jac;
}

}  // namespace kflqr
