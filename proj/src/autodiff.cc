#include "kflqr/autodiff.h"

#include <string>

#include "kflqr/error.h"

namespace kflqr {
namespace ad {

namespace {

void RequireSameShape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error("dimension", std::string(op) + ": shape mismatch " +
                                 std::to_string(a.rows()) + "x" +
                                 std::to_string(a.cols()) + " vs " +
                                 std::to_string(b.rows()) + "x" +
                                 std::to_string(b.cols()));
  }
}

}  // namespace

Var Tape::Constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var{size() - 1};
}

Var Tape::Parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var{size() - 1};
}

Var Tape::Push(Matrix value, std::vector<Var> inputs,
               std::function<void(Tape&, int)> backward) {
  bool needs = false;
  for (Var in : inputs) needs |= NeedsGrad(in);
  nodes_.push_back(
      Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var{size() - 1};
}

Matrix& Tape::GradRef(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::Backward(Var output) {
  Require(value(output).rows() == 1 && value(output).cols() == 1, "dimension",
          "Backward needs a scalar output");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  GradRef(output)(0, 0) = 1.0;
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.grad.size() != 0) n.backward(*this, id);
  }
}

Var Tape::MatMul(Var a, Var b) {
  Require(value(a).cols() == value(b).rows(), "dimension",
          "MatMul: inner dimensions differ");
  return Push(value(a) * value(b), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    if (t.NeedsGrad(a)) t.GradRef(a).noalias() += g * t.value(b).transpose();
    if (t.NeedsGrad(b)) t.GradRef(b).noalias() += t.value(a).transpose() * g;
  });
}

Var Tape::Add(Var a, Var b) {
  RequireSameShape(value(a), value(b), "Add");
  return Push(value(a) + value(b), {a, b}, [a, b](Tape& t, int self) {
    if (t.NeedsGrad(a)) t.GradRef(a) += t.Adjoint(self);
    if (t.NeedsGrad(b)) t.GradRef(b) += t.Adjoint(self);
  });
}

Var Tape::Sub(Var a, Var b) {
  RequireSameShape(value(a), value(b), "Sub");
  return Push(value(a) - value(b), {a, b}, [a, b](Tape& t, int self) {
    if (t.NeedsGrad(a)) t.GradRef(a) += t.Adjoint(self);
    if (t.NeedsGrad(b)) t.GradRef(b) -= t.Adjoint(self);
  });
}

Var Tape::Mul(Var a, Var b) {
  RequireSameShape(value(a), value(b), "Mul");
  return Push(value(a).cwiseProduct(value(b)), {a, b},
              [a, b](Tape& t, int self) {
                const Matrix& g = t.Adjoint(self);
                if (t.NeedsGrad(a)) t.GradRef(a) += g.cwiseProduct(t.value(b));
                if (t.NeedsGrad(b)) t.GradRef(b) += g.cwiseProduct(t.value(a));
              });
}

Var Tape::Affine(Var a, double scale, double offset) {
  Matrix out = (scale * value(a).array() + offset).matrix();
  return Push(std::move(out), {a}, [a, scale](Tape& t, int self) {
    t.GradRef(a) += scale * t.Adjoint(self);
  });
}

Var Tape::AddColumn(Var x, Var column) {
  Require(value(column).cols() == 1 && value(column).rows() == value(x).rows(),
          "dimension", "AddColumn: column shape mismatch");
  Matrix out = value(x).colwise() + value(column).col(0);
  return Push(std::move(out), {x, column}, [x, column](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    if (t.NeedsGrad(x)) t.GradRef(x) += g;
    if (t.NeedsGrad(column)) t.GradRef(column) += g.rowwise().sum();
  });
}

Var Tape::Exp(Var a) {
  return Push(value(a).array().exp().matrix(), {a}, [a](Tape& t, int self) {
    t.GradRef(a) += t.Adjoint(self).cwiseProduct(t.value(Var{self}));
  });
}

Var Tape::Tanh(Var a) {
  return Push(value(a).array().tanh().matrix(), {a}, [a](Tape& t, int self) {
    const auto y = t.value(Var{self}).array();
    t.GradRef(a) += (t.Adjoint(self).array() * (1.0 - y * y)).matrix();
  });
}

Var Tape::Elu(Var a) {
  const auto x = value(a).array();
  Matrix out = (x > 0.0).select(x, x.expm1()).matrix();
  return Push(std::move(out), {a}, [a](Tape& t, int self) {
    const auto x = t.value(a).array();
    const auto slope = (x > 0.0).select(Eigen::ArrayXXd::Ones(x.rows(), x.cols()),
                                        x.exp());
    t.GradRef(a) += (t.Adjoint(self).array() * slope).matrix();
  });
}

Var Tape::EluDerivative(Var a) {
  const auto x = value(a).array();
  Matrix out =
      (x > 0.0).select(Eigen::ArrayXXd::Ones(x.rows(), x.cols()), x.exp()).matrix();
  return Push(std::move(out), {a}, [a](Tape& t, int self) {
    const auto x = t.value(a).array();
    const auto curvature = (x > 0.0).select(
        Eigen::ArrayXXd::Zero(x.rows(), x.cols()), t.value(Var{self}).array());
    t.GradRef(a) += (t.Adjoint(self).array() * curvature).matrix();
  });
}

Var Tape::Rows(Var a, std::vector<int> rows) {
  const Matrix& src = value(a);
  Matrix out(rows.size(), src.cols());
  for (size_t k = 0; k < rows.size(); ++k) {
    Require(rows[k] >= 0 && rows[k] < src.rows(), "dimension",
            "Rows: index out of range");
    out.row(k) = src.row(rows[k]);
  }
  return Push(std::move(out), {a}, [a, rows = std::move(rows)](Tape& t, int self) {
    Matrix& ga = t.GradRef(a);
    const Matrix& g = t.Adjoint(self);
    for (size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(k);
  });
}

Var Tape::VStack(const std::vector<Var>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts.front()).cols();
  for (Var p : parts) {
    Require(value(p).cols() == cols, "dimension", "VStack: column mismatch");
    rows += value(p).rows();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    out.middleRows(offset, value(p).rows()) = value(p);
    offset += value(p).rows();
  }
  return Push(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    Eigen::Index offset = 0;
    for (Var p : parts) {
      const Eigen::Index r = t.value(p).rows();
      if (t.NeedsGrad(p)) t.GradRef(p) += g.middleRows(offset, r);
      offset += r;
    }
  });
}

Var Tape::ScaleBlocks(Var m, Var v, int block) {
  const Matrix& mv = value(m);
  const Matrix& vv = value(v);
  Require(mv.rows() == vv.rows() * block && mv.cols() == vv.cols(), "dimension",
          "ScaleBlocks: shape mismatch");
  Matrix out(mv.rows(), mv.cols());
  for (Eigen::Index r = 0; r < vv.rows(); ++r) {
    for (int c = 0; c < block; ++c) {
      out.row(r * block + c) = mv.row(r * block + c).cwiseProduct(vv.row(r));
    }
  }
  return Push(std::move(out), {m, v}, [m, v, block](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    const Matrix& mv = t.value(m);
    const Matrix& vv = t.value(v);
    for (Eigen::Index r = 0; r < vv.rows(); ++r) {
      for (int c = 0; c < block; ++c) {
        const Eigen::Index row = r * block + c;
        if (t.NeedsGrad(m)) t.GradRef(m).row(row) += g.row(row).cwiseProduct(vv.row(r));
        if (t.NeedsGrad(v)) t.GradRef(v).row(r) += g.row(row).cwiseProduct(mv.row(row));
      }
    }
  });
}

Var Tape::BatchedMatMul(Var a, Var b, int p, int q, int r) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  Require(av.rows() == p * q && bv.rows() == q * r && av.cols() == bv.cols(),
          "dimension", "BatchedMatMul: shape mismatch");
  Matrix out = Matrix::Zero(p * r, av.cols());
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < r; ++j) {
      for (int k = 0; k < q; ++k) {
        out.row(i * r + j) += av.row(i * q + k).cwiseProduct(bv.row(k * r + j));
      }
    }
  }
  return Push(std::move(out), {a, b}, [a, b, p, q, r](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < r; ++j) {
        for (int k = 0; k < q; ++k) {
          const auto gij = g.row(i * r + j);
          if (t.NeedsGrad(a)) t.GradRef(a).row(i * q + k) += gij.cwiseProduct(bv.row(k * r + j));
          if (t.NeedsGrad(b)) t.GradRef(b).row(k * r + j) += gij.cwiseProduct(av.row(i * q + k));
        }
      }
    }
  });
}

namespace {

// Solves the row-major n x n system stored in column `c` of `jac`.
Vector SolveColumn(const Matrix& jac, const Vector& rhs, int n, Eigen::Index c,
                   bool transpose) {
  if (n == 2) {
    const double a = jac(0, c), b = jac(1, c), d = jac(2, c), e = jac(3, c);
    const double det = a * e - b * d;
    Vector out(2);
    if (!transpose) {
      out(0) = (e * rhs(0) - b * rhs(1)) / det;
      out(1) = (-d * rhs(0) + a * rhs(1)) / det;
    } else {
      out(0) = (e * rhs(0) - d * rhs(1)) / det;
      out(1) = (-b * rhs(0) + a * rhs(1)) / det;
    }
    return out;
  }
  Matrix local(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) local(i, k) = jac(i * n + k, c);
  }
  if (transpose) return local.transpose().partialPivLu().solve(rhs);
  return local.partialPivLu().solve(rhs);
}

}  // namespace

Var Tape::BatchedSolve(Var jac, Var rhs, int n) {
  const Matrix& jv = value(jac);
  const Matrix& rv = value(rhs);
  Require(jv.rows() == n * n && rv.rows() == n && jv.cols() == rv.cols(),
          "dimension", "BatchedSolve: shape mismatch");
  Matrix out(n, rv.cols());
  for (Eigen::Index c = 0; c < rv.cols(); ++c) {
    out.col(c) = SolveColumn(jv, rv.col(c), n, c, false);
  }
  return Push(std::move(out), {jac, rhs}, [jac, rhs, n](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    const Matrix& jv = t.value(jac);
    const Matrix& sol = t.value(Var{self});
    // v = J⁻¹ r  =>  r̄ = J⁻ᵀ v̄,  J̄ = −r̄ vᵀ.
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      const Vector rbar = SolveColumn(jv, g.col(c), n, c, true);
      if (t.NeedsGrad(rhs)) t.GradRef(rhs).col(c) += rbar;
      if (t.NeedsGrad(jac)) {
        Matrix& gj = t.GradRef(jac);
        for (int i = 0; i < n; ++i) {
          for (int k = 0; k < n; ++k) gj(i * n + k, c) -= rbar(i) * sol(k, c);
        }
      }
    }
  });
}

Var Tape::MonomialLift(Var y, const MonomialBasis& basis) {
  const Matrix& yv = value(y);
  Require(yv.rows() == basis.dim(), "dimension",
          "MonomialLift: latent row count does not match the basis");
  Matrix z(basis.size(), yv.cols());
  for (int i = 0; i < basis.size(); ++i) {
    for (int j = 0; j < basis.dim(); ++j) {
      if (basis.index(i)[j] == 0) continue;
      const int lower = basis.Lowered(i, j);
      if (lower < 0) {
        z.row(i) = yv.row(j);
      } else {
        z.row(i) = z.row(lower).cwiseProduct(yv.row(j));
      }
      break;
    }
  }
  return Push(std::move(z), {y}, [y, &basis](Tape& t, int self) {
    const Matrix& g = t.Adjoint(self);
    const Matrix& z = t.value(Var{self});
    Matrix& gy = t.GradRef(y);
    for (int i = 0; i < basis.size(); ++i) {
      for (int j = 0; j < basis.dim(); ++j) {
        const int e = basis.index(i)[j];
        if (e == 0) continue;
        const int lower = basis.Lowered(i, j);
        if (lower < 0) {
          gy.row(j) += e * g.row(i);
        } else {
          gy.row(j) += e * g.row(i).cwiseProduct(z.row(lower));
        }
      }
    }
  });
}

Var Tape::LiftedMatrix(Var a, const MonomialBasis& basis) {
  return Push(kflqr::LiftedMatrix(value(a), basis), {a},
              [a, &basis](Tape& t, int self) {
                const Matrix& g = t.Adjoint(self);
                Matrix& ga = t.GradRef(a);
                for (const LiftCoefficient& c : basis.lift_pattern()) {
                  ga(c.i, c.j) += c.coef * g(c.row, c.col);
                }
              });
}

Var Tape::WeightedSumSquares(Var x, const Vector& column_weights) {
  const Matrix& xv = value(x);
  Require(column_weights.size() == xv.cols(), "dimension",
          "WeightedSumSquares: weight count mismatch");
  Matrix out(1, 1);
  out(0, 0) = (xv.colwise().squaredNorm().transpose().cwiseProduct(column_weights)).sum();
  return Push(std::move(out), {x}, [x, column_weights](Tape& t, int self) {
    const double g = t.Adjoint(self)(0, 0);
    t.GradRef(x) += (2.0 * g) * (t.value(x) * column_weights.asDiagonal());
  });
}

}  // namespace ad
}  // namespace kflqr
