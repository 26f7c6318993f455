#pragma once

#include <functional>
#include <vector>

#include "kflqr/linalg.h"
#include "kflqr/monomial.h"

namespace kflqr {
namespace ad {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode differentiation over dense matrix-valued nodes.
///
/// Batched quantities are stored one sample per column. Small per-sample
/// matrices (Jacobians, n x n systems) are flattened row-major into the rows
/// of a column, so a batch of p x q matrices is a (p·q) x N node.
///
/// The tape is append-only: build the graph with the operations below, then
/// call Backward() once on a 1 x 1 node. Gradients accumulate only into nodes
/// that depend on a Parameter().
class Tape {
 public:
  Var Constant(Matrix value);
  Var Parameter(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last Backward() output; zeros if the node was unreached.
  Matrix grad(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  void Backward(Var output);

  Var MatMul(Var a, Var b);
  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  /// Element-wise product.
  Var Mul(Var a, Var b);
  /// scale·a + offset, element-wise.
  Var Affine(Var a, double scale, double offset);
  /// x + column, with the column broadcast across all columns of x.
  Var AddColumn(Var x, Var column);
  Var Exp(Var a);
  Var Tanh(Var a);
  Var Elu(Var a);
  /// Element-wise ELU'(a); differentiable (its derivative is ELU'').
  Var EluDerivative(Var a);
  /// Selects rows in the given order.
  Var Rows(Var a, std::vector<int> rows);
  Var VStack(const std::vector<Var>& parts);
  /// out[r·block + c] = m[r·block + c] ⊙ v[r] for each row group r.
  Var ScaleBlocks(Var m, Var v, int block);
  /// Per column: (p x q) · (q x r), both flattened row-major.
  Var BatchedMatMul(Var a, Var b, int p, int q, int r);
  /// Per column: solves J v = rhs for an n x n row-major J.
  Var BatchedSolve(Var jac, Var rhs, int n);
  /// Per column: the monomial lift of a dim x N latent batch.
  Var MonomialLift(Var y, const MonomialBasis& basis);
  /// The lifted matrix of a dim x dim latent matrix.
  Var LiftedMatrix(Var a, const MonomialBasis& basis);
  /// Σ_c w_c Σ_r x_rc², as a 1 x 1 node.
  Var WeightedSumSquares(Var x, const Vector& column_weights);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> backward;
  };

  Var Push(Matrix value, std::vector<Var> inputs,
           std::function<void(Tape&, int)> backward);
  bool NeedsGrad(Var v) const { return nodes_[v.id].needs_grad; }
  Matrix& GradRef(Var v);
  const Matrix& Adjoint(int id) const { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace ad
}  // namespace kflqr
