#pragma once

#include <random>
#include <vector>

#include "kflqr/io.h"
#include "kflqr/linalg.h"

namespace kflqr {

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Fully connected network: ELU on every hidden layer, identity on the output.
struct MLPParams {
  std::vector<DenseLayer> layers;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }

  template <typename F>
  void ForEachParameter(F&& f) {
    for (DenseLayer& l : layers) {
      f(l.weight);
      f(l.bias);
    }
  }
  template <typename F>
  void ForEachParameter(F&& f) const {
    for (const DenseLayer& l : layers) {
      f(l.weight);
      f(l.bias);
    }
  }
};

/// Affine coupling layer: passive coordinates are copied, active coordinates
/// become x_b ⊙ exp(s(x_a)) + t(x_a).
struct CouplingLayerParams {
  std::vector<int> passive;
  std::vector<int> active;
  MLPParams s_net;
  MLPParams t_net;
};

struct DiffeoParams {
  int dim = 0;
  std::vector<CouplingLayerParams> layers;
  /// Final element-wise tanh into the open unit box.
  bool squash = true;

  template <typename F>
  void ForEachParameter(F&& f) {
    for (CouplingLayerParams& l : layers) {
      l.s_net.ForEachParameter(f);
      l.t_net.ForEachParameter(f);
    }
  }
  template <typename F>
  void ForEachParameter(F&& f) const {
    for (const CouplingLayerParams& l : layers) {
      l.s_net.ForEachParameter(f);
      l.t_net.ForEachParameter(f);
    }
  }
};

struct DiffeoArchitecture {
  int dim = 2;
  int coupling_layers = 7;
  std::vector<int> hidden_widths = {120, 120, 120};
  bool squash = true;
};

/// ELU with unit scale and its first two derivatives.
inline double Elu(double v) { return v > 0.0 ? v : std::expm1(v); }
inline double EluDerivative(double v) { return v > 0.0 ? 1.0 : std::exp(v); }

/// Bound applied to scaling-network outputs, 10·tanh(s/10).
inline double ClampScale(double s) { return 10.0 * std::tanh(s / 10.0); }

/// Passive coordinates of coupling layer `layer_index` in a `dim`-dimensional
/// flow. Consecutive layers swap passive and active sets.
std::vector<int> PassiveCoordinates(int dim, int layer_index);

/// Glorot-uniform weights, zero biases and zero final layers, so the returned
/// flow is the identity (followed by tanh when squashing).
DiffeoParams InitDiffeo(const DiffeoArchitecture& arch, std::mt19937_64& rng);

Vector MlpForward(const MLPParams& net, const Vector& x);
/// Jacobian of the network output with respect to its input.
Matrix MlpJacobian(const MLPParams& net, const Vector& x);

Vector CouplingForward(const CouplingLayerParams& layer, const Vector& x);
Vector CouplingInverse(const CouplingLayerParams& layer, const Vector& y);

Vector Forward(const DiffeoParams& params, const Vector& x);
/// Throws "domain" if squashing is enabled and ‖y‖∞ ≥ 1.
Vector Inverse(const DiffeoParams& params, const Vector& y);

/// Exact Jacobian ∂d/∂x from the per-layer analytic Jacobians. When
/// `log_det` is given it receives log det J_d, which is finite because the
/// determinant is a product of positive scale factors.
Matrix Jacobian(const DiffeoParams& params, const Vector& x,
                double* log_det = nullptr);

/// Writes the flow as arrays `flow.squash`, `flow.layers` and, per layer k,
/// `layer<k>.passive`, `layer<k>.active`, `layer<k>.{s,t}.w<l>`,
/// `layer<k>.{s,t}.b<l>` (weights out x in, biases out x 1).
void StoreDiffeo(const DiffeoParams& params, ArrayFile& file);
DiffeoParams LoadDiffeo(const ArrayFile& file, int dim);

}  // namespace kflqr
