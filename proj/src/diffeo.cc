#include "kflqr/diffeo.h"

#include <cmath>

#include "kflqr/error.h"

namespace kflqr {

namespace {

MLPParams InitMlp(int in, const std::vector<int>& hidden, int out,
                  std::mt19937_64& rng) {
  MLPParams net;
  int fan_in = in;
  std::vector<int> widths = hidden;
  widths.push_back(out);
  for (size_t l = 0; l < widths.size(); ++l) {
    const int fan_out = widths[l];
    DenseLayer layer{Matrix::Zero(fan_out, fan_in), Vector::Zero(fan_out)};
    if (l + 1 < widths.size()) {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
          layer.weight(r, c) = dist(rng);
        }
      }
    }
    net.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return net;
}

Vector Gather(const Vector& x, const std::vector<int>& idx) {
  Vector out(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) out(k) = x(idx[k]);
  return out;
}

}  // namespace

std::vector<int> PassiveCoordinates(int dim, int layer_index) {
  const int half = dim / 2;
  std::vector<int> passive;
  if (layer_index % 2 == 0) {
    for (int i = 0; i < half; ++i) passive.push_back(i);
  } else {
    for (int i = half; i < dim; ++i) passive.push_back(i);
  }
  return passive;
}

DiffeoParams InitDiffeo(const DiffeoArchitecture& arch, std::mt19937_64& rng) {
  Require(arch.dim >= 2, "validation",
          "coupling layers need a state dimension of at least 2");
  Require(arch.coupling_layers >= 1, "validation",
          "at least one coupling layer is required");
  DiffeoParams params;
  params.dim = arch.dim;
  params.squash = arch.squash;
  for (int k = 0; k < arch.coupling_layers; ++k) {
    CouplingLayerParams layer;
    layer.passive = PassiveCoordinates(arch.dim, k);
    for (int i = 0; i < arch.dim; ++i) {
      bool is_passive = false;
      for (int p : layer.passive) is_passive |= (p == i);
      if (!is_passive) layer.active.push_back(i);
    }
    const int n_in = static_cast<int>(layer.passive.size());
    const int n_out = static_cast<int>(layer.active.size());
    layer.s_net = InitMlp(n_in, arch.hidden_widths, n_out, rng);
    layer.t_net = InitMlp(n_in, arch.hidden_widths, n_out, rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Vector MlpForward(const MLPParams& net, const Vector& x) {
  Vector h = x;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    h = net.layers[l].weight * h + net.layers[l].bias;
    if (l + 1 < net.layers.size()) h = h.unaryExpr([](double v) { return Elu(v); });
  }
  return h;
}

Matrix MlpJacobian(const MLPParams& net, const Vector& x) {
  Vector h = x;
  Matrix jac = Matrix::Identity(x.size(), x.size());
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const Vector pre = net.layers[l].weight * h + net.layers[l].bias;
    jac = net.layers[l].weight * jac;
    if (l + 1 < net.layers.size()) {
      h = pre.unaryExpr([](double v) { return Elu(v); });
      jac = pre.unaryExpr([](double v) { return EluDerivative(v); })
                .asDiagonal() *
            jac;
    } else {
      h = pre;
    }
  }
  return jac;
}

Vector CouplingForward(const CouplingLayerParams& layer, const Vector& x) {
  const Vector xa = Gather(x, layer.passive);
  const Vector s = MlpForward(layer.s_net, xa).unaryExpr(
      [](double v) { return ClampScale(v); });
  const Vector t = MlpForward(layer.t_net, xa);
  Vector y = x;
  for (size_t k = 0; k < layer.active.size(); ++k) {
    const int i = layer.active[k];
    y(i) = x(i) * std::exp(s(k)) + t(k);
  }
  return y;
}

Vector CouplingInverse(const CouplingLayerParams& layer, const Vector& y) {
  const Vector ya = Gather(y, layer.passive);
  const Vector s = MlpForward(layer.s_net, ya).unaryExpr(
      [](double v) { return ClampScale(v); });
  const Vector t = MlpForward(layer.t_net, ya);
  Vector x = y;
  for (size_t k = 0; k < layer.active.size(); ++k) {
    const int i = layer.active[k];
    x(i) = (y(i) - t(k)) * std::exp(-s(k));
  }
  return x;
}

Vector Forward(const DiffeoParams& params, const Vector& x) {
  Require(x.size() == params.dim, "dimension",
          "state length does not match the flow dimension");
  Vector y = x;
  for (const CouplingLayerParams& layer : params.layers) {
    y = CouplingForward(layer, y);
  }
  if (params.squash) y = y.array().tanh().matrix();
  return y;
}

Vector Inverse(const DiffeoParams& params, const Vector& y) {
  Require(y.size() == params.dim, "dimension",
          "latent length does not match the flow dimension");
  Vector x = y;
  if (params.squash) {
    Require(y.cwiseAbs().maxCoeff() < 1.0, "domain",
            "latent point outside the open unit box");
    x = x.array().atanh().matrix();
  }
  for (auto it = params.layers.rbegin(); it != params.layers.rend(); ++it) {
    x = CouplingInverse(*it, x);
  }
  return x;
}

Matrix Jacobian(const DiffeoParams& params, const Vector& x, double* log_det) {
  Require(x.size() == params.dim, "dimension",
          "state length does not match the flow dimension");
  const int d = params.dim;
  Vector y = x;
  Matrix jac = Matrix::Identity(d, d);
  double log_det_sum = 0.0;
  for (const CouplingLayerParams& layer : params.layers) {
    const Vector xa = Gather(y, layer.passive);
    const Vector s_raw = MlpForward(layer.s_net, xa);
    const Matrix ds_raw = MlpJacobian(layer.s_net, xa);
    const Vector t = MlpForward(layer.t_net, xa);
    const Matrix dt = MlpJacobian(layer.t_net, xa);

    Matrix local = Matrix::Identity(d, d);
    Vector next = y;
    for (size_t k = 0; k < layer.active.size(); ++k) {
      const int i = layer.active[k];
      const double th = std::tanh(s_raw(k) / 10.0);
      const double s = 10.0 * th;
      const double es = std::exp(s);
      const double clamp_slope = 1.0 - th * th;
      next(i) = y(i) * es + t(k);
      local(i, i) = es;
      log_det_sum += s;
      for (size_t q = 0; q < layer.passive.size(); ++q) {
        const int p = layer.passive[q];
        local(i, p) = y(i) * es * clamp_slope * ds_raw(k, q) + dt(k, q);
      }
    }
    jac = local * jac;
    y = next;
  }
  if (params.squash) {
    for (int i = 0; i < d; ++i) {
      const double th = std::tanh(y(i));
      const double slope = 1.0 - th * th;
      jac.row(i) *= slope;
      log_det_sum += std::log(slope);
    }
  }
  if (log_det != nullptr) *log_det = log_det_sum;
  return jac;
}

}  // namespace kflqr

namespace kflqr {

namespace {

Matrix IndexColumn(const std::vector<int>& idx) {
  Matrix m(idx.size(), 1);
  for (size_t k = 0; k < idx.size(); ++k) m(k, 0) = idx[k];
  return m;
}

std::vector<int> IndexList(const Matrix& m) {
  std::vector<int> out;
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    out.push_back(static_cast<int>(std::lround(m(k))));
  }
  return out;
}

void StoreMlp(const MLPParams& net, const std::string& prefix, ArrayFile& file) {
  for (size_t l = 0; l < net.layers.size(); ++l) {
    file.SetArray(prefix + ".w" + std::to_string(l), net.layers[l].weight);
    file.SetArray(prefix + ".b" + std::to_string(l), Matrix(net.layers[l].bias));
  }
}

MLPParams LoadMlp(const std::string& prefix, const ArrayFile& file) {
  MLPParams net;
  for (int l = 0; file.HasArray(prefix + ".w" + std::to_string(l)); ++l) {
    DenseLayer layer;
    layer.weight = file.Array(prefix + ".w" + std::to_string(l));
    layer.bias = file.Array(prefix + ".b" + std::to_string(l)).col(0);
    Require(layer.bias.size() == layer.weight.rows(), "io",
            prefix + ": bias length does not match the weight rows");
    if (!net.layers.empty()) {
      Require(layer.weight.cols() == net.layers.back().weight.rows(), "io",
              prefix + ": consecutive layer widths are incompatible");
    }
    net.layers.push_back(std::move(layer));
  }
  Require(!net.layers.empty(), "io", "missing network " + prefix);
  return net;
}

}  // namespace

void StoreDiffeo(const DiffeoParams& params, ArrayFile& file) {
  file.SetArray("flow.squash", Matrix::Constant(1, 1, params.squash ? 1.0 : 0.0));
  file.SetArray("flow.layers",
                Matrix::Constant(1, 1, static_cast<double>(params.layers.size())));
  for (size_t k = 0; k < params.layers.size(); ++k) {
    const std::string prefix = "layer" + std::to_string(k);
    const CouplingLayerParams& layer = params.layers[k];
    file.SetArray(prefix + ".passive", IndexColumn(layer.passive));
    file.SetArray(prefix + ".active", IndexColumn(layer.active));
    StoreMlp(layer.s_net, prefix + ".s", file);
    StoreMlp(layer.t_net, prefix + ".t", file);
  }
}

DiffeoParams LoadDiffeo(const ArrayFile& file, int dim) {
  DiffeoParams params;
  params.dim = dim;
  params.squash = file.Array("flow.squash")(0, 0) != 0.0;
  const int count = static_cast<int>(std::lround(file.Array("flow.layers")(0, 0)));
  for (int k = 0; k < count; ++k) {
    const std::string prefix = "layer" + std::to_string(k);
    CouplingLayerParams layer;
    layer.passive = IndexList(file.Array(prefix + ".passive"));
    layer.active = IndexList(file.Array(prefix + ".active"));
    Require(layer.passive.size() + layer.active.size() ==
                static_cast<size_t>(dim),
            "io", prefix + ": mask does not partition the coordinates");
    layer.s_net = LoadMlp(prefix + ".s", file);
    layer.t_net = LoadMlp(prefix + ".t", file);
    Require(layer.s_net.input_dim() == static_cast<int>(layer.passive.size()) &&
                layer.s_net.output_dim() == static_cast<int>(layer.active.size()),
            "io", prefix + ": scaling network shape does not match the mask");
    params.layers.push_back(std::move(layer));
  }
  return params;
}

}  // namespace kflqr
