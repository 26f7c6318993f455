#include "kflqr/training.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "kflqr/autodiff.h"
#include "kflqr/io.h"

namespace kflqr {

// ---------------------------------------------------------------------------
// ModelParams

std::vector<std::span<double>> ModelParams::Blocks() {
  std::vector<std::span<double>> out;
  ForEachParameter([&](auto& m) { out.emplace_back(m.data(), m.size()); });
  return out;
}

std::vector<std::span<const double>> ModelParams::Blocks() const {
  std::vector<std::span<const double>> out;
  ForEachParameter([&](const auto& m) { out.emplace_back(m.data(), m.size()); });
  return out;
}

int ModelParams::ParameterCount() const {
  int n = 0;
  ForEachParameter([&](const auto& m) { n += static_cast<int>(m.size()); });
  return n;
}

ModelParams ModelParams::ZerosLike() const {
  ModelParams z = *this;
  z.ForEachParameter([](auto& m) { m.setZero(); });
  return z;
}

std::vector<std::string> ModelParams::ParameterNames() const {
  std::vector<std::string> names = {"A_underline", "B", "C"};
  for (size_t k = 0; k < diffeo.layers.size(); ++k) {
    const std::string prefix = "layer" + std::to_string(k);
    for (const char* net : {"s", "t"}) {
      const MLPParams& mlp =
          net[0] == 's' ? diffeo.layers[k].s_net : diffeo.layers[k].t_net;
      for (size_t l = 0; l < mlp.layers.size(); ++l) {
        names.push_back(prefix + "." + net + ".w" + std::to_string(l));
        names.push_back(prefix + "." + net + ".b" + std::to_string(l));
      }
    }
  }
  return names;
}

void Hyperparams::Validate() const {
  Require(p_bar >= 1, "config", "p_bar must be >= 1");
  Require(learning_rate > 0.0 && learning_rate_final > 0.0, "config",
          "learning rates must be > 0");
  Require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "config",
          "ADAM betas must lie in [0, 1)");
  Require(epsilon > 0.0, "config", "ADAM epsilon must be > 0");
  Require(epochs >= 0, "config", "epochs must be >= 0");
  Require(batch_size >= 0, "config", "batch size must be >= 1 (or 0 for full)");
  Require(weights.prediction >= 0.0 && weights.reconstruction >= 0.0 &&
              weights.smooth_equivalence >= 0.0,
          "config", "loss weights must be nonnegative");
  Require(chunk_size >= 1, "config", "chunk size must be >= 1");
}

// ---------------------------------------------------------------------------
// Per-sample losses (plain evaluation)

double LossPrediction(const ModelParams& params, const MonomialBasis& basis,
                      const Vector& x, const Vector& u, const Vector& xdot) {
  const Vector z = Lift(Forward(params.diffeo, x), basis);
  const Vector zdot = LiftedMatrix(params.a_underline, basis) * z + params.b * u;
  return (xdot - params.c * zdot).squaredNorm();
}

double LossReconstruction(const ModelParams& params,
                          const MonomialBasis& basis, const Vector& x) {
  const Vector z = Lift(Forward(params.diffeo, x), basis);
  return (x - params.c * z).squaredNorm();
}

namespace {

constexpr double kMaxJacobianCondition = 1e12;

double FrobeniusCondition(const Matrix& j) {
  const Matrix inv = j.inverse();
  if (!inv.allFinite()) return std::numeric_limits<double>::infinity();
  return j.norm() * inv.norm();
}

}  // namespace

std::optional<double> LossSmoothEquivalence(const ModelParams& params,
                                            const Vector& x,
                                            const Vector& xdot) {
  const Matrix jac = Jacobian(params.diffeo, x);
  if (!(FrobeniusCondition(jac) <= kMaxJacobianCondition)) return std::nullopt;
  const Vector y = Forward(params.diffeo, x);
  const Vector v = linalg::SolveLinear(jac, params.a_underline * y);
  return (xdot - v).squaredNorm();
}

LossBreakdown TotalLoss(const ModelParams& params, const MonomialBasis& basis,
                        const Matrix& x, const Matrix& u, const Matrix& xdot,
                        const LossWeights& weights) {
  LossBreakdown out;
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto se = LossSmoothEquivalence(params, x.col(i), xdot.col(i));
    if (!se) {
      ++out.skipped;
      continue;
    }
    ++out.used;
    out.prediction += LossPrediction(params, basis, x.col(i), u.col(i), xdot.col(i));
    out.reconstruction += LossReconstruction(params, basis, x.col(i));
    out.smooth_equivalence += *se;
  }
  if (out.used > 0) {
    out.prediction /= out.used;
    out.reconstruction /= out.used;
    out.smooth_equivalence /= out.used;
  }
  out.total = weights.prediction * out.prediction +
              weights.reconstruction * out.reconstruction +
              weights.smooth_equivalence * out.smooth_equivalence;
  return out;
}

// ---------------------------------------------------------------------------
// Tape construction

namespace {

using ad::Tape;
using ad::Var;

struct MlpVars {
  std::vector<std::pair<Var, Var>> layers;  // (weight, bias)
};

struct CouplingVars {
  MlpVars s;
  MlpVars t;
};

struct ModelVars {
  Var a_underline;
  Var b;
  Var c;
  std::vector<CouplingVars> coupling;
  std::vector<Var> flat;  // ForEachParameter order
};

MlpVars RegisterMlp(Tape& tape, const MLPParams& net, std::vector<Var>& flat) {
  MlpVars vars;
  for (const DenseLayer& l : net.layers) {
    const Var w = tape.Parameter(l.weight);
    const Var b = tape.Parameter(Matrix(l.bias));
    flat.push_back(w);
    flat.push_back(b);
    vars.layers.emplace_back(w, b);
  }
  return vars;
}

ModelVars RegisterModel(Tape& tape, const ModelParams& params) {
  ModelVars vars;
  vars.a_underline = tape.Parameter(params.a_underline);
  vars.b = tape.Parameter(params.b);
  vars.c = tape.Parameter(params.c);
  vars.flat = {vars.a_underline, vars.b, vars.c};
  for (const CouplingLayerParams& layer : params.diffeo.layers) {
    CouplingVars cv;
    cv.s = RegisterMlp(tape, layer.s_net, vars.flat);
    cv.t = RegisterMlp(tape, layer.t_net, vars.flat);
    vars.coupling.push_back(std::move(cv));
  }
  return vars;
}

struct NetOutput {
  Var value;
  std::vector<Var> tangents;  // ∂value/∂input_p, one per input coordinate
};

NetOutput MlpWithTangents(Tape& tape, const MlpVars& net, Var input) {
  const Eigen::Index n_in = tape.value(input).rows();
  const Eigen::Index cols = tape.value(input).cols();
  NetOutput out;
  Var h = input;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const auto [w, b] = net.layers[l];
    if (l == 0) {
      for (Eigen::Index p = 0; p < n_in; ++p) {
        Matrix unit = Matrix::Zero(n_in, cols);
        unit.row(p).setOnes();
        out.tangents.push_back(tape.MatMul(w, tape.Constant(std::move(unit))));
      }
    } else {
      for (Var& tangent : out.tangents) tangent = tape.MatMul(w, tangent);
    }
    const Var pre = tape.AddColumn(tape.MatMul(w, h), b);
    if (l + 1 < net.layers.size()) {
      const Var slope = tape.EluDerivative(pre);
      for (Var& tangent : out.tangents) tangent = tape.Mul(slope, tangent);
      h = tape.Elu(pre);
    } else {
      h = pre;
    }
  }
  out.value = h;
  return out;
}

// Flattens per-input tangents (each n_out x N) into a row-major
// (n_out·n_in) x N batch of Jacobians.
Var StackJacobian(Tape& tape, const std::vector<Var>& tangents, int n_out) {
  const int n_in = static_cast<int>(tangents.size());
  const Var stacked = tape.VStack(tangents);  // row p·n_out + k
  std::vector<int> order;
  for (int k = 0; k < n_out; ++k) {
    for (int p = 0; p < n_in; ++p) order.push_back(p * n_out + k);
  }
  return tape.Rows(stacked, std::move(order));
}

struct FlowVars {
  Var y;    // d x N
  Var jac;  // d·d x N
};

FlowVars BuildFlow(Tape& tape, const DiffeoParams& diffeo,
                   const std::vector<CouplingVars>& coupling, Var x) {
  const int d = diffeo.dim;
  const Eigen::Index cols = tape.value(x).cols();
  Matrix ident = Matrix::Zero(d * d, cols);
  for (int i = 0; i < d; ++i) ident.row(i * d + i).setOnes();
  FlowVars flow{x, tape.Constant(std::move(ident))};

  for (size_t k = 0; k < diffeo.layers.size(); ++k) {
    const CouplingLayerParams& layer = diffeo.layers[k];
    const int np = static_cast<int>(layer.passive.size());
    const int na = static_cast<int>(layer.active.size());
    std::vector<int> jac_passive_rows, jac_active_rows;
    for (int p : layer.passive) {
      for (int j = 0; j < d; ++j) jac_passive_rows.push_back(p * d + j);
    }
    for (int a : layer.active) {
      for (int j = 0; j < d; ++j) jac_active_rows.push_back(a * d + j);
    }

    const Var xa = tape.Rows(flow.y, layer.passive);
    const Var xb = tape.Rows(flow.y, layer.active);
    const Var jac_a = tape.Rows(flow.jac, jac_passive_rows);
    const Var jac_b = tape.Rows(flow.jac, jac_active_rows);

    NetOutput s_out = MlpWithTangents(tape, coupling[k].s, xa);
    const NetOutput t_out = MlpWithTangents(tape, coupling[k].t, xa);

    // s = 10 tanh(s_raw / 10)
    const Var th = tape.Tanh(tape.Affine(s_out.value, 0.1, 0.0));
    const Var s = tape.Affine(th, 10.0, 0.0);
    const Var clamp_slope = tape.Affine(tape.Mul(th, th), -1.0, 1.0);
    for (Var& tangent : s_out.tangents) tangent = tape.Mul(clamp_slope, tangent);

    const Var ds = StackJacobian(tape, s_out.tangents, na);
    const Var dt = StackJacobian(tape, t_out.tangents, na);
    const Var ds_dx = tape.BatchedMatMul(ds, jac_a, na, np, d);
    const Var dt_dx = tape.BatchedMatMul(dt, jac_a, na, np, d);

    const Var es = tape.Exp(s);
    const Var xb_es = tape.Mul(xb, es);
    const Var yb = tape.Add(xb_es, t_out.value);
    const Var jac_b_new =
        tape.Add(tape.Add(tape.ScaleBlocks(jac_b, es, d),
                          tape.ScaleBlocks(ds_dx, xb_es, d)),
                 dt_dx);

    // Reassemble coordinates in their original order.
    std::vector<int> order(d), jac_order(d * d);
    for (int q = 0; q < np; ++q) order[layer.passive[q]] = q;
    for (int q = 0; q < na; ++q) order[layer.active[q]] = np + q;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) jac_order[i * d + j] = order[i] * d + j;
    }
    flow.y = tape.Rows(tape.VStack({xa, yb}), order);
    flow.jac = tape.Rows(tape.VStack({jac_a, jac_b_new}), jac_order);
  }
  if (diffeo.squash) {
    flow.y = tape.Tanh(flow.y);
    const Var slope = tape.Affine(tape.Mul(flow.y, flow.y), -1.0, 1.0);
    flow.jac = tape.ScaleBlocks(flow.jac, slope, d);
  }
  return flow;
}

struct ChunkTerms {
  Var prediction;
  Var reconstruction;
  Var smooth_equivalence;
  Var total;
  int skipped = 0;
};

ChunkTerms BuildChunk(Tape& tape, const ModelParams& params,
                      const ModelVars& vars, const MonomialBasis& basis,
                      const Matrix& x, const Matrix& u, const Matrix& xdot,
                      const LossWeights& weights) {
  const int d = params.diffeo.dim;
  const Var xv = tape.Constant(x);
  const Var uv = tape.Constant(u);
  const Var xdotv = tape.Constant(xdot);
  const FlowVars flow = BuildFlow(tape, params.diffeo, vars.coupling, xv);

  // Mask ill-conditioned flow Jacobians out of every term.
  ChunkTerms terms;
  Vector mask = Vector::Ones(x.cols());
  const Matrix& jv = tape.value(flow.jac);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Matrix j(d, d);
    for (int i = 0; i < d; ++i) {
      for (int k = 0; k < d; ++k) j(i, k) = jv(i * d + k, c);
    }
    if (!(FrobeniusCondition(j) <= kMaxJacobianCondition)) {
      mask(c) = 0.0;
      ++terms.skipped;
    }
  }

  const Var z = tape.MonomialLift(flow.y, basis);
  const Var a_lift = tape.LiftedMatrix(vars.a_underline, basis);
  const Var zdot =
      tape.Add(tape.MatMul(a_lift, z), tape.MatMul(vars.b, uv));
  const Var pred_residual = tape.Sub(xdotv, tape.MatMul(vars.c, zdot));
  const Var rec_residual = tape.Sub(xv, tape.MatMul(vars.c, z));

  // Ill-conditioned columns would poison the solve; give them an identity.
  Var jac = flow.jac;
  if (terms.skipped > 0) {
    Matrix fix = Matrix::Zero(d * d, x.cols());
    Matrix keep = Matrix::Ones(d * d, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(c) == 0.0) {
        keep.col(c).setZero();
        for (int i = 0; i < d; ++i) fix(i * d + i, c) = 1.0;
      }
    }
    jac = tape.Add(tape.Mul(jac, tape.Constant(keep)), tape.Constant(fix));
  }
  const Var latent_rate = tape.MatMul(vars.a_underline, flow.y);
  const Var se_residual = tape.Sub(xdotv, tape.BatchedSolve(jac, latent_rate, d));

  terms.prediction = tape.WeightedSumSquares(pred_residual, mask);
  terms.reconstruction = tape.WeightedSumSquares(rec_residual, mask);
  terms.smooth_equivalence = tape.WeightedSumSquares(se_residual, mask);
  terms.total = tape.Add(
      tape.Add(tape.Affine(terms.prediction, weights.prediction, 0.0),
               tape.Affine(terms.reconstruction, weights.reconstruction, 0.0)),
      tape.Affine(terms.smooth_equivalence, weights.smooth_equivalence, 0.0));
  return terms;
}

}  // namespace

Gradient GradTotalLoss(const ModelParams& params, const MonomialBasis& basis,
                       const Matrix& x, const Matrix& u, const Matrix& xdot,
                       const LossWeights& weights, LossBreakdown* loss,
                       int chunk_size) {
  Require(x.cols() == u.cols() && x.cols() == xdot.cols(), "dimension",
          "batch matrices have different sample counts");
  Require(x.rows() == params.diffeo.dim && xdot.rows() == params.diffeo.dim,
          "dimension", "batch state dimension does not match the model");
  Require(u.rows() == params.b.cols(), "dimension",
          "batch input dimension does not match B");
  Gradient grad = params.ZerosLike();
  auto grad_blocks = grad.Blocks();
  LossBreakdown sums;
  const Eigen::Index n = x.cols();
  for (Eigen::Index start = 0; start < n; start += chunk_size) {
    const Eigen::Index len = std::min<Eigen::Index>(chunk_size, n - start);
    Tape tape;
    const ModelVars vars = RegisterModel(tape, params);
    const ChunkTerms terms =
        BuildChunk(tape, params, vars, basis, x.middleCols(start, len),
                   u.middleCols(start, len), xdot.middleCols(start, len), weights);
    sums.prediction += tape.value(terms.prediction)(0, 0);
    sums.reconstruction += tape.value(terms.reconstruction)(0, 0);
    sums.smooth_equivalence += tape.value(terms.smooth_equivalence)(0, 0);
    sums.skipped += terms.skipped;
    sums.used += static_cast<int>(len) - terms.skipped;
    tape.Backward(terms.total);
    for (size_t k = 0; k < vars.flat.size(); ++k) {
      const Matrix g = tape.grad(vars.flat[k]);
      if (!g.allFinite()) {
        throw Error("training", "non-finite gradient in chunk starting at sample " +
                                    std::to_string(start) + " (parameter " +
                                    params.ParameterNames()[k] + ")");
      }
      std::span<double> dst = grad_blocks[k];
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += g.data()[i];
    }
  }
  const double scale = sums.used > 0 ? 1.0 / sums.used : 0.0;
  grad.ForEachParameter([scale](auto& m) { m *= scale; });
  if (loss != nullptr) {
    sums.prediction *= scale;
    sums.reconstruction *= scale;
    sums.smooth_equivalence *= scale;
    sums.total = weights.prediction * sums.prediction +
                 weights.reconstruction * sums.reconstruction +
                 weights.smooth_equivalence * sums.smooth_equivalence;
    *loss = sums;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// ADAM

AdamState InitAdam(const ModelParams& params) {
  return {params.ZerosLike(), params.ZerosLike(), 0};
}

void AdamStep(ModelParams& params, const Gradient& grad, AdamState& state,
              const Hyperparams& hyper, double learning_rate) {
  ++state.step;
  const double correction1 = 1.0 - std::pow(hyper.beta1, state.step);
  const double correction2 = 1.0 - std::pow(hyper.beta2, state.step);
  auto p = params.Blocks();
  const auto g = grad.Blocks();
  auto m = state.first_moment.Blocks();
  auto v = state.second_moment.Blocks();
  Require(p.size() == g.size(), "dimension", "gradient layout differs from parameters");
  for (size_t b = 0; b < p.size(); ++b) {
    for (size_t i = 0; i < p[b].size(); ++i) {
      m[b][i] = hyper.beta1 * m[b][i] + (1.0 - hyper.beta1) * g[b][i];
      v[b][i] = hyper.beta2 * v[b][i] + (1.0 - hyper.beta2) * g[b][i] * g[b][i];
      const double m_hat = m[b][i] / correction1;
      const double v_hat = v[b][i] / correction2;
      p[b][i] -= learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::uint64_t EpochSeed(std::uint64_t seed, int epoch) {
  // splitmix64 of the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(epoch) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix GatherColumns(const Matrix& m, const std::vector<int>& idx, size_t begin,
                     size_t end) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (size_t k = begin; k < end; ++k) out.col(k - begin) = m.col(idx[k]);
  return out;
}

Matrix LiftBatch(const ModelParams& params, const MonomialBasis& basis,
                 const Matrix& x) {
  Matrix z(basis.size(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    z.col(i) = Lift(Forward(params.diffeo, x.col(i)), basis);
  }
  return z;
}

}  // namespace

TrainingState InitTraining(const Dataset& data, const MonomialBasis& basis,
                           const Hyperparams& hyper) {
  hyper.Validate();
  Require(data.size() > 0, "training", "dataset is empty");
  const int d = data.state_dim();
  Require(d >= 2, "training", "training needs a state dimension of at least 2");
  Require(basis.dim() == d && basis.max_degree() == hyper.p_bar, "config",
          "monomial basis does not match the data or p_bar");

  std::mt19937_64 rng(hyper.seed);
  DiffeoArchitecture arch = hyper.architecture;
  arch.dim = d;
  TrainingState state;
  state.params.diffeo = InitDiffeo(arch, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  state.params.a_underline = -Matrix::Identity(d, d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) state.params.a_underline(i, j) += 0.01 * normal(rng);
  }
  state.params.b = Matrix::Zero(basis.size(), data.input_dim());

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const size_t probe = std::min<size_t>(order.size(), std::max(hyper.probe_samples, 1));
  const Matrix x_probe = GatherColumns(data.x, order, 0, probe);
  const Matrix z_probe = LiftBatch(state.params, basis, x_probe);
  // min ‖X − C Z‖_F  <=>  Zᵀ Cᵀ ≈ Xᵀ
  state.params.c = z_probe.transpose()
                       .completeOrthogonalDecomposition()
                       .solve(x_probe.transpose())
                       .transpose();
  state.adam = InitAdam(state.params);
  return state;
}

void RunEpochs(TrainingState& state, const Dataset& data,
               const MonomialBasis& basis, const Hyperparams& hyper,
               int until_epoch, bool freeze_b, const EpochCallback& on_epoch) {
  hyper.Validate();
  const int n = data.size();
  Require(n > 0, "training", "dataset is empty");
  const int batch = hyper.batch_size == 0 ? n : std::min(hyper.batch_size, n);
  const Matrix b_frozen = state.params.b;
  std::vector<int> order(n);
  for (int epoch = state.epochs_done; epoch < until_epoch; ++epoch) {
    const double progress =
        hyper.epochs > 1 ? static_cast<double>(epoch) / (hyper.epochs - 1) : 0.0;
    const double lr = hyper.learning_rate *
                      std::pow(hyper.learning_rate_final / hyper.learning_rate,
                               std::min(progress, 1.0));
    std::iota(order.begin(), order.end(), 0);
    if (batch < n) {
      std::mt19937_64 rng(EpochSeed(hyper.seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }
    EpochLog entry;
    entry.epoch = epoch + 1;
    int steps = 0;
    for (int start = 0; start < n; start += batch) {
      const size_t end = std::min(n, start + batch);
      LossBreakdown loss;
      Gradient grad = GradTotalLoss(
          state.params, basis, GatherColumns(data.x, order, start, end),
          GatherColumns(data.u, order, start, end),
          GatherColumns(data.xdot, order, start, end), hyper.weights, &loss,
          hyper.chunk_size);
      if (!std::isfinite(loss.total) || loss.total > 1e12) {
        state.log.push_back(entry);
        throw TrainingDiverged("loss diverged at epoch " +
                                   std::to_string(epoch + 1) + " (total " +
                                   std::to_string(loss.total) + ")",
                               state.log);
      }
      if (freeze_b) grad.b.setZero();
      AdamStep(state.params, grad, state.adam, hyper, lr);
      if (freeze_b) state.params.b = b_frozen;
      entry.prediction += loss.prediction;
      entry.reconstruction += loss.reconstruction;
      entry.smooth_equivalence += loss.smooth_equivalence;
      entry.total += loss.total;
      entry.skipped += loss.skipped;
      ++steps;
    }
    entry.prediction /= steps;
    entry.reconstruction /= steps;
    entry.smooth_equivalence /= steps;
    entry.total /= steps;
    state.log.push_back(entry);
    state.epochs_done = epoch + 1;
    if (on_epoch) on_epoch(state);
  }
}

Matrix FitInputMatrix(const ModelParams& params, const MonomialBasis& basis,
                      const Dataset& data) {
  const Matrix z = LiftBatch(params, basis, data.x);
  const Matrix residual =
      data.xdot - params.c * (LiftedMatrix(params.a_underline, basis) * z);
  // C·B ≈ M with M = argmin ‖R − M U‖_F, then the minimum-norm B.
  const Matrix m = data.u.transpose()
                       .completeOrthogonalDecomposition()
                       .solve(residual.transpose())
                       .transpose();
  return params.c.completeOrthogonalDecomposition().solve(m);
}

TrainingState Train(const Dataset& data, const MonomialBasis& basis,
                    const Hyperparams& hyper, const Dataset* unforced,
                    const EpochCallback& on_epoch) {
  if (hyper.mode == TrainingMode::kJoint) {
    TrainingState state = InitTraining(data, basis, hyper);
    RunEpochs(state, data, basis, hyper, hyper.epochs, false, on_epoch);
    return state;
  }
  Require(unforced != nullptr && unforced->size() > 0, "training",
          "two-phase training needs an unforced dataset");
  TrainingState state = InitTraining(*unforced, basis, hyper);
  state.params.b = Matrix::Zero(basis.size(), data.input_dim());
  RunEpochs(state, *unforced, basis, hyper, hyper.epochs, true, on_epoch);
  state.params.b = FitInputMatrix(state.params, basis, data);
  return state;
}

void WriteTrainingLog(const std::vector<EpochLog>& log, const std::string& path,
                      const std::string& config_hash) {
  std::ofstream out(path);
  Require(out.good(), "io", "cannot open " + path + " for writing");
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "epoch,loss_pred,loss_rec,loss_se,total,skipped_samples\n";
  out << std::setprecision(17);
  for (const EpochLog& e : log) {
    out << e.epoch << "," << e.prediction << "," << e.reconstruction << ","
        << e.smooth_equivalence << "," << e.total << "," << e.skipped << "\n";
  }
}

}  // namespace kflqr

namespace kflqr {

namespace {

void StoreNamed(const ModelParams& params, const std::string& prefix,
                ArrayFile& file) {
  const auto names = params.ParameterNames();
  size_t k = 0;
  params.ForEachParameter(
      [&](const auto& m) { file.SetArray(prefix + names[k++], Matrix(m)); });
}

void LoadNamed(ModelParams& params, const std::string& prefix,
               const ArrayFile& file) {
  const auto names = params.ParameterNames();
  size_t k = 0;
  params.ForEachParameter([&](auto& m) {
    const Matrix& stored = file.Array(prefix + names[k]);
    Require(stored.size() == m.size(), "io",
            "checkpoint array " + prefix + names[k] + " has the wrong size");
    std::copy(stored.data(), stored.data() + stored.size(), m.data());
    ++k;
  });
}

}  // namespace

void SaveCheckpoint(const TrainingState& state, const std::string& path,
                    const std::string& config_hash) {
  ArrayFile file;
  file.SetScalar("config_hash", config_hash.empty() ? "-" : config_hash);
  file.SetScalar("dim", std::to_string(state.params.diffeo.dim));
  file.SetScalar("epochs_done", std::to_string(state.epochs_done));
  file.SetScalar("adam_step", std::to_string(state.adam.step));
  file.SetArray("A_underline", state.params.a_underline);
  file.SetArray("B", state.params.b);
  file.SetArray("C", state.params.c);
  StoreDiffeo(state.params.diffeo, file);
  StoreNamed(state.adam.first_moment, "adam_m.", file);
  StoreNamed(state.adam.second_moment, "adam_v.", file);
  Matrix log(state.log.size(), 6);
  for (size_t i = 0; i < state.log.size(); ++i) {
    const EpochLog& e = state.log[i];
    log.row(i) << e.epoch, e.prediction, e.reconstruction, e.smooth_equivalence,
        e.total, e.skipped;
  }
  file.SetArray("log", log);
  file.Write(path, "kflqr-checkpoint", 1);
}

TrainingState LoadCheckpoint(const std::string& path,
                             std::string* config_hash) {
  const ArrayFile file = ArrayFile::Read(path, "kflqr-checkpoint", 1);
  if (config_hash != nullptr) {
    *config_hash = file.Scalar("config_hash") == "-" ? "" : file.Scalar("config_hash");
  }
  TrainingState state;
  const int dim = std::stoi(file.Scalar("dim"));
  state.epochs_done = std::stoi(file.Scalar("epochs_done"));
  state.params.a_underline = file.Array("A_underline");
  state.params.b = file.Array("B");
  state.params.c = file.Array("C");
  state.params.diffeo = LoadDiffeo(file, dim);
  state.adam = InitAdam(state.params);
  state.adam.step = std::stoll(file.Scalar("adam_step"));
  LoadNamed(state.adam.first_moment, "adam_m.", file);
  LoadNamed(state.adam.second_moment, "adam_v.", file);
  const Matrix& log = file.Array("log");
  for (Eigen::Index i = 0; i < log.rows(); ++i) {
    state.log.push_back({static_cast<int>(log(i, 0)), log(i, 1), log(i, 2),
                         log(i, 3), log(i, 4), static_cast<int>(log(i, 5))});
  }
  return state;
}

}  // namespace kflqr
