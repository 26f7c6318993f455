#include "kflqr/koopman_model.h"

#include <algorithm>
#include <cmath>

#include "kflqr/error.h"
#include "kflqr/io.h"

namespace kflqr {

LiftedLTIModel AssembleModel(const ModelParams& params,
                             const MonomialBasis& basis) {
  Require(params.b.rows() == basis.size() && params.c.cols() == basis.size(),
          "dimension", "B and C must match the lifted dimension");
  Require(params.a_underline.rows() == basis.dim(), "dimension",
          "A_underline must match the latent dimension");
  LiftedLTIModel model{basis,
                       params.diffeo,
                       params.a_underline,
                       LiftedMatrix(params.a_underline, basis),
                       params.b,
                       params.c,
                       "",
                       "",
                       0};
  return model;
}

Vector LiftState(const LiftedLTIModel& model, const Vector& x) {
  return Lift(Forward(model.diffeo, x), model.basis);
}

Vector Reconstruct(const LiftedLTIModel& model, const Vector& z) {
  Require(z.size() == model.lifted_dim(), "dimension",
          "lifted state has the wrong length");
  return model.c * z;
}

Matrix PredictLifted(const LiftedLTIModel& model, const Vector& z0,
                     const InputSignal& inputs) {
  const linalg::DiscretePair ab = linalg::Discretize(model.a, model.b, inputs.dt);
  Matrix z(model.lifted_dim(), inputs.length() + 1);
  z.col(0) = z0;
  for (int k = 0; k < inputs.length(); ++k) {
    z.col(k + 1) = ab.a_d * z.col(k) + ab.b_d * inputs.values.col(k);
  }
  return z;
}

Rollout PredictRollout(const LiftedLTIModel& model, const Vector& x0,
                       const InputSignal& inputs) {
  const Matrix z = PredictLifted(model, LiftState(model, x0), inputs);
  Rollout out;
  int valid = static_cast<int>(z.cols());
  for (int k = 0; k < z.cols(); ++k) {
    if (!z.col(k).allFinite()) {
      valid = k;
      out.truncated = true;
      break;
    }
  }
  out.states = model.c * z.leftCols(valid);
  return out;
}

Matrix NumericJacobian(const std::function<Vector(const Vector&)>& f,
                       const Vector& x, double step) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return jac;
}

LinearModel TaylorModel(const PlantDef& plant) {
  LinearModel model;
  model.a = plant.equilibrium_jacobian
                ? *plant.equilibrium_jacobian
                : NumericJacobian(plant.autonomous, plant.equilibrium);
  model.b = plant.b_underline;
  model.equilibrium = plant.equilibrium;
  return model;
}

Rollout PredictRollout(const LinearModel& model, const Vector& x0,
                       const InputSignal& inputs) {
  const linalg::DiscretePair ab = linalg::Discretize(model.a, model.b, inputs.dt);
  Rollout out;
  out.states.resize(model.a.rows(), inputs.length() + 1);
  Vector dx = x0 - model.equilibrium;
  out.states.col(0) = x0;
  for (int k = 0; k < inputs.length(); ++k) {
    dx = ab.a_d * dx + ab.b_d * inputs.values.col(k);
    out.states.col(k + 1) = dx + model.equilibrium;
  }
  return out;
}

double TrajectoryRmse(const Matrix& predicted, const Matrix& truth) {
  Require(predicted.rows() == truth.rows() && predicted.cols() == truth.cols(),
          "dimension", "prediction and truth differ in shape");
  return std::sqrt((predicted - truth).squaredNorm() /
                   static_cast<double>(truth.size()));
}

std::vector<TestTrajectory> MakeTestTrajectories(
    const PlantDef& plant, const std::vector<Vector>& initial_conditions,
    double horizon, double dt, const AprbsSpec& aprbs, std::uint64_t seed) {
  std::vector<TestTrajectory> out;
  for (size_t i = 0; i < initial_conditions.size(); ++i) {
    TestTrajectory t;
    t.inputs = Aprbs(aprbs, plant.inputs, horizon, dt, seed + i);
    t.truth = Simulate(plant, initial_conditions[i], t.inputs);
    out.push_back(std::move(t));
  }
  return out;
}

RmseSummary OpenLoopRmse(const Predictor& predictor,
                         const std::vector<TestTrajectory>& trajectories,
                         std::vector<Matrix>* predictions) {
  Require(!trajectories.empty(), "validation", "no test trajectories");
  RmseSummary s;
  const Eigen::Index d = trajectories.front().truth.rows();
  Vector state_sq = Vector::Zero(d);
  double pooled_sq = 0.0;
  double count = 0.0;
  for (const TestTrajectory& t : trajectories) {
    Rollout r = predictor(t.truth.col(0), t.inputs);
    double rmse = std::numeric_limits<double>::infinity();
    if (r.truncated) {
      ++s.truncated;
    } else {
      rmse = TrajectoryRmse(r.states, t.truth);
      const Matrix diff = r.states - t.truth;
      state_sq += diff.rowwise().squaredNorm();
      pooled_sq += diff.squaredNorm();
      count += static_cast<double>(t.truth.cols());
    }
    s.per_trajectory.push_back(rmse);
    if (predictions != nullptr) predictions->push_back(std::move(r.states));
  }
  const double n = static_cast<double>(s.per_trajectory.size());
  for (double v : s.per_trajectory) s.mean += v / n;
  for (double v : s.per_trajectory) {
    s.variance += (v - s.mean) * (v - s.mean) / std::max(n - 1.0, 1.0);
  }
  s.max = *std::max_element(s.per_trajectory.begin(), s.per_trajectory.end());
  std::vector<double> sorted = s.per_trajectory;
  std::sort(sorted.begin(), sorted.end());
  const size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1 ? sorted[mid]
                                    : 0.5 * (sorted[mid - 1] + sorted[mid]);
  s.pooled = count > 0 ? std::sqrt(pooled_sq / (count * d)) : 0.0;
  s.per_state = count > 0 ? Vector((state_sq / count).cwiseSqrt()) : Vector::Zero(d);
  return s;
}

void SaveModel(const LiftedLTIModel& model, const std::string& path) {
  ArrayFile file;
  file.SetScalar("plant", model.plant_id.empty() ? "-" : model.plant_id);
  file.SetScalar("config_hash",
                 model.config_hash.empty() ? "-" : model.config_hash);
  file.SetScalar("seed", std::to_string(model.seed));
  file.SetScalar("dim", std::to_string(model.dim()));
  file.SetScalar("inputs", std::to_string(model.inputs()));
  file.SetScalar("p_bar", std::to_string(model.basis.max_degree()));
  file.SetScalar("lifted_dim", std::to_string(model.lifted_dim()));
  Matrix exponents(model.lifted_dim(), model.dim());
  for (int i = 0; i < model.lifted_dim(); ++i) {
    for (int j = 0; j < model.dim(); ++j) exponents(i, j) = model.basis.index(i)[j];
  }
  file.SetArray("basis_exponents", exponents);
  file.SetArray("A_underline", model.a_underline);
  file.SetArray("B", model.b);
  file.SetArray("C", model.c);
  file.SetArray("A", model.a);
  StoreDiffeo(model.diffeo, file);
  file.Write(path, "kflqr-model", 1);
}

LiftedLTIModel LoadModel(const std::string& path) {
  const ArrayFile file = ArrayFile::Read(path, "kflqr-model", 1);
  const int dim = std::stoi(file.Scalar("dim"));
  const int p_bar = std::stoi(file.Scalar("p_bar"));
  MonomialBasis basis(dim, p_bar);
  const Matrix& exponents = file.Array("basis_exponents");
  Require(exponents.rows() == basis.size() && exponents.cols() == dim, "io",
          "basis exponent table has the wrong shape");
  for (int i = 0; i < basis.size(); ++i) {
    for (int j = 0; j < dim; ++j) {
      Require(exponents(i, j) == basis.index(i)[j], "io",
              "basis order in " + path + " differs from the canonical order");
    }
  }
  ModelParams params;
  params.a_underline = file.Array("A_underline");
  params.b = file.Array("B");
  params.c = file.Array("C");
  params.diffeo = LoadDiffeo(file, dim);
  LiftedLTIModel model = AssembleModel(params, basis);
  const Matrix& stored_a = file.Array("A");
  Require(stored_a.rows() == model.a.rows() && stored_a.cols() == model.a.cols() &&
              (stored_a - model.a).cwiseAbs().maxCoeff() <= 1e-12,
          "io", "stored A disagrees with LiftedMatrix(A_underline) in " + path);
  model.plant_id = file.Scalar("plant") == "-" ? "" : file.Scalar("plant");
  model.config_hash =
      file.Scalar("config_hash") == "-" ? "" : file.Scalar("config_hash");
  model.seed = std::stoull(file.Scalar("seed"));
  return model;
}

}  // namespace kflqr
