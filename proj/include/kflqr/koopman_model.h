#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kflqr/diffeo.h"
#include "kflqr/monomial.h"
#include "kflqr/plant.h"
#include "kflqr/training.h"

namespace kflqr {

/// The learned model  z₀ = ψ(x₀),  ż = A z + B u,  x̂ = C z  with
/// ψ = lift ∘ flow and A = LiftedMatrix(A_underline).
struct LiftedLTIModel {
  MonomialBasis basis;
  DiffeoParams diffeo;
  Matrix a_underline;
  Matrix a;
  Matrix b;
  Matrix c;

  std::string plant_id;
  std::string config_hash;
  std::uint64_t seed = 0;

  int dim() const { return basis.dim(); }
  int inputs() const { return static_cast<int>(b.cols()); }
  int lifted_dim() const { return basis.size(); }
};

/// A is always derived from A_underline here.
LiftedLTIModel AssembleModel(const ModelParams& params,
                             const MonomialBasis& basis);

Vector LiftState(const LiftedLTIModel& model, const Vector& x);
Vector Reconstruct(const LiftedLTIModel& model, const Vector& z);

struct Rollout {
  Matrix states;  // d x (K+1), column 0 is the reconstruction of z₀
  /// The lifted state became non-finite; `states` stops before it.
  bool truncated = false;
};

/// Lifts once, then iterates z_{k+1} = A_d z_k + B_d u_k with the exact ZOH
/// pair at the signal's sample period.
Rollout PredictRollout(const LiftedLTIModel& model, const Vector& x0,
                       const InputSignal& inputs);
/// The lifted trajectory D x (K+1) from a given z₀.
Matrix PredictLifted(const LiftedLTIModel& model, const Vector& z0,
                     const InputSignal& inputs);

/// Linearization ẋ = A (x − x*) + B u about the equilibrium.
struct LinearModel {
  Matrix a;
  Matrix b;
  Vector equilibrium;
};

/// Uses the plant's closed-form equilibrium Jacobian when available and
/// central finite differences otherwise.
LinearModel TaylorModel(const PlantDef& plant);
Matrix NumericJacobian(const std::function<Vector(const Vector&)>& f,
                       const Vector& x, double step = 1e-6);
Rollout PredictRollout(const LinearModel& model, const Vector& x0,
                       const InputSignal& inputs);

/// sqrt(mean over samples and states of (predicted − truth)²).
double TrajectoryRmse(const Matrix& predicted, const Matrix& truth);

struct TestTrajectory {
  InputSignal inputs;
  Matrix truth;  // d x (K+1)
};

/// Simulates the plant from each initial condition under its own APRBS
/// (seed + index).
std::vector<TestTrajectory> MakeTestTrajectories(
    const PlantDef& plant, const std::vector<Vector>& initial_conditions,
    double horizon, double dt, const AprbsSpec& aprbs, std::uint64_t seed);

struct RmseSummary {
  std::vector<double> per_trajectory;
  double mean = 0.0;
  double variance = 0.0;  // sample variance
  double max = 0.0;
  double median = 0.0;
  /// RMSE over all samples of all trajectories together.
  double pooled = 0.0;
  Vector per_state;
  int truncated = 0;
};

using Predictor = std::function<Rollout(const Vector&, const InputSignal&)>;

RmseSummary OpenLoopRmse(const Predictor& predictor,
                         const std::vector<TestTrajectory>& trajectories,
                         std::vector<Matrix>* predictions = nullptr);

/// Versioned text model file; field order is documented in
/// docs/model_format.md.
void SaveModel(const LiftedLTIModel& model, const std::string& path);
/// Rebuilds the basis and A from the stored exponents and A_underline and
/// rejects files whose stored A or basis order disagree (tolerance 1e-12).
LiftedLTIModel LoadModel(const std::string& path);

}  // namespace kflqr
