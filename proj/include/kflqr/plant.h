#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kflqr/linalg.h"

namespace kflqr {

/// Axis-aligned box.
struct Box {
  Vector lo;
  Vector hi;

  bool Contains(const Vector& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  /// The box scaled by `factor` about its center.
  Box Scaled(double factor) const;
};

/// Control-affine plant ẋ = a(x) + B̲u.
struct PlantDef {
  std::string id;
  int dim = 0;
  int inputs = 0;
  std::function<Vector(const Vector&)> autonomous;
  Matrix b_underline;
  Box domain;
  Vector equilibrium;
  /// ∂a/∂x at the equilibrium when known in closed form.
  std::optional<Matrix> equilibrium_jacobian;

  Vector Evaluate(const Vector& x, const Vector& u) const {
    return autonomous(x) + b_underline * u;
  }
};

Vector Example1Field(const Vector& x);
Vector Example2Field(const Vector& x);

/// ẋ1 = x2, ẋ2 = −x1 − x2 − x2|x2| + u on [−2.5, 2.5]².
PlantDef Example1Plant();
/// ẋ1 = x2, ẋ2 = −5x1 − 0.3x2 − 5(x2³ + x2|x2|) − 10x2 sin(5x1)cos(2x1) + u
/// on [−1, 1]².
PlantDef Example2Plant();
/// ẋ = A x + B u with the origin as equilibrium.
PlantDef LinearPlant(std::string id, const Matrix& a, const Matrix& b,
                     const Box& domain);
/// Looks up "example1" or "example2".
PlantDef PlantById(const std::string& id);

using VectorField = std::function<Vector(const Vector&, const Vector&)>;

/// Classical RK4 step with u held over the step. Throws "integration" on a
/// non-finite result.
Vector Rk4Step(const VectorField& f, const Vector& x, const Vector& u,
               double dt);

/// Piecewise-constant input sampled every `dt`; column k is applied on
/// [k·dt, (k+1)·dt).
struct InputSignal {
  double dt = 0.0;
  Matrix values;  // m x K

  int length() const { return static_cast<int>(values.cols()); }
};

struct AprbsSpec {
  double amp_lo = -1.0;
  double amp_hi = 1.0;
  double hold_lo = 0.025;
  double hold_hi = 0.1;
};

/// Amplitude-modulated pseudo-random sequence: each segment draws an
/// amplitude from U[amp_lo, amp_hi] and a hold time from U[hold_lo, hold_hi]
/// rounded up to whole samples. Channels are independent. round(duration/dt)
/// samples are produced.
InputSignal Aprbs(const AprbsSpec& spec, int inputs, double duration, double dt,
                  std::uint64_t seed);

/// Simulates K = inputs.length() RK4 steps; returns the d x (K+1) states.
Matrix Simulate(const PlantDef& plant, const Vector& x0,
                const InputSignal& inputs);

/// `count` points equally spaced along the boundary of a 2-D box, starting
/// at (lo, lo) and running counterclockwise.
std::vector<Vector> EdgeInitialConditions(const Box& box, int count);
/// `per_axis`^2 grid points spanning a 2-D box, corners included.
std::vector<Vector> GridInitialConditions(const Box& box, int per_axis);
std::vector<Vector> RandomInitialConditions(const Box& box, int count,
                                            std::uint64_t seed);
/// Uniform random points on the boundary of a 2-D box.
std::vector<Vector> RandomPerimeterInitialConditions(const Box& box, int count,
                                                     std::uint64_t seed);

enum class DerivativeMode { kExact, kFiniteDifference };

struct DatasetMeta {
  std::string plant_id;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string mode = "exact";
  std::string forcing = "forced";
  std::string ic_spec;
  std::string config_hash;
  int trajectories = 0;
  int truncated = 0;
};

/// Records stored one per column.
struct Dataset {
  Matrix x;     // d x N
  Matrix u;     // m x N
  Matrix xdot;  // d x N
  DatasetMeta meta;

  int size() const { return static_cast<int>(x.cols()); }
  int state_dim() const { return static_cast<int>(x.rows()); }
  int input_dim() const { return static_cast<int>(u.rows()); }
};

struct GenerationSpec {
  double horizon = 5.0;
  double dt = 0.025;
  AprbsSpec aprbs;
  /// Unforced trajectories use u ≡ 0.
  bool forced = true;
  DerivativeMode mode = DerivativeMode::kExact;
  /// Trajectories leaving domain.Scaled(safety_factor) are truncated.
  double safety_factor = 10.0;
  std::uint64_t seed = 0;
};

/// Simulates every initial condition under its own APRBS (seed + index) and
/// records (x_k, u_k, ẋ_k). Exact mode stores f(x_k, u_k); finite-difference
/// mode stores central differences with one-sided ends.
Dataset GenerateDataset(const PlantDef& plant,
                        const std::vector<Vector>& initial_conditions,
                        const GenerationSpec& spec);

/// CSV with header x1..xd,u1..um,xdot1..xdotd, plus `<path>.meta` holding
/// key=value provenance.
void WriteDataset(const Dataset& data, const std::string& csv_path);
Dataset ReadDataset(const std::string& csv_path);

/// Concatenates records; metadata is taken from `a`.
Dataset Concatenate(const Dataset& a, const Dataset& b);

}  // namespace kflqr
