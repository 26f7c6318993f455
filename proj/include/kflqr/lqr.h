#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kflqr/koopman_model.h"
#include "kflqr/linalg.h"
#include "kflqr/plant.h"

namespace kflqr {

struct LqrOptions {
  /// Q_lift = CᵀQC + ridge·I. Zero is allowed.
  double ridge = 1e-9;
  /// Feed back z − ψ(x*) instead of z, so u(x*) = 0 even when ψ(x*) ≠ 0.
  bool recenter = true;
  /// Optional saturation box for u.
  std::optional<Box> u_limits;
};

/// Lifted-state feedback u = −K(ψ(x) − z_ref).
struct LqrController {
  explicit LqrController(LiftedLTIModel m) : model(std::move(m)) {}

  LiftedLTIModel model;
  Matrix k;  // m x D
  Matrix p;  // D x D
  Matrix q;
  Matrix r;
  Vector z_ref;
  LqrOptions options;
  linalg::CareDiagnostics diagnostics;
  /// ‖ψ(x*)‖₂, reported whether or not recentering is on.
  double lift_at_equilibrium = 0.0;
};

/// Solves the CARE of (A, B, CᵀQC + ridge·I, R) and sets K = R⁻¹BᵀP. Throws
/// "care_unsolvable" if A − BK is not Hurwitz.
LqrController Synthesize(const LiftedLTIModel& model, const Matrix& q,
                         const Matrix& r, const Vector& equilibrium,
                         const LqrOptions& options = {});

Vector Policy(const LqrController& controller, const Vector& x);

/// u = −K(x − x*).
struct LinearController {
  Matrix k;  // m x d
  Matrix p;
  Vector equilibrium;
  std::optional<Box> u_limits;
};

/// LQR on the plant's Jacobian linearization at the equilibrium.
LinearController TaylorLqrBaseline(const PlantDef& plant, const Matrix& q,
                                   const Matrix& r);

Vector Policy(const LinearController& controller, const Vector& x);

using FeedbackLaw = std::function<Vector(const Vector&)>;

struct ClosedLoopResult {
  Vector time;     // K+1 samples
  Matrix states;   // d x (K+1)
  Matrix inputs;   // m x (K+1), u at each sample
  double j = 0.0;  // j_x + j_u
  double j_x = 0.0;
  double j_u = 0.0;
  bool stable = true;
};

/// Simulates the plant under sample-and-hold feedback (u recomputed every dt,
/// RK4 in between) and integrates (x − x*)ᵀQ(x − x*) and uᵀRu by the
/// trapezoidal rule. A state that turns non-finite or leaves
/// domain.Scaled(blowup_factor) marks the loop unstable with infinite costs.
ClosedLoopResult ClosedLoopSim(const PlantDef& plant, const FeedbackLaw& law,
                               const Vector& x0, double horizon, double dt,
                               const Matrix& q, const Matrix& r,
                               double blowup_factor = 50.0);

struct CostStats {
  double mean = 0.0;
  double variance = 0.0;  // sample variance
  double median = 0.0;
};

struct ControllerCosts {
  std::vector<double> j;
  std::vector<double> j_x;
  std::vector<double> j_u;
  std::vector<bool> stable;

  int stable_count() const;
};

struct CostReport {
  std::vector<Vector> initial_conditions;
  ControllerCosts kf;
  ControllerCosts baseline;
  /// Statistics over initial conditions where both loops are stable.
  int compared = 0;
  CostStats kf_j, kf_j_x, kf_j_u;
  CostStats baseline_j, baseline_j_x, baseline_j_u;
  /// 100·(1 − KF/baseline).
  double reduction_mean_j = 0.0;
  double reduction_var_j_u = 0.0;
  double reduction_mean_j_u = 0.0;
};

/// 100·(1 − kf/baseline), and 0 when both are 0.
double PercentReduction(double kf, double baseline);

CostStats Summarize(const std::vector<double>& values);

CostReport Compare(const PlantDef& plant, const FeedbackLaw& kf,
                   const FeedbackLaw& baseline,
                   const std::vector<Vector>& initial_conditions,
                   double horizon, double dt, const Matrix& q,
                   const Matrix& r, double blowup_factor = 50.0);

/// One row per initial condition per controller:
/// ic,controller,x0_1..x0_d,J,J_x,J_u,stable.
void WriteCostCsv(const CostReport& report, const std::string& path);
/// metric,kf,baseline,reduction_percent rows mirroring the comparison table.
void WriteCostSummary(const CostReport& report, const std::string& path,
                      const std::string& config_hash = "");

/// Gain, Riccati solution, weights, reference and options. The model is
/// stored separately.
void SaveController(const LqrController& controller, const std::string& path);
/// Reads a controller file and attaches `model`; the gain must match its
/// lifted dimension.
LqrController LoadController(const std::string& path,
                             const LiftedLTIModel& model);

}  // namespace kflqr
