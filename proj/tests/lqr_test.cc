#include "kflqr/lqr.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "kflqr/error.h"
#include "test_util.h"

namespace kflqr {
namespace {

using testing::MaxAbs;
using testing::RandomMatrix;
using testing::UniformVector;

Matrix Mat(int rows, int cols, std::initializer_list<double> v) {
  Matrix m(rows, cols);
  int i = 0;
  for (double e : v) {
    m(i / cols, i % cols) = e;
    ++i;
  }
  return m;
}

PlantDef Integrator() {
  return LinearPlant("integrator", Mat(1, 1, {0.0}), Mat(1, 1, {1.0}),
                     {Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)});
}

PlantDef ToyLinearPlant() {
  return LinearPlant("toy", Mat(2, 2, {0.0, 1.0, -2.0, -1.0}), Mat(2, 1, {0.0, 1.0}),
                     {Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)});
}

// Identity flow, p̄ = 1 and C = I: the lifted model is the plant itself.
LiftedLTIModel ExactModel(const PlantDef& plant) {
  ModelParams p;
  p.diffeo.dim = plant.dim;
  p.diffeo.squash = false;
  p.a_underline = *plant.equilibrium_jacobian;
  p.b = plant.b_underline;
  p.c = Matrix::Identity(plant.dim, plant.dim);
  return AssembleModel(p, MonomialBasis(plant.dim, 1));
}

LiftedLTIModel RandomModel(std::mt19937_64& rng) {
  DiffeoArchitecture arch;
  arch.coupling_layers = 2;
  arch.hidden_widths = {4};
  arch.squash = true;
  const MonomialBasis basis(2, 3);
  ModelParams p;
  p.diffeo = InitDiffeo(arch, rng);
  p.diffeo.ForEachParameter(
      [&](auto& m) { m = RandomMatrix(m.rows(), m.cols(), rng, 0.3); });
  p.a_underline = Mat(2, 2, {-0.3, 1.0, -1.0, -0.2});
  p.b = RandomMatrix(basis.size(), 1, rng);
  p.c = RandomMatrix(2, basis.size(), rng);
  return AssembleModel(p, basis);
}

TEST(ClosedLoop, ScalarIntegratorCostMatchesClosedForm) {
  // ẋ = u, Q = R = 1: K = 1, x = x0 e^{−t}, J = x0²(1 − e^{−2T}).
  const PlantDef plant = Integrator();
  const LinearController c = TaylorLqrBaseline(plant, Mat(1, 1, {1.0}), Mat(1, 1, {1.0}));
  EXPECT_NEAR(c.k(0, 0), 1.0, 1e-10);
  const double x0 = 0.8;
  const ClosedLoopResult res =
      ClosedLoopSim(plant, [&](const Vector& x) { return Policy(c, x); },
                    Vector::Constant(1, x0), 10.0, 0.005, Mat(1, 1, {1.0}),
                    Mat(1, 1, {1.0}));
  EXPECT_TRUE(res.stable);
  const double expected = x0 * x0 * (1.0 - std::exp(-20.0));
  EXPECT_NEAR(res.j, expected, 5e-3 * expected);  // sample-and-hold is O(dt)
  // Held input: x_{k+1} = (1 − K dt) x_k exactly, cost 2x² per sample.
  const double decay = 1.0 - c.k(0, 0) * 0.005;
  double discrete = 0.0, xk = x0;
  for (int k = 0; k < 2000; ++k) {
    const double next = xk * decay;
    discrete += 0.5 * 0.005 * 2.0 * (xk * xk + next * next);
    xk = next;
  }
  EXPECT_NEAR(res.j, discrete, 1e-12);
  EXPECT_NEAR(res.j_x, res.j_u, 1e-12);
  EXPECT_EQ(res.states.cols(), 2001);
  EXPECT_DOUBLE_EQ(res.time(2000), 10.0);
  EXPECT_NEAR(res.states(0, 2000), x0 * std::exp(-10.0), 1e-5);
  EXPECT_NEAR(res.inputs(0, 0), -x0, 1e-10);
}

TEST(ClosedLoop, TrapezoidCostOfAConstantInputIsExact) {
  // u ≡ 1 on ẋ = u gives x = t and J_x = T³/3 up to O(dt²).
  const PlantDef plant = LinearPlant("integrator", Mat(1, 1, {0.0}), Mat(1, 1, {1.0}),
                                     {Vector::Constant(1, -10.0), Vector::Constant(1, 10.0)});
  const ClosedLoopResult res = ClosedLoopSim(
      plant, [](const Vector&) { return Vector::Ones(1); }, Vector::Zero(1), 2.0, 0.01,
      Mat(1, 1, {1.0}), Mat(1, 1, {3.0}));
  EXPECT_NEAR(res.j_u, 6.0, 1e-12);
  EXPECT_NEAR(res.j_x, 8.0 / 3.0, 1e-4);
  EXPECT_NEAR(res.states(0, 200), 2.0, 1e-12);
}

TEST(ClosedLoop, DivergenceIsReportedAsUnstable) {
  const PlantDef plant = Integrator();
  const ClosedLoopResult res = ClosedLoopSim(
      plant, [](const Vector& x) { return Vector(10.0 * x); }, Vector::Constant(1, 0.5),
      10.0, 0.005, Mat(1, 1, {1.0}), Mat(1, 1, {1.0}));
  EXPECT_FALSE(res.stable);
  EXPECT_EQ(res.j, std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isnan(res.states(0, 2000)));
}

TEST(ClosedLoop, RejectsBadArguments) {
  const PlantDef plant = Integrator();
  const FeedbackLaw zero = [](const Vector&) { return Vector::Zero(1); };
  EXPECT_THROW(ClosedLoopSim(plant, zero, Vector::Zero(1), 0.0, 0.01, Mat(1, 1, {1.0}),
                             Mat(1, 1, {1.0})),
               Error);
  EXPECT_THROW(ClosedLoopSim(plant, zero, Vector::Zero(1), 1.0, 0.01, Matrix::Identity(2, 2),
                             Mat(1, 1, {1.0})),
               Error);
}

TEST(Synthesize, ExactModelReproducesDirectLqr) {
  const PlantDef plant = ToyLinearPlant();
  const Matrix q = 10.0 * Matrix::Identity(2, 2), r = Mat(1, 1, {1.0});
  const LinearController direct = TaylorLqrBaseline(plant, q, r);
  const LqrController kf = Synthesize(ExactModel(plant), q, r, plant.equilibrium);
  EXPECT_LT(MaxAbs(kf.k - direct.k), 1e-7);
  EXPECT_LT(kf.diagnostics.residual, 1e-8);
  EXPECT_EQ(kf.lift_at_equilibrium, 0.0);
  std::mt19937_64 rng(60);
  for (int i = 0; i < 5; ++i) {
    const Vector x = UniformVector(2, -1.0, 1.0, rng);
    EXPECT_LT(MaxAbs(Policy(kf, x) - Policy(direct, x)), 1e-6);
  }
}

TEST(Synthesize, GainSatisfiesTheLiftedRiccatiEquation) {
  std::mt19937_64 rng(61);
  const LiftedLTIModel m = RandomModel(rng);
  const Matrix q = 10.0 * Matrix::Identity(2, 2), r = Mat(1, 1, {2.0});
  const LqrOptions options;
  const LqrController c = Synthesize(m, q, r, Vector::Zero(2), options);
  const Matrix q_lift = m.c.transpose() * q * m.c +
                        options.ridge * Matrix::Identity(m.lifted_dim(), m.lifted_dim());
  const Matrix residual = m.a.transpose() * c.p + c.p * m.a -
                          c.p * m.b * r.inverse() * m.b.transpose() * c.p + q_lift;
  EXPECT_LT(MaxAbs(residual), 1e-8 * (1.0 + MaxAbs(c.p)));
  EXPECT_LT(MaxAbs(c.k - r.inverse() * m.b.transpose() * c.p), 1e-10);
  EXPECT_TRUE(linalg::IsHurwitz(m.a - m.b * c.k));
}

TEST(Synthesize, RecenteringZeroesTheInputAtTheEquilibrium) {
  std::mt19937_64 rng(62);
  const LiftedLTIModel m = RandomModel(rng);
  const Matrix q = Matrix::Identity(2, 2), r = Mat(1, 1, {1.0});
  const Vector eq = Vector::Zero(2);
  const LqrController centered = Synthesize(m, q, r, eq);
  EXPECT_GT(centered.lift_at_equilibrium, 0.0);
  EXPECT_EQ(centered.z_ref, LiftState(m, eq));
  EXPECT_EQ(Policy(centered, eq).norm(), 0.0);
  LqrOptions raw;
  raw.recenter = false;
  const LqrController uncentered = Synthesize(m, q, r, eq, raw);
  EXPECT_EQ(uncentered.z_ref.norm(), 0.0);
  EXPECT_GT(Policy(uncentered, eq).norm(), 0.0);
}

TEST(Synthesize, InputLimitsClip) {
  const PlantDef plant = ToyLinearPlant();
  LqrOptions options;
  options.u_limits = Box{Vector::Constant(1, -0.1), Vector::Constant(1, 0.1)};
  const LqrController c =
      Synthesize(ExactModel(plant), 10.0 * Matrix::Identity(2, 2), Mat(1, 1, {1.0}),
                 plant.equilibrium, options);
  EXPECT_EQ(Policy(c, Vector::Constant(2, 1.0))(0), -0.1);
  EXPECT_EQ(Policy(c, Vector::Constant(2, -1.0))(0), 0.1);
}

TEST(Synthesize, UnstabilizableModelIsRejected) {
  ModelParams p;
  p.diffeo.dim = 2;
  p.diffeo.squash = false;
  p.a_underline = Matrix::Identity(2, 2);
  p.b = Matrix::Zero(2, 1);
  p.c = Matrix::Identity(2, 2);
  try {
    Synthesize(AssembleModel(p, MonomialBasis(2, 1)), Matrix::Identity(2, 2),
               Mat(1, 1, {1.0}), Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "care_unsolvable");
  }
}

TEST(Synthesize, RejectsBadWeights) {
  const PlantDef plant = ToyLinearPlant();
  const LiftedLTIModel m = ExactModel(plant);
  EXPECT_THROW(Synthesize(m, Matrix::Identity(3, 3), Mat(1, 1, {1.0}), plant.equilibrium),
               Error);
  LqrOptions options;
  options.ridge = -1.0;
  EXPECT_THROW(Synthesize(m, Matrix::Identity(2, 2), Mat(1, 1, {1.0}), plant.equilibrium,
                          options),
               Error);
}

TEST(Statistics, PercentReduction) {
  EXPECT_DOUBLE_EQ(PercentReduction(5.0, 10.0), 50.0);
  EXPECT_DOUBLE_EQ(PercentReduction(12.0, 10.0), -20.0);
  EXPECT_EQ(PercentReduction(0.0, 0.0), 0.0);
}

TEST(Statistics, SummarizeUsesSampleVariance) {
  const CostStats s = Summarize({4.0, 1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.variance, 5.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(Summarize({7.0, 1.0, 3.0}).median, 3.0);
}

TEST(Compare, StatisticsCoverInitialConditionsWhereBothLoopsAreStable) {
  const PlantDef plant = Integrator();
  const Matrix q = Mat(1, 1, {1.0}), r = Mat(1, 1, {1.0});
  // The first law diverges from positive states only.
  const FeedbackLaw kf = [](const Vector& x) {
    return Vector(x(0) > 0.0 ? 10.0 * x : -2.0 * x);
  };
  const FeedbackLaw base = [](const Vector& x) { return Vector(-x); };
  const std::vector<Vector> ics = {Vector::Constant(1, -0.5), Vector::Constant(1, 0.5),
                                   Vector::Constant(1, -1.0)};
  const CostReport rep = Compare(plant, kf, base, ics, 5.0, 0.01, q, r);
  EXPECT_EQ(rep.kf.stable_count(), 2);
  EXPECT_EQ(rep.baseline.stable_count(), 3);
  EXPECT_EQ(rep.compared, 2);
  const double mean_kf = 0.5 * (rep.kf.j[0] + rep.kf.j[2]);
  const double mean_base = 0.5 * (rep.baseline.j[0] + rep.baseline.j[2]);
  EXPECT_DOUBLE_EQ(rep.kf_j.mean, mean_kf);
  EXPECT_DOUBLE_EQ(rep.reduction_mean_j, 100.0 * (mean_base - mean_kf) / mean_base);

  const std::string dir = ::testing::TempDir();
  WriteCostCsv(rep, dir + "/costs.csv");
  WriteCostSummary(rep, dir + "/summary.csv", "abcd");
  std::ifstream csv(dir + "/costs.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "ic,controller,x0_1,J,J_x,J_u,stable");
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 8), "0,kf,-0.");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 5);
  std::ifstream summary(dir + "/summary.csv");
  std::getline(summary, line);
  EXPECT_EQ(line, "# config_hash=abcd");
  std::getline(summary, line);
  EXPECT_EQ(line, "# compared=2 kf_stable=2 taylor_stable=3 total=3");
  std::getline(summary, line);
  EXPECT_EQ(line, "metric,kf,taylor,reduction_percent");
  std::getline(summary, line);
  EXPECT_EQ(line.substr(0, 7), "mean_J,");
}

TEST(ControllerFile, RoundTripIsExact) {
  std::mt19937_64 rng(63);
  const LiftedLTIModel m = RandomModel(rng);
  LqrOptions options;
  options.u_limits = Box{Vector::Constant(1, -2.0), Vector::Constant(1, 3.0)};
  const LqrController c =
      Synthesize(m, Matrix::Identity(2, 2), Mat(1, 1, {1.0}), Vector::Zero(2), options);
  const std::string path = ::testing::TempDir() + "/ctrl.kfc";
  SaveController(c, path);
  const LqrController back = LoadController(path, m);
  EXPECT_EQ(back.k, c.k);
  EXPECT_EQ(back.p, c.p);
  EXPECT_EQ(back.z_ref, c.z_ref);
  EXPECT_EQ(back.options.ridge, c.options.ridge);
  ASSERT_TRUE(back.options.u_limits.has_value());
  EXPECT_EQ(back.options.u_limits->hi(0), 3.0);
  const Vector x = UniformVector(2, -1.0, 1.0, rng);
  EXPECT_EQ(Policy(back, x), Policy(c, x));
  EXPECT_THROW(LoadController(path, ExactModel(ToyLinearPlant())), Error);
}

}  // namespace
}  // namespace kflqr
