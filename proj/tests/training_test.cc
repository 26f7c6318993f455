#include "kflqr/training.h"

#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "test_util.h"

namespace kflqr {
namespace {

using testing::FiniteDifferenceJacobian;
using testing::MaxAbs;
using testing::RandomMatrix;
using testing::UniformVector;

Matrix LinearA() {
  Matrix a(2, 2);
  a << 0.0, 1.0, -2.0, -1.0;
  return a;
}

Matrix LinearB() {
  Matrix b(2, 1);
  b << 0.0, 1.0;
  return b;
}

Dataset LinearData(bool forced = true) {
  Box box{Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)};
  const PlantDef plant = LinearPlant("lin", LinearA(), LinearB(), box);
  GenerationSpec spec;
  spec.horizon = 0.5;
  spec.dt = 0.025;
  spec.seed = 3;
  spec.forced = forced;
  return GenerateDataset(plant, EdgeInitialConditions(box, 4), spec);
}

ModelParams RandomModel(int p_bar, bool squash, std::mt19937_64& rng,
                        int inputs = 1) {
  DiffeoArchitecture arch;
  arch.coupling_layers = 2;
  arch.hidden_widths = {4, 3};
  arch.squash = squash;
  const MonomialBasis basis(2, p_bar);
  ModelParams p;
  p.diffeo = InitDiffeo(arch, rng);
  p.diffeo.ForEachParameter(
      [&](auto& m) { m = RandomMatrix(m.rows(), m.cols(), rng, 0.3); });
  p.a_underline = RandomMatrix(2, 2, rng, 0.5);
  p.b = RandomMatrix(basis.size(), inputs, rng, 0.3);
  p.c = RandomMatrix(2, basis.size(), rng, 0.3);
  return p;
}

// The smooth-equivalence term models the autonomous field only, so all three
// terms vanish only on unforced data.
TEST(Losses, VanishOnTheExactLinearModel) {
  const Dataset data = LinearData(false);
  const MonomialBasis basis(2, 1);
  ModelParams p;
  p.diffeo.dim = 2;
  p.diffeo.squash = false;
  p.a_underline = LinearA();
  p.b = LinearB();
  p.c = Matrix::Identity(2, 2);
  const LossBreakdown loss = TotalLoss(p, basis, data.x, data.u, data.xdot, {});
  EXPECT_LT(loss.prediction, 1e-28);
  EXPECT_LT(loss.reconstruction, 1e-28);
  EXPECT_LT(loss.smooth_equivalence, 1e-28);
  EXPECT_EQ(loss.skipped, 0);
  EXPECT_EQ(loss.used, data.size());
}

TEST(Losses, ZeroStateWithZeroFlowHasZeroReconstruction) {
  ModelParams p;
  p.diffeo.dim = 2;
  p.diffeo.squash = false;
  p.c = Matrix::Ones(2, 5);
  EXPECT_EQ(LossReconstruction(p, MonomialBasis(2, 2), Vector::Zero(2)), 0.0);
}

// Recomputes each term from primitives: naive monomials, a finite-difference
// flow Jacobian and a dense inverse.
TEST(Losses, MatchIndependentRecomputation) {
  std::mt19937_64 rng(40);
  const MonomialBasis basis(2, 3);
  const ModelParams p = RandomModel(3, true, rng);
  for (int k = 0; k < 10; ++k) {
    const Vector x = UniformVector(2, -1.5, 1.5, rng);
    const Vector u = UniformVector(1, -1.0, 1.0, rng);
    const Vector xdot = UniformVector(2, -2.0, 2.0, rng);
    const Vector y = Forward(p.diffeo, x);
    Vector z(basis.size());
    for (int i = 0; i < basis.size(); ++i) {
      z(i) = std::pow(y(0), basis.index(i)[0]) * std::pow(y(1), basis.index(i)[1]);
    }
    const Vector pred = xdot - p.c * (LiftedMatrix(p.a_underline, basis) * z + p.b * u);
    const Vector rec = x - p.c * z;
    const Matrix j = FiniteDifferenceJacobian(
        [&](const Vector& v) { return Forward(p.diffeo, v); }, x);
    const Vector se = xdot - j.inverse() * p.a_underline * y;
    EXPECT_NEAR(LossPrediction(p, basis, x, u, xdot), pred.squaredNorm(), 1e-12);
    EXPECT_NEAR(LossReconstruction(p, basis, x), rec.squaredNorm(), 1e-12);
    EXPECT_NEAR(*LossSmoothEquivalence(p, x, xdot), se.squaredNorm(), 1e-6);
  }
}

TEST(Losses, IllConditionedSamplesAreSkippedFromEveryTerm) {
  std::mt19937_64 rng(41);
  ModelParams p = RandomModel(2, true, rng);
  p.diffeo.ForEachParameter([](auto& m) { m.setZero(); });
  Matrix x(2, 2), u = Matrix::Zero(1, 2), xdot = Matrix::Ones(2, 2);
  x << 0.1, 30.0,
       0.2, 0.0;  // tanh'(30) ~ 1e-26 makes the second Jacobian singular
  EXPECT_FALSE(LossSmoothEquivalence(p, x.col(1), xdot.col(1)).has_value());
  const MonomialBasis basis(2, 2);
  const LossBreakdown both = TotalLoss(p, basis, x, u, xdot, {});
  const LossBreakdown first = TotalLoss(p, basis, x.leftCols(1), u.leftCols(1),
                                        xdot.leftCols(1), {});
  EXPECT_EQ(both.skipped, 1);
  EXPECT_EQ(both.used, 1);
  EXPECT_DOUBLE_EQ(both.total, first.total);
  LossBreakdown grad_loss;
  GradTotalLoss(p, basis, x, u, xdot, {}, &grad_loss);
  EXPECT_EQ(grad_loss.skipped, 1);
  EXPECT_NEAR(grad_loss.total, both.total, 1e-12);
}

double RelativeError(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

TEST(Gradient, MatchesCentralFiniteDifferencesOnEveryParameter) {
  std::mt19937_64 rng(42);
  for (bool squash : {false, true}) {
    const MonomialBasis basis(2, 3);
    ModelParams p = RandomModel(3, squash, rng);
    const Matrix x = RandomMatrix(2, 6, rng, 0.7);
    const Matrix u = RandomMatrix(1, 6, rng);
    const Matrix xdot = RandomMatrix(2, 6, rng);
    const LossWeights w{1.0, 0.7, 1.3};
    LossBreakdown loss;
    const Gradient g = GradTotalLoss(p, basis, x, u, xdot, w, &loss);
    EXPECT_NEAR(loss.total, TotalLoss(p, basis, x, u, xdot, w).total, 1e-12);

    auto params = p.Blocks();
    const auto grads = g.Blocks();
    double worst = 0.0;
    for (size_t b = 0; b < params.size(); ++b) {
      for (size_t i = 0; i < params[b].size(); ++i) {
        const double saved = params[b][i];
        params[b][i] = saved + 1e-6;
        const double up = TotalLoss(p, basis, x, u, xdot, w).total;
        params[b][i] = saved - 1e-6;
        const double down = TotalLoss(p, basis, x, u, xdot, w).total;
        params[b][i] = saved;
        worst = std::max(worst, RelativeError(grads[b][i], (up - down) / 2e-6));
      }
    }
    EXPECT_LT(worst, 1e-4) << "squash " << squash;
  }
}

TEST(Gradient, ChunkingOnlyChangesRounding) {
  std::mt19937_64 rng(43);
  const MonomialBasis basis(2, 2);
  const ModelParams p = RandomModel(2, true, rng);
  const Matrix x = RandomMatrix(2, 9, rng), u = RandomMatrix(1, 9, rng),
               xdot = RandomMatrix(2, 9, rng);
  const Gradient a = GradTotalLoss(p, basis, x, u, xdot, {}, nullptr, 1);
  const Gradient b = GradTotalLoss(p, basis, x, u, xdot, {}, nullptr, 4);
  const Gradient c = GradTotalLoss(p, basis, x, u, xdot, {}, nullptr, 100);
  const auto ab = a.Blocks(), bb = b.Blocks(), cb = c.Blocks();
  for (size_t k = 0; k < ab.size(); ++k) {
    for (size_t i = 0; i < ab[k].size(); ++i) {
      EXPECT_NEAR(ab[k][i], cb[k][i], 1e-12 * (1.0 + std::abs(cb[k][i])));
      EXPECT_NEAR(bb[k][i], cb[k][i], 1e-12 * (1.0 + std::abs(cb[k][i])));
    }
  }
}

TEST(Adam, MatchesScalarRecursion) {
  std::mt19937_64 rng(44);
  ModelParams p = RandomModel(1, false, rng);
  const ModelParams start = p;
  AdamState state = InitAdam(p);
  Hyperparams h;
  const double lr = 0.01;
  const std::vector<double> gs = {0.5, -1.0, 2.0, 0.0, 0.3};
  // Hand-rolled recursion on one coordinate.
  double theta = start.a_underline(1, 0), m = 0.0, v = 0.0;
  for (size_t t = 0; t < gs.size(); ++t) {
    Gradient g = p.ZerosLike();
    g.a_underline(1, 0) = gs[t];
    AdamStep(p, g, state, h, lr);
    m = 0.9 * m + 0.1 * gs[t];
    v = 0.999 * v + 0.001 * gs[t] * gs[t];
    const double mh = m / (1.0 - std::pow(0.9, t + 1.0));
    const double vh = v / (1.0 - std::pow(0.999, t + 1.0));
    theta -= lr * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.a_underline(1, 0), theta, 1e-15);
  }
  EXPECT_EQ(state.step, 5);
  // The first step moves every coordinate with a nonzero gradient by ≈ lr.
  EXPECT_EQ(p.a_underline(0, 0), start.a_underline(0, 0));
}

Hyperparams SmallHyper() {
  Hyperparams h;
  h.p_bar = 2;
  h.architecture.coupling_layers = 2;
  h.architecture.hidden_widths = {6};
  h.architecture.squash = false;
  h.epochs = 6;
  h.batch_size = 7;
  h.learning_rate = 1e-2;
  h.learning_rate_final = 1e-3;
  h.seed = 5;
  h.probe_samples = 16;
  return h;
}

TEST(Training, InitializationIsTheIdentityFlowWithFittedReadout) {
  const Dataset data = LinearData();
  const Hyperparams h = SmallHyper();
  const MonomialBasis basis(2, h.p_bar);
  const TrainingState s = InitTraining(data, basis, h);
  EXPECT_EQ(Forward(s.params.diffeo, data.x.col(3)), data.x.col(3));
  EXPECT_EQ(s.params.b.norm(), 0.0);
  EXPECT_LT(MaxAbs(s.params.a_underline + Matrix::Identity(2, 2)), 0.05);
  // With the identity flow, C = [I, 0] reconstructs exactly, so the fitted
  // readout must too.
  EXPECT_LT(TotalLoss(s.params, basis, data.x, data.u, data.xdot, {}).reconstruction, 1e-20);
}

TEST(Training, RunsAreDeterministic) {
  const Dataset data = LinearData();
  const Hyperparams h = SmallHyper();
  const MonomialBasis basis(2, h.p_bar);
  TrainingState a = InitTraining(data, basis, h);
  TrainingState b = InitTraining(data, basis, h);
  RunEpochs(a, data, basis, h, h.epochs);
  RunEpochs(b, data, basis, h, h.epochs);
  const auto pa = a.params.Blocks(), pb = b.params.Blocks();
  for (size_t k = 0; k < pa.size(); ++k) {
    EXPECT_TRUE(std::equal(pa[k].begin(), pa[k].end(), pb[k].begin()));
  }
  ASSERT_EQ(a.log.size(), 6u);
  EXPECT_EQ(a.log.back().total, b.log.back().total);
  EXPECT_LT(a.log.back().total, a.log.front().total);
}

TEST(Training, ResumedRunMatchesUninterruptedRun) {
  const Dataset data = LinearData();
  const Hyperparams h = SmallHyper();
  const MonomialBasis basis(2, h.p_bar);
  TrainingState full = InitTraining(data, basis, h);
  RunEpochs(full, data, basis, h, h.epochs);

  TrainingState part = InitTraining(data, basis, h);
  RunEpochs(part, data, basis, h, 3);
  const std::string path = ::testing::TempDir() + "/ckpt.txt";
  SaveCheckpoint(part, path, "abc");
  std::string hash;
  TrainingState resumed = LoadCheckpoint(path, &hash);
  EXPECT_EQ(hash, "abc");
  EXPECT_EQ(resumed.epochs_done, 3);
  RunEpochs(resumed, data, basis, h, h.epochs);

  const auto pa = full.params.Blocks(), pb = resumed.params.Blocks();
  for (size_t k = 0; k < pa.size(); ++k) {
    EXPECT_TRUE(std::equal(pa[k].begin(), pa[k].end(), pb[k].begin()));
  }
  ASSERT_EQ(resumed.log.size(), full.log.size());
  EXPECT_EQ(resumed.log.back().total, full.log.back().total);
}

TEST(Training, ZeroEpochsReturnsTheInitialization) {
  const Dataset data = LinearData();
  Hyperparams h = SmallHyper();
  h.epochs = 0;
  const MonomialBasis basis(2, h.p_bar);
  const TrainingState trained = Train(data, basis, h);
  const TrainingState init = InitTraining(data, basis, h);
  EXPECT_EQ(trained.params.c, init.params.c);
  EXPECT_EQ(trained.params.a_underline, init.params.a_underline);
  EXPECT_TRUE(trained.log.empty());
}

TEST(Training, InputMatrixFitRecoversTheTrueInputOnTheExactModel) {
  const Dataset data = LinearData();
  const MonomialBasis basis(2, 1);
  ModelParams p;
  p.diffeo.dim = 2;
  p.diffeo.squash = false;
  p.a_underline = LinearA();
  p.c = Matrix::Identity(2, 2);
  p.b = Matrix::Zero(2, 1);
  EXPECT_LT(MaxAbs(FitInputMatrix(p, basis, data) - LinearB()), 1e-12);
}

TEST(Training, FrozenInputMatrixStaysFixed) {
  const Dataset data = LinearData();
  const Hyperparams h = SmallHyper();
  const MonomialBasis basis(2, h.p_bar);
  TrainingState s = InitTraining(data, basis, h);
  RunEpochs(s, data, basis, h, 2, true);
  EXPECT_EQ(s.params.b.norm(), 0.0);
}

TEST(Training, ValidationRejectsBadHyperparameters) {
  Hyperparams h;
  h.learning_rate = -1.0;
  EXPECT_THROW(h.Validate(), Error);
  h = Hyperparams();
  h.beta2 = 1.0;
  EXPECT_THROW(h.Validate(), Error);
  h = Hyperparams();
  h.weights.smooth_equivalence = -0.1;
  EXPECT_THROW(h.Validate(), Error);
}

TEST(Training, LogFileHasTheDocumentedHeader) {
  const std::string path = ::testing::TempDir() + "/log.csv";
  WriteTrainingLog({{1, 0.5, 0.25, 0.125, 0.875, 0}}, path, "feed");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# config_hash=feed");
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,loss_pred,loss_rec,loss_se,total,skipped_samples");
  std::getline(in, line);
  EXPECT_EQ(line, "1,0.5,0.25,0.125,0.875,0");
}

}  // namespace
}  // namespace kflqr
