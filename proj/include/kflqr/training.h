#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kflqr/diffeo.h"
#include "kflqr/error.h"
#include "kflqr/monomial.h"
#include "kflqr/plant.h"

namespace kflqr {

/// Everything the optimizer updates. A_underline is the latent linear
/// dynamics, B the lifted input matrix and C the read-out.
struct ModelParams {
  Matrix a_underline;  // d x d
  Matrix b;            // D x m
  Matrix c;            // d x D
  DiffeoParams diffeo;

  template <typename F>
  void ForEachParameter(F&& f) {
    f(a_underline);
    f(b);
    f(c);
    diffeo.ForEachParameter(f);
  }
  template <typename F>
  void ForEachParameter(F&& f) const {
    f(a_underline);
    f(b);
    f(c);
    diffeo.ForEachParameter(f);
  }

  /// Flat views over every parameter block, in ForEachParameter order.
  std::vector<std::span<double>> Blocks();
  std::vector<std::span<const double>> Blocks() const;
  int ParameterCount() const;
  /// Same shapes, all entries zero.
  ModelParams ZerosLike() const;
  /// "A_underline", "B", "C", "layer0.s.w0", "layer0.s.b0", ...
  std::vector<std::string> ParameterNames() const;
};

/// Same layout as ModelParams, one partial derivative per entry.
using Gradient = ModelParams;

struct LossWeights {
  double prediction = 1.0;
  double reconstruction = 1.0;
  double smooth_equivalence = 1.0;
};

enum class TrainingMode {
  /// A_underline, B, C and the flow trained together on forced data.
  kJoint,
  /// Autonomous model from unforced data, then B by least squares.
  kTwoPhase,
};

struct Hyperparams {
  int p_bar = 10;
  double learning_rate = 1e-3;
  /// Learning rate reached at the last epoch by geometric decay. Equal to
  /// learning_rate means a constant rate.
  double learning_rate_final = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10000;
  /// Samples per step; 0 means full batch.
  int batch_size = 0;
  LossWeights weights;
  std::uint64_t seed = 0;
  DiffeoArchitecture architecture;
  TrainingMode mode = TrainingMode::kJoint;
  /// Samples used for the least-squares initialization of C.
  int probe_samples = 256;
  /// Columns per tape; bounds memory and does not change results beyond
  /// summation order, which is fixed.
  int chunk_size = 1024;

  void Validate() const;
};

/// Mean losses over a batch.
struct LossBreakdown {
  double prediction = 0.0;
  double reconstruction = 0.0;
  double smooth_equivalence = 0.0;
  double total = 0.0;
  int skipped = 0;
  int used = 0;
};

/// ‖ẋ − C(A_lift ψ(x) + B u)‖².
double LossPrediction(const ModelParams& params, const MonomialBasis& basis,
                      const Vector& x, const Vector& u, const Vector& xdot);
/// ‖x − C ψ(x)‖².
double LossReconstruction(const ModelParams& params,
                          const MonomialBasis& basis, const Vector& x);
/// ‖ẋ − J_d(x)⁻¹ A_underline d(x)‖², or nullopt when J_d(x) has an estimated
/// condition number above 1e12.
std::optional<double> LossSmoothEquivalence(const ModelParams& params,
                                            const Vector& x,
                                            const Vector& xdot);

/// Weighted mean of the three per-sample losses over the columns of
/// (x, u, xdot). Ill-conditioned samples are excluded from every term.
LossBreakdown TotalLoss(const ModelParams& params, const MonomialBasis& basis,
                        const Matrix& x, const Matrix& u, const Matrix& xdot,
                        const LossWeights& weights);

/// Exact reverse-mode gradient of TotalLoss. Throws "training" when an
/// adjoint is non-finite.
Gradient GradTotalLoss(const ModelParams& params, const MonomialBasis& basis,
                       const Matrix& x, const Matrix& u, const Matrix& xdot,
                       const LossWeights& weights, LossBreakdown* loss = nullptr,
                       int chunk_size = 1024);

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::int64_t step = 0;
};

AdamState InitAdam(const ModelParams& params);

/// One bias-corrected ADAM update of `params` in place.
void AdamStep(ModelParams& params, const Gradient& grad, AdamState& state,
              const Hyperparams& hyper, double learning_rate);

struct EpochLog {
  int epoch = 0;
  double prediction = 0.0;
  double reconstruction = 0.0;
  double smooth_equivalence = 0.0;
  double total = 0.0;
  int skipped = 0;
};

/// Resumable optimizer state.
struct TrainingState {
  ModelParams params;
  AdamState adam;
  int epochs_done = 0;
  std::vector<EpochLog> log;
};

/// Raised when the loss exceeds 1e12 or becomes NaN; carries the log so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, std::vector<EpochLog> log)
      : Error("training", message), log_(std::move(log)) {}
  const std::vector<EpochLog>& log() const { return log_; }

 private:
  std::vector<EpochLog> log_;
};

/// Initial parameters: flow from InitDiffeo, A_underline = −I + 0.01·N(0, 1),
/// B = 0, and C fitted by least squares on a probe subset of `data`.
TrainingState InitTraining(const Dataset& data, const MonomialBasis& basis,
                           const Hyperparams& hyper);

using EpochCallback = std::function<void(const TrainingState&)>;

/// Runs epochs until state.epochs_done == until_epoch. Each epoch visits a
/// permutation seeded by (seed, epoch), so interrupted and uninterrupted runs
/// agree bit for bit. B is frozen when `freeze_b` is set.
void RunEpochs(TrainingState& state, const Dataset& data,
               const MonomialBasis& basis, const Hyperparams& hyper,
               int until_epoch, bool freeze_b = false,
               const EpochCallback& on_epoch = nullptr);

/// Least-squares B for fixed (A_underline, C, flow): fits C·B to the
/// residual ẋ − C A_lift ψ(x) and returns the minimum-norm B.
Matrix FitInputMatrix(const ModelParams& params, const MonomialBasis& basis,
                      const Dataset& data);

/// Complete training. In two-phase mode `unforced` must be given; the flow is
/// trained on it with B frozen at zero, then B is fitted on `data`.
TrainingState Train(const Dataset& data, const MonomialBasis& basis,
                    const Hyperparams& hyper,
                    const Dataset* unforced = nullptr,
                    const EpochCallback& on_epoch = nullptr);

/// Model parameters, ADAM moments, epoch counter and log, for resuming.
/// `config_hash` tags the file so a resume can refuse a different config.
void SaveCheckpoint(const TrainingState& state, const std::string& path,
                    const std::string& config_hash = "");
TrainingState LoadCheckpoint(const std::string& path,
                             std::string* config_hash = nullptr);

/// CSV: epoch,loss_pred,loss_rec,loss_se,total,skipped_samples, preceded by
/// a "# config_hash=..." line when a hash is given.
void WriteTrainingLog(const std::vector<EpochLog>& log, const std::string& path,
                      const std::string& config_hash = "");

}  // namespace kflqr
