#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kflqr/config.h"
#include "kflqr/koopman_model.h"
#include "kflqr/lqr.h"
#include "kflqr/plant.h"
#include "kflqr/training.h"

namespace kflqr {

struct DataSpec {
  /// "edge", "grid" or "random".
  std::string ic_kind = "edge";
  /// Number of points; for "grid" the points per axis.
  int ic_count = 50;
  GenerationSpec generation;
  /// Also generate unforced trajectories from the same initial conditions.
  bool unforced = false;
  /// External CSV datasets replacing generation.
  std::string path;
  std::string unforced_path;
};

struct EvalSpec {
  int count = 200;
  double horizon = 2.0;
  double dt = 0.025;
  AprbsSpec aprbs;
  /// Trajectories written to rollouts.csv.
  int rollouts = 10;
};

struct LqrSpec {
  Matrix q;
  Matrix r;
  LqrOptions options;
  double horizon = 10.0;
  double dt = 0.005;
  int ic_count = 50;
  /// Perimeter of domain.Scaled(ic_shrink).
  double ic_shrink = 0.95;
  double blowup_factor = 50.0;
  /// Closed-loop trajectories written to closed_loop.csv.
  int trajectories = 10;
};

struct ExperimentConfig {
  std::string plant_id;
  std::optional<PlantDef> plant;
  DataSpec data;
  Hyperparams hyper;
  int checkpoint_every = 500;
  EvalSpec eval;
  LqrSpec lqr;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::string config_hash;

  /// Throws "config" when no plant is defined.
  const PlantDef& RequirePlant() const;
};

/// Builds the experiment from a parsed config. Unknown keys are rejected.
ExperimentConfig MakeExperiment(const Config& config);
/// Loads `path`, applies an optional seed override, then MakeExperiment.
ExperimentConfig LoadExperiment(const std::string& path,
                                std::optional<std::uint64_t> seed = {},
                                const std::string& out_dir = "");

struct GenerateResult {
  Dataset forced;
  std::optional<Dataset> unforced;
  std::vector<std::string> files;
};

/// Writes dataset.csv (and dataset_unforced.csv) to the output directory.
GenerateResult CmdGenerate(const ExperimentConfig& cfg);

struct TrainResult {
  LiftedLTIModel model;
  TrainingState state;
  std::vector<std::string> files;
};

/// Trains on the datasets found at `dataset_path` (default: the configured
/// path or the output directory) and writes model.kfm, training_log.csv and
/// periodic checkpoint.kfc. With `resume`, continues from checkpoint.kfc.
TrainResult CmdTrain(const ExperimentConfig& cfg,
                     const std::string& dataset_path = "",
                     bool resume = false);

struct EvaluateResult {
  RmseSummary kf;
  RmseSummary taylor;
  double reduction_mean = 0.0;
  double reduction_pooled = 0.0;
  std::vector<std::string> files;
};

/// Open-loop comparison against the Taylor linearization; writes
/// rollouts.csv, rmse.csv and rmse_summary.csv.
EvaluateResult CmdEvaluate(const ExperimentConfig& cfg,
                           const LiftedLTIModel& model);

struct LqrResult {
  LqrController controller;
  LinearController baseline;
  CostReport report;
  std::vector<std::string> files;
};

/// Synthesizes KF-LQR and Taylor-LQR and compares them; writes
/// controller.kfc, costs.csv, cost_summary.csv and closed_loop.csv.
LqrResult CmdLqr(const ExperimentConfig& cfg, const LiftedLTIModel& model);

/// Simulates the plant from x0 for `horizon` seconds, under KF-LQR when a
/// model is given and under the configured APRBS otherwise; writes
/// simulation.csv.
std::string CmdSimulate(const ExperimentConfig& cfg, const Vector& x0,
                        double horizon, const LiftedLTIModel* model);

/// The model file path inside the output directory.
std::string ModelPath(const ExperimentConfig& cfg);

}  // namespace kflqr
