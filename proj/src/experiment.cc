#include "kflqr/experiment.h"

#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "kflqr/error.h"
#include "kflqr/io.h"

namespace kflqr {
namespace {

namespace fs = std::filesystem;

// Seed streams derived from the master seed.
enum : std::uint64_t {
  kDataStream = 1,
  kTrainStream = 2,
  kEvalIcStream = 3,
  kEvalInputStream = 4,
  kLqrIcStream = 5,
};

const std::set<std::string>& KnownKeys() {
  static const std::set<std::string> keys = {
      "seed",
      "out",
      "plant",
      "plant.id",
      "plant.a",
      "plant.b",
      "plant.inputs",
      "plant.domain_lo",
      "plant.domain_hi",
      "data.ic",
      "data.ic_count",
      "data.horizon",
      "data.dt",
      "data.amp",
      "data.hold",
      "data.mode",
      "data.safety_factor",
      "data.unforced",
      "data.path",
      "data.unforced_path",
      "train.p_bar",
      "train.learning_rate",
      "train.learning_rate_final",
      "train.beta1",
      "train.beta2",
      "train.epsilon",
      "train.epochs",
      "train.batch_size",
      "train.coupling_layers",
      "train.hidden",
      "train.squash",
      "train.w_pred",
      "train.w_rec",
      "train.w_se",
      "train.mode",
      "train.probe_samples",
      "train.chunk_size",
      "train.checkpoint_every",
      "eval.count",
      "eval.horizon",
      "eval.dt",
      "eval.amp",
      "eval.hold",
      "eval.rollouts",
      "lqr.q",
      "lqr.r",
      "lqr.ridge",
      "lqr.recenter",
      "lqr.horizon",
      "lqr.dt",
      "lqr.ic_count",
      "lqr.ic_shrink",
      "lqr.blowup_factor",
      "lqr.u_lo",
      "lqr.u_hi",
      "lqr.trajectories",
  };
  return keys;
}

Vector ToVector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix RowMajor(const std::vector<double>& v, int rows, int cols,
                const std::string& key) {
  Require(static_cast<int>(v.size()) == rows * cols, "config",
          key + " needs " + std::to_string(rows * cols) + " entries");
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = v[i * cols + j];
  }
  return m;
}

// A scalar s means s·I, n entries a diagonal, n² entries a full matrix.
Matrix WeightMatrix(const Config& config, const std::string& key, int n,
                    double fallback) {
  if (!config.Has(key)) return fallback * Matrix::Identity(n, n);
  const std::vector<double> v = config.GetDoubles(key);
  if (v.size() == 1) return v[0] * Matrix::Identity(n, n);
  if (static_cast<int>(v.size()) == n) return ToVector(v).asDiagonal();
  return RowMajor(v, n, n, key);
}

std::pair<double, double> Range(const Config& config, const std::string& key,
                                std::pair<double, double> fallback) {
  if (!config.Has(key)) return fallback;
  const std::vector<double> v = config.GetDoubles(key);
  Require(v.size() == 2, "config", key + " needs two values: lo, hi");
  return {v[0], v[1]};
}

AprbsSpec ReadAprbs(const Config& config, const std::string& prefix,
                    const AprbsSpec& fallback) {
  AprbsSpec spec = fallback;
  std::tie(spec.amp_lo, spec.amp_hi) =
      Range(config, prefix + ".amp", {fallback.amp_lo, fallback.amp_hi});
  std::tie(spec.hold_lo, spec.hold_hi) =
      Range(config, prefix + ".hold", {fallback.hold_lo, fallback.hold_hi});
  Require(spec.amp_lo <= spec.amp_hi, "config", prefix + ".amp needs lo <= hi");
  Require(spec.hold_lo > 0.0 && spec.hold_lo <= spec.hold_hi, "config",
          prefix + ".hold needs 0 < lo <= hi");
  return spec;
}

PlantDef MakePlant(const Config& config, const std::string& kind) {
  if (kind == "example1" || kind == "example2") return PlantById(kind);
  Require(kind == "linear", "config",
          "plant must be example1, example2, linear or none, got " + kind);
  const std::vector<double> a = config.GetDoubles("plant.a");
  int d = 0;
  while (d * d < static_cast<int>(a.size())) ++d;
  Require(d * d == static_cast<int>(a.size()), "config",
          "plant.a must hold d*d entries");
  const int m = static_cast<int>(config.GetInt("plant.inputs", 1));
  Require(m >= 1, "config", "plant.inputs must be positive");
  const Vector lo = ToVector(config.GetDoubles("plant.domain_lo"));
  const Vector hi = ToVector(config.GetDoubles("plant.domain_hi"));
  Require(lo.size() == d && hi.size() == d && (lo.array() < hi.array()).all(),
          "config", "plant.domain_lo/hi must be d values with lo < hi");
  return LinearPlant(config.GetString("plant.id", "linear"),
                     RowMajor(a, d, d, "plant.a"),
                     RowMajor(config.GetDoubles("plant.b"), d, m, "plant.b"),
                     Box{lo, hi});
}

std::vector<Vector> TrainingInitialConditions(const ExperimentConfig& cfg) {
  const PlantDef& plant = cfg.RequirePlant();
  const std::string& kind = cfg.data.ic_kind;
  if (kind == "edge") return EdgeInitialConditions(plant.domain, cfg.data.ic_count);
  if (kind == "grid") return GridInitialConditions(plant.domain, cfg.data.ic_count);
  if (kind == "random") {
    return RandomInitialConditions(plant.domain, cfg.data.ic_count,
                                   DeriveSeed(cfg.seed, kDataStream));
  }
  throw Error("config", "data.ic must be edge, grid or random, got " + kind);
}

std::string OutFile(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

void CheckPlantId(const ExperimentConfig& cfg, const std::string& other,
                  const std::string& what) {
  Require(other.empty() || cfg.plant_id.empty() || other == cfg.plant_id,
          "validation",
          what + " belongs to plant '" + other + "' but the config selects '" +
              cfg.plant_id + "'");
}

void WriteHashLine(std::ostream& out, const ExperimentConfig& cfg) {
  out << "# config_hash=" << cfg.config_hash << "\n";
}

}  // namespace

const PlantDef& ExperimentConfig::RequirePlant() const {
  Require(plant.has_value(), "config", "this command needs a plant definition");
  return *plant;
}

ExperimentConfig MakeExperiment(const Config& config) {
  for (const auto& [key, value] : config.entries()) {
    Require(KnownKeys().count(key) > 0, "config", "unknown config key " + key);
  }
  ExperimentConfig cfg;
  const long long seed = config.GetInt("seed", 0);
  Require(seed >= 0, "config", "seed must be non-negative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.out_dir = config.GetString("out", "out");
  cfg.config_hash = config.Hash();

  const std::string kind = config.GetString("plant", "none");
  if (kind != "none") {
    cfg.plant = MakePlant(config, kind);
    cfg.plant_id = cfg.plant->id;
  }

  DataSpec& data = cfg.data;
  data.ic_kind = config.GetString("data.ic", "edge");
  data.ic_count = static_cast<int>(config.GetInt("data.ic_count", 50));
  Require(data.ic_count > 0, "config", "data.ic_count must be positive");
  GenerationSpec& gen = data.generation;
  gen.horizon = config.GetDouble("data.horizon", gen.horizon);
  gen.dt = config.GetDouble("data.dt", gen.dt);
  Require(gen.dt > 0.0, "config", "data.dt must be positive");
  gen.aprbs = ReadAprbs(config, "data", gen.aprbs);
  const std::string mode = config.GetString("data.mode", "exact");
  Require(mode == "exact" || mode == "finite_difference", "config",
          "data.mode must be exact or finite_difference");
  gen.mode = mode == "exact" ? DerivativeMode::kExact
                             : DerivativeMode::kFiniteDifference;
  gen.safety_factor = config.GetDouble("data.safety_factor", gen.safety_factor);
  gen.seed = DeriveSeed(cfg.seed, kDataStream);
  data.path = config.GetString("data.path", "");
  data.unforced_path = config.GetString("data.unforced_path", "");

  Hyperparams& h = cfg.hyper;
  h.p_bar = static_cast<int>(config.GetInt("train.p_bar", h.p_bar));
  h.learning_rate = config.GetDouble("train.learning_rate", h.learning_rate);
  h.learning_rate_final =
      config.GetDouble("train.learning_rate_final", h.learning_rate);
  h.beta1 = config.GetDouble("train.beta1", h.beta1);
  h.beta2 = config.GetDouble("train.beta2", h.beta2);
  h.epsilon = config.GetDouble("train.epsilon", h.epsilon);
  h.epochs = static_cast<int>(config.GetInt("train.epochs", h.epochs));
  h.batch_size = static_cast<int>(config.GetInt("train.batch_size", h.batch_size));
  h.architecture.coupling_layers = static_cast<int>(
      config.GetInt("train.coupling_layers", h.architecture.coupling_layers));
  if (config.Has("train.hidden")) {
    h.architecture.hidden_widths.clear();
    for (double w : config.GetDoubles("train.hidden")) {
      Require(w >= 1.0 && w == static_cast<int>(w), "config",
              "train.hidden must list positive integers");
      h.architecture.hidden_widths.push_back(static_cast<int>(w));
    }
  }
  h.architecture.squash = config.GetBool("train.squash", h.architecture.squash);
  h.weights.prediction = config.GetDouble("train.w_pred", 1.0);
  h.weights.reconstruction = config.GetDouble("train.w_rec", 1.0);
  h.weights.smooth_equivalence = config.GetDouble("train.w_se", 1.0);
  const std::string train_mode = config.GetString("train.mode", "joint");
  Require(train_mode == "joint" || train_mode == "two_phase", "config",
          "train.mode must be joint or two_phase");
  h.mode = train_mode == "joint" ? TrainingMode::kJoint : TrainingMode::kTwoPhase;
  h.probe_samples =
      static_cast<int>(config.GetInt("train.probe_samples", h.probe_samples));
  h.chunk_size = static_cast<int>(config.GetInt("train.chunk_size", h.chunk_size));
  h.seed = DeriveSeed(cfg.seed, kTrainStream);
  h.Validate();
  cfg.checkpoint_every =
      static_cast<int>(config.GetInt("train.checkpoint_every", cfg.checkpoint_every));
  data.unforced = config.GetBool("data.unforced", h.mode == TrainingMode::kTwoPhase);

  EvalSpec& eval = cfg.eval;
  eval.count = static_cast<int>(config.GetInt("eval.count", eval.count));
  eval.horizon = config.GetDouble("eval.horizon", eval.horizon);
  eval.dt = config.GetDouble("eval.dt", gen.dt);
  eval.aprbs = ReadAprbs(config, "eval", gen.aprbs);
  eval.rollouts = static_cast<int>(config.GetInt("eval.rollouts", eval.rollouts));
  Require(eval.count > 0 && eval.horizon > 0.0 && eval.dt > 0.0, "config",
          "eval.count, eval.horizon and eval.dt must be positive");

  LqrSpec& lqr = cfg.lqr;
  const int d = cfg.plant ? cfg.plant->dim : 2;
  const int m = cfg.plant ? cfg.plant->inputs : 1;
  lqr.q = WeightMatrix(config, "lqr.q", d, 1.0);
  lqr.r = WeightMatrix(config, "lqr.r", m, 1.0);
  lqr.options.ridge = config.GetDouble("lqr.ridge", lqr.options.ridge);
  lqr.options.recenter = config.GetBool("lqr.recenter", lqr.options.recenter);
  if (config.Has("lqr.u_lo") || config.Has("lqr.u_hi")) {
    const Vector lo = ToVector(config.GetDoubles("lqr.u_lo"));
    const Vector hi = ToVector(config.GetDoubles("lqr.u_hi"));
    Require(lo.size() == m && hi.size() == m && (lo.array() <= hi.array()).all(),
            "config", "lqr.u_lo/u_hi must be m values with lo <= hi");
    lqr.options.u_limits = Box{lo, hi};
  }
  lqr.horizon = config.GetDouble("lqr.horizon", lqr.horizon);
  lqr.dt = config.GetDouble("lqr.dt", lqr.dt);
  lqr.ic_count = static_cast<int>(config.GetInt("lqr.ic_count", lqr.ic_count));
  lqr.ic_shrink = config.GetDouble("lqr.ic_shrink", lqr.ic_shrink);
  lqr.blowup_factor = config.GetDouble("lqr.blowup_factor", lqr.blowup_factor);
  lqr.trajectories =
      static_cast<int>(config.GetInt("lqr.trajectories", lqr.trajectories));
  Require(lqr.horizon > 0.0 && lqr.dt > 0.0 && lqr.ic_count > 0, "config",
          "lqr.horizon, lqr.dt and lqr.ic_count must be positive");
  Require(lqr.ic_shrink > 0.0 && lqr.ic_shrink <= 1.0, "config",
          "lqr.ic_shrink must lie in (0, 1]");
  return cfg;
}

ExperimentConfig LoadExperiment(const std::string& path,
                                std::optional<std::uint64_t> seed,
                                const std::string& out_dir) {
  Config config = Config::Load(path);
  if (seed) config.Set("seed", std::to_string(*seed));
  ExperimentConfig cfg = MakeExperiment(config);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  return cfg;
}

std::string ModelPath(const ExperimentConfig& cfg) {
  return OutFile(cfg, "model.kfm");
}

GenerateResult CmdGenerate(const ExperimentConfig& cfg) {
  const PlantDef& plant = cfg.RequirePlant();
  Require(cfg.data.generation.horizon > 0.0, "validation",
          "data.horizon must be positive; a zero-duration run has no records");
  const std::vector<Vector> ics = TrainingInitialConditions(cfg);
  const std::string ic_spec =
      cfg.data.ic_kind + ":" + std::to_string(cfg.data.ic_count);

  GenerateResult result;
  result.forced = GenerateDataset(plant, ics, cfg.data.generation);
  Require(result.forced.size() > 0, "validation", "generated dataset is empty");
  result.forced.meta.ic_spec = ic_spec;
  result.forced.meta.config_hash = cfg.config_hash;
  result.files.push_back(OutFile(cfg, "dataset.csv"));
  WriteDataset(result.forced, result.files.back());

  if (cfg.data.unforced) {
    GenerationSpec spec = cfg.data.generation;
    spec.forced = false;
    result.unforced = GenerateDataset(plant, ics, spec);
    result.unforced->meta.ic_spec = ic_spec;
    result.unforced->meta.config_hash = cfg.config_hash;
    result.files.push_back(OutFile(cfg, "dataset_unforced.csv"));
    WriteDataset(*result.unforced, result.files.back());
  }
  return result;
}

TrainResult CmdTrain(const ExperimentConfig& cfg,
                     const std::string& dataset_path, bool resume) {
  std::string forced_path = dataset_path;
  if (forced_path.empty()) forced_path = cfg.data.path;
  if (forced_path.empty()) forced_path = OutFile(cfg, "dataset.csv");
  const Dataset data = ReadDataset(forced_path);
  Require(data.size() > 0, "validation", "dataset " + forced_path + " is empty");
  CheckPlantId(cfg, data.meta.plant_id, "dataset " + forced_path);

  const Hyperparams& h = cfg.hyper;
  const bool two_phase = h.mode == TrainingMode::kTwoPhase;
  std::optional<Dataset> unforced;
  if (two_phase) {
    std::string path = cfg.data.unforced_path;
    if (path.empty()) {
      path = (fs::path(forced_path).parent_path() / "dataset_unforced.csv").string();
    }
    unforced = ReadDataset(path);
    CheckPlantId(cfg, unforced->meta.plant_id, "dataset " + path);
  }
  const Dataset& phase_data = two_phase ? *unforced : data;

  const MonomialBasis basis(data.state_dim(), h.p_bar);
  const std::string checkpoint = OutFile(cfg, "checkpoint.kfc");
  TrainingState state;
  if (resume && fs::exists(checkpoint)) {
    std::string hash;
    state = LoadCheckpoint(checkpoint, &hash);
    Require(hash == cfg.config_hash, "validation",
            "checkpoint " + checkpoint + " was written by a different config");
  } else {
    state = InitTraining(phase_data, basis, h);
    if (two_phase) state.params.b.setZero();
  }

  const std::string log_path = OutFile(cfg, "training_log.csv");
  const EpochCallback on_epoch = [&](const TrainingState& s) {
    if (cfg.checkpoint_every > 0 && s.epochs_done % cfg.checkpoint_every == 0 &&
        s.epochs_done < h.epochs) {
      SaveCheckpoint(s, checkpoint, cfg.config_hash);
    }
  };
  try {
    RunEpochs(state, phase_data, basis, h, h.epochs, two_phase, on_epoch);
  } catch (const TrainingDiverged& e) {
    WriteTrainingLog(e.log(), log_path, cfg.config_hash);
    throw;
  }
  SaveCheckpoint(state, checkpoint, cfg.config_hash);

  ModelParams params = state.params;
  if (two_phase) params.b = FitInputMatrix(params, basis, data);
  TrainResult result{AssembleModel(params, basis), std::move(state), {}};
  result.model.plant_id = data.meta.plant_id.empty() ? cfg.plant_id : data.meta.plant_id;
  result.model.config_hash = cfg.config_hash;
  result.model.seed = cfg.seed;

  result.files = {ModelPath(cfg), log_path, checkpoint};
  SaveModel(result.model, result.files[0]);
  WriteTrainingLog(result.state.log, log_path, cfg.config_hash);
  return result;
}

EvaluateResult CmdEvaluate(const ExperimentConfig& cfg,
                           const LiftedLTIModel& model) {
  const PlantDef& plant = cfg.RequirePlant();
  CheckPlantId(cfg, model.plant_id, "model");
  Require(model.dim() == plant.dim && model.inputs() == plant.inputs,
          "dimension", "model and plant dimensions differ");
  const EvalSpec& spec = cfg.eval;
  const std::vector<TestTrajectory> tests = MakeTestTrajectories(
      plant,
      RandomInitialConditions(plant.domain, spec.count,
                              DeriveSeed(cfg.seed, kEvalIcStream)),
      spec.horizon, spec.dt, spec.aprbs, DeriveSeed(cfg.seed, kEvalInputStream));
  const LinearModel taylor = TaylorModel(plant);

  EvaluateResult result;
  std::vector<Matrix> kf_paths, tl_paths;
  result.kf = OpenLoopRmse(
      [&](const Vector& x0, const InputSignal& u) {
        return PredictRollout(model, x0, u);
      },
      tests, &kf_paths);
  result.taylor = OpenLoopRmse(
      [&](const Vector& x0, const InputSignal& u) {
        return PredictRollout(taylor, x0, u);
      },
      tests, &tl_paths);
  result.reduction_mean = PercentReduction(result.kf.mean, result.taylor.mean);
  result.reduction_pooled =
      PercentReduction(result.kf.pooled, result.taylor.pooled);

  const int d = plant.dim;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  result.files.push_back(OutFile(cfg, "rollouts.csv"));
  {
    std::ofstream out(result.files.back());
    Require(out.good(), "io", "cannot write " + result.files.back());
    WriteHashLine(out, cfg);
    out << "traj,t";
    for (const char* tag : {"x_true", "x_kf", "x_tl"}) {
      for (int i = 0; i < d; ++i) out << ',' << tag << i + 1;
    }
    out << '\n';
    const int n = std::min<int>(spec.rollouts, static_cast<int>(tests.size()));
    for (int j = 0; j < n; ++j) {
      for (Eigen::Index k = 0; k < tests[j].truth.cols(); ++k) {
        out << j << ',' << FormatDouble(k * spec.dt);
        const std::array<const Matrix*, 3> paths = {&tests[j].truth, &kf_paths[j],
                                                    &tl_paths[j]};
        for (const Matrix* path : paths) {
          for (int i = 0; i < d; ++i) {
            out << ',' << FormatDouble(k < path->cols() ? (*path)(i, k) : nan);
          }
        }
        out << '\n';
      }
    }
  }
  result.files.push_back(OutFile(cfg, "rmse.csv"));
  {
    std::ofstream out(result.files.back());
    Require(out.good(), "io", "cannot write " + result.files.back());
    WriteHashLine(out, cfg);
    out << "traj,x0_1";
    for (int i = 1; i < d; ++i) out << ",x0_" << i + 1;
    out << ",rmse_kf,rmse_tl\n";
    for (size_t j = 0; j < tests.size(); ++j) {
      out << j;
      for (int i = 0; i < d; ++i) out << ',' << FormatDouble(tests[j].truth(i, 0));
      out << ',' << FormatDouble(result.kf.per_trajectory[j]) << ','
          << FormatDouble(result.taylor.per_trajectory[j]) << '\n';
    }
  }
  result.files.push_back(OutFile(cfg, "rmse_summary.csv"));
  {
    std::ofstream out(result.files.back());
    Require(out.good(), "io", "cannot write " + result.files.back());
    WriteHashLine(out, cfg);
    out << "metric,kf,taylor,reduction_percent\n";
    const auto row = [&](const std::string& name, double kf, double tl) {
      out << name << ',' << FormatDouble(kf) << ',' << FormatDouble(tl) << ','
          << FormatDouble(PercentReduction(kf, tl)) << '\n';
    };
    row("mean_rmse", result.kf.mean, result.taylor.mean);
    row("var_rmse", result.kf.variance, result.taylor.variance);
    row("max_rmse", result.kf.max, result.taylor.max);
    row("median_rmse", result.kf.median, result.taylor.median);
    row("pooled_rmse", result.kf.pooled, result.taylor.pooled);
    for (int i = 0; i < d; ++i) {
      row("rmse_x" + std::to_string(i + 1), result.kf.per_state(i),
          result.taylor.per_state(i));
    }
    out << "truncated," << result.kf.truncated << ',' << result.taylor.truncated
        << ",\n";
  }
  return result;
}

LqrResult CmdLqr(const ExperimentConfig& cfg, const LiftedLTIModel& model) {
  const PlantDef& plant = cfg.RequirePlant();
  CheckPlantId(cfg, model.plant_id, "model");
  const LqrSpec& spec = cfg.lqr;
  LqrResult result{Synthesize(model, spec.q, spec.r, plant.equilibrium, spec.options),
                   TaylorLqrBaseline(plant, spec.q, spec.r),
                   {},
                   {}};
  result.baseline.u_limits = spec.options.u_limits;
  const FeedbackLaw kf = [&](const Vector& x) { return Policy(result.controller, x); };
  const FeedbackLaw tl = [&](const Vector& x) { return Policy(result.baseline, x); };
  const std::vector<Vector> ics = RandomPerimeterInitialConditions(
      plant.domain.Scaled(spec.ic_shrink), spec.ic_count,
      DeriveSeed(cfg.seed, kLqrIcStream));
  result.report = Compare(plant, kf, tl, ics, spec.horizon, spec.dt, spec.q,
                          spec.r, spec.blowup_factor);

  result.files.push_back(OutFile(cfg, "controller.kfc"));
  SaveController(result.controller, result.files.back());
  result.files.push_back(OutFile(cfg, "costs.csv"));
  WriteCostCsv(result.report, result.files.back());
  result.files.push_back(OutFile(cfg, "cost_summary.csv"));
  WriteCostSummary(result.report, result.files.back(), cfg.config_hash);

  result.files.push_back(OutFile(cfg, "closed_loop.csv"));
  std::ofstream out(result.files.back());
  Require(out.good(), "io", "cannot write " + result.files.back());
  WriteHashLine(out, cfg);
  out << "ic,controller,t";
  for (int i = 0; i < plant.dim; ++i) out << ",x" << i + 1;
  for (int i = 0; i < plant.inputs; ++i) out << ",u" << i + 1;
  out << '\n';
  const int n = std::min<int>(spec.trajectories, static_cast<int>(ics.size()));
  for (int j = 0; j < n; ++j) {
    for (int which = 0; which < 2; ++which) {
      const ClosedLoopResult sim =
          ClosedLoopSim(plant, which == 0 ? kf : tl, ics[j], spec.horizon,
                        spec.dt, spec.q, spec.r, spec.blowup_factor);
      for (Eigen::Index k = 0; k < sim.time.size(); ++k) {
        if (!sim.states.col(k).allFinite()) break;
        out << j << ',' << (which == 0 ? "kf" : "taylor") << ','
            << FormatDouble(sim.time(k));
        for (int i = 0; i < plant.dim; ++i) out << ',' << FormatDouble(sim.states(i, k));
        for (int i = 0; i < plant.inputs; ++i) out << ',' << FormatDouble(sim.inputs(i, k));
        out << '\n';
      }
    }
  }
  return result;
}

std::string CmdSimulate(const ExperimentConfig& cfg, const Vector& x0,
                        double horizon, const LiftedLTIModel* model) {
  const PlantDef& plant = cfg.RequirePlant();
  Require(x0.size() == plant.dim, "dimension", "x0 has the wrong length");
  Require(horizon > 0.0, "validation", "horizon must be positive");
  const std::string path = OutFile(cfg, "simulation.csv");
  std::ofstream out(path);
  Require(out.good(), "io", "cannot write " + path);
  WriteHashLine(out, cfg);
  out << "t";
  for (int i = 0; i < plant.dim; ++i) out << ",x" << i + 1;
  for (int i = 0; i < plant.inputs; ++i) out << ",u" << i + 1;
  out << '\n';
  const auto emit = [&](double t, const Vector& x, const Vector& u) {
    out << FormatDouble(t);
    for (Eigen::Index i = 0; i < x.size(); ++i) out << ',' << FormatDouble(x(i));
    for (Eigen::Index i = 0; i < u.size(); ++i) out << ',' << FormatDouble(u(i));
    out << '\n';
  };
  if (model != nullptr) {
    CheckPlantId(cfg, model->plant_id, "model");
    const LqrController controller =
        Synthesize(*model, cfg.lqr.q, cfg.lqr.r, plant.equilibrium, cfg.lqr.options);
    const ClosedLoopResult sim = ClosedLoopSim(
        plant, [&](const Vector& x) { return Policy(controller, x); }, x0,
        horizon, cfg.lqr.dt, cfg.lqr.q, cfg.lqr.r, cfg.lqr.blowup_factor);
    for (Eigen::Index k = 0; k < sim.time.size(); ++k) {
      if (!sim.states.col(k).allFinite()) break;
      emit(sim.time(k), sim.states.col(k), sim.inputs.col(k));
    }
  } else {
    const InputSignal u = Aprbs(cfg.data.generation.aprbs, plant.inputs, horizon,
                                cfg.data.generation.dt,
                                DeriveSeed(cfg.seed, kDataStream));
    const Matrix states = Simulate(plant, x0, u);
    for (Eigen::Index k = 0; k < states.cols(); ++k) {
      const Vector uk = k < u.length() ? Vector(u.values.col(k))
                                       : Vector::Constant(plant.inputs,
                                                          std::numeric_limits<double>::quiet_NaN());
      emit(k * u.dt, states.col(k), uk);
    }
  }
  return path;
}

}  // namespace kflqr
