// Command-line driver: generate | train | evaluate | lqr | simulate.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kflqr/error.h"
#include "kflqr/experiment.h"
#include "kflqr/io.h"

namespace {

using kflqr::FormatDouble;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void AddCommon(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "Experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "Output directory (overrides 'out')");
  cmd->add_option("--seed", opts.seed, "Master seed (overrides 'seed')");
}

kflqr::ExperimentConfig Load(const CommonOptions& opts) {
  return kflqr::LoadExperiment(opts.config, opts.seed, opts.out);
}

kflqr::LiftedLTIModel LoadModelFor(const kflqr::ExperimentConfig& cfg,
                                   const std::string& path) {
  return kflqr::LoadModel(path.empty() ? kflqr::ModelPath(cfg) : path);
}

void PrintFiles(const std::vector<std::string>& files) {
  for (const std::string& f : files) std::cout << "wrote " << f << "\n";
}

std::string Quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopmanizing-flow models and lifted LQR"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, lqr_opts, sim_opts;
  std::string dataset, train_model, eval_model, lqr_model, sim_model;
  bool resume = false;
  std::vector<double> x0;
  double horizon = 10.0;

  CLI::App* generate = app.add_subcommand("generate", "Simulate the plant and write the dataset");
  AddCommon(generate, gen_opts);

  CLI::App* train = app.add_subcommand("train", "Train a model on a dataset");
  AddCommon(train, train_opts);
  train->add_option("--dataset", dataset, "Dataset CSV (default: <out>/dataset.csv)");
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.kfc");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Open-loop RMSE against the Taylor model");
  AddCommon(evaluate, eval_opts);
  evaluate->add_option("--model", eval_model, "Model file (default: <out>/model.kfm)");

  CLI::App* lqr = app.add_subcommand("lqr", "Synthesize KF-LQR and compare with Taylor-LQR");
  AddCommon(lqr, lqr_opts);
  lqr->add_option("--model", lqr_model, "Model file (default: <out>/model.kfm)");

  CLI::App* simulate = app.add_subcommand("simulate", "Simulate the plant from one state");
  AddCommon(simulate, sim_opts);
  simulate->add_option("--model", sim_model, "Close the loop with KF-LQR on this model");
  simulate->add_option("--x0", x0, "Initial state")->required()->delimiter(',');
  simulate->add_option("--horizon", horizon, "Seconds to simulate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error kind=usage message=" << Quote(e.what()) << "\n";
    return 2;
  }

  try {
    if (*generate) {
      const auto cfg = Load(gen_opts);
      const kflqr::GenerateResult r = kflqr::CmdGenerate(cfg);
      std::cout << "records " << r.forced.size() << "\n";
      if (r.unforced) std::cout << "unforced_records " << r.unforced->size() << "\n";
      std::cout << "truncated " << r.forced.meta.truncated << "\n";
      PrintFiles(r.files);
    } else if (*train) {
      const auto cfg = Load(train_opts);
      const kflqr::TrainResult r = kflqr::CmdTrain(cfg, dataset, resume);
      if (!r.state.log.empty()) {
        const kflqr::EpochLog& e = r.state.log.back();
        std::cout << "epochs " << r.state.epochs_done << "\n"
                  << "loss_pred " << FormatDouble(e.prediction) << "\n"
                  << "loss_rec " << FormatDouble(e.reconstruction) << "\n"
                  << "loss_se " << FormatDouble(e.smooth_equivalence) << "\n";
      }
      PrintFiles(r.files);
    } else if (*evaluate) {
      const auto cfg = Load(eval_opts);
      const kflqr::EvaluateResult r =
          kflqr::CmdEvaluate(cfg, LoadModelFor(cfg, eval_model));
      std::cout << "rmse_kf_mean " << FormatDouble(r.kf.mean) << "\n"
                << "rmse_tl_mean " << FormatDouble(r.taylor.mean) << "\n"
                << "reduction_mean_percent " << FormatDouble(r.reduction_mean) << "\n"
                << "reduction_pooled_percent " << FormatDouble(r.reduction_pooled)
                << "\n"
                << "kf_truncated " << r.kf.truncated << "\n";
      PrintFiles(r.files);
    } else if (*lqr) {
      const auto cfg = Load(lqr_opts);
      const kflqr::LqrResult r = kflqr::CmdLqr(cfg, LoadModelFor(cfg, lqr_model));
      const kflqr::CostReport& c = r.report;
      std::cout << "care_residual " << FormatDouble(r.controller.diagnostics.residual)
                << "\n"
                << "lift_at_equilibrium "
                << FormatDouble(r.controller.lift_at_equilibrium) << "\n"
                << "kf_stable " << c.kf.stable_count() << "/"
                << c.initial_conditions.size() << "\n"
                << "taylor_stable " << c.baseline.stable_count() << "/"
                << c.initial_conditions.size() << "\n"
                << "reduction_mean_J_percent " << FormatDouble(c.reduction_mean_j)
                << "\n"
                << "reduction_var_J_u_percent "
                << FormatDouble(c.reduction_var_j_u) << "\n"
                << "reduction_mean_J_u_percent "
                << FormatDouble(c.reduction_mean_j_u) << "\n";
      PrintFiles(r.files);
    } else if (*simulate) {
      const auto cfg = Load(sim_opts);
      std::optional<kflqr::LiftedLTIModel> model;
      if (!sim_model.empty()) model = kflqr::LoadModel(sim_model);
      const Eigen::Map<const kflqr::Vector> x(x0.data(),
                                              static_cast<Eigen::Index>(x0.size()));
      PrintFiles({kflqr::CmdSimulate(cfg, x, horizon, model ? &*model : nullptr)});
    }
  } catch (const kflqr::Error& e) {
    std::cerr << "error kind=" << e.kind() << " message=" << Quote(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=" << Quote(e.what()) << "\n";
    return 1;
  }
  return 0;
}
