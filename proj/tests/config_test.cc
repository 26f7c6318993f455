#include "kflqr/config.h"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "kflqr/error.h"
#include "kflqr/experiment.h"

namespace kflqr {
namespace {

namespace fs = std::filesystem;

std::string ErrorKind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return "";
}

fs::path FreshDir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

TEST(Config, ParsesSectionsCommentsAndDottedKeys) {
  const Config c = Config::Parse(
      "# header\n"
      "seed = 4\n"
      "[train]\n"
      "epochs = 20   # trailing\n"
      "hidden = 8, 8\n"
      "lqr.q = 10\n"
      "[]\n"
      "out = somewhere\n");
  EXPECT_EQ(c.GetInt("seed"), 4);
  EXPECT_EQ(c.GetInt("train.epochs"), 20);
  EXPECT_EQ(c.GetDoubles("train.hidden"), (std::vector<double>{8.0, 8.0}));
  EXPECT_EQ(c.GetDouble("train.lqr.q"), 10.0);
  EXPECT_EQ(c.GetString("out"), "somewhere");
  EXPECT_EQ(c.entries().size(), 5u);
}

TEST(Config, TypedGettersValidate) {
  const Config c = Config::Parse("a = 1.5\nb = true\nc = x\nd = 1 2 3\ne = 0\n");
  EXPECT_EQ(c.GetDouble("a"), 1.5);
  EXPECT_TRUE(c.GetBool("b"));
  EXPECT_FALSE(c.GetBool("e"));
  EXPECT_EQ(c.GetDoubles("d").size(), 3u);
  EXPECT_EQ(ErrorKind([&] { c.GetInt("a"); }), "config");
  EXPECT_EQ(ErrorKind([&] { c.GetDouble("c"); }), "config");
  EXPECT_EQ(ErrorKind([&] { c.GetBool("c"); }), "config");
  EXPECT_EQ(ErrorKind([&] { c.GetString("missing"); }), "config");
  EXPECT_EQ(c.GetInt("missing", 7), 7);
  EXPECT_EQ(c.GetString("c", "y"), "x");
  EXPECT_EQ(ErrorKind([] { Config::Parse("no equals sign\n"); }), "config");
}

TEST(Config, IncludesResolveRelativeToTheIncludingFile) {
  const fs::path dir = FreshDir("cfg_include");
  fs::create_directories(dir / "base");
  WriteFile(dir / "base" / "common.cfg", "seed = 1\n[train]\nepochs = 100\nsquash = true\n");
  WriteFile(dir / "desk.cfg", "include = base/common.cfg\n[train]\nepochs = 5\n");
  const Config c = Config::Load((dir / "desk.cfg").string());
  EXPECT_EQ(c.GetInt("train.epochs"), 5);
  EXPECT_TRUE(c.GetBool("train.squash"));
  EXPECT_EQ(c.GetInt("seed"), 1);
  EXPECT_FALSE(c.Has("include"));
  WriteFile(dir / "loop.cfg", "include = loop.cfg\n");
  EXPECT_EQ(ErrorKind([&] { Config::Load((dir / "loop.cfg").string()); }), "config");
  EXPECT_NE(ErrorKind([&] { Config::Load((dir / "absent.cfg").string()); }), "");
}

TEST(Config, HashIsOrderIndependentAndSensitiveToValues) {
  const Config a = Config::Parse("x = 1\ny = 2\n");
  const Config b = Config::Parse("y = 2\nx = 1\n");
  const Config c = Config::Parse("x = 1\ny = 3\n");
  EXPECT_EQ(a.Hash(), b.Hash());
  EXPECT_NE(a.Hash(), c.Hash());
  EXPECT_EQ(a.Hash().size(), 16u);
  // FNV-1a 64 of the empty string.
  EXPECT_EQ(Config().Hash(), "cbf29ce484222325");
}

TEST(Config, DerivedSeedsAreDistinctAndStable) {
  EXPECT_EQ(DeriveSeed(1, 2), DeriveSeed(1, 2));
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(1, 3));
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(2, 2));
}

TEST(Experiment, ShippedConfigsLoad) {
  for (const char* name : {"example1.cfg", "example2.cfg", "example1_desk.cfg",
                           "example2_desk.cfg", "linear_toy.cfg"}) {
    const fs::path path = fs::path(KFLQR_CONFIG_DIR) / name;
    SCOPED_TRACE(name);
    const ExperimentConfig cfg = LoadExperiment(path.string());
    EXPECT_TRUE(cfg.plant.has_value());
    EXPECT_EQ(cfg.config_hash.size(), 16u);
  }
  const ExperimentConfig ex1 = LoadExperiment(std::string(KFLQR_CONFIG_DIR) + "/example1.cfg");
  EXPECT_EQ(ex1.hyper.p_bar, 10);
  EXPECT_EQ(ex1.hyper.architecture.coupling_layers, 7);
  EXPECT_EQ(ex1.hyper.architecture.hidden_widths, (std::vector<int>{120, 120, 120}));
  EXPECT_EQ(ex1.hyper.epochs, 10000);
  EXPECT_EQ(ex1.data.ic_count, 50);
  const ExperimentConfig ex2 = LoadExperiment(std::string(KFLQR_CONFIG_DIR) + "/example2.cfg");
  EXPECT_EQ(ex2.lqr.q, 10.0 * Matrix::Identity(2, 2));
  EXPECT_EQ(ex2.hyper.epochs, 20000);
  EXPECT_EQ(ex2.data.generation.aprbs.amp_hi, 5.0);
}

TEST(Experiment, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("plant = example1\ntrain.epoch = 3\n")); }),
            "config");
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("plant = pendulum\n")); }), "config");
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("data.mode = spline\n")); }), "config");
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("train.mode = staged\n")); }), "config");
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("data.hold = 0.1, 0.01\n")); }),
            "config");
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("lqr.ic_shrink = 1.5\n")); }), "config");
  EXPECT_EQ(ErrorKind([] { MakeExperiment(Config::Parse("seed = -1\n")); }), "config");
}

TEST(Experiment, WeightMatricesAcceptScalarDiagonalOrFull) {
  const auto q = [](const std::string& v) {
    return MakeExperiment(Config::Parse("plant = example2\nlqr.q = " + v + "\n")).lqr.q;
  };
  EXPECT_EQ(q("3"), 3.0 * Matrix::Identity(2, 2));
  Matrix diag = Matrix::Zero(2, 2);
  diag.diagonal() << 1.0, 2.0;
  EXPECT_EQ(q("1, 2"), diag);
  Matrix full(2, 2);
  full << 2.0, 1.0, 1.0, 3.0;
  EXPECT_EQ(q("2, 1, 1, 3"), full);
  EXPECT_EQ(ErrorKind([&] { q("1, 2, 3"); }), "config");
}

TEST(Experiment, LinearPlantFromConfig) {
  const ExperimentConfig cfg = MakeExperiment(Config::Parse(
      "plant = linear\nplant.id = toy\nplant.a = 0, 1, -2, -1\nplant.b = 0, 1\n"
      "plant.domain_lo = -1, -1\nplant.domain_hi = 1, 1\n"));
  ASSERT_TRUE(cfg.plant.has_value());
  EXPECT_EQ(cfg.plant_id, "toy");
  EXPECT_EQ((*cfg.plant->equilibrium_jacobian)(1, 0), -2.0);
  EXPECT_EQ(cfg.plant->b_underline(1, 0), 1.0);
}

TEST(Experiment, SeedsFollowTheMasterSeed) {
  const ExperimentConfig a = MakeExperiment(Config::Parse("seed = 3\n"));
  const ExperimentConfig b = MakeExperiment(Config::Parse("seed = 4\n"));
  EXPECT_EQ(a.data.generation.seed, DeriveSeed(3, 1));
  EXPECT_EQ(a.hyper.seed, DeriveSeed(3, 2));
  EXPECT_NE(a.hyper.seed, b.hyper.seed);
  EXPECT_FALSE(a.data.unforced);
  EXPECT_TRUE(MakeExperiment(Config::Parse("train.mode = two_phase\n")).data.unforced);
}

const char* kToyConfig =
    "seed = 9\n"
    "plant = linear\nplant.id = toy\nplant.a = 0, 1, -2, -1\nplant.b = 0, 1\n"
    "plant.domain_lo = -1, -1\nplant.domain_hi = 1, 1\n"
    "[data]\nic = edge\nic_count = 8\nhorizon = 1\ndt = 0.025\n"
    "[train]\np_bar = 1\ncoupling_layers = 2\nhidden = 4\nsquash = false\n"
    "epochs = 6\ncheckpoint_every = 3\nlearning_rate = 1e-3\n"
    "[eval]\ncount = 5\nhorizon = 1\nrollouts = 2\n"
    "[lqr]\nq = 10\nr = 1\nhorizon = 2\nic_count = 4\ntrajectories = 1\n";

TEST(Pipeline, CommandsWriteTaggedOutputs) {
  const fs::path dir = FreshDir("pipeline");
  WriteFile(dir / "toy.cfg", kToyConfig);
  const ExperimentConfig cfg =
      LoadExperiment((dir / "toy.cfg").string(), {}, (dir / "out").string());

  const GenerateResult gen = CmdGenerate(cfg);
  EXPECT_EQ(gen.forced.size(), 8 * 40);
  EXPECT_FALSE(gen.unforced.has_value());
  EXPECT_EQ(ReadDataset(gen.files[0]).meta.config_hash, cfg.config_hash);

  const TrainResult trained = CmdTrain(cfg);
  EXPECT_EQ(trained.state.epochs_done, 6);
  const LiftedLTIModel model = LoadModel(ModelPath(cfg));
  EXPECT_EQ(model.a, trained.model.a);
  EXPECT_EQ(model.plant_id, "toy");
  EXPECT_EQ(model.config_hash, cfg.config_hash);

  const EvaluateResult eval = CmdEvaluate(cfg, model);
  EXPECT_EQ(eval.kf.per_trajectory.size(), 5u);
  const LqrResult lqr = CmdLqr(cfg, model);
  EXPECT_EQ(lqr.report.initial_conditions.size(), 4u);
  const std::string sim = CmdSimulate(cfg, Vector::Constant(2, 0.5), 1.0, &model);

  std::vector<std::string> tagged = {trained.files[1], sim};
  tagged.insert(tagged.end(), eval.files.begin(), eval.files.end());
  tagged.push_back(lqr.files[2]);
  tagged.push_back(lqr.files[3]);
  for (const std::string& path : tagged) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "# config_hash=" + cfg.config_hash) << path;
  }
}

TEST(Pipeline, ResumeReproducesTheUninterruptedRun) {
  const fs::path dir = FreshDir("resume");
  WriteFile(dir / "toy.cfg", kToyConfig);
  const ExperimentConfig full =
      LoadExperiment((dir / "toy.cfg").string(), {}, (dir / "full").string());
  CmdGenerate(full);
  const TrainResult uninterrupted = CmdTrain(full);

  ExperimentConfig part = full;
  part.out_dir = (dir / "part").string();
  part.hyper.epochs = 3;
  CmdTrain(part, (fs::path(full.out_dir) / "dataset.csv").string());
  ExperimentConfig rest = full;
  rest.out_dir = part.out_dir;
  const TrainResult resumed =
      CmdTrain(rest, (fs::path(full.out_dir) / "dataset.csv").string(), true);
  EXPECT_EQ(resumed.model.a_underline, uninterrupted.model.a_underline);
  EXPECT_EQ(resumed.model.c, uninterrupted.model.c);
  EXPECT_EQ(resumed.state.log.size(), 6u);

  ExperimentConfig other = rest;
  other.config_hash = "ffffffffffffffff";
  EXPECT_EQ(ErrorKind([&] {
              CmdTrain(other, (fs::path(full.out_dir) / "dataset.csv").string(), true);
            }),
            "validation");
}

TEST(Pipeline, MismatchedPlantIsRejected) {
  const fs::path dir = FreshDir("mismatch");
  WriteFile(dir / "toy.cfg", kToyConfig);
  const ExperimentConfig cfg =
      LoadExperiment((dir / "toy.cfg").string(), {}, (dir / "out").string());
  CmdGenerate(cfg);
  const TrainResult trained = CmdTrain(cfg);
  ExperimentConfig ex2 = MakeExperiment(Config::Parse("plant = example2\n"));
  ex2.out_dir = (dir / "ex2").string();
  EXPECT_EQ(ErrorKind([&] { CmdEvaluate(ex2, trained.model); }), "validation");
  ExperimentConfig zero = cfg;
  zero.data.generation.horizon = 0.0;
  EXPECT_EQ(ErrorKind([&] { CmdGenerate(zero); }), "validation");
}

}  // namespace
}  // namespace kflqr
