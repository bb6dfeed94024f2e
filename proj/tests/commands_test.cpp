#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "auxcal/dataset.hpp"
#include "auxcal/error.hpp"
#include "commands.hpp"

namespace auxcal::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CommandsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("auxcal_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  RunConfig synth_cfg() const {
    RunConfig c;
    c.command = "synth";
    c.out = root_ / "synth";
    c.synth.k = 4;
    c.synth.n_in = 400;
    c.synth.n_shift = 150;
    c.synth.n_ood = 150;
    return c;
  }

  RunConfig fit_cfg(const std::string& kind) const {
    RunConfig c;
    c.command = "fit";
    c.kind = kind;
    c.out = root_ / ("fit_" + kind);
    c.data = root_ / "synth" / "dataset.csv";
    c.train_fraction = 0.7;
    c.val_fraction = 0.1;
    c.test_fraction = 0.2;
    c.hidden = {6, 4};
    c.epochs = 5;
    c.grid = {{0.0, 1.0}, {1.0}};
    c.dirichlet_epochs = 5;
    c.sb_bins = 5;
    return c;
  }

  fs::path root_;
};

TEST_F(CommandsTest, FullPipeline) {
  const auto s = run_command(synth_cfg());
  EXPECT_TRUE(fs::exists(root_ / "synth" / "dataset.csv"));
  EXPECT_TRUE(s.warnings.empty());

  for (const std::string kind : {"mp", "ts", "sb", "dirichlet", "ccac", "ccac-s"}) {
    SCOPED_TRACE(kind);
    run_command(fit_cfg(kind));
    const auto fit_dir = root_ / ("fit_" + kind);
    for (const char* f : {"model.json", "report.json", "manifest.json", "splits/test.csv"}) {
      EXPECT_TRUE(fs::exists(fit_dir / f)) << f;
    }
    RunConfig e;
    e.command = "eval";
    e.model = fit_dir / "model.json";
    e.data = fit_dir / "splits" / "test.csv";
    e.out = root_ / ("eval_" + kind);
    run_command(e);
    const auto report = nlohmann::json::parse(slurp(e.out / "report.json"));
    EXPECT_EQ(report["model_kind"], kind);
    for (const char* m : {"ece", "brier", "auroc", "aupr", "p90"}) EXPECT_TRUE(report["metrics"][m].is_number()) << m;
    EXPECT_TRUE(fs::exists(e.out / "tables" / "reliability.csv"));
    EXPECT_TRUE(fs::exists(e.out / "tables" / "histogram.csv"));
  }

  RunConfig t;
  t.command = "transfer";
  t.model = root_ / "fit_ccac-s" / "model.json";
  t.data = root_ / "synth" / "dataset.csv";
  t.out = root_ / "transfer";
  t.transfer_epochs = 5;
  const auto tr = run_command(t);
  EXPECT_TRUE(tr.warnings.empty());
  EXPECT_EQ(nlohmann::json::parse(slurp(t.out / "model.json"))["kind"], "ccac-t");

  t.model = root_ / "fit_ccac" / "model.json";
  EXPECT_THROW(run_command(t), Error);
}

TEST_F(CommandsTest, ReplayFromManifestIsByteIdentical) {
  run_command(synth_cfg());
  const auto cfg = fit_cfg("ccac");
  run_command(cfg);
  const auto model = slurp(cfg.out / "model.json");
  const auto report = slurp(cfg.out / "report.json");
  const auto manifest = slurp(cfg.out / "manifest.json");
  run_command(load_config(cfg.out / "manifest.json"));
  EXPECT_EQ(slurp(cfg.out / "model.json"), model);
  EXPECT_EQ(slurp(cfg.out / "report.json"), report);
  EXPECT_EQ(slurp(cfg.out / "manifest.json"), manifest);
}

TEST_F(CommandsTest, UndefinedMetricBecomesNullWithWarning) {
  // Every record classified correctly: nothing to detect.
  std::ofstream(root_ / "easy.csv") << "logit_0,logit_1,label\n5,0,0\n0,5,1\n";
  RunConfig fit;
  fit.command = "fit";
  fit.kind = "mp";
  fit.train = root_ / "easy.csv";
  fit.val = root_ / "easy.csv";
  fit.out = root_ / "fit";
  run_command(fit);
  RunConfig e;
  e.command = "eval";
  e.model = root_ / "fit" / "model.json";
  e.data = root_ / "easy.csv";
  e.out = root_ / "eval";
  const auto r = run_command(e);
  EXPECT_FALSE(r.warnings.empty());
  const auto report = nlohmann::json::parse(slurp(e.out / "report.json"));
  EXPECT_TRUE(report["metrics"]["auroc"].is_null());
  EXPECT_TRUE(report["metrics"]["ece"].is_number());
}

TEST_F(CommandsTest, EvalRejectsClassCountMismatch) {
  run_command(synth_cfg());
  run_command(fit_cfg("ts"));
  std::ofstream(root_ / "k2.csv") << "logit_0,logit_1,label\n1,0,0\n";
  RunConfig e;
  e.command = "eval";
  e.model = root_ / "fit_ts" / "model.json";
  e.data = root_ / "k2.csv";
  e.out = root_ / "eval";
  EXPECT_THROW(run_command(e), Error);
}

TEST_F(CommandsTest, SynthFormats) {
  auto c = synth_cfg();
  run_command(c);
  std::ifstream in(c.out / "dataset.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "logit_0,logit_1,logit_2,logit_3,label");
  const auto first = slurp(c.out / "dataset.csv");
  run_command(load_config(c.out / "manifest.json"));
  EXPECT_EQ(slurp(c.out / "dataset.csv"), first);

  c.synth.n_in = 0;
  c.synth.n_shift = 0;
  c.synth.n_ood = 5;
  c.out = root_ / "ood";
  run_command(c);
  const auto ds = load_dataset(c.out / "dataset.csv");
  ASSERT_EQ(ds.size(), 5u);
  for (const auto& r : ds.records()) EXPECT_FALSE(r.label);
}

TEST_F(CommandsTest, FitReports) {
  run_command(synth_cfg());
  run_command(fit_cfg("mp"));
  auto model = nlohmann::json::parse(slurp(root_ / "fit_mp" / "model.json"));
  EXPECT_TRUE(model["params"].empty());
  auto report = nlohmann::json::parse(slurp(root_ / "fit_mp" / "report.json"));
  EXPECT_TRUE(report["val_ece"].is_number());

  run_command(fit_cfg("ts"));
  model = nlohmann::json::parse(slurp(root_ / "fit_ts" / "model.json"));
  EXPECT_GT(model["params"]["temperature"].get<double>(), 0.0);

  auto c = fit_cfg("ccac");
  c.grid = {{0.5}, {2.0}};
  run_command(c);
  report = nlohmann::json::parse(slurp(c.out / "report.json"));
  EXPECT_EQ(report["selection"]["lambda1"], 0.5);
  EXPECT_EQ(report["selection"]["lambda2"], 2.0);
}

TEST_F(CommandsTest, EvalOnCleanDataAndRepeatable) {
  auto c = synth_cfg();
  c.synth.in_margin = 12.0;
  c.synth.n_shift = 0;
  c.synth.n_ood = 0;
  run_command(c);
  RunConfig fit;
  fit.command = "fit";
  fit.kind = "mp";
  fit.data = c.out / "dataset.csv";
  fit.out = root_ / "fit";
  run_command(fit);
  RunConfig e;
  e.command = "eval";
  e.model = fit.out / "model.json";
  e.data = c.out / "dataset.csv";
  e.out = root_ / "eval";
  run_command(e);
  const auto first = slurp(e.out / "report.json");
  EXPECT_LT(nlohmann::json::parse(first)["metrics"]["ece"].get<double>(), 0.01);
  run_command(e);
  EXPECT_EQ(slurp(e.out / "report.json"), first);
}

TEST_F(CommandsTest, TransferCapsClampWithWarning) {
  auto c = synth_cfg();
  c.synth.n_in = 200;
  c.synth.n_shift = 0;
  c.synth.n_ood = 0;
  run_command(c);
  run_command(fit_cfg("ccac-s"));
  RunConfig t;
  t.command = "transfer";
  t.model = root_ / "fit_ccac-s" / "model.json";
  t.data = c.out / "dataset.csv";
  t.out = root_ / "transfer";
  t.transfer_epochs = 2;
  const auto r = run_command(t);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  RunConfig c;
  c.command = "fit";
  c.seed = 42;
  c.hidden = {7};
  c.rule = "geo_mean_product";
  c.grid.lambda2_values = {3.0};
  RunConfig back;
  apply_json(back, to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(apply_json(back, nlohmann::json{{"sed", 1}}), Error);
  EXPECT_THROW(run_command(RunConfig{}), Error);  // no command
}

}  // namespace
}  // namespace auxcal::cli
