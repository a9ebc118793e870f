#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("marginlab_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI inside dir_, stdout to out.txt and stderr to err.txt.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" + MARGINLAB_CLI_PATH + "' " + args +
                            " > out.txt 2> err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const { return slurp(dir_ / "out.txt"); }
  std::string err() const { return slurp(dir_ / "err.txt"); }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
  }

  fs::path dir_;
};

TEST_F(Cli, TrainWritesArtifacts) {
  ASSERT_EQ(run("train --seed 1 --out run --quiet"), 0) << err();
  for (const char* f : {"trace.csv", "model.json", "angular_stats.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  EXPECT_EQ(slurp(dir_ / "run" / "trace.csv").substr(0, 39), "epoch,loss,train_accuracy,learning_rate");
  const json model = json::parse(slurp(dir_ / "run" / "model.json"));
  EXPECT_EQ(model["format"], "MARGINLAB-MODEL");
  EXPECT_TRUE(model["metadata"]["converged"].get<bool>());
  EXPECT_EQ(model["metadata"]["config"]["dataset"]["classes"], 8);
}

TEST_F(Cli, TrainIsDeterministic) {
  ASSERT_EQ(run("train --seed 2 --out a --quiet"), 0);
  ASSERT_EQ(run("train --seed 2 --out b --quiet"), 0);
  for (const char* f : {"trace.csv", "angular_stats.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, OutputDoesNotDependOnThreadCount) {
  ASSERT_EQ(run("msweep --m-grid 0,0.2 --out serial --quiet", "MARGINLAB_THREADS=1"), 0);
  ASSERT_EQ(run("msweep --m-grid 0,0.2 --out wide --quiet", "MARGINLAB_THREADS=6"), 0);
  EXPECT_EQ(slurp(dir_ / "serial" / "msweep_runs.csv"), slurp(dir_ / "wide" / "msweep_runs.csv"));
  EXPECT_EQ(slurp(dir_ / "serial" / "msweep.csv"), slurp(dir_ / "wide" / "msweep.csv"));
}

TEST_F(Cli, NegativeMarginIsRejectedWithFieldName) {
  write("cfg.json", R"({"loss": {"variant": "LMCL", "s": 30, "m": -0.1}})");
  EXPECT_EQ(run("train --config cfg.json"), 1);
  EXPECT_NE(err().find("loss.m"), std::string::npos) << err();
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("bounds -C 8"), 1);
  EXPECT_EQ(run("train --m-grid 0.1"), 1);
  EXPECT_EQ(run("msweep --m-grid 0,x"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, MissingInputFileIsIoError) {
  write("pairs.csv", "id_a,id_b\n0,1\n");
  EXPECT_EQ(run("eval --features nothere.csv --pairs pairs.csv"), 1);  // rejected by the parser
  write("features.csv", "id,label,f0\n0,0,1\n");
  EXPECT_EQ(run("eval --features features.csv --pairs missing.csv"), 3);
}

TEST_F(Cli, Toy2dWritesSixCsvsWithUnitAngularRows) {
  ASSERT_EQ(run("toy2d --out toy --quiet"), 0) << err();
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "toy")) csvs += e.path().extension() == ".csv";
  EXPECT_EQ(csvs, 6u);
  std::istringstream in(slurp(dir_ / "toy" / "toy2d_m0.2_angular.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "label,x,y,angle,class_inter_gap");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    double label, x, y;
    char c;
    std::istringstream row(line);
    row >> label >> c >> x >> c >> y;
    EXPECT_NEAR(std::hypot(x, y), 1.0, 1e-9);
    ++rows;
  }
  EXPECT_EQ(rows, 1600u);
  const json summary = json::parse(slurp(dir_ / "toy" / "toy2d_summary.json"));
  const auto& res = summary["results"];
  EXPECT_LT(res[0]["median_min_inter_gap"].get<double>(), res[1]["median_min_inter_gap"].get<double>());
  EXPECT_LT(res[1]["median_min_inter_gap"].get<double>(), res[2]["median_min_inter_gap"].get<double>());
}

TEST_F(Cli, Toy2dSingleMarginAndDimensionCheck) {
  ASSERT_EQ(run("toy2d --out toy --m-grid 0 --seed 1 --quiet"), 0) << err();
  std::size_t csvs = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "toy")) csvs += e.path().extension() == ".csv";
  EXPECT_EQ(csvs, 2u);
  write("cfg.json", R"({"model": {"feature_dim": 3}})");
  EXPECT_EQ(run("toy2d --config cfg.json"), 1);
  EXPECT_NE(err().find("feature_dim"), std::string::npos);
}

TEST_F(Cli, MsweepSingleRowAndBeyondScope) {
  ASSERT_EQ(run("msweep --out sw --m-grid 0 --seed 1 --quiet"), 0) << err();
  std::istringstream in(slurp(dir_ / "sw" / "msweep.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2u);

  ASSERT_EQ(run("msweep --out big --m-grid 0.1,0.9 --seed 1 --quiet"), 0) << err();
  const json rep = json::parse(slurp(dir_ / "big" / "msweep.json"));
  EXPECT_TRUE(rep["rows"][0]["converged"].get<bool>());
  EXPECT_FALSE(rep["rows"][1]["converged"].get<bool>());
  EXPECT_FALSE(rep["rows"][1]["within_m_scope"].get<bool>());
}

TEST_F(Cli, BoundsReport) {
  ASSERT_EQ(run("bounds -C 8 -K 2 --pw 0.99 --s 30 --m 0.2 --json"), 0);
  const json j = json::parse(out());
  EXPECT_NEAR(j["s_lower"].get<double>(), 5.723, 1e-3);
  EXPECT_NEAR(j["m_upper"].get<double>(), 0.2929, 1e-4);
  EXPECT_TRUE(j["s_satisfied"].get<bool>());
  EXPECT_TRUE(j["m_satisfied"].get<bool>());

  ASSERT_EQ(run("bounds -C 4 -K 3 --pw 0.9 --json --out b.json"), 0);
  const json t = json::parse(slurp(dir_ / "b.json"));
  EXPECT_NEAR(t["m_upper"].get<double>(), 4.0 / 3.0, 1e-12);
  EXPECT_EQ(t["m_bound_kind"], "EXACT");
  EXPECT_FALSE(t["oracle_evidence"].empty());

  ASSERT_EQ(run("bounds -C 10 -K 2 --pw 0.99 --s 64"), 0);
  EXPECT_NE(out().find("s=64 satisfies"), std::string::npos) << out();
  EXPECT_EQ(run("bounds -C 8 -K 2 --pw 1.5"), 1);
}

TEST_F(Cli, RegionsOutputs) {
  ASSERT_EQ(run("regions --loss LMCL --margin 0.35 --out r.csv"), 0) << err();
  const json j = json::parse(out());
  EXPECT_NEAR(j["measured_band_width"].get<double>(), 0.495, j["cell"].get<double>());
  EXPECT_EQ(slurp(dir_ / "r.csv").substr(0, 28), "theta1,theta2,cos1,cos2,labe");

  ASSERT_EQ(run("regions --loss NSL --resolution 64 --out n.csv"), 0);
  EXPECT_EQ(json::parse(out())["counts"]["MARGIN"], 0);

  ASSERT_EQ(run("regions --loss SOFTMAX --w1-norm 2 --resolution 64 --out s.csv"), 0);
  EXPECT_GT(json::parse(out())["counts"]["OVERLAP"].get<int>(), 0);
  EXPECT_EQ(run("regions --loss ARC"), 1);
}

TEST_F(Cli, EvalOnExportedFeatures) {
  ASSERT_EQ(run("train --seed 1 --out run --export-holdout hold --quiet"), 0) << err();
  ASSERT_EQ(run("eval --features hold/features.csv --pairs hold/pairs.csv --out m.json"), 0) << err();
  const json v = json::parse(slurp(dir_ / "m.json"));
  EXPECT_GE(v["accuracy"].get<double>(), 0.99);
  EXPECT_EQ(v["tar_at_far"].size(), 2u);

  // The first holdout sample of each class doubles as its own probe.
  write("self.csv", "id,role\n0,gallery\n50,gallery\n0,probe\n50,probe\n");
  ASSERT_EQ(run("eval --features hold/features.csv --gallery self.csv --mode identify"), 0) << err();
  EXPECT_EQ(json::parse(out())["rank1"].get<double>(), 1.0);
}

TEST_F(Cli, EvalEmptyPairsIsProtocolError) {
  write("features.csv", "id,label,f0,f1\n0,0,1,0\n1,1,0,1\n");
  write("pairs.csv", "");
  EXPECT_EQ(run("eval --features features.csv --pairs pairs.csv"), 2);
  EXPECT_NE(err().find("protocol"), std::string::npos);
  write("pairs.csv", "id_a,id_b\n");
  EXPECT_EQ(run("eval --features features.csv --pairs pairs.csv"), 2);
}

TEST_F(Cli, EvalMalformedCsvReportsLine) {
  write("features.csv", "id,label,f0,f1\n0,0,1,0\n1,1,zero,1\n");
  write("pairs.csv", "id_a,id_b\n0,1\n");
  EXPECT_EQ(run("eval --features features.csv --pairs pairs.csv"), 3);
  EXPECT_NE(err().find("line 3"), std::string::npos) << err();
}

}  // namespace
