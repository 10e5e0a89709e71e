#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "pacrank/risk.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("pacrank_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string tmp(const std::string& name) { return (workdir() / name).string(); }

Run run(const std::string& args) {
  const std::string out = tmp("stdout.txt"), err = tmp("stderr.txt");
  const std::string cmd = std::string("\"") + PACRANK_CLI + "\" " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// small labelled CSV: x1,x2,x3,label with labels "pos"/"neg"
std::string small_csv() {
  static const std::string path = [] {
    const auto ds = pacrank::testing::linear_synthetic(60, (pacrank::Vector(3) << 1, -1, 0.5).finished(), 0.5, 11);
    std::ostringstream s;
    s.precision(17);
    s << "x1,x2,x3,label\n";
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
      s << ds.features(i, 0) << ',' << ds.features(i, 1) << ',' << ds.features(i, 2) << ','
        << (ds.labels[static_cast<std::size_t>(i)] > 0 ? "pos" : "neg") << '\n';
    std::ofstream(tmp("small.csv")) << s.str();
    return tmp("small.csv");
  }();
  return path;
}

std::string features_only_csv() {
  std::ifstream in(small_csv());
  std::ostringstream s;
  std::string line;
  while (std::getline(in, line)) s << line.substr(0, line.find_last_of(',')) << '\n';
  std::ofstream(tmp("features.csv")) << s.str();
  return tmp("features.csv");
}

const std::string kLabel = " --label-col label --positive-label pos";

double field(const std::string& text, const std::string& key) {
  const auto at = text.find(key);
  if (at == std::string::npos) return std::nan("");
  return std::stod(text.substr(at + key.size()));
}

}  // namespace

TEST(Cli, FitPredictEvalRoundTrip) {
  const auto model = tmp("m_ep.json");
  const auto fit = run("fit --data " + small_csv() + kLabel + " --gamma 20 --out " + model);
  ASSERT_EQ(fit.code, 0) << fit.err;
  const double train_auc = field(fit.out, "training AUC: ");
  EXPECT_GT(train_auc, 0.8);

  const auto scores = tmp("scores.csv");
  const auto pr = run("predict --model " + model + " --data " + small_csv() + " --label-col label --out " + scores);
  ASSERT_EQ(pr.code, 0) << pr.err;
  std::ifstream in(scores);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "score");
  std::vector<double> s;
  while (std::getline(in, line)) s.push_back(std::stod(line));
  ASSERT_EQ(s.size(), 60u);

  // recompute the training AUC from the predicted scores
  std::ifstream data(small_csv());
  std::getline(data, line);
  std::vector<int> y;
  while (std::getline(data, line)) y.push_back(line.substr(line.find_last_of(',') + 1) == "pos" ? 1 : -1);
  const pacrank::Vector sv = Eigen::Map<const pacrank::Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  EXPECT_NEAR(pacrank::auc(sv, y), train_auc, 1e-9);

  const auto roc = tmp("roc.csv");
  const auto ev = run("eval --model " + model + " --data " + small_csv() + kLabel + " --out " + roc);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NEAR(field(ev.out, "AUC: "), train_auc, 1e-9);
  std::ifstream rin(roc);
  std::getline(rin, line);
  EXPECT_EQ(line, "fpr,tpr");
  int rows = 0;
  std::string last;
  while (std::getline(rin, line)) {
    ++rows;
    last = line;
  }
  EXPECT_GE(rows, 2);
  EXPECT_EQ(last, "1,1");
}

TEST(Cli, PredictAcceptsFeatureOnlyFile) {
  const auto model = tmp("m_ep2.json");
  ASSERT_EQ(run("fit --data " + small_csv() + kLabel + " --gamma 5 --out " + model).code, 0);
  const auto pr = run("predict --model " + model + " --data " + features_only_csv());
  EXPECT_EQ(pr.code, 0) << pr.err;
  EXPECT_EQ(pr.out.rfind("score\n", 0), 0u);
  // eval on a file without labels is a data error
  EXPECT_EQ(run("eval --model " + model + " --data " + features_only_csv() + " --out " + tmp("r.csv")).code, 2);
  // width mismatch without dropping the label
  EXPECT_EQ(run("predict --model " + model + " --data " + small_csv()).code, 2);
}

TEST(Cli, SmcFitIsReproducible) {
  const auto a = tmp("smc_a.json"), b = tmp("smc_b.json");
  const std::string common = "fit --backend smc --particles 300 --gamma 10 --seed 7 --data " + small_csv() + kLabel;
  ASSERT_EQ(run(common + " --out " + a).code, 0);
  ASSERT_EQ(run(common + " --out " + b).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto c = tmp("smc_c.json");
  ASSERT_EQ(run("fit --backend smc --particles 300 --gamma 10 --seed 8 --data " + small_csv() + kLabel + " --out " + c)
                .code,
            0);
  EXPECT_NE(slurp(a), slurp(c));
}

TEST(Cli, OtherModelKinds) {
  const auto ss = run("fit --prior spikeslab --v0 0 --gamma 20 --data " + small_csv() + kLabel + " --out " +
                      tmp("ss.json"));
  EXPECT_EQ(ss.code, 0) << ss.err;
  EXPECT_NE(ss.out.find("inclusion probabilities"), std::string::npos);
  const auto gp = run("fit --gp --gamma 20 --data " + small_csv() + kLabel + " --out " + tmp("gp.json"));
  EXPECT_EQ(gp.code, 0) << gp.err;
  const auto ev = run("eval --model " + tmp("gp.json") + " --data " + small_csv() + kLabel + " --out " + tmp("r2.csv"));
  EXPECT_EQ(ev.code, 0) << ev.err;
  EXPECT_NEAR(field(ev.out, "AUC: "), field(gp.out, "training AUC: "), 1e-9);
}

TEST(Cli, SelectFeaturesWritesPath) {
  const auto path = tmp("path.csv");
  const auto r = run("select-features --data " + small_csv() + kLabel + " --gamma 50 --v0 0.1,0.01,0.001 --out " + path);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("largest evidence at v0"), std::string::npos);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "v0,coordinate,posterior_mean,inclusion");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 9);
  EXPECT_EQ(run("select-features --data " + small_csv() + kLabel + " --v0 0.001,0.1 --out " + path).code, 1);
}

TEST(Cli, CompareBackends) {
  const auto r = run("compare-backends --data " + small_csv() + kLabel + " --gamma 5 --particles 500 --out " +
                     tmp("cmp.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(tmp("cmp.csv")).rfind("feature,ep_mean,smc_mean,ep_sd,smc_sd\n", 0), 0u);
}

TEST(Cli, ExitCodes) {
  const std::string data = " --data " + small_csv() + kLabel;
  // usage errors
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("fit --prior spikeslab --backend smc --v0 0 --gamma 1" + data).code, 1);
  EXPECT_EQ(run("fit --gamma -1" + data).code, 1);
  EXPECT_EQ(run("fit --gamma abc" + data).code, 1);
  EXPECT_EQ(run("fit --damping 0" + data + " --gamma 1").code, 1);
  EXPECT_EQ(run("benchmark").code, 1);
  EXPECT_EQ(run("predict --data " + small_csv()).code, 1);
  // data errors
  EXPECT_EQ(run("fit --data /nonexistent.csv --gamma 1").code, 2);
  EXPECT_EQ(run("fit --data " + small_csv() + " --label-col nope --gamma 1").code, 2);
  EXPECT_EQ(run("predict --model /nonexistent.json --data " + small_csv()).code, 2);
  std::ofstream(tmp("one_class.csv")) << "x,label\n1,pos\n2,pos\n";
  EXPECT_EQ(run("fit --data " + tmp("one_class.csv") + kLabel + " --gamma 1").code, 2);
  // help is not an error
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, BenchmarkSmallRun) {
  const auto out = tmp("bench.csv");
  const auto r = run("benchmark --data " + small_csv() + kLabel + " --reps 2 --methods ep --out " + out);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Dataset\tCovariates\tBalance\tEP-AUC\tGPEP-AUC"), std::string::npos);
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dataset,seed,ep_auc,gp_auc");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 2);
}
