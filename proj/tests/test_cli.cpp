#include <gtest/gtest.h>

#include <cstdio>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "resamplekit/report.hpp"

using namespace resamplekit;
using nlohmann::json;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  const std::string err_path = ::testing::TempDir() + "resamplekit_cli_err.txt";
  const std::string cmd = std::string(RESAMPLEKIT_CLI) + " " + args + " 2>" + err_path;
  Run run;
  std::FILE* pipe = popen(cmd.c_str(), "r");
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) run.out.append(buf, n);
  const int raw = pclose(pipe);
  run.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  if (std::FILE* f = std::fopen(err_path.c_str(), "r")) {
    while (std::size_t n = std::fread(buf, 1, sizeof buf, f)) run.err.append(buf, n);
    std::fclose(f);
  }
  return run;
}

std::string data(const std::string& name) { return std::string(RESAMPLEKIT_DATA) + "/" + name; }

}  // namespace

TEST(Cli, EstimateReportsEstimateAndVariances) {
  const auto run = cli("estimate --spec " + data("twoof3.txt") + " --samples " + data("twoof3_samples.csv") +
                       " --t 1 --r 1000 --seed 7");
  ASSERT_EQ(run.status, 0) << run.err;
  const auto j = json::parse(run.out);
  EXPECT_EQ(j["realizations"], 1000);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_GE(j["estimate"].get<double>(), 0.0);
  EXPECT_GT(j["empirical_variance"].get<double>(), 0.0);
  EXPECT_TRUE(j["variance"]["exact"].get<bool>());
  // Conditional on the data, Var Θ* = Var φ(X*) / r.
  const double mu = j["variance"]["mu"]["value"], mu2 = j["variance"]["mu2"]["value"];
  EXPECT_NEAR(j["variance"]["variance"].get<double>(), (mu2 - mu * mu) / 1000.0, 1e-12);
}

TEST(Cli, SameSeedSameBytes) {
  const std::string args = "estimate --spec " + data("twoof3.json") + " --samples " + data("twoof3_samples.csv") +
                           " --r 500 --seed 3";
  EXPECT_EQ(cli(args + " --threads 1").out, cli(args + " --threads 3").out);
}

TEST(Cli, SeedIsMandatoryForStochasticCommands) {
  const auto run = cli("estimate --spec " + data("twoof3.txt") + " --samples " + data("twoof3_samples.csv") + " --t 1");
  EXPECT_EQ(run.status, 10);
  EXPECT_EQ(json::parse(run.err)["error"], "invalid_argument");
  EXPECT_TRUE(run.out.empty());
}

TEST(Cli, DistinctExitCodes) {
  auto code = [](const std::string& args) { return cli(args).status; };
  EXPECT_EQ(code("estimate --spec /nonexistent --samples " + data("twoof3_samples.csv") + " --seed 1"), 22);
  EXPECT_EQ(code("damage --ha " + data("renewal_hx.csv") + " --hb " + data("damage_hb.csv") + " --t 5 --seed 1"), 16);
  EXPECT_EQ(code("coverage --spec " + data("twoof3.txt") + " --gen exp:1 --sizes 3"), 13);
  EXPECT_EQ(code("renewal-truth --x normal:2 --y normal:2,1 --m 5"), 23);
  EXPECT_EQ(code("repro table-nothing"), 2);
  const auto err = cli("damage --ha " + data("renewal_hx.csv") + " --hb " + data("damage_hb.csv") + " --t 5 --seed 1");
  EXPECT_EQ(json::parse(err.err)["error"], "infeasible_layout");
}

TEST(Cli, BudgetExceededIsReported) {
  const auto run = cli("coverage --spec " + data("first_failure.txt") +
                       " --gen exp:3,exp:3,exp:2 --sizes 500,500,500 --mode exact");
  EXPECT_EQ(run.status, 18);
  EXPECT_EQ(json::parse(run.err)["error"], "budget_exceeded");
}

TEST(Cli, RenewalWarnsOnNegativeValues) {
  const std::string path = ::testing::TempDir() + "resamplekit_negative.csv";
  std::FILE* f = std::fopen(path.c_str(), "w");
  std::fputs("H_X\n1.5\n-0.5\n2.0\n2.5\n", f);
  std::fclose(f);
  auto run = cli("renewal --hx " + path + " --hy " + data("renewal_hy.csv") + " --m 2 --k 1 --r 100 --seed 2");
  ASSERT_EQ(run.status, 0) << run.err;
  EXPECT_EQ(json::parse(run.err)["warning"], "negative_values");
  EXPECT_EQ(json::parse(run.out)["m_Y"], 1);
  run = cli("renewal --hx " + data("renewal_hx.csv") + " --hy " + data("renewal_hy.csv") + " --m 5 --k 1 --r 100 --seed 2");
  EXPECT_TRUE(run.err.empty());
}

TEST(Cli, CoverageExactMatchesKnownRow) {
  const auto run = cli("coverage --spec " + data("first_failure.txt") +
                       " --gen exp:3,exp:3,exp:2 --sizes 3,3,3 --gamma 0.9 --k 10 --r 16 --mode exact");
  ASSERT_EQ(run.status, 0) << run.err;
  const auto j = json::parse(run.out);
  EXPECT_NEAR(j["theta"].get<double>(), 0.25, 1e-12);
  EXPECT_NEAR(j["R"].get<double>(), 0.7708, 5e-4);
}

TEST(Cli, TableFormatsUseSixDigits) {
  const auto run = cli("renewal-truth --x normal:2,1 --y normal:2,1 --m 5 --k 1 --format csv");
  ASSERT_EQ(run.status, 0) << run.err;
  EXPECT_NE(run.out.find("1,0.747507,0.0533477,"), std::string::npos) << run.out;
}

TEST(Report, CsvSplitsStandardErrors) {
  Table t{"demo", {"n", "value"}, {}, json::object()};
  t.rows.push_back({Cell::integer(3), Cell::measured(0.123456789, 0.0012345678)});
  t.rows.push_back({Cell::integer(4), Cell::real(2.0)});
  EXPECT_EQ(format_csv(t), "n,value,value_se\n3,0.123457,0.00123457\n4,2,\n");
  const auto j = table_json(t);
  EXPECT_EQ(j["rows"][0]["value"]["se"], 0.0012345678);
  EXPECT_EQ(j["rows"][1]["value"], 2.0);
  EXPECT_NE(format_table(t).find("0.123457 (0.00123457)"), std::string::npos);
}
