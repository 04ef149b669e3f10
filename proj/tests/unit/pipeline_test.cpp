#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "support/cli.hpp"
#include "support/testing.hpp"

namespace chatternet {
namespace {

using testing::fixture;
using testing::run_cli;
using testing::scratch_dir;
using testing::slurp;

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = scratch_dir("cli_pipeline");
    const auto c = fixture("corpus200");
    const auto r = run_cli("ingest --news " + (c / "news.jsonl").string() + " --subs " +
                           (c / "submissions.jsonl").string() + " --comments " + (c / "comments.jsonl").string() +
                           " --out " + (root_ / "store").string());
    ASSERT_EQ(r.exit_code, 0) << r.output;
  }
  static inline std::filesystem::path root_;
};

TEST_F(CliPipeline, TrainEvaluateAndRerunAreByteIdentical) {
  const auto store = (root_ / "store").string();
  const auto run = (root_ / "run").string();
  auto r = run_cli("train --config " + fixture("corpus200/run_config.json").string() + " --data " + store +
                   " --out " + run + " --variant full --epochs 1");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run_cli("evaluate --run " + run + " --data " + store + " --per-subreddit");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto csv = slurp(run + "/eval/metrics.csv");
  for (const char* col : {"mape", "kendall_tau", "spearman_rho", "stepwise_tau"}) {
    EXPECT_NE(csv.find(col), std::string::npos) << col;
  }
  const auto manifest = nlohmann::json::parse(slurp(run + "/manifest.json"));
  EXPECT_EQ(manifest.at("command"), "train");
  EXPECT_TRUE(manifest.contains("data"));

  const auto rerun = (root_ / "rerun").string();
  r = run_cli("rerun --manifest " + run + "/manifest.json --out " + rerun);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run_cli("evaluate --run " + rerun + " --data " + store + " --per-subreddit");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(slurp(rerun + "/eval/metrics.csv"), csv);

  r = run_cli("rerun --manifest " + run + "/eval/manifest.json --out " + (root_ / "eval2").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(slurp((root_ / "eval2/metrics.csv").string()), csv);
}

TEST_F(CliPipeline, ExitCodes) {
  const auto store = (root_ / "store").string();
  const auto cfg = fixture("corpus200/run_config.json").string();
  EXPECT_EQ(run_cli("").exit_code, 2);
  EXPECT_EQ(run_cli("train --config " + cfg + " --data " + store + " --out " + (root_ / "x").string() +
                    " --variant lstm_cc --m 0").exit_code, 2);
  EXPECT_EQ(run_cli("train --config " + cfg + " --data " + store + " --out " + (root_ / "y").string() +
                    " --variant bogus").exit_code, 2);
  EXPECT_EQ(run_cli("evaluate --run " + (root_ / "nothing").string() + " --data " + store).exit_code, 3);
  EXPECT_EQ(run_cli("report --runs " + (root_ / "nothing").string() + " --out " + (root_ / "rep").string()).exit_code, 3);
  EXPECT_EQ(run_cli("ingest --news /nonexistent --subs /nonexistent --comments /nonexistent --out " +
                    (root_ / "z").string()).exit_code, 3);
}

TEST_F(CliPipeline, ReportCollectsRuns) {
  const auto store = (root_ / "store").string();
  const auto run = (root_ / "static_run").string();
  ASSERT_EQ(run_cli("train --config " + fixture("corpus200/run_config.json").string() + " --data " + store +
                    " --out " + run + " --variant static --epochs 1").exit_code, 0);
  ASSERT_EQ(run_cli("evaluate --run " + run + " --data " + store + " --plot").exit_code, 0);
  EXPECT_TRUE(std::filesystem::exists(run + "/eval/scatter.svg"));
  const auto out = (root_ / "report").string();
  const auto r = run_cli("report --runs " + run + " --out " + out);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(slurp(out + "/comparison.md").find("| static |"), std::string::npos);
  EXPECT_NE(slurp(out + "/comparison.csv").find(",static,"), std::string::npos);
}

TEST_F(CliPipeline, CasPredBaseline) {
  const auto out = (root_ / "caspred").string();
  const auto r = run_cli("caspred --data " + (root_ / "store").string() + " --out " + out + " --lexicon " +
                         fixture("lexicon.csv").string() + " --k 4");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto metrics = slurp(out + "/caspred_metrics.csv");
  EXPECT_EQ(metrics.rfind("variant,n_train,n_test,stepwise_tau", 0), 0u);
  EXPECT_NE(metrics.find("org,"), std::string::npos);
  EXPECT_NE(metrics.find("full,"), std::string::npos);
}

}  // namespace
}  // namespace chatternet
