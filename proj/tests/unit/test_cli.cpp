#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "causalrec/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "causalrec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = causalrec::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("causalrec_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> small(const std::string& sub, const std::string& out) const {
    return {sub, "--toy-users", "20", "--hidden", "8", "--layers", "1", "--epochs", "2", "--seed", "7", "--out", at(out)};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run({"eval"}).code, 2);  // --checkpoint is required
  EXPECT_EQ(run({"train", "--variant", "bogus"}).code, 2);
}

TEST_F(CliTest, HelpExitsZero) {
  const Result r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("scmlab"), std::string::npos);
}

TEST_F(CliTest, DataErrorsExitOne) {
  const Result r = run({"prepare", "--input", at("missing.tsv"), "--out", at("p")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

TEST_F(CliTest, PrepareWritesCache) {
  const Result r = run({"prepare", "--toy-users", "20", "--out", at("p")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("users=20"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "p" / "sequences.crseq"));
  EXPECT_TRUE(fs::exists(dir_ / "p" / "resolved_config.ini"));
}

TEST_F(CliTest, TrainIsDeterministicAndWritesArtifacts) {
  ASSERT_EQ(run(small("train", "a")).code, 0);
  ASSERT_EQ(run(small("train", "b")).code, 0);
  for (const char* f : {"steps.jsonl", "model.ckpt", "W.txt", "R.txt", "edges.txt", "metrics.csv"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  }
  const std::string steps = slurp(dir_ / "a" / "steps.jsonl");
  EXPECT_GT(count_lines(steps), 0u);
  EXPECT_EQ(steps, slurp(dir_ / "b" / "steps.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a" / "model.ckpt"), slurp(dir_ / "b" / "model.ckpt"));
}

TEST_F(CliTest, ResolvedConfigReplays) {
  ASSERT_EQ(run(small("train", "a")).code, 0);
  std::string cfg = slurp(dir_ / "a" / "resolved_config.ini");
  EXPECT_EQ(cfg.rfind("[train]\n", 0), 0u);
  // everything except the output directory comes from the file
  EXPECT_EQ(run({"train", "--config", at("a/resolved_config.ini"), "--out", at("c")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "steps.jsonl"), slurp(dir_ / "c" / "steps.jsonl"));
}

TEST_F(CliTest, EvalMatchesTrainMetrics) {
  const Result t = run(small("train", "a"));
  ASSERT_EQ(t.code, 0);
  const Result e = run({"eval", "--toy-users", "20", "--seed", "7", "--checkpoint", at("a/model.ckpt")});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string line = e.out.substr(0, e.out.find('\n'));
  EXPECT_NE(t.out.find(line), std::string::npos) << line;
}

TEST_F(CliTest, AblateReportsEveryVariant) {
  std::vector<std::string> args = small("ablate", "ab");
  args[8] = "1";  // one epoch
  const Result r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 6u);  // header + 5 variants
  for (const char* v : {"full", "no_causality", "no_sparse", "no_attention", "filter"})
    EXPECT_NE(r.out.find(v), std::string::npos) << v;
  EXPECT_EQ(slurp(dir_ / "ab" / "ablation.csv"), r.out);
}

TEST_F(CliTest, ExplainListsRequestedUsers) {
  ASSERT_EQ(run(small("train", "a")).code, 0);
  const Result r = run({"explain", "--toy-users", "20", "--seed", "7", "--checkpoint", at("a/model.ckpt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(r.out.empty());
  EXPECT_EQ(run({"explain", "--toy-users", "20", "--seed", "7", "--checkpoint", at("a/model.ckpt"), "--user", "nobody"})
                .code,
            1);
}

TEST_F(CliTest, ScmlabIdentifyRuns) {
  const Result r = run({"scmlab", "--mode", "identify", "--trials", "2", "--samples", "2000", "--nodes", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed,n,shd,h_final,converged"), std::string::npos);
  EXPECT_NE(r.out.find("unequal-variance pair"), std::string::npos);
}
