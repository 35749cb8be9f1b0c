#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "sps/checkpoint.hpp"
#include "sps/metrics.hpp"
#include "sps/util.hpp"
#include "test_support.hpp"

namespace {

namespace fs = std::filesystem;
using Args = std::vector<std::string>;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome sps_run(const Args& args) {
  std::ostringstream out, err;
  const int code = sps::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

Args operator+(Args a, const Args& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const Args kTinyModel{"--image-size", "16", "--patch-size", "4",      "--embed-dim",   "16",
                      "--encoder-depth", "2", "--num-heads", "2",      "--decoder-depth", "1",
                      "--mlp-ratio",  "2",  "--upscale-dim", "4"};
const Args kTinyCorpus{"--n-train", "8", "--n-test", "4", "--image-size", "16", "--min-radius", "1.5", "--max-radius", "3"};

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(sps::read_file((dir / "manifest.json").string())); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "sps_test_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(sps_run(Args{"gen-data", "--out", data()} + kTinyCorpus + Args{"--seed", "3"}).code, 0);
    const auto r = sps_run(Args{"train", "--pretrain", "--data", data(), "--out", (root_ / "base").string(),
                                "--pretrain-epochs", "2", "--pretrain-batch-size", "4"} +
                           kTinyModel);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string data() { return (root_ / "data").string(); }
  static std::string base() { return (root_ / "base" / "model.ckpt").string(); }
  static std::string dir(const std::string& name) { return (root_ / name).string(); }

  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(sps_run({}).code, 1);
  EXPECT_EQ(sps_run({"no-such-command"}).code, 1);
  EXPECT_EQ(sps_run({"--version"}).code, 0);
  EXPECT_EQ(sps_run({"eval", "--out", dir("x")}).code, 1);
  EXPECT_EQ(sps_run({"eval", "--checkpoint", dir("missing.ckpt"), "--data", data(), "--out", dir("x")}).code, 1);
  EXPECT_EQ(sps_run({"eval", "--checkpoint", base(), "--data", data(), "--out", dir("x"), "--k", "-1"}).code, 1);
  EXPECT_EQ(sps_run(Args{"gen-data", "--out", dir("g"), "--max-radius", "40"}).code, 1);
  // a corrupt checkpoint is a runtime failure, not a usage error
  sps::write_file(dir("bad.ckpt"), "not a checkpoint");
  EXPECT_EQ(sps_run({"eval", "--checkpoint", dir("bad.ckpt"), "--data", data(), "--out", dir("x")}).code, 2);
}

TEST_F(Cli, GenDataDefaultCounts) {
  const auto r = sps_run({"gen-data", "--out", dir("default_data")});
  ASSERT_EQ(r.code, 0) << r.err;
  int src_train = 0, tgt_train = 0, tgt_test = 0;
  std::ifstream in(fs::path(dir("default_data")) / "manifest.tsv");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = sps::split(line, '\t');
    src_train += f[3] == "train" && f[4] == "source";
    tgt_train += f[3] == "train" && f[4] == "target";
    tgt_test += f[3] == "test" && f[4] == "target";
  }
  EXPECT_EQ(src_train, 200);
  EXPECT_EQ(tgt_train, 200);
  EXPECT_EQ(tgt_test, 50);
  EXPECT_TRUE(fs::exists(fs::path(dir("default_data")) / "manifest.json"));
}

TEST_F(Cli, ConfigFileAndFlagOverride) {
  sps::write_file(dir("gen.cfg"), "n_train=3\nn_test=2\nimage_size=16\nmin_radius=1.5\nmax_radius=3\n");
  ASSERT_EQ(sps_run({"gen-data", "--config", dir("gen.cfg"), "--n-test", "1", "--out", dir("cfg_data")}).code, 0);
  EXPECT_EQ(count_lines(fs::path(dir("cfg_data")) / "manifest.tsv"), 1 + 3 + 3 + 1);
  sps::write_file(dir("bad.cfg"), "n_train=3\nlr=0.1\n");
  EXPECT_EQ(sps_run({"gen-data", "--config", dir("bad.cfg"), "--out", dir("cfg_bad")}).code, 1);
}

TEST_F(Cli, VanillaRejectsTrainingFlags) {
  EXPECT_EQ(sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "vanilla", "--epochs", "3",
                     "--out", dir("v1")})
                .code,
            1);
  EXPECT_EQ(sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "vanilla", "--grid", "--out",
                     dir("v2")})
                .code,
            1);
  const auto ok = sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "vanilla", "--out", dir("v3")});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(sps::file_digest(base()), sps::file_digest(dir("v3") + "/model.ckpt"));
}

TEST_F(Cli, AlphaOutsideDistillationIsAConfigError) {
  EXPECT_EQ(sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "lora_sp", "--alpha", "0.5",
                     "--out", dir("a1")})
                .code,
            1);
}

TEST_F(Cli, GridWritesOneRowPerCell) {
  const auto r = sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "lora", "--grid",
                          "--lr-grid", "1e-3", "--wd-grid", "1e-4,1e-3", "--epoch-grid", "100", "--batch-size", "8",
                          "--out", dir("grid")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(fs::path(dir("grid")) / "grid.tsv"), 1 + 2);
  EXPECT_TRUE(fs::exists(fs::path(dir("grid")) / "model.ckpt"));
}

TEST_F(Cli, TrainEvalAndExport) {
  auto r = sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "lora_sp_kd", "--epochs", "1",
                    "--lr", "1e-3", "--batch-size", "4", "--out", dir("kd")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = manifest(dir("kd"));
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["base_checkpoint_digest"], sps::model_digest(sps::load_checkpoint(base())));
  EXPECT_EQ(count_lines(fs::path(dir("kd")) / "train_log.jsonl"), 2);

  r = sps_run({"eval", "--checkpoint", dir("kd") + "/model.ckpt", "--data", data(), "--k", "2", "--export-masks",
               "--out", dir("kd_eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = sps::read_report(dir("kd_eval") + "/report.jsonl");
  EXPECT_EQ(report.k, 2);
  EXPECT_EQ(report.per_image.size(), 4u);
  EXPECT_EQ(report.ground_truth_prompts, 0);
  int masks = 0;
  for (const auto& e : fs::directory_iterator(fs::path(dir("kd_eval")) / "masks")) masks += e.path().extension() == ".png";
  EXPECT_EQ(masks, 4);

  r = sps_run({"eval", "--checkpoint", dir("kd") + "/model.ckpt", "--data", data(), "--out", dir("kd_eval1")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(sps::read_report(dir("kd_eval1") + "/report.jsonl").k, 1);
}

TEST_F(Cli, PredictWritesPassesAndTrace) {
  const std::string img = data() + "/images/target_test_0.png";
  const auto r = sps_run({"predict", "--checkpoint", base(), "--image", img, "--k", "2", "--out", dir("pred")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i <= 2; ++i) EXPECT_TRUE(fs::exists(fs::path(dir("pred")) / ("pass" + std::to_string(i) + ".png")));
  EXPECT_EQ(count_lines(fs::path(dir("pred")) / "trace.tsv"), 3);
}

TEST_F(Cli, PredictFallsBackToNoPromptOnEmptyPass) {
  sps::Model m = sps::load_checkpoint(base());
  m.params.at("decoder.mask_bias")(0, 0) = -1000.0f;
  sps::save_checkpoint(m, dir("empty.ckpt"));
  const auto r = sps_run({"predict", "--checkpoint", dir("empty.ckpt"), "--image", data() + "/images/target_test_0.png",
                          "--k", "1", "--out", dir("pred_empty")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string trace = sps::read_file(dir("pred_empty") + "/trace.tsv");
  EXPECT_NE(trace.find("1\t0\t0\tnone"), std::string::npos) << trace;
}

TEST_F(Cli, RerunReproducesArtifacts) {
  auto r = sps_run({"train", "--checkpoint", base(), "--data", data(), "--ablation", "lora", "--epochs", "1",
                    "--batch-size", "4", "--out", dir("orig")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = sps_run({"rerun", "--manifest", dir("orig") + "/manifest.json", "--out", dir("again")});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("reproduced"), std::string::npos);

  // tamper with the recorded digest of one artifact
  auto m = manifest(dir("orig"));
  m["artifacts"][0]["digest"] = "0000";
  sps::write_file(dir("tampered.json"), m.dump());
  r = sps_run({"rerun", "--manifest", dir("tampered.json"), "--out", dir("again2")});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(sps_run({"rerun", "--manifest", dir("nope.json"), "--out", dir("again3")}).code, 1);
}

TEST_F(Cli, AblateWithSingleSeedHasNoStdColumn) {
  const auto r = sps_run({"ablate", "--checkpoint", base(), "--data", data(), "--seeds", "1", "--epochs", "1",
                          "--batch-size", "4", "--out", dir("ablate")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string tsv = sps::read_file(dir("ablate") + "/ablation_summary.tsv");
  const auto lines = sps::split(sps::trim(tsv), '\n');
  ASSERT_EQ(lines.size(), 5u);
  for (const auto& l : lines) EXPECT_EQ(sps::split(l, '\t').size(), 3u) << l;
  EXPECT_EQ(tsv.find("std"), std::string::npos);
  for (const char* arm : {"vanilla", "lora", "lora_sp", "lora_sp_kd"}) {
    EXPECT_TRUE(fs::exists(fs::path(dir("ablate")) / (std::string(arm) + "_seed1") / "report.jsonl")) << arm;
  }
  // vanilla is the base checkpoint itself and stores no copy
  EXPECT_FALSE(fs::exists(fs::path(dir("ablate")) / "vanilla_seed1" / "model.ckpt"));
  EXPECT_TRUE(fs::exists(fs::path(dir("ablate")) / "lora_sp_kd_seed1" / "model.ckpt"));
  EXPECT_EQ(manifest(dir("ablate"))["seed"], 1);
}

TEST_F(Cli, PromptStudySharesBase) {
  const auto r = sps_run({"prompt-study", "--checkpoint", base(), "--data", data(), "--seeds", "0,1", "--epochs", "1",
                          "--batch-size", "4", "--out", dir("study")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string tsv = sps::read_file(dir("study") + "/prompt_study_summary.tsv");
  const auto lines = sps::split(sps::trim(tsv), '\n');
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(sps::split(lines[0], '\t').size(), 5u);
  EXPECT_EQ(manifest(dir("study"))["base_checkpoint_digest"], sps::model_digest(sps::load_checkpoint(base())));
  for (const char* s : {"none", "random_point", "gt_center_point"}) EXPECT_NE(tsv.find(s), std::string::npos) << s;
}

}  // namespace
