#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "pipeline.hpp"
#include "pseudoseg/png_io.hpp"

using namespace pseudoseg;
using namespace pseudoseg::testing;
namespace fs = std::filesystem;

namespace {

// Small dataset written once for the subcommand tests.
const fs::path& shared_data() {
  static TempDir dir("cli_data");
  static const bool made = [] {
    return run_cli({"generate-data", "--n-images", "30", "--n-classes", "8", "--image-size", "32",
                    "--seed", "2", "--out", dir.path().string()}) == 0;
  }();
  EXPECT_TRUE(made);
  return dir.path();
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST(CliExitCodes, HelpUnknownAndMissingFlags) {
  EXPECT_EQ(run_cli({"--help"}), cli::kOk);
  EXPECT_EQ(run_cli({"train", "--help"}), cli::kOk);
  EXPECT_EQ(run_cli({"frobnicate"}), cli::kUsage);
  EXPECT_EQ(run_cli({}), cli::kUsage);
  TempDir out("cli_exit");
  EXPECT_EQ(run_cli({"generate-data", "--out", out.path().string()}), cli::kUsage);  // no --seed
  EXPECT_EQ(run_cli({"train", "--data", "/nonexistent", "--seed", "1", "--out", out.path().string()}),
            cli::kUsage);
  EXPECT_EQ(run_cli({"eval", "--data", shared_data().string(), "--seed", "1", "--out",
                     out.path().string()}),
            cli::kUsage);  // no --checkpoint
}

TEST(CliExitCodes, BadInputsAreDataErrors) {
  TempDir out("cli_bad");
  const fs::path broken = out.path() / "broken";
  fs::create_directories(broken);
  {
    std::ofstream(broken / "index.json") << "{ not json";
  }
  EXPECT_EQ(run_cli({"train", "--data", broken.string(), "--seed", "1", "--episodes", "1", "--out",
                     (out.path() / "o").string()}),
            cli::kDataError);
  EXPECT_EQ(run_cli({"train", "--data", shared_data().string(), "--seed", "1", "--alpha", "-2",
                     "--out", (out.path() / "o").string()}),
            cli::kDataError);
  EXPECT_EQ(run_cli({"train", "--data", shared_data().string(), "--seed", "1", "--fold", "9",
                     "--out", (out.path() / "o").string()}),
            cli::kDataError);
}

TEST(CliPipeline, DeterministicAcrossRunsAndThreads) {
  TempDir a("pipe_a"), b("pipe_b"), c("pipe_c");
  ASSERT_EQ(run_pipeline(a.path(), {}), 0);
  ASSERT_EQ(run_pipeline(b.path(), {}), 0);
  PipelineOptions threaded;
  threaded.threads = 3;
  ASSERT_EQ(run_pipeline(c.path(), threaded), 0);
  EXPECT_TRUE(trees_identical(a.path(), b.path()));
  EXPECT_TRUE(trees_identical(a.path(), c.path()));
  for (const char* f : {"train/checkpoint.ckpt", "train/train_log.jsonl", "eval/report.json",
                        "eval/report_per_class.csv", "eval/report_by_num_classes.csv",
                        "data/index.json"}) {
    EXPECT_TRUE(fs::exists(a.path() / f)) << f;
  }
  const auto report = read_json(a.path() / "eval" / "report.json");
  EXPECT_EQ(report.at("episode_count"), 50);
  EXPECT_EQ(report.at("config").at("checkpoint"), "checkpoint.ckpt");
}

TEST(CliPipeline, SeedChangesOutputs) {
  TempDir a("seed_a"), b("seed_b");
  const std::string data = shared_data().string();
  ASSERT_EQ(run_cli({"train", "--data", data, "--episodes", "5", "--seed", "1", "--out", a.path().string()}), 0);
  ASSERT_EQ(run_cli({"train", "--data", data, "--episodes", "5", "--seed", "2", "--out", b.path().string()}), 0);
  EXPECT_FALSE(files_identical(a.path() / "checkpoint.ckpt", b.path() / "checkpoint.ckpt"));
}

TEST(CliOutputs, EnvironmentProvidesDefaultOut) {
  TempDir dir("env");
  ::setenv("PSEUDOSEG_OUT", dir.path().string().c_str(), 1);
  const int rc = run_cli({"generate-data", "--n-images", "3", "--n-classes", "8", "--image-size", "32",
                          "--seed", "1"});
  ::unsetenv("PSEUDOSEG_OUT");
  EXPECT_EQ(rc, 0);
  EXPECT_TRUE(fs::exists(dir.path() / "index.json"));
  EXPECT_EQ(run_cli({"generate-data", "--n-images", "3", "--seed", "1"}), cli::kUsage);
}

TEST(CliOutputs, NothingWrittenOutsideOut) {
  TempDir cwd("cwd"), out("out");
  const std::string cmd = "cd '" + cwd.path().string() + "' && '" PSEUDOSEG_CLI_PATH
                          "' generate-data --n-images 4 --n-classes 8 --image-size 32 --seed 1 --out '" +
                          out.path().string() + "' > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::is_empty(cwd.path()));
  EXPECT_TRUE(fs::exists(out.path() / "images" / "0000.png"));
}

TEST(CliSubcommands, SuperpixelAndPseudoclass) {
  TempDir out("sub");
  const fs::path data = shared_data();
  const std::string image = (data / "images" / "0004.png").string();
  const std::string labels = (data / "labels" / "0004.png").string();
  ASSERT_EQ(run_cli({"superpixel", "--image", image, "--algo", "slic", "--n-segments", "12",
                     "--overlay", "--out", (out.path() / "sp").string()}),
            0);
  const LabelMap regions = read_label_png(out.path() / "sp" / "regions.png");
  SuperpixelConfig cfg;
  cfg.algo = SuperpixelAlgo::Slic;
  cfg.slic.n_segments = 12;
  const SuperpixelMap expected = segment(read_image_png(image), cfg);
  for (std::size_t i = 0; i < regions.pixel_count(); ++i) ASSERT_EQ(regions[i], expected.region_id[i]);
  EXPECT_TRUE(fs::exists(out.path() / "sp" / "overlay.png"));

  const auto present = classes_present(read_label_png(labels));
  ASSERT_FALSE(present.empty());
  ASSERT_EQ(run_cli({"pseudoclass", "--image", image, "--labels", labels, "--target",
                     std::to_string(present[0]), "--policy", "target", "--seed", "4", "--out",
                     (out.path() / "pc").string()}),
            0);
  const auto rec = read_json(out.path() / "pc" / "pseudoclass.json");
  EXPECT_GE(rec.at("region_count").get<int>(), 1);
  if (!rec.at("selected_region").is_null()) {
    EXPECT_TRUE(fs::exists(out.path() / "pc" / "pseudo_mask.png"));
  }
}

TEST(CliSubcommands, DumpEmbeddingsAndAblate) {
  TempDir out("abl_cli");
  const std::string data = shared_data().string();
  ASSERT_EQ(run_cli({"train", "--data", data, "--episodes", "3", "--embed-dim", "4", "--seed", "1",
                     "--out", (out.path() / "t").string()}),
            0);
  ASSERT_EQ(run_cli({"dump-embeddings", "--data", data, "--checkpoint",
                     (out.path() / "t" / "checkpoint.ckpt").string(), "--episodes", "6", "--seed", "1",
                     "--out", (out.path() / "e").string()}),
            0);
  std::ifstream csv(out.path() / "e" / "embeddings.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "class_id,f0,f1,f2,f3");

  ASSERT_EQ(run_cli({"ablate", "--axis", "baseline", "--data", data, "--folds", "0", "--seeds", "0",
                     "--episodes", "4", "--embed-dim", "4", "--eval-episodes", "5", "--out",
                     (out.path() / "a").string()}),
            0);
  EXPECT_TRUE(fs::exists(out.path() / "a" / "ablation_baseline.md"));
  EXPECT_TRUE(fs::exists(out.path() / "a" / "ablation_baseline.csv"));
  EXPECT_EQ(run_cli({"ablate", "--axis", "bogus", "--data", data, "--seeds", "0", "--out",
                     (out.path() / "b").string()}),
            cli::kDataError);
}
