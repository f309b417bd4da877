#include <cstdlib>

#include <gtest/gtest.h>

#include "cli_support.hpp"
#include "tap/io.hpp"

namespace tap {
namespace {

using testing::read_bytes;
using testing::run_tool;
using testing::ScratchDir;

const std::vector<std::string> kTinyGen{"--num-videos", "6",  "--num-frames",       "24", "--max-events",
                                        "2",            "--min-event-frames", "3",  "--max-event-frames", "6"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class EnvGuard {
 public:
  explicit EnvGuard(const char* name) : name_(name) {}
  ~EnvGuard() { unsetenv(name_); }

 private:
  const char* name_;
};

TEST(CliTest, FullPipelineWritesEveryArtifact) {
  ScratchDir dir("tap-cli");
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "d.json", "--seed", "3"}, kTinyGen)).code, kExitOk);
  auto r = run_tool({"train-localizer", "--data", dir / "d.json", "--out", dir / "loc.ckpt", "--trace",
                     dir / "loc.trace.json", "--epochs", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  r = run_tool({"train-captioner", "--data", dir / "d.json", "--localizer", dir / "loc.ckpt", "--out",
                dir / "cap.ckpt", "--trace", dir / "cap.trace.json", "--epochs", "2", "--warmup-epochs", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* decode : {"ecs", "random", "first-k"}) {
    r = run_tool({"infer", "--data", dir / "d.json", "--localizer", dir / "cap.ckpt.localizer", "--captioner",
                  dir / "cap.ckpt", "--out", dir / (std::string(decode) + ".json"), "--decode", decode});
    ASSERT_EQ(r.code, kExitOk) << decode << ": " << r.err;
    EXPECT_EQ(read_json(dir / (std::string(decode) + ".json"), "tap-predictions")["decode"], decode);
  }
  r = run_tool({"eval", "--data", dir / "d.json", "--predictions", dir / "ecs.json", "--out", dir / "report.json",
                "--table", dir / "report.txt"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NO_THROW(read_json(dir / "report.json", "tap-report"));
  EXPECT_NE(read_bytes(dir / "report.txt").find("dense_caption"), std::string::npos);
  const auto trace = read_json(dir / "cap.trace.json", "tap-captioner-trace");
  EXPECT_EQ(trace["epochs"].size(), 2u);
  EXPECT_TRUE(trace["epochs"][0].contains("denoise_loss"));
  EXPECT_EQ(read_json(dir / "loc.trace.json", "tap-localizer-trace")["epochs"].size(), 3u);
}

TEST(CliTest, GroundTruthPredictionsEvaluatePerfectly) {
  ScratchDir dir("tap-cli");
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "d.json"}, kTinyGen)).code, kExitOk);
  const Dataset d = load_dataset(dir / "d.json");
  std::vector<VideoPrediction> preds;
  for (const auto& v : d.videos) preds.push_back({v.id, as_predictions(v.events)});
  write_json(dir / "p.json", predictions_to_json(preds, d.vocab, "ground-truth"));
  ASSERT_EQ(run_tool({"eval", "--data", dir / "d.json", "--predictions", dir / "p.json", "--out", dir / "r.json"}).code,
            kExitOk);
  const auto metrics = read_json(dir / "r.json", "tap-report")["metrics"];
  for (const char* k : {"localization_recall", "localization_precision", "dense_caption", "soda_like"}) {
    EXPECT_NEAR(metrics[k].get<double>(), 100.0, 1e-9) << k;
  }
}

TEST(CliTest, DistinctExitCodes) {
  ScratchDir dir("tap-cli");
  EXPECT_EQ(run_tool({}).code, kExitUsage);
  EXPECT_EQ(run_tool({"gen", "--out", dir / "d.json", "--bogus", "1"}).code, kExitUsage);
  EXPECT_EQ(run_tool({"gen", "--out", dir / "d.json", "--num-videos", "many"}).code, kExitUsage);
  EXPECT_EQ(run_tool({"infer", "--data", "x", "--localizer", "y", "--captioner", "z", "--out", "o", "--decode", "beam"})
                .code,
            kExitUsage);

  const auto missing = run_tool({"eval", "--data", dir / "nope.json", "--predictions", dir / "p.json", "--out",
                                 dir / "r.json"});
  EXPECT_EQ(missing.code, kExitMissingFile);
  EXPECT_FALSE(missing.err.empty());
  EXPECT_EQ(missing.err.find('\n'), missing.err.size() - 1) << missing.err;

  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "d.json"}, kTinyGen)).code, kExitOk);
  auto j = read_json(dir / "d.json", "tap-dataset");
  j["version"] = kFileVersion + 1;
  write_json(dir / "future.json", j);
  EXPECT_EQ(run_tool({"train-localizer", "--data", dir / "future.json", "--out", dir / "l.ckpt"}).code, kExitSchema);

  // A dataset passed where a checkpoint belongs.
  EXPECT_EQ(run_tool({"infer", "--data", dir / "d.json", "--localizer", dir / "d.json", "--captioner", dir / "d.json",
                      "--out", dir / "p.json"})
                .code,
            kExitSchema);

  // Invalid values that parse are ordinary failures.
  EXPECT_EQ(run_tool({"gen", "--out", dir / "e.json", "--noise", "-1"}).code, kExitFailure);
}

TEST(CliTest, ConfigFileFeedsOptionsAndFlagsWin) {
  ScratchDir dir("tap-cli");
  write_text(dir / "cfg.json", R"({"num-videos": 3, "num-frames": 24, "max-event-frames": 6, "min-event-frames": 3,
                                   "max-events": 2, "seed": 9})");
  ASSERT_EQ(run_tool({"gen", "--config", dir / "cfg.json", "--out", dir / "a.json"}).code, kExitOk);
  EXPECT_EQ(load_dataset(dir / "a.json").videos.size(), 3u);
  ASSERT_EQ(run_tool({"gen", "--config", dir / "cfg.json", "--out", dir / "b.json", "--num-videos", "5"}).code, kExitOk);
  EXPECT_EQ(load_dataset(dir / "b.json").videos.size(), 5u);
  ASSERT_EQ(run_tool({"gen", "--out", dir / "c.json", "--num-videos", "3", "--num-frames", "24", "--max-event-frames",
                      "6", "--min-event-frames", "3", "--max-events", "2", "--seed", "9"})
                .code,
            kExitOk);
  EXPECT_EQ(read_bytes(dir / "a.json"), read_bytes(dir / "c.json"));

  write_text(dir / "bad.json", R"({"no-such-option": 1})");
  EXPECT_EQ(run_tool({"gen", "--config", dir / "bad.json", "--out", dir / "x.json"}).code, kExitUsage);
  EXPECT_EQ(run_tool({"gen", "--config", dir / "absent.json", "--out", dir / "x.json"}).code, kExitMissingFile);
}

TEST(CliTest, SeedFallsBackToEnvironmentAndFlagWins) {
  ScratchDir dir("tap-cli");
  EnvGuard guard("TAP_SEED");
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "flag.json", "--seed", "41"}, kTinyGen)).code, kExitOk);
  setenv("TAP_SEED", "41", 1);
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "env.json"}, kTinyGen)).code, kExitOk);
  EXPECT_EQ(read_bytes(dir / "flag.json"), read_bytes(dir / "env.json"));
  setenv("TAP_SEED", "7", 1);
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "both.json", "--seed", "41"}, kTinyGen)).code, kExitOk);
  EXPECT_EQ(read_bytes(dir / "flag.json"), read_bytes(dir / "both.json"));
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "seven.json"}, kTinyGen)).code, kExitOk);
  EXPECT_NE(read_bytes(dir / "flag.json"), read_bytes(dir / "seven.json"));
}

TEST(CliTest, RerunsAreByteIdentical) {
  ScratchDir dir("tap-cli");
  ASSERT_EQ(run_tool(cat({"gen", "--out", dir / "d.json", "--seed", "5"}, kTinyGen)).code, kExitOk);
  for (const char* tag : {"1", "2"}) {
    const std::string t(tag);
    ASSERT_EQ(run_tool({"train-localizer", "--data", dir / "d.json", "--out", dir / ("loc" + t), "--epochs", "2",
                        "--seed", "5"})
                  .code,
              kExitOk);
    ASSERT_EQ(run_tool({"train-captioner", "--data", dir / "d.json", "--localizer", dir / ("loc" + t), "--out",
                        dir / ("cap" + t), "--epochs", "2", "--seed", "5"})
                  .code,
              kExitOk);
    ASSERT_EQ(run_tool({"infer", "--data", dir / "d.json", "--localizer", dir / ("cap" + t + ".localizer"),
                        "--captioner", dir / ("cap" + t), "--out", dir / ("p" + t), "--decode", "random", "--seed",
                        "5"})
                  .code,
              kExitOk);
  }
  for (const char* f : {"loc", "cap", "cap%.localizer", "p"}) {
    std::string a(f);
    std::string b(f);
    const auto pct = a.find('%');
    if (pct == std::string::npos) {
      a += "1";
      b += "2";
    } else {
      a.replace(pct, 1, "1");
      b.replace(pct, 1, "2");
    }
    EXPECT_EQ(read_bytes(dir / a), read_bytes(dir / b)) << f;
  }
}

}  // namespace
}  // namespace tap
