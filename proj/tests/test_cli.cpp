#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli/commands.hpp"
#include "clci/data.hpp"
#include "clci/metrics.hpp"

namespace fs = std::filesystem;
using clci::cli::kExitFailure;
using clci::cli::kExitOk;
using clci::cli::kExitUsage;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result clci_run(std::vector<std::string> args) {
  args.insert(args.begin(), "clci");
  std::ostringstream out, err;
  const int code = clci::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("clci_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string value_of(const std::string& out, const std::string& key) {
  for (const auto& l : lines_of(out)) {
    if (l.rfind(key + " = ", 0) == 0) return l.substr(key.size() + 3);
  }
  return {};
}

// A small dataset shared by the slower tests.
const fs::path& tiny_dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch_dir("tiny_data");
    const Result r = clci_run({"synth-data", "--out", d.string(), "--n", "8", "--size",
                               "32x32", "--seed", "3", "--slices-per-subject", "1"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    return d;
  }();
  return dir;
}

}  // namespace

// ---------------------------------------------------------------- contract

TEST(Cli, ExitCodes) {
  EXPECT_EQ(clci_run({}).code, kExitUsage);
  EXPECT_EQ(clci_run({"--help"}).code, kExitOk);
  for (const char* cmd : {"synth-data", "train", "eval", "gradcheck", "ablate", "histogram"}) {
    const Result r = clci_run({cmd, "--help"});
    EXPECT_EQ(r.code, kExitOk) << cmd;
    EXPECT_NE(r.out.find("--"), std::string::npos) << cmd;
  }
  EXPECT_EQ(clci_run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(clci_run({"gradcheck", "--no-such-flag"}).code, kExitUsage);
  EXPECT_EQ(clci_run({"synth-data"}).code, kExitUsage);  // --out is required
}

TEST(Cli, ResolvedConfigurationComesFirst) {
  const fs::path d = scratch_dir("cfg");
  const Result r = clci_run({"synth-data", "--out", d.string(), "--n", "1", "--size", "16x16"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "# resolved configuration");
  EXPECT_EQ(lines[1], "command = synth-data");
  EXPECT_EQ(value_of(r.out, "size"), "16x16");
  fs::remove_all(d);
}

// -------------------------------------------------------------- synth-data

TEST(Cli, SynthWritesPairsAndIsByteIdenticalOnRerun) {
  const fs::path a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
  for (const auto& d : {a, b}) {
    const Result r = clci_run({"synth-data", "--out", d.string(), "--n", "8", "--size",
                               "64x64", "--seed", "11", "--difficulty", "hard"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(value_of(r.out, "samples"), "8");
  }
  int files = 0;
  for (const char* sub : {"images", "masks"}) {
    for (const auto& e : fs::directory_iterator(a / sub)) {
      ++files;
      const fs::path twin = b / sub / e.path().filename();
      ASSERT_TRUE(fs::exists(twin)) << twin;
      EXPECT_EQ(slurp(e.path()), slurp(twin)) << e.path();
    }
  }
  EXPECT_EQ(files, 16);
  EXPECT_EQ(clci::load_dataset(a.string()).size(), 8u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, SynthRejectsSizesNotDivisibleBySixteen) {
  const fs::path d = scratch_dir("synth_bad");
  const Result r = clci_run({"synth-data", "--out", d.string(), "--size", "60x60"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(clci_run({"synth-data", "--out", d.string(), "--size", "big"}).code, kExitUsage);
  EXPECT_EQ(clci_run({"synth-data", "--out", d.string(), "--difficulty", "odd"}).code,
            kExitUsage);
}

// ------------------------------------------------------------------- train

TEST(Cli, TrainMissingDataIsAUsageError) {
  const Result r = clci_run({"train", "--data", "/nonexistent/clci", "--out",
                             scratch_dir("nodata").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("/nonexistent/clci"), std::string::npos) << r.err;
}

TEST(Cli, TrainWritesLogConfigAndCheckpoints) {
  const fs::path out = scratch_dir("train");
  const Result r = clci_run({"train", "--data", tiny_dataset().string(), "--out", out.string(),
                             "--epochs", "1", "--batch-size", "4", "--width-factor", "0.25",
                             "--eval-every", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(out / "config.txt"));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "best" / "manifest.txt"));
  EXPECT_TRUE(fs::exists(out / "checkpoints" / "last" / "manifest.txt"));
  const auto log = lines_of(slurp(out / "train_log.csv"));
  ASSERT_GE(log.size(), 2u);
  EXPECT_EQ(log[0], "epoch,step,loss,val_dsc");
  EXPECT_EQ(value_of(r.out, "steps"), std::to_string(log.size() - 1));

  const fs::path ev = out / "eval.csv";
  const Result e = clci_run({"eval", "--data", tiny_dataset().string(), "--checkpoint",
                             (out / "checkpoints" / "best").string(), "--out-csv",
                             ev.string()});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  EXPECT_NE(e.out.find("DSC Precision Recall VOE RVD"), std::string::npos);
  EXPECT_EQ(lines_of(slurp(ev)).size(), 8u + 2u);
  fs::remove_all(out);
}

TEST(Cli, BaselineHasFewerParametersThanTheFullModel) {
  const auto count = [](const std::string& toggles) {
    const fs::path out = scratch_dir("params_" + toggles.substr(0, 1));
    const Result r = clci_run({"train", "--data", tiny_dataset().string(), "--out",
                               out.string(), "--ablation", toggles, "--max-steps", "1",
                               "--width-factor", "0.25"});
    EXPECT_EQ(r.code, kExitOk) << r.err;
    fs::remove_all(out);
    return std::stoll(value_of(r.out, "parameters"));
  };
  EXPECT_LT(count("0,0,0"), count("1,1,1"));
  EXPECT_EQ(clci_run({"train", "--data", tiny_dataset().string(), "--out",
                      scratch_dir("badabl").string(), "--ablation", "1,1"})
                .code,
            kExitUsage);
}

TEST(Cli, TrainConfigFileUnknownKeyIsRejected) {
  const fs::path dir = scratch_dir("conf");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "c.txt");
    f << "epochs = 1\nlearning_speed = 3\n";
  }
  const Result r = clci_run({"train", "--data", tiny_dataset().string(), "--out",
                             (dir / "o").string(), "--config", (dir / "c.txt").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("learning_speed"), std::string::npos) << r.err;
  fs::remove_all(dir);
}

TEST(Cli, NumericBlowUpExitsWithFailure) {
  const fs::path out = scratch_dir("nan");
  const Result r = clci_run({"train", "--data", tiny_dataset().string(), "--out", out.string(),
                             "--epochs", "2", "--lr", "1e38", "--width-factor", "0.25"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("step"), std::string::npos) << r.err;
  fs::remove_all(out);
}

// -------------------------------------------------------------------- eval

TEST(Cli, MaskAsPredictionIsPerfect) {
  const fs::path csv = scratch_dir("maskpred") / "m.csv";
  const Result r = clci_run({"eval", "--data", tiny_dataset().string(),
                             "--mask-as-prediction", "--out-csv", csv.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(value_of(r.out, "samples"), "8");
  const auto lines = lines_of(slurp(csv));
  ASSERT_EQ(lines.size(), 8u + 2u);
  EXPECT_EQ(lines.back(), "AGGREGATE,,1,1,1,0,0");
  EXPECT_NE(r.out.find("1.000 1.000 1.000 0.0 0.0"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(csv.string() + ".summary.txt"));
  fs::remove_all(csv.parent_path());
}

TEST(Cli, AggregateEqualsMeanOfRows) {
  const fs::path out = scratch_dir("evalmean");
  ASSERT_EQ(clci_run({"train", "--data", tiny_dataset().string(), "--out", out.string(),
                      "--max-steps", "2", "--width-factor", "0.25"})
                .code,
            kExitOk);
  const fs::path csv = out / "e.csv";
  ASSERT_EQ(clci_run({"eval", "--data", tiny_dataset().string(), "--checkpoint",
                      (out / "checkpoints" / "best").string(), "--out-csv", csv.string(),
                      "--threshold", "0.3"})
                .code,
            kExitOk);
  const auto lines = lines_of(slurp(csv));
  double sums[4] = {};
  int n = 0;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    std::vector<std::string> f;
    std::istringstream in(lines[i]);
    for (std::string c; std::getline(in, c, ',');) f.push_back(c);
    ASSERT_EQ(f.size(), 7u);
    for (int k = 0; k < 4; ++k) sums[k] += std::stod(f[2 + k]);
    ++n;
  }
  std::vector<std::string> agg;
  std::istringstream in(lines.back());
  for (std::string c; std::getline(in, c, ',');) agg.push_back(c);
  ASSERT_EQ(agg[0], "AGGREGATE");
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(std::stod(agg[2 + k]), sums[k] / n, 1e-8);
  fs::remove_all(out);
}

TEST(Cli, EvalNeedsACheckpoint) {
  EXPECT_EQ(clci_run({"eval", "--data", tiny_dataset().string()}).code, kExitUsage);
  EXPECT_EQ(clci_run({"eval", "--data", tiny_dataset().string(), "--mask-as-prediction",
                      "--threshold", "1.5"})
                .code,
            kExitUsage);
}

// --------------------------------------------------------------- gradcheck

TEST(Cli, GradcheckSelectedOpOnly) {
  const Result r = clci_run({"gradcheck", "--ops", "conv2d"});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  int cases = 0;
  for (const auto& l : lines_of(r.out)) {
    if (l.find('[') == std::string::npos || l.rfind("ops", 0) == 0) continue;
    EXPECT_EQ(l.rfind("conv2d[", 0), 0u) << l;
    ++cases;
  }
  EXPECT_GT(cases, 0);
  EXPECT_NE(r.out.find("failed = 0"), std::string::npos);
}

TEST(Cli, GradcheckFaultInjectionFails) {
  const Result r = clci_run({"gradcheck", "--ops", "relu", "--inject-fault"});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.out.find("failed = 1"), std::string::npos) << r.out;
  EXPECT_EQ(clci_run({"gradcheck", "--ops", "conv3d"}).code, kExitUsage);
}

// --------------------------------------------------------------- histogram

TEST(Cli, HistogramOfEmptyDatasetHasOnlyTheHeader) {
  const fs::path d = scratch_dir("hist_empty");
  fs::create_directories(d);
  const fs::path csv = d / "h.csv";
  const Result r = clci_run({"histogram", "--data", d.string(), "--out-csv", csv.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(csv), "bin_lo,bin_hi,train,val,test\n");
  EXPECT_NE(r.out.find("totals = train:0 val:0 test:0"), std::string::npos);
  fs::remove_all(d);
}

TEST(Cli, HistogramTotalsMatchLesionBearingCounts) {
  const auto samples = clci::load_dataset(tiny_dataset().string());
  std::int64_t bearing = 0, max_px = 0;
  for (const auto& s : samples) {
    bearing += s.mask.count() > 0;
    max_px = std::max(max_px, s.mask.count());
  }
  const fs::path csv = scratch_dir("hist") / "h.csv";
  const Result r = clci_run({"histogram", "--data", tiny_dataset().string(), "--bins", "4",
                             "--out-csv", csv.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("totals = train:" + std::to_string(bearing) + " val:0 test:0"),
            std::string::npos)
      << r.out;
  const auto lines = lines_of(slurp(csv));
  ASSERT_EQ(lines.size(), 5u);
  // The last bin's exclusive upper edge lies past the largest lesion.
  EXPECT_GT(std::stoll(lines.back().substr(lines.back().find(',') + 1)), max_px);
  fs::remove_all(csv.parent_path());
}

// ------------------------------------------------------------------ ablate

TEST(Cli, AblateEmitsEightRowsDeterministically) {
  const fs::path a = scratch_dir("ablate_a"), b = scratch_dir("ablate_b");
  for (const auto& out : {a, b}) {
    const Result r = clci_run({"ablate", "--data", tiny_dataset().string(), "--out",
                               out.string(), "--epochs", "1", "--width-factor", "0.25",
                               "--seed", "2"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  const std::string csv = slurp(a / "ablation.csv");
  EXPECT_EQ(csv, slurp(b / "ablation.csv"));
  const auto lines = lines_of(csv);
  ASSERT_EQ(lines.size(), 9u);
  for (std::size_t i = 0; i < 8; ++i) {
    const std::string bits = std::string(1, "01"[(i >> 2) & 1]) + "," + "01"[(i >> 1) & 1] +
                             "," + "01"[i & 1] + ",";
    EXPECT_EQ(lines[i + 1].rfind(bits, 0), 0u) << lines[i + 1];
    const std::string label = std::string(1, "01"[(i >> 2) & 1]) + "01"[(i >> 1) & 1] +
                              "01"[i & 1];
    EXPECT_TRUE(fs::exists(a / ("row_" + label))) << label;
  }
  EXPECT_TRUE(fs::exists(a / "splits.tsv"));
  fs::remove_all(a);
  fs::remove_all(b);
}
