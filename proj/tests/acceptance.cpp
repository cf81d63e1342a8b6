// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "clci/autodiff.hpp"
#include "clci/data.hpp"
#include "clci/loss.hpp"
#include "clci/metrics.hpp"
#include "clci/model.hpp"
#include "clci/random.hpp"
#include "clci/train.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace clci;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "clci_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, sep);) out.push_back(f);
  return out;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "clci");
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "%s", e.str().c_str());
  return code;
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

// Relative paths and contents of every file below `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

// ------------------------------------------------------------ 1 gradients

void gradient_suite(Outcome& r) {
  std::string out;
  const int code = cli({"gradcheck", "--ops", "all", "--epsilon", "1e-5", "--tolerance",
                        "1e-6", "--seed", "0"},
                       &out);
  r.check(code == 0, "gradcheck exit code " + std::to_string(code));
  std::map<std::string, int> passed;
  double worst = 0;
  int cases = 0;
  for (const auto& l : split_lines(out)) {
    const auto br = l.find('[');
    const auto pos = l.find("max_rel_err=");
    if (br == std::string::npos || pos == std::string::npos) continue;
    ++cases;
    const double err = std::stod(l.substr(pos + 12));
    worst = std::max(worst, err);
    const bool ok = l.find(" PASS ") != std::string::npos && err < 1e-6;
    r.check(ok, l.substr(0, l.find(' ')));
    if (ok) ++passed[l.substr(0, br)];
  }
  for (const char* op : {"conv2d", "batch_norm", "relu", "sigmoid", "tanh",
                         "upsample_bilinear", "global_avg_pool", "concat_channels", "add",
                         "multiply", "dice_loss", "convlstm_step"}) {
    r.check(passed[op] > 0, std::string("no passing case for ") + op);
  }
  // Every stride and dilation the model uses.
  for (const char* v : {"k3_s1_d1", "k3_s2_d1", "k1_s1_d1", "k1_s2_d1", "k1_s4_d1",
                        "k1_s8_d1", "k3_s1_d6", "k3_s1_d12", "k3_s1_d18"}) {
    r.check(out.find(std::string("conv2d[") + v + ".") != std::string::npos,
            std::string("conv2d variant ") + v);
  }
  r.note(std::to_string(cases) + " cases, worst rel err " + fmt("%.3g", worst));
}

// ------------------------------------------------------------ 2 structure

struct StructureRun {
  std::vector<std::size_t> parameters;
  std::vector<Tensor> outputs;
};

StructureRun structure_pass(Outcome& r) {
  StructureRun run;
  Rng rng(17);
  const Tensor image = oracle::random_tensor<float>(rng, {1, 1, 224, 176}, 0.0, 1.0);
  ModelConfig base;  // full width, 224x176
  const int nine_b = 9 * base.scaled_branch_width();
  for (const AblationRow& row : ablation_rows()) {
    ClciNet net = instantiate_ablation(row, base);
    gaussian_init(net.store(), InitPolicy::kScaled, 5);
    ForwardTrace trace;
    Tensor out;
    {
      NoGradGuard ng;
      out = net.forward(image, Mode::kEval, &trace);
    }
    const std::string tag = "row " + row.label();
    r.check(out.shape() == Shape{1, 1, 224, 176}, tag + " output shape");
    const auto& v = out.data();
    r.check(std::all_of(v.begin(), v.end(), [](float p) { return p > 0.0f && p < 1.0f; }),
            tag + " output outside (0,1)");
    if (row.use_aspp && row.use_clf) {
      r.check(trace.aspp_pre_fusion && trace.aspp_pre_fusion->shape().c == nine_b,
              tag + " pre-fusion channels != " + std::to_string(nine_b));
    }
    run.parameters.push_back(net.parameter_count());
    run.outputs.push_back(out);
  }
  // Switching any single component on strictly adds parameters.
  const auto rows = ablation_rows();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const int on_i = rows[i].use_aspp + rows[i].use_clf + rows[i].use_inference;
      const int on_j = rows[j].use_aspp + rows[j].use_clf + rows[j].use_inference;
      const bool subset = (!rows[i].use_aspp || rows[j].use_aspp) &&
                          (!rows[i].use_clf || rows[j].use_clf) &&
                          (!rows[i].use_inference || rows[j].use_inference);
      if (subset && on_j == on_i + 1) {
        r.check(run.parameters[i] < run.parameters[j],
                "parameters " + rows[i].label() + " >= " + rows[j].label());
      }
    }
  r.note("9B = " + std::to_string(nine_b) + ", parameters " +
         std::to_string(run.parameters.front()) + ".." +
         std::to_string(run.parameters.back()));
  return run;
}

// ------------------------------------------------------------- 3 metrics

void metric_oracle(Outcome& r) {
  Rng rng(99);
  int mismatches = 0;
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const BinaryMask p = oracle::random_mask(rng, 16, 16, rng.uniform(0.0, 0.6));
    const BinaryMask t = oracle::random_mask(rng, 16, 16, rng.uniform(0.0, 0.6));
    const ConfusionCounts c = confusion(p, t);
    const oracle::Counts o = oracle::count(p, t);
    if (c.tp != o.tp || c.fp != o.fp || c.fn != o.fn || c.tn != o.tn) ++mismatches;
    const oracle::SetSizes s = oracle::set_sizes(p, t);
    const double diffs[] = {
        std::abs(dsc(c) - oracle::dsc(s)), std::abs(precision(c) - oracle::precision(s)),
        std::abs(recall(c) - oracle::recall(s)), std::abs(voe(c) - oracle::voe(s))};
    for (double d : diffs) worst = std::max(worst, d);
    const double ro = oracle::rvd(s);
    if (ro == kRvdUndefined) {
      if (rvd(c) != kRvdUndefined) ++mismatches;
    } else {
      worst = std::max(worst, std::abs(rvd(c) - ro));
    }
    const double d = dsc(c);
    worst = std::max(worst, std::abs(voe(c) - 100.0 * (1.0 - d / (2.0 - d))));
  }
  r.check(mismatches == 0, std::to_string(mismatches) + " count mismatches");
  r.check(worst <= 1e-9, "max ratio deviation " + fmt("%.3g", worst));
  r.note("1000 pairs, max deviation " + fmt("%.3g", worst));
}

// ------------------------------------------------------------- 4 overfit

struct OverfitRun {
  std::string log_csv;
  std::map<std::string, std::string> checkpoints;
  double train_dsc = 0;
  int block_violations = 0;
};

const std::vector<SamplePair>& overfit_data() {
  static const std::vector<SamplePair> data = [] {
    SynthOptions so;
    so.count = 8;
    so.height = 64;
    so.width = 64;
    so.seed = 0;
    so.difficulty = Difficulty::kEasy;
    return synth_dataset(so);
  }();
  return data;
}

OverfitRun overfit(bool full, const fs::path& dir) {
  ModelConfig mc;
  mc.width_factor = 0.25;
  mc.input_h = 64;
  mc.input_w = 64;
  mc.use_aspp = mc.use_clf = mc.use_inference = full;
  ClciNet net(mc);
  TrainConfig tc;
  tc.max_steps = 500;
  tc.epochs = 1000;
  tc.batch_size = 4;
  tc.eval_every = 50;
  tc.patience = 0;
  tc.lr = 1e-4;
  tc.seed = 0;
  tc.init_policy = InitPolicy::kFixed;
  tc.init_std = 0.01;
  tc.checkpoint_dir = dir.string();
  const TrainResult res = train(net, overfit_data(), {}, tc);

  OverfitRun run;
  run.log_csv = train_log_csv(res.log);
  run.checkpoints = tree(dir);
  // Train-set DSC measured independently from the saved best model.
  const ClciNet best = load_checkpoint((dir / "best").string());
  run.train_dsc = evaluate_model(best, overfit_data()).aggregate.dsc;
  double prev = INFINITY;
  for (std::size_t i = 0; i + 20 <= res.log.size(); i += 20) {
    double m = 0;
    for (std::size_t k = i; k < i + 20; ++k) m += res.log[k].loss;
    m /= 20;
    if (m > prev) ++run.block_violations;
    prev = m;
  }
  return run;
}

std::pair<OverfitRun, OverfitRun> overfit_pass(Outcome& r, const std::string& tag) {
  const fs::path root = work_root() / ("overfit_" + tag);
  OverfitRun f = overfit(true, root / "full");
  OverfitRun b = overfit(false, root / "baseline");
  for (const auto* run : {&f, &b}) {
    const std::string name = run == &f ? "full" : "baseline";
    r.check(run->train_dsc >= 0.95, name + " train DSC " + fmt("%.4f", run->train_dsc));
    r.check(run->block_violations == 0,
            name + " 20-step mean loss rose " + std::to_string(run->block_violations) + "x");
  }
  r.note("train DSC full " + fmt("%.4f", f.train_dsc) + ", baseline " +
         fmt("%.4f", b.train_dsc));
  return {f, b};
}

// ---------------------------------------------------------- 5 dead branch

void dead_branch(Outcome& r) {
  ModelConfig mc;  // full widths
  mc.input_h = 64;
  mc.input_w = 64;
  for (InitPolicy policy : {InitPolicy::kFixed, InitPolicy::kScaled}) {
    ClciNet net(mc);
    gaussian_init(net.store(), policy, 3);
    Rng rng(8);
    const Tensor image = oracle::random_tensor<float>(rng, {2, 1, 64, 64}, 0.0, 1.0);
    const Tensor target = oracle::random_tensor<float>(rng, {2, 1, 64, 64}, 0.0, 1.0);
    std::vector<float> t(target.data().begin(), target.data().end());
    for (float& v : t) v = v < 0.2f ? 1.0f : 0.0f;
    backward(dice_loss(net.forward(image, Mode::kTrain),
                       Tensor::from_data(target.shape(), std::move(t))));
    int dead = 0;
    for (const auto& p : net.store().parameters()) {
      double n = 0;
      for (float g : p.tensor.grad()) n += static_cast<double>(g) * g;
      if (!(n > 0)) {
        ++dead;
        r.check(false, std::string(to_string(policy)) + " init: " + p.name);
      }
    }
    r.note(std::string(to_string(policy)) + " init: " +
           std::to_string(net.store().parameters().size() - dead) + "/" +
           std::to_string(net.store().parameters().size()) + " live");
  }
}

// ---------------------------------------------------------- 6 determinism

void determinism(Outcome& r, const StructureRun& s1, const StructureRun& s2,
                 const std::pair<OverfitRun, OverfitRun>& o1,
                 const std::pair<OverfitRun, OverfitRun>& o2) {
  r.check(s1.parameters == s2.parameters, "structure parameter counts differ");
  for (std::size_t i = 0; i < s1.outputs.size(); ++i) {
    r.check(same_bits(s1.outputs[i], s2.outputs[i]),
            "structure output row " + ablation_rows()[i].label());
  }
  for (int k = 0; k < 2; ++k) {
    const OverfitRun& a = k == 0 ? o1.first : o1.second;
    const OverfitRun& b = k == 0 ? o2.first : o2.second;
    const std::string name = k == 0 ? "full" : "baseline";
    r.check(a.log_csv == b.log_csv, name + " training logs differ");
    r.check(a.checkpoints == b.checkpoints, name + " checkpoint files differ");
  }

  // Save, load and compare eval-mode outputs bit for bit.
  const fs::path src = work_root() / "overfit_a" / "full" / "best";
  const fs::path copy = work_root() / "roundtrip";
  CheckpointExtras extras;
  const ClciNet loaded = load_checkpoint(src.string(), &extras);
  save_checkpoint(copy.string(), loaded, extras);
  const ClciNet reloaded = load_checkpoint(copy.string());
  std::vector<std::size_t> all(overfit_data().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Tensor batch = stack_images(overfit_data(), all);
  NoGradGuard ng;
  r.check(same_bits(loaded.forward(batch, Mode::kEval), reloaded.forward(batch, Mode::kEval)),
          "round-trip eval outputs differ");
  r.check(tree(src) == tree(copy), "re-saved checkpoint files differ");
  std::size_t files = 0;
  for (const auto* o : {&o1.first, &o1.second}) files += o->checkpoints.size();
  r.note(std::to_string(files) + " checkpoint files compared");
}

// -------------------------------------------------------- 7 pipeline

void pipeline(Outcome& r) {
  const CropOffsets off = center_crop_offsets(233, 197, 224, 176);
  r.check(off.top == 4 && off.left == 10, "crop offsets");
  SamplePair big;
  std::vector<float> px(233 * 197);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i);
  big.image = Tensor::from_data({1, 1, 233, 197}, px);
  big.mask = BinaryMask(233, 197);
  for (std::size_t i = 0; i < big.mask.values.size(); ++i) big.mask.values[i] = (i % 7) == 0;
  big.subject_id = "s";
  const SamplePair c = crop_center(big);
  bool exact = c.image.shape() == Shape{1, 1, 224, 176} && c.mask.h == 224 && c.mask.w == 176;
  for (int y = 0; exact && y < 224; ++y)
    for (int x = 0; x < 176; ++x) {
      exact = exact && c.image.data()[y * 176 + x] == px[(y + 4) * 197 + (x + 10)] &&
              c.mask.at(y, x) == big.mask.at(y + 4, x + 10);
    }
  r.check(exact, "cropped pixels");

  std::vector<std::string> ids;
  for (int i = 0; i < 220; ++i) ids.push_back("subject_" + std::to_string(i));
  const std::set<std::string> universe(ids.begin(), ids.end());
  int bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SplitManifest m = make_split(ids, {120, 40, 60}, seed);
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto* part : {&m.train, &m.val, &m.test}) {
      seen.insert(part->begin(), part->end());
      total += part->size();
    }
    const SplitManifest again = make_split(ids, {120, 40, 60}, seed);
    if (m.train.size() != 120 || m.val.size() != 40 || m.test.size() != 60 ||
        total != seen.size() || seen != universe || again.train != m.train ||
        again.val != m.val || again.test != m.test) {
      ++bad;
    }
  }
  r.check(bad == 0, std::to_string(bad) + " bad split seeds");

  SynthOptions so;
  so.count = 60;
  so.height = 32;
  so.width = 32;
  so.seed = 4;
  so.difficulty = Difficulty::kHard;
  so.slices_per_subject = 3;
  const auto samples = synth_dataset(so);
  const SplitManifest m = make_split(subject_ids(samples), {10, 5, 5}, 4);
  std::int64_t max_px = 0;
  for (const auto& s : samples) max_px = std::max(max_px, s.mask.count());
  const auto edges = linear_bins(max_px, 7);
  const LesionSizeHistogram h = lesion_size_histogram(samples, &m, edges);
  std::array<std::int64_t, 3> direct{};
  std::vector<std::array<std::int64_t, 3>> bins(edges.size() - 1);
  for (const auto& s : samples) {
    const std::int64_t n = s.mask.count();
    if (n == 0) continue;
    const int part = static_cast<int>(m.split_of(s.subject_id));
    ++direct[part];
    for (std::size_t b = 0; b + 1 < edges.size(); ++b)
      if (n >= edges[b] && n < edges[b + 1]) ++bins[b][part];
  }
  r.check(h.totals() == direct, "histogram totals");
  r.check(h.counts == bins, "histogram bins");
  r.check(edges.front() <= 1 && edges.back() > max_px, "bins do not cover max lesion size");
  r.note("histogram totals " + std::to_string(direct[0]) + "/" + std::to_string(direct[1]) +
         "/" + std::to_string(direct[2]));
}

// ----------------------------------------------------------- 8 ablation

void ablation(Outcome& r) {
  const fs::path data = work_root() / "ablate_data";
  r.check(cli({"synth-data", "--out", data.string(), "--n", "32", "--size", "64x64",
               "--seed", "21", "--slices-per-subject", "1"}) == 0,
          "synth-data");
  std::string csv[2];
  for (int k = 0; k < 2; ++k) {
    const fs::path out = work_root() / ("ablate_" + std::to_string(k));
    const int code = cli({"ablate", "--data", data.string(), "--out", out.string(),
                          "--width-factor", "0.25", "--epochs", "100", "--max-steps", "30",
                          "--eval-every", "10", "--seed", "3"});
    r.check(code == 0, "ablate exit code " + std::to_string(code));
    csv[k] = slurp(out / "ablation.csv");
  }
  r.check(!csv[0].empty() && csv[0] == csv[1], "ablation CSV differs between runs");
  const auto lines = split_lines(csv[0]);
  r.check(lines.size() == 9, "expected header plus 8 rows");
  std::set<std::string> toggles;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_fields(lines[i], ',');
    if (f.size() != 9) {
      r.check(false, "row width: " + lines[i]);
      continue;
    }
    toggles.insert(f[0] + f[1] + f[2]);
    for (int k = 4; k < 9; ++k) {
      r.check(!f[k].empty() && std::isfinite(std::stod(f[k])), "non-finite metric: " + lines[i]);
    }
  }
  r.check(toggles == std::set<std::string>{"000", "001", "010", "011", "100", "101", "110",
                                           "111"},
          "toggles do not enumerate {0,1}^3");
}

}  // namespace

int main() {
  int failed = 0;
  const auto report = [&](int id, const char* name, double limit_s,
                          const std::function<void(Outcome&)>& body) {
    Outcome r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body(r);
    } catch (const std::exception& e) {
      r.check(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0) r.check(secs < limit_s, "runtime over " + fmt("%.0f s", limit_s));
    failed += !r.pass;
    std::string detail;
    for (const auto& n : r.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s criterion %d %s (%.1f s) %s\n", r.pass ? "PASS" : "FAIL", id, name, secs,
                detail.c_str());
    std::fflush(stdout);
  };

  StructureRun s1, s2;
  std::pair<OverfitRun, OverfitRun> o1, o2;
  report(1, "gradient-suite", 120, gradient_suite);
  report(2, "structural-invariants", 60, [&](Outcome& r) { s1 = structure_pass(r); });
  report(3, "metric-oracle", 10, metric_oracle);
  report(4, "overfit", 900, [&](Outcome& r) { o1 = overfit_pass(r, "a"); });
  report(5, "dead-branch", 0, dead_branch);
  report(6, "determinism", 0, [&](Outcome& r) {
    Outcome scratch;
    s2 = structure_pass(scratch);
    o2 = overfit_pass(scratch, "b");
    determinism(r, s1, s2, o1, o2);
  });
  report(7, "pipeline-exactness", 0, pipeline);
  report(8, "ablation-harness", 3600, ablation);
  std::printf("%d of 8 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
