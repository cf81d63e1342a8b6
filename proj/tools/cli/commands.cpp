#include "cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cli/gradcheck_suite.hpp"
#include "clci/data.hpp"
#include "clci/error.hpp"
#include "clci/kv.hpp"
#include "clci/metrics.hpp"
#include "clci/model.hpp"
#include "clci/train.hpp"

namespace clci::cli {

namespace fs = std::filesystem;

namespace {

// Bad flag values discovered after parsing.
struct UsageError : Error {
  using Error::Error;
};

struct Size {
  int h = 64;
  int w = 64;
};

Size parse_size(const std::string& s) {
  const auto x = s.find('x');
  Size out;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    out.h = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string rest = s.substr(x + 1);
    out.w = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw UsageError("--size must look like HxW, got '" + s + "'");
  }
  if (out.h < 16 || out.w < 16 || out.h % 16 != 0 || out.w % 16 != 0) {
    throw UsageError("--size " + s + ": height and width must be positive "
                     "multiples of 16");
  }
  return out;
}

AblationRow parse_ablation(const std::string& s) {
  std::vector<bool> bits;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      bits.push_back(parse_bool("--ablation", item));
    } catch (const Error&) {
      throw UsageError("--ablation expects three 0/1 values, got '" + s + "'");
    }
  }
  if (bits.size() != 3) {
    throw UsageError("--ablation expects a,c,i (three 0/1 values), got '" + s +
                     "'");
  }
  return {bits[0], bits[1], bits[2]};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void require_dir(const std::string& path, const char* flag) {
  if (!fs::is_directory(path)) {
    throw UsageError(std::string(flag) + " " + path + ": no such directory");
  }
}

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) {
    throw UsageError(std::string(flag) + " " + path + ": no such file");
  }
}

void print_config(std::ostream& out, const std::string& command,
                  const KeyValues& kv) {
  out << "# resolved configuration\n";
  out << "command = " << command << '\n';
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  out << std::flush;
}

KeyValues prefixed(const std::string& prefix, const KeyValues& kv) {
  KeyValues out;
  for (const auto& [k, v] : kv) out.emplace_back(prefix + k, v);
  return out;
}

void append(KeyValues& to, const KeyValues& from) {
  to.insert(to.end(), from.begin(), from.end());
}

// Model and training settings from an optional key = value file. Keys that
// neither config knows are rejected.
std::pair<ModelConfig, TrainConfig> read_configs(const std::string& path) {
  ModelConfig mc;
  TrainConfig tc;
  if (path.empty()) return {mc, tc};
  require_file(path, "--config");
  const KeyValues kv = read_key_values(path);
  std::set<std::string> known;
  for (const auto& [k, v] : mc.to_key_values()) known.insert(k);
  for (const auto& [k, v] : tc.to_key_values()) known.insert(k);
  for (const auto& [k, v] : kv) {
    if (!known.count(k)) {
      throw UsageError("--config " + path + ": unknown key '" + k + "'");
    }
  }
  return {ModelConfig::from_key_values(kv, mc),
          TrainConfig::from_key_values(kv, tc)};
}

// Flags shared by train and ablate that override config-file values.
struct TrainOverrides {
  std::optional<int> epochs;
  std::optional<long long> max_steps;
  std::optional<int> batch_size;
  std::optional<long long> seed;
  std::optional<double> lr;
  std::optional<long long> eval_every;
  std::optional<int> patience;
  std::optional<std::string> init_policy;
  std::optional<double> init_std;
  std::optional<double> width_factor;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--max-steps", max_steps, "Optimizer step cap (0 = none)");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--seed", seed, "Seed for init, shuffling and splits");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--eval-every", eval_every, "Steps between validations");
    app->add_option("--patience", patience,
                    "Evaluations without improvement before stopping (0 = off)");
    app->add_option("--init-policy", init_policy, "Gaussian init: scaled|fixed");
    app->add_option("--init-std", init_std, "Sigma for the fixed init policy");
    app->add_option("--width-factor", width_factor, "Global channel multiplier");
  }

  void apply(ModelConfig& mc, TrainConfig& tc) const {
    if (epochs) tc.epochs = *epochs;
    if (max_steps) tc.max_steps = *max_steps;
    if (batch_size) tc.batch_size = *batch_size;
    if (seed) {
      if (*seed < 0) throw UsageError("--seed must be >= 0");
      tc.seed = static_cast<std::uint64_t>(*seed);
    }
    if (lr) tc.lr = *lr;
    if (eval_every) tc.eval_every = *eval_every;
    if (patience) tc.patience = *patience;
    if (init_policy) tc.init_policy = parse_init_policy(*init_policy);
    if (init_std) tc.init_std = *init_std;
    if (width_factor) mc.width_factor = *width_factor;
  }
};

std::vector<SamplePair> load_checked(const std::string& root,
                                     const std::string& layout) {
  require_dir(root, "--data");
  return load_dataset(root, parse_layout(layout));
}

void match_input_size(ModelConfig& mc, const std::vector<SamplePair>& data) {
  if (data.empty()) return;
  mc.input_h = data.front().mask.h;
  mc.input_w = data.front().mask.w;
}

std::vector<SamplePair> select(const std::vector<SamplePair>& data,
                               const SplitManifest& m, Split which) {
  std::vector<SamplePair> out;
  for (const auto& s : data) {
    if (m.contains(s.subject_id) && m.split_of(s.subject_id) == which) {
      out.push_back(s);
    }
  }
  return out;
}

// ----------------------------------------------------------------- synth-data

struct SynthArgs {
  std::string out;
  int n = 8;
  std::string size = "64x64";
  long long seed = 0;
  std::string difficulty = "easy";
  int slices_per_subject = 1;
  std::string layout = "png";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Size size = parse_size(a.size);
  if (a.n < 0) throw UsageError("--n must be >= 0");
  if (a.seed < 0) throw UsageError("--seed must be >= 0");
  SynthOptions opt;
  opt.count = a.n;
  opt.height = size.h;
  opt.width = size.w;
  opt.seed = static_cast<std::uint64_t>(a.seed);
  opt.difficulty = parse_difficulty(a.difficulty);
  opt.slices_per_subject = a.slices_per_subject;
  const Layout layout = parse_layout(a.layout);
  print_config(out, "synth-data",
               {{"out", a.out},
                {"n", std::to_string(opt.count)},
                {"size", std::to_string(opt.height) + "x" + std::to_string(opt.width)},
                {"seed", std::to_string(opt.seed)},
                {"difficulty", to_string(opt.difficulty)},
                {"slices_per_subject", std::to_string(opt.slices_per_subject)},
                {"layout", a.layout}});

  const auto samples = synth_dataset_detailed(opt);
  std::vector<SamplePair> pairs;
  std::array<int, 4> by_count{0, 0, 0, 0};
  std::int64_t total_px = 0, max_px = 0;
  int bearing = 0;
  for (const auto& s : samples) {
    ++by_count[std::min<std::size_t>(s.lesions.size(), 3)];
    const std::int64_t px = s.pair.mask.count();
    if (px > 0) ++bearing;
    total_px += px;
    max_px = std::max(max_px, px);
    pairs.push_back(s.pair);
  }
  save_dataset(a.out, pairs, layout);
  out << "samples = " << pairs.size() << '\n'
      << "lesion_bearing = " << bearing << '\n'
      << "lesions_per_sample = 0:" << by_count[0] << " 1:" << by_count[1]
      << " 2:" << by_count[2] << " 3:" << by_count[3] << '\n'
      << "mean_lesion_px = "
      << (bearing ? static_cast<double>(total_px) / bearing : 0.0) << '\n'
      << "max_lesion_px = " << max_px << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string config;
  std::string ablation;
  std::string out;
  std::string splits;
  std::string layout = "png";
  std::string resume;
  TrainOverrides overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  require_dir(a.data, "--data");
  if (!a.splits.empty()) require_file(a.splits, "--splits");
  auto [mc, tc] = read_configs(a.config);
  a.overrides.apply(mc, tc);
  if (!a.ablation.empty()) {
    const AblationRow row = parse_ablation(a.ablation);
    mc.use_aspp = row.use_aspp;
    mc.use_clf = row.use_clf;
    mc.use_inference = row.use_inference;
  }
  tc.checkpoint_dir = (fs::path(a.out) / "checkpoints").string();
  tc.resume_from = a.resume;
  const auto data = load_checked(a.data, a.layout);
  if (data.empty()) throw UsageError("--data " + a.data + ": no samples found");
  match_input_size(mc, data);
  mc.validate();
  tc.validate();

  std::vector<SamplePair> train_set = data, val_set;
  if (!a.splits.empty()) {
    const SplitManifest m = read_split_manifest(a.splits);
    train_set = select(data, m, Split::kTrain);
    val_set = select(data, m, Split::kVal);
    if (train_set.empty()) throw UsageError("--splits: no training subjects");
  }

  KeyValues resolved{{"data", a.data},
                     {"out", a.out},
                     {"splits", a.splits},
                     {"train_samples", std::to_string(train_set.size())},
                     {"val_samples", std::to_string(val_set.size())}};
  append(resolved, prefixed("model.", mc.to_key_values()));
  append(resolved, prefixed("train.", tc.to_key_values()));
  print_config(out, "train", resolved);

  ClciNet model(mc);
  out << "parameters = " << model.parameter_count() << '\n' << std::flush;
  fs::create_directories(a.out);
  write_key_values((fs::path(a.out) / "config.txt").string(),
                   [&] {
                     KeyValues kv = mc.to_key_values();
                     append(kv, tc.to_key_values());
                     return kv;
                   }());

  const TrainResult r = train(model, train_set, val_set, tc,
                              [&](const TrainLogRow& row) {
                                if (!row.val_dsc) return;
                                out << "epoch " << row.epoch << " step "
                                    << row.step << " loss " << row.loss
                                    << " val_dsc " << *row.val_dsc << '\n'
                                    << std::flush;
                              });
  std::ofstream log(fs::path(a.out) / "train_log.csv");
  log << train_log_csv(r.log);
  if (!log) throw IoError((fs::path(a.out) / "train_log.csv").string(),
                          "write failed");
  out << "steps = " << r.steps << '\n'
      << "best_val_dsc = " << r.best_val_dsc << '\n'
      << "best_step = " << r.best_step << '\n'
      << "early_stopped = " << (r.early_stopped ? "true" : "false") << '\n'
      << "checkpoint = " << (fs::path(tc.checkpoint_dir) / "best").string()
      << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string out_csv;
  double threshold = 0.5;
  bool mask_as_prediction = false;
  std::string splits;
  std::string split;
  std::string layout = "png";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  require_dir(a.data, "--data");
  if (!a.mask_as_prediction) {
    if (a.checkpoint.empty()) {
      throw UsageError("--checkpoint is required unless --mask-as-prediction");
    }
    require_dir(a.checkpoint, "--checkpoint");
  }
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) {
    throw UsageError("--threshold must be in [0, 1]");
  }
  if (!a.split.empty() && a.splits.empty()) {
    throw UsageError("--split needs --splits");
  }
  print_config(out, "eval",
               {{"data", a.data},
                {"checkpoint", a.mask_as_prediction ? "" : a.checkpoint},
                {"out_csv", a.out_csv},
                {"threshold", std::to_string(a.threshold)},
                {"mask_as_prediction", a.mask_as_prediction ? "true" : "false"},
                {"splits", a.splits},
                {"split", a.split}});

  auto data = load_checked(a.data, a.layout);
  if (!a.split.empty()) {
    const SplitManifest m = read_split_manifest(a.splits);
    Split which;
    if (a.split == "train") which = Split::kTrain;
    else if (a.split == "val") which = Split::kVal;
    else if (a.split == "test") which = Split::kTest;
    else throw UsageError("--split must be train, val or test");
    data = select(data, m, which);
  }
  if (data.empty()) throw UsageError("--data " + a.data + ": no samples to evaluate");

  MetricsReport report;
  if (a.mask_as_prediction) {
    std::vector<MetricsRow> rows;
    for (const auto& s : data) {
      rows.push_back(evaluate_pair(s.subject_id, s.slice_index, s.mask, s.mask));
    }
    report = aggregate_report(std::move(rows));
  } else {
    const ClciNet model = load_checkpoint(a.checkpoint);
    out << "parameters = " << model.parameter_count() << '\n';
    report = evaluate_model(model, data, a.threshold);
  }
  if (!a.out_csv.empty()) {
    const fs::path p(a.out_csv);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_report_csv(a.out_csv, report);
    write_dsc_column(a.out_csv + ".dsc.txt", report);
  }
  out << "samples = " << report.rows.size() << '\n';
  out << format_table_row(report.aggregate) << '\n';
  if (report.aggregate.rvd_undefined > 0) {
    out << "rvd_undefined = " << report.aggregate.rvd_undefined << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ gradcheck

struct GradArgs {
  std::string ops = "all";
  long long seed = 0;
  double tolerance = 1e-6;
  double epsilon = 1e-5;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  if (a.seed < 0) throw UsageError("--seed must be >= 0");
  if (!(a.tolerance > 0) || !(a.epsilon > 0)) {
    throw UsageError("--tolerance and --epsilon must be positive");
  }
  std::vector<std::string> ops = a.ops == "all" ? gradcheck_op_names()
                                                : split_list(a.ops);
  if (ops.empty()) throw UsageError("--ops: empty list");
  const auto& known = gradcheck_op_names();
  for (const auto& op : ops) {
    if (std::find(known.begin(), known.end(), op) == known.end() &&
        op != kFaultyOp) {
      throw UsageError("--ops: unknown op '" + op + "'");
    }
  }
  std::ostringstream list;
  for (std::size_t i = 0; i < ops.size(); ++i) list << (i ? "," : "") << ops[i];
  std::ostringstream tol, eps;
  tol << a.tolerance;
  eps << a.epsilon;
  print_config(out, "gradcheck",
               {{"ops", list.str()},
                {"seed", std::to_string(a.seed)},
                {"tolerance", tol.str()},
                {"epsilon", eps.str()},
                {"precision", "double"},
                {"inject_fault", a.inject_fault ? "true" : "false"}});

  const auto cases = run_gradcheck_suite(ops, static_cast<std::uint64_t>(a.seed),
                                         a.epsilon, a.tolerance, a.inject_fault);
  int failed = 0;
  double worst = 0;
  for (const auto& c : cases) {
    out << std::left << std::setw(46) << (c.op + "[" + c.variant + "]")
        << to_string(c.report) << '\n';
    if (!c.report.passed) ++failed;
    worst = std::max(worst, c.report.max_rel_error);
  }
  out << "cases = " << cases.size() << " failed = " << failed
      << " worst_rel_err = " << worst << '\n';
  return failed == 0 ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------------- ablate

struct AblateArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string splits;
  std::string layout = "png";
  TrainOverrides overrides;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  require_dir(a.data, "--data");
  if (!a.splits.empty()) require_file(a.splits, "--splits");
  auto [mc, tc] = read_configs(a.config);
  a.overrides.apply(mc, tc);
  const auto data = load_checked(a.data, a.layout);
  if (data.empty()) throw UsageError("--data " + a.data + ": no samples found");
  match_input_size(mc, data);
  mc.validate();
  tc.validate();

  SplitManifest m;
  if (!a.splits.empty()) {
    m = read_split_manifest(a.splits);
  } else {
    // Half of the subjects train, a quarter validate, the rest test.
    const auto ids = subject_ids(data);
    const int n = static_cast<int>(ids.size());
    if (n < 3) throw UsageError("ablate needs at least three subjects");
    const int n_train = std::max(1, n / 2);
    const int n_val = std::max(1, n / 4);
    m = make_split(ids, {n_train, n_val, n - n_train - n_val}, tc.seed);
  }
  const auto train_set = select(data, m, Split::kTrain);
  const auto val_set = select(data, m, Split::kVal);
  const auto test_set = select(data, m, Split::kTest);
  if (train_set.empty() || test_set.empty()) {
    throw UsageError("ablate: the split leaves no training or test samples");
  }

  KeyValues resolved{{"data", a.data},
                     {"out", a.out},
                     {"splits", a.splits.empty() ? "(seeded 50/25/25 by subject)"
                                                 : a.splits},
                     {"train_samples", std::to_string(train_set.size())},
                     {"val_samples", std::to_string(val_set.size())},
                     {"test_samples", std::to_string(test_set.size())}};
  append(resolved, prefixed("model.", mc.to_key_values()));
  append(resolved, prefixed("train.", tc.to_key_values()));
  print_config(out, "ablate", resolved);

  fs::create_directories(a.out);
  write_split_manifest((fs::path(a.out) / "splits.tsv").string(), m);
  const auto rows = run_ablation_matrix(
      mc, tc, train_set, val_set, test_set, a.out,
      [&](const AblationResult& r) {
        out << "row " << r.row.label() << " parameters " << r.parameters
            << " best_val_dsc " << r.best_val_dsc << " test_dsc "
            << r.metrics.dsc << '\n'
            << std::flush;
      });
  const std::string csv_path = (fs::path(a.out) / "ablation.csv").string();
  std::ofstream csv(csv_path);
  csv << ablation_csv(rows);
  if (!csv) throw IoError(csv_path, "write failed");
  out << "csv = " << csv_path << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ histogram

struct HistArgs {
  std::string data;
  std::string splits;
  int bins = 10;
  std::string out_csv;
  std::string layout = "png";
};

int cmd_histogram(const HistArgs& a, std::ostream& out) {
  require_dir(a.data, "--data");
  if (!a.splits.empty()) require_file(a.splits, "--splits");
  if (a.bins < 1) throw UsageError("--bins must be >= 1");
  print_config(out, "histogram",
               {{"data", a.data},
                {"splits", a.splits},
                {"bins", std::to_string(a.bins)},
                {"out_csv", a.out_csv}});
  const auto data = load_checked(a.data, a.layout);
  std::optional<SplitManifest> m;
  if (!a.splits.empty()) m = read_split_manifest(a.splits);
  std::int64_t max_px = 0;
  for (const auto& s : data) max_px = std::max(max_px, s.mask.count());
  const auto h = lesion_size_histogram(data, m ? &*m : nullptr,
                                       linear_bins(max_px, a.bins));
  const std::string csv = histogram_csv(h);
  if (!a.out_csv.empty()) {
    const fs::path p(a.out_csv);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(a.out_csv);
    f << csv;
    if (!f) throw IoError(a.out_csv, "write failed");
  }
  const auto t = h.totals();
  out << csv << "totals = train:" << t[0] << " val:" << t[1]
      << " test:" << t[2] << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"CLCI-Net segmentation toolkit", "clci"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Write a synthetic lesion dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n", synth.n, "Number of slices");
  s->add_option("--size", synth.size, "HxW, multiples of 16");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--difficulty", synth.difficulty, "easy|hard")
      ->check(CLI::IsMember({"easy", "hard"}));
  s->add_option("--slices-per-subject", synth.slices_per_subject,
                "Consecutive slices sharing a subject id");
  s->add_option("--layout", synth.layout, "png|tensor")
      ->check(CLI::IsMember({"png", "tensor"}));

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "key = value config file");
  t->add_option("--ablation", tr.ablation, "aspp,clf,inference toggles, e.g. 1,0,1");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--splits", tr.splits, "Split manifest (subject<TAB>split)");
  t->add_option("--layout", tr.layout, "png|tensor")
      ->check(CLI::IsMember({"png", "tensor"}));
  t->add_option("--resume", tr.resume, "Checkpoint directory to continue from");
  tr.overrides.add_to(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory");
  e->add_option("--out-csv", ev.out_csv, "Per-sample metrics CSV");
  e->add_option("--threshold", ev.threshold, "Binarization threshold");
  e->add_flag("--mask-as-prediction", ev.mask_as_prediction,
              "Score the ground truth against itself");
  e->add_option("--splits", ev.splits, "Split manifest");
  e->add_option("--split", ev.split, "Only evaluate this split");
  e->add_option("--layout", ev.layout, "png|tensor")
      ->check(CLI::IsMember({"png", "tensor"}));

  GradArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  g->add_option("--ops", gc.ops, "all or a comma-separated op list");
  g->add_option("--seed", gc.seed, "Seed for the random test tensors");
  g->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  g->add_option("--epsilon", gc.epsilon, "Central-difference step");
  g->add_flag("--inject-fault", gc.inject_fault,
              "Also check an op with a deliberately wrong backward rule");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Train all eight ablation rows");
  b->add_option("--data", ab.data, "Dataset directory")->required();
  b->add_option("--config", ab.config, "key = value config file");
  b->add_option("--out", ab.out, "Output directory")->required();
  b->add_option("--splits", ab.splits, "Split manifest");
  b->add_option("--layout", ab.layout, "png|tensor")
      ->check(CLI::IsMember({"png", "tensor"}));
  ab.overrides.add_to(b);

  HistArgs hi;
  auto* h = app.add_subcommand("histogram", "Lesion-size histogram per split");
  h->add_option("--data", hi.data, "Dataset directory")->required();
  h->add_option("--splits", hi.splits, "Split manifest");
  h->add_option("--bins", hi.bins, "Number of equal-width bins");
  h->add_option("--out-csv", hi.out_csv, "Output CSV");
  h->add_option("--layout", hi.layout, "png|tensor")
      ->check(CLI::IsMember({"png", "tensor"}));

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
    if (b->parsed()) return cmd_ablate(ab, out);
    if (h->parsed()) return cmd_histogram(hi, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace clci::cli
