#include "clci/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "clci/error.hpp"
#include "clci/serialize.hpp"

namespace clci {

namespace fs = std::filesystem;

int ModelConfig::level_width(int level) const {
  long long w = base_width;
  for (int i = 0; i < level && w < max_width; ++i) w *= width_growth;
  w = std::min<long long>(w, max_width);
  return std::max(1, static_cast<int>(std::lround(width_factor * w)));
}

int ModelConfig::scaled_branch_width() const {
  return std::max(1, static_cast<int>(std::lround(width_factor * branch_width)));
}

int ModelConfig::aspp_branch_count() const {
  if (!use_aspp) return 0;
  return static_cast<int>(aspp_rates.size()) + (aspp_image_pool ? 1 : 0) +
         (use_clf ? levels : 0);
}

void ModelConfig::validate() const {
  if (levels < 1 || levels > 6) {
    throw ConfigError("levels must be in [1, 6], got " + std::to_string(levels));
  }
  if (base_width < 1 || width_growth < 1 || max_width < 1 || branch_width < 1) {
    throw ConfigError("widths must be positive");
  }
  if (!(width_factor > 0.0)) {
    throw ConfigError("width_factor must be positive");
  }
  if (use_aspp && aspp_rates.empty() && !aspp_image_pool) {
    throw ConfigError("ASPP needs at least one branch");
  }
  for (int r : aspp_rates) {
    if (r < 1) throw ConfigError("ASPP rates must be >= 1");
  }
  if (input_h < 1 || input_w < 1 || input_h % size_divisor() != 0 ||
      input_w % size_divisor() != 0) {
    throw ConfigError("input size " + std::to_string(input_h) + "x" +
                      std::to_string(input_w) + " must be a multiple of " +
                      std::to_string(size_divisor()));
  }
}

KeyValues ModelConfig::to_key_values() const {
  std::ostringstream rates;
  for (std::size_t i = 0; i < aspp_rates.size(); ++i) {
    rates << (i ? "," : "") << aspp_rates[i];
  }
  std::ostringstream factor;
  factor.precision(17);
  factor << width_factor;
  return {
      {"levels", std::to_string(levels)},
      {"base_width", std::to_string(base_width)},
      {"width_growth", std::to_string(width_growth)},
      {"max_width", std::to_string(max_width)},
      {"width_factor", factor.str()},
      {"aspp_rates", rates.str()},
      {"aspp_image_pool", aspp_image_pool ? "true" : "false"},
      {"branch_width", std::to_string(branch_width)},
      {"use_aspp", use_aspp ? "true" : "false"},
      {"use_clf", use_clf ? "true" : "false"},
      {"use_inference", use_inference ? "true" : "false"},
      {"input_h", std::to_string(input_h)},
      {"input_w", std::to_string(input_w)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  return from_key_values(kv, ModelConfig{});
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv,
                                         const ModelConfig& base) {
  ModelConfig c = base;
  for (const auto& [k, v] : kv) {
    if (k == "levels") c.levels = parse_int(k, v);
    else if (k == "base_width") c.base_width = parse_int(k, v);
    else if (k == "width_growth") c.width_growth = parse_int(k, v);
    else if (k == "max_width") c.max_width = parse_int(k, v);
    else if (k == "width_factor") c.width_factor = parse_double(k, v);
    else if (k == "aspp_rates") c.aspp_rates = parse_int_list(k, v);
    else if (k == "aspp_image_pool") c.aspp_image_pool = parse_bool(k, v);
    else if (k == "branch_width") c.branch_width = parse_int(k, v);
    else if (k == "use_aspp") c.use_aspp = parse_bool(k, v);
    else if (k == "use_clf") c.use_clf = parse_bool(k, v);
    else if (k == "use_inference") c.use_inference = parse_bool(k, v);
    else if (k == "input_h") c.input_h = parse_int(k, v);
    else if (k == "input_w") c.input_w = parse_int(k, v);
  }
  return c;
}

std::string AblationRow::label() const {
  std::string s;
  s += use_aspp ? '1' : '0';
  s += use_clf ? '1' : '0';
  s += use_inference ? '1' : '0';
  return s;
}

std::vector<AblationRow> ablation_rows() {
  std::vector<AblationRow> rows;
  for (int bits = 0; bits < 8; ++bits) {
    rows.push_back({(bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0});
  }
  return rows;
}

ClciNet::ClciNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int levels = config_.levels;
  const auto level = [](int l) { return "level" + std::to_string(l); };

  // Encoder.
  int c_in = 1;
  for (int l = 0; l < levels; ++l) {
    const int w = config_.level_width(l);
    const std::string p = "encoder." + level(l);
    EncoderLevel enc;
    enc.conv1 = ConvBlock<float>(store_, p + ".conv1", {c_in, w, 3});
    enc.conv2 = ConvBlock<float>(store_, p + ".conv2", {w, w, 3});
    int tap_c = w;
    if (config_.use_clf) {
      for (int j = 0; j < l; ++j) {
        const int adapted = config_.level_width(j);
        enc.clf_from.emplace_back(
            store_, p + ".clf_from" + std::to_string(j),
            ConvBlockSpec{tap_channels_[j], adapted, 1, 1 << (l - j)});
        tap_c += adapted;
      }
    }
    tap_channels_.push_back(tap_c);
    c_in = config_.level_width(l + 1);
    enc.down = ConvBlock<float>(store_, p + ".down", {tap_c, c_in, 3, 2});
    encoder_.push_back(std::move(enc));
  }

  // Bottleneck.
  const int wb = config_.level_width(levels);
  plain_bottleneck_ = ConvBlock<float>(store_, "bottleneck.conv", {wb, wb, 3});
  if (config_.use_aspp) {
    const int b = config_.scaled_branch_width();
    for (int r : config_.aspp_rates) {
      const int k = r == 1 ? 1 : 3;
      aspp_branches_.emplace_back(store_, "aspp.rate" + std::to_string(r),
                                  ConvBlockSpec{wb, b, k, 1, r});
      aspp_rates_used_.push_back(r);
    }
    if (config_.aspp_image_pool) {
      aspp_pool_.emplace(store_, "aspp.image_pool", wb, b);
    }
    if (config_.use_clf) {
      for (int j = 0; j < levels; ++j) {
        aspp_clf_.emplace_back(
            store_, "aspp.clf_" + level(j),
            ConvBlockSpec{tap_channels_[j], b, 1, 1 << (levels - j)});
      }
    }
    aspp_fusion_ = ConvBlock<float>(
        store_, "aspp.fusion", {config_.aspp_branch_count() * b, wb, 1});
  }

  // Decoder, deepest level first so registration follows execution order.
  decoder_.resize(levels);
  for (int l = levels - 1; l >= 0; --l) {
    const int w = config_.level_width(l);
    const int up_c = config_.level_width(l + 1);
    const std::string p = "decoder." + level(l);
    DecoderLevel& dec = decoder_[l];
    if (config_.use_inference) {
      dec.skip_adapter = ConvBlock<float>(store_, p + ".skip_adapter",
                                          {tap_channels_[l], w, 1});
      dec.hidden_adapter =
          ConvBlock<float>(store_, p + ".hidden_adapter", {up_c, w, 1});
      dec.cell = ConvLSTMCell<float>(store_, p + ".convlstm", w, w);
      dec.out = ConvBlock<float>(store_, p + ".out", {w, w, 3});
    } else {
      dec.conv1 = ConvBlock<float>(store_, p + ".conv1",
                                   {tap_channels_[l] + up_c, w, 3});
      dec.conv2 = ConvBlock<float>(store_, p + ".conv2", {w, w, 3});
    }
  }
  // Output layer: plain 1x1 convolution with bias, then sigmoid.
  head_.kernel = store_.add("head.kernel", {1, config_.level_width(0), 1, 1},
                            ParamKind::kConvKernel);
  head_.bias = store_.add("head.bias", {1, 1, 1, 1}, ParamKind::kConvBias);
}

void ClciNet::check_input(const Shape& s) const {
  const int d = config_.size_divisor();
  if (s.c != 1) {
    throw ShapeError("clci_forward: expected a single-channel image, got " +
                     to_string(s));
  }
  if (s.h % d != 0 || s.w % d != 0) {
    throw ShapeError("clci_forward: image " + to_string(s) +
                     " has spatial dims that are not multiples of " +
                     std::to_string(d));
  }
}

Tensor ClciNet::clf_aggregate(const EncoderTaps& taps, int target_level,
                              const Tensor& own, Mode mode) const {
  if (!config_.use_clf || target_level == 0) return own;
  if (static_cast<int>(taps.levels.size()) < target_level) {
    throw ShapeError("clf_aggregate: level " + std::to_string(target_level) +
                     " needs " + std::to_string(target_level) +
                     " earlier taps, got " +
                     std::to_string(taps.levels.size()));
  }
  const Shape& s = own.shape();
  std::vector<Tensor> parts{own};
  const EncoderLevel& enc = encoder_[target_level];
  for (int j = 0; j < target_level; ++j) {
    Tensor adapted = enc.clf_from[j].forward(taps.levels[j], mode);
    const Shape& a = adapted.shape();
    if (a.h != s.h || a.w != s.w) {
      throw ShapeError("clf_aggregate: tap " + std::to_string(j) +
                       " adapted to " + to_string(a) + " but level " +
                       std::to_string(target_level) + " is " + to_string(s));
    }
    parts.push_back(std::move(adapted));
  }
  return concat_channels(parts);
}

EncoderTaps ClciNet::encode(const Tensor& image, Mode mode) const {
  EncoderTaps taps;
  Tensor x = image;
  for (int l = 0; l < config_.levels; ++l) {
    const EncoderLevel& enc = encoder_[l];
    Tensor own = enc.conv2.forward(enc.conv1.forward(x, mode), mode);
    Tensor tap = clf_aggregate(taps, l, own, mode);
    taps.levels.push_back(tap);
    taps.scale_divisor.push_back(1 << l);
    x = enc.down.forward(tap, mode);
  }
  taps.bottleneck = x;
  return taps;
}

Tensor ClciNet::extended_aspp(const EncoderTaps& taps, Mode mode,
                              std::optional<Tensor>* pre_fusion) const {
  // The baseline 3x3 block always runs; ASPP is stacked on its output.
  const Tensor x = plain_bottleneck_.forward(taps.bottleneck, mode);
  if (!config_.use_aspp) return x;

  std::vector<Tensor> branches;
  for (const auto& b : aspp_branches_) branches.push_back(b.forward(x, mode));
  if (aspp_pool_) branches.push_back(aspp_pool_->forward(x, mode));
  for (std::size_t j = 0; j < aspp_clf_.size(); ++j) {
    Tensor adapted = aspp_clf_[j].forward(taps.levels[j], mode);
    if (adapted.shape().h != x.shape().h || adapted.shape().w != x.shape().w) {
      throw ShapeError("extended_aspp: level " + std::to_string(j) +
                       " tap adapted to " + to_string(adapted.shape()) +
                       " but bottleneck is " + to_string(x.shape()));
    }
    branches.push_back(std::move(adapted));
  }
  Tensor stacked = concat_channels(branches);
  if (pre_fusion) *pre_fusion = stacked;
  return aspp_fusion_.forward(stacked, mode);
}

Tensor ClciNet::decode(const Tensor& bottleneck_out, const EncoderTaps& taps,
                       Mode mode) const {
  Tensor d = bottleneck_out;
  for (int l = config_.levels - 1; l >= 0; --l) {
    const DecoderLevel& dec = decoder_[l];
    const Tensor& skip = taps.levels[l];
    Tensor up = upsample_bilinear(d, 2);
    if (config_.use_inference) {
      Tensor x_t = dec.skip_adapter.forward(skip, mode);
      Tensor h0 = dec.hidden_adapter.forward(up, mode);
      // A zero cell state would leave the forget gate without gradient, so
      // the adapted decoder map seeds both states.
      ConvLSTMState<float> state{h0, h0};
      auto [h, next] = convlstm_step(dec.cell, x_t, state);
      d = dec.out.forward(h, mode);
    } else {
      Tensor joined = concat_channels(std::vector<Tensor>{skip, up});
      d = dec.conv2.forward(dec.conv1.forward(joined, mode), mode);
    }
  }
  return d;
}

Tensor ClciNet::forward(const Tensor& image, Mode mode,
                        ForwardTrace* trace) const {
  check_input(image.shape());
  EncoderTaps taps = encode(image, mode);
  std::optional<Tensor> pre;
  Tensor mid = extended_aspp(taps, mode, trace ? &pre : nullptr);
  Tensor dec = decode(mid, taps, mode);
  Tensor prob = sigmoid(conv2d(dec, head_));
  if (trace) {
    trace->taps = std::move(taps);
    trace->aspp_pre_fusion = std::move(pre);
    trace->bottleneck_out = mid;
    trace->decoder_out = dec;
  }
  return prob;
}

Tensor clci_forward(const ClciNet& model, const Tensor& image, Mode mode) {
  return model.forward(image, mode);
}

ClciNet instantiate_ablation(const AblationRow& row, const ModelConfig& base) {
  ModelConfig c = base;
  c.use_aspp = row.use_aspp;
  c.use_clf = row.use_clf;
  c.use_inference = row.use_inference;
  return ClciNet(c);
}

namespace {

std::string shape_field(const Shape& s) { return to_string(s); }

Shape parse_shape_field(const std::string& source, const std::string& text) {
  Shape s;
  char x1, x2, x3;
  std::istringstream in(text);
  if (!(in >> s.n >> x1 >> s.c >> x2 >> s.h >> x3 >> s.w) || x1 != 'x' ||
      x2 != 'x' || x3 != 'x') {
    throw IoError(source, "malformed shape '" + text + "'");
  }
  return s;
}

// "<name> <shape>"
std::pair<std::string, Shape> split_entry(const std::string& source,
                                          const std::string& value) {
  const auto sp = value.rfind(' ');
  if (sp == std::string::npos) {
    throw IoError(source, "malformed manifest entry '" + value + "'");
  }
  return {value.substr(0, sp), parse_shape_field(source, value.substr(sp + 1))};
}

Tensor stats_tensor(const std::vector<float>& v) {
  return Tensor::from_data({static_cast<int>(v.size()), 1, 1, 1}, v);
}

}  // namespace

void save_checkpoint(const std::string& dir, const ClciNet& model,
                     const CheckpointExtras& extras) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create checkpoint directory");

  KeyValues manifest{{"format", "clci-checkpoint"}, {"version", "1"}};
  for (const auto& [k, v] : model.config().to_key_values()) {
    manifest.emplace_back("model." + k, v);
  }
  const auto& params = model.store().parameters();
  manifest.emplace_back("param_count", std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    manifest.emplace_back("param." + std::to_string(i),
                          p.name + " " + shape_field(p.tensor.shape()));
    save_tensor((fs::path(dir) / (p.name + ".clct")).string(),
                p.tensor.detach());
  }
  const auto& stats = model.store().running_stats();
  manifest.emplace_back("stats_count", std::to_string(stats.size()));
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    manifest.emplace_back("stats." + std::to_string(i),
                          s.name + " " + std::to_string(s.stats.mean.size()));
    save_tensor((fs::path(dir) / (s.name + ".running_mean.clct")).string(),
                stats_tensor(s.stats.mean));
    save_tensor((fs::path(dir) / (s.name + ".running_var.clct")).string(),
                stats_tensor(s.stats.var));
  }
  manifest.emplace_back("extra_tensor_count",
                        std::to_string(extras.tensors.size()));
  for (std::size_t i = 0; i < extras.tensors.size(); ++i) {
    const auto& [name, t] = extras.tensors[i];
    manifest.emplace_back("extra_tensor." + std::to_string(i),
                          name + " " + shape_field(t.shape()));
    save_tensor((fs::path(dir) / ("extra." + name + ".clct")).string(),
                t.detach());
  }
  for (const auto& [k, v] : extras.values) manifest.emplace_back("extra." + k, v);
  write_key_values((fs::path(dir) / "manifest.txt").string(), manifest);
}

ClciNet load_checkpoint(const std::string& dir, CheckpointExtras* extras) {
  const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
  const KeyValues kv = read_key_values(manifest_path);
  const auto require = [&](const std::string& key) -> const std::string& {
    const std::string* v = find_value(kv, key);
    if (!v) throw IoError(manifest_path, "missing key '" + key + "'");
    return *v;
  };
  if (require("format") != "clci-checkpoint") {
    throw IoError(manifest_path, "not a clci checkpoint manifest");
  }

  KeyValues model_kv;
  for (const auto& [k, v] : kv) {
    if (k.rfind("model.", 0) == 0) model_kv.emplace_back(k.substr(6), v);
  }
  ClciNet model(ModelConfig::from_key_values(model_kv));

  auto& params = model.store().parameters();
  const int count = parse_int("param_count", require("param_count"));
  if (count != static_cast<int>(params.size())) {
    throw IoError(manifest_path, "manifest lists " + std::to_string(count) +
                                     " parameters, model expects " +
                                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto [name, shape] =
        split_entry(manifest_path, require("param." + std::to_string(i)));
    if (name != p.name || !(shape == p.tensor.shape())) {
      throw IoError(manifest_path,
                    "parameter " + std::to_string(i) + " is '" + name + "' " +
                        to_string(shape) + ", expected '" + p.name + "' " +
                        to_string(p.tensor.shape()));
    }
    const std::string path = (fs::path(dir) / (p.name + ".clct")).string();
    const Tensor t = load_tensor(path);
    if (!(t.shape() == p.tensor.shape())) {
      throw IoError(path, "shape " + to_string(t.shape()) + ", expected " +
                              to_string(p.tensor.shape()));
    }
    std::copy(t.data().begin(), t.data().end(),
              p.tensor.mutable_data().begin());
  }

  auto& stats = model.store().running_stats();
  const int stats_count = parse_int("stats_count", require("stats_count"));
  if (stats_count != static_cast<int>(stats.size())) {
    throw IoError(manifest_path, "manifest lists " +
                                     std::to_string(stats_count) +
                                     " statistics, model expects " +
                                     std::to_string(stats.size()));
  }
  for (std::size_t i = 0; i < stats.size(); ++i) {
    auto& s = stats[i];
    const std::string& entry = require("stats." + std::to_string(i));
    if (entry != s.name + " " + std::to_string(s.stats.mean.size())) {
      throw IoError(manifest_path, "statistics " + std::to_string(i) + " is '" +
                                       entry + "', expected '" + s.name + "'");
    }
    for (auto* field : {&s.stats.mean, &s.stats.var}) {
      const std::string suffix =
          field == &s.stats.mean ? ".running_mean.clct" : ".running_var.clct";
      const std::string path = (fs::path(dir) / (s.name + suffix)).string();
      const Tensor t = load_tensor(path);
      if (t.numel() != field->size()) {
        throw IoError(path, "expected " + std::to_string(field->size()) +
                                " values");
      }
      std::copy(t.data().begin(), t.data().end(), field->begin());
    }
  }

  if (extras) {
    extras->values.clear();
    extras->tensors.clear();
    for (const auto& [k, v] : kv) {
      if (k.rfind("extra.", 0) == 0) extras->values.emplace_back(k.substr(6), v);
    }
    const std::string* n = find_value(kv, "extra_tensor_count");
    const int extra_count = n ? parse_int("extra_tensor_count", *n) : 0;
    for (int i = 0; i < extra_count; ++i) {
      const auto [name, shape] = split_entry(
          manifest_path, require("extra_tensor." + std::to_string(i)));
      const std::string path =
          (fs::path(dir) / ("extra." + name + ".clct")).string();
      Tensor t = load_tensor(path);
      if (!(t.shape() == shape)) {
        throw IoError(path, "shape " + to_string(t.shape()) +
                                " does not match manifest " + to_string(shape));
      }
      extras->tensors.emplace_back(name, std::move(t));
    }
  }
  return model;
}

}  // namespace clci
