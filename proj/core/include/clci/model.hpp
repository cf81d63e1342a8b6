#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "clci/blocks.hpp"
#include "clci/kv.hpp"
#include "clci/parameter_store.hpp"
#include "clci/tensor.hpp"

namespace clci {

// Architecture hyperparameters. Widths are given at width_factor 1 and scaled
// by width_factor when the model is built.
struct ModelConfig {
  int levels = 4;
  int base_width = 32;
  int width_growth = 2;
  int max_width = 256;
  double width_factor = 1.0;
  // Rate 1 is the 1x1 branch; other rates are dilated 3x3 branches.
  std::vector<int> aspp_rates{1, 6, 12, 18};
  bool aspp_image_pool = true;
  int branch_width = 64;
  bool use_aspp = true;
  bool use_clf = true;
  bool use_inference = true;
  int input_h = 224;
  int input_w = 176;

  // Scaled channel count of encoder level `level`; level == levels is the
  // bottleneck.
  int level_width(int level) const;
  int scaled_branch_width() const;
  // Number of tensors concatenated before the ASPP fusion conv.
  int aspp_branch_count() const;
  // 2^levels; input sides must be multiples of this.
  int size_divisor() const { return 1 << levels; }

  // Throws ConfigError on inconsistent values.
  void validate() const;

  KeyValues to_key_values() const;
  // Starts from `base` and overrides every key present in `kv`; unknown keys
  // are ignored so the same file can carry training settings.
  static ModelConfig from_key_values(const KeyValues& kv);
  static ModelConfig from_key_values(const KeyValues& kv, const ModelConfig& base);
};

struct AblationRow {
  bool use_aspp = false;
  bool use_clf = false;
  bool use_inference = false;

  std::string label() const;
};

// All eight (ASPP, CLF, Inference) combinations, baseline first, in binary
// counting order with ASPP as the most significant bit.
std::vector<AblationRow> ablation_rows();

// Pre-downsample feature maps of each encoder level (after cross-level
// aggregation when enabled) and the bottleneck input.
struct EncoderTaps {
  std::vector<Tensor> levels;
  std::vector<int> scale_divisor;  // 1, 2, 4, ... relative to the input
  Tensor bottleneck;
};

// Intermediate tensors captured for inspection.
struct ForwardTrace {
  EncoderTaps taps;
  std::optional<Tensor> aspp_pre_fusion;
  Tensor bottleneck_out;
  Tensor decoder_out;
};

class ClciNet {
 public:
  explicit ClciNet(const ModelConfig& config);

  ClciNet(ClciNet&&) = default;
  ClciNet& operator=(ClciNet&&) = default;

  const ModelConfig& config() const { return config_; }
  ParameterStore<float>& store() { return store_; }
  const ParameterStore<float>& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

  // Probability map (n, 1, h, w). `image` must be (n, 1, h, w) with h and w
  // multiples of 2^levels; checked before any compute.
  Tensor forward(const Tensor& image, Mode mode,
                 ForwardTrace* trace = nullptr) const;

  EncoderTaps encode(const Tensor& image, Mode mode) const;

  // Concatenates `own` with every earlier tap brought to this level's
  // resolution by its strided 1x1 adapter. Returns `own` unchanged when
  // cross-level fusion is disabled.
  Tensor clf_aggregate(const EncoderTaps& taps, int target_level,
                       const Tensor& own, Mode mode) const;

  // A 3x3 ConvBlock on the bottleneck input. With use_aspp its output feeds
  // parallel branches (1x1, dilated 3x3, image pool and, with use_clf, one
  // adapted tap per level) that are concatenated and fused by a 1x1 ConvBlock.
  Tensor extended_aspp(const EncoderTaps& taps, Mode mode,
                       std::optional<Tensor>* pre_fusion = nullptr) const;

  // Restores full resolution from the bottleneck output. With use_inference
  // each level runs one ConvLSTM step: the adapted skip map is the input and
  // the adapted upsampled decoder map seeds both the hidden and the cell
  // state. Without it, classic concat + two 3x3 ConvBlocks.
  Tensor decode(const Tensor& bottleneck_out, const EncoderTaps& taps,
                Mode mode) const;

  void check_input(const Shape& s) const;

 private:
  struct EncoderLevel {
    ConvBlock<float> conv1;
    ConvBlock<float> conv2;
    ConvBlock<float> down;
    std::vector<ConvBlock<float>> clf_from;  // one per earlier level
  };
  struct DecoderLevel {
    // use_inference
    ConvBlock<float> skip_adapter;
    ConvBlock<float> hidden_adapter;
    ConvLSTMCell<float> cell;
    ConvBlock<float> out;
    // classic
    ConvBlock<float> conv1;
    ConvBlock<float> conv2;
  };

  ModelConfig config_;
  ParameterStore<float> store_;
  std::vector<int> tap_channels_;
  std::vector<EncoderLevel> encoder_;
  std::vector<ConvBlock<float>> aspp_branches_;
  std::vector<int> aspp_rates_used_;
  std::optional<ImagePoolBranch<float>> aspp_pool_;
  std::vector<ConvBlock<float>> aspp_clf_;
  ConvBlock<float> aspp_fusion_;
  ConvBlock<float> plain_bottleneck_;
  std::vector<DecoderLevel> decoder_;  // indexed by level
  ConvParams<float> head_;
};

Tensor clci_forward(const ClciNet& model, const Tensor& image, Mode mode);

ClciNet instantiate_ablation(const AblationRow& row,
                             const ModelConfig& base = {});

// Checkpoint directory: manifest.txt (key = value: model config, parameter
// and statistics names with shapes, plus caller extras) and one CLCT file per
// tensor.
struct CheckpointExtras {
  KeyValues values;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& dir, const ClciNet& model,
                     const CheckpointExtras& extras = {});

// Rebuilds the model from the manifest and validates every expected name and
// shape. Extra tensors listed in the manifest are returned through `extras`.
ClciNet load_checkpoint(const std::string& dir,
                        CheckpointExtras* extras = nullptr);

}  // namespace clci
