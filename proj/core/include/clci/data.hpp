#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clci/metrics.hpp"
#include "clci/tensor.hpp"

namespace clci {

struct SamplePair {
  Tensor image;  // (1, 1, h, w)
  BinaryMask mask;
  std::string subject_id;
  int slice_index = 0;
};

// Throws ShapeError / Error when image and mask disagree or the mask is not
// binary.
void validate_sample(const SamplePair& s);

// Centered crop with offsets floor((src - dst) / 2) per axis.
struct CropOffsets {
  int top = 0;
  int left = 0;
};
CropOffsets center_crop_offsets(int src_h, int src_w, int dst_h, int dst_w);
SamplePair crop_center(const SamplePair& s, int target_h = 224,
                       int target_w = 176);

// Per-slice min-max scaling to [0, 1]; a constant slice maps to zeros.
Tensor normalize_intensity(const Tensor& image);

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split s);

struct SplitManifest {
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  // Throws ConfigError for subjects not in the manifest.
  Split split_of(const std::string& subject) const;
  bool contains(const std::string& subject) const;
};

// Seeded shuffle of the (unique) ids, then the first counts[0] go to train,
// the next counts[1] to val and the next counts[2] to test.
SplitManifest make_split(const std::vector<std::string>& subject_ids,
                         std::array<int, 3> counts, std::uint64_t seed);

// "subject_id<TAB>split" lines.
void write_split_manifest(const std::string& path, const SplitManifest& m);
SplitManifest read_split_manifest(const std::string& path);

// Distinct subject ids in first-appearance order.
std::vector<std::string> subject_ids(const std::vector<SamplePair>& samples);

enum class Difficulty { kEasy, kHard };
Difficulty parse_difficulty(const std::string& s);
const char* to_string(Difficulty d);

// Elliptical blob with a low-order harmonic boundary perturbation.
struct Blob {
  double cy = 0, cx = 0;  // center, pixel coordinates (integers)
  double ry = 1, rx = 1;  // semi-axes
  double angle = 0;       // radians
  double amp2 = 0, phase2 = 0;
  double amp3 = 0, phase3 = 0;

  bool contains(int y, int x) const;
};

struct SynthOptions {
  int count = 8;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::kEasy;
  int slices_per_subject = 1;
};

struct SynthSample {
  SamplePair pair;
  std::vector<Blob> lesions;
  std::vector<Blob> distractors;
};

// Probability of 0, 1, 2 and 3 lesions per slice.
std::array<double, 4> lesion_count_mixture(Difficulty d);

// Brain-like ellipse with smooth texture, 0-3 dark lesion blobs whose support
// is exactly the mask, and (hard only) dark non-lesion distractors. Intensities
// are quantized to multiples of 1/65535 so PNG storage is lossless. Throws
// ConfigError unless height and width are multiples of 16.
std::vector<SynthSample> synth_dataset_detailed(const SynthOptions& opt);
std::vector<SamplePair> synth_dataset(const SynthOptions& opt);

struct LesionSizeHistogram {
  std::vector<std::int64_t> edges;  // bin i covers [edges[i], edges[i + 1])
  std::vector<std::array<std::int64_t, 3>> counts;  // train, val, test

  std::array<std::int64_t, 3> totals() const;
};

// `count` equal-width bins covering [1, max_size + 1).
std::vector<std::int64_t> linear_bins(std::int64_t max_size, int count);

// Per-split histogram of per-sample lesion pixel counts; lesion-free samples
// are not counted. Without a manifest every sample is treated as train.
LesionSizeHistogram lesion_size_histogram(
    const std::vector<SamplePair>& samples, const SplitManifest* splits,
    const std::vector<std::int64_t>& edges);

// "bin_lo,bin_hi,train,val,test"; bin_hi is exclusive.
std::string histogram_csv(const LesionSizeHistogram& h);

// root/images/<subject>_<slice>.<ext> and root/masks/<subject>_<slice>.<ext>.
// kPng: 16-bit grayscale images, 8-bit masks (0/255). kTensor: CLCT files.
enum class Layout { kPng, kTensor };
Layout parse_layout(const std::string& s);

void save_dataset(const std::string& root, const std::vector<SamplePair>& s,
                  Layout layout = Layout::kPng);
// Sorted by (subject_id, slice_index). A missing directory root/images is an
// empty dataset.
std::vector<SamplePair> load_dataset(const std::string& root,
                                     Layout layout = Layout::kPng);

// Batched (n, 1, h, w) tensors from samples[indices].
Tensor stack_images(const std::vector<SamplePair>& samples,
                    const std::vector<std::size_t>& indices);
Tensor stack_masks(const std::vector<SamplePair>& samples,
                   const std::vector<std::size_t>& indices);

}  // namespace clci
