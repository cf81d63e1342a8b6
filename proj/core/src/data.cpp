#include "clci/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clci/error.hpp"
#include "clci/random.hpp"
#include "clci/serialize.hpp"
#include "png_io.hpp"

namespace clci {

namespace fs = std::filesystem;

void validate_sample(const SamplePair& s) {
  const Shape& is = s.image.shape();
  if (is.n != 1 || is.c != 1) {
    throw ShapeError("sample " + s.subject_id + ": image must be 1x1xHxW, got " +
                     to_string(is));
  }
  if (is.h != s.mask.h || is.w != s.mask.w) {
    throw ShapeError("sample " + s.subject_id + ": image " + to_string(is) +
                     " and mask " + std::to_string(s.mask.h) + "x" +
                     std::to_string(s.mask.w) + " differ");
  }
  validate_mask(s.mask);
}

CropOffsets center_crop_offsets(int src_h, int src_w, int dst_h, int dst_w) {
  if (dst_h < 1 || dst_w < 1 || dst_h > src_h || dst_w > src_w) {
    throw ShapeError("crop target " + std::to_string(dst_h) + "x" +
                     std::to_string(dst_w) + " does not fit source " +
                     std::to_string(src_h) + "x" + std::to_string(src_w));
  }
  return {(src_h - dst_h) / 2, (src_w - dst_w) / 2};
}

SamplePair crop_center(const SamplePair& s, int target_h, int target_w) {
  validate_sample(s);
  const int src_h = s.mask.h;
  const int src_w = s.mask.w;
  const CropOffsets off = center_crop_offsets(src_h, src_w, target_h, target_w);
  std::vector<float> img(static_cast<std::size_t>(target_h) * target_w);
  BinaryMask mask(target_h, target_w);
  const auto src = s.image.data();
  for (int y = 0; y < target_h; ++y) {
    for (int x = 0; x < target_w; ++x) {
      const std::size_t si =
          static_cast<std::size_t>(y + off.top) * src_w + (x + off.left);
      img[static_cast<std::size_t>(y) * target_w + x] = src[si];
      mask.at(y, x) = s.mask.values[si];
    }
  }
  return {Tensor::from_data({1, 1, target_h, target_w}, std::move(img)),
          std::move(mask), s.subject_id, s.slice_index};
}

Tensor normalize_intensity(const Tensor& image) {
  const auto v = image.data();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<float> out(v.size(), 0.0f);
  if (*hi > *lo) {
    const float range = *hi - *lo;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split SplitManifest::split_of(const std::string& subject) const {
  if (std::find(train.begin(), train.end(), subject) != train.end()) {
    return Split::kTrain;
  }
  if (std::find(val.begin(), val.end(), subject) != val.end()) return Split::kVal;
  if (std::find(test.begin(), test.end(), subject) != test.end()) {
    return Split::kTest;
  }
  throw ConfigError("subject '" + subject + "' is not in the split manifest");
}

bool SplitManifest::contains(const std::string& subject) const {
  for (const auto* list : {&train, &val, &test}) {
    if (std::find(list->begin(), list->end(), subject) != list->end()) {
      return true;
    }
  }
  return false;
}

SplitManifest make_split(const std::vector<std::string>& subject_ids,
                         std::array<int, 3> counts, std::uint64_t seed) {
  const std::set<std::string> unique(subject_ids.begin(), subject_ids.end());
  if (unique.size() != subject_ids.size()) {
    throw ConfigError("make_split: subject ids must be unique");
  }
  long long requested = 0;
  for (int c : counts) {
    if (c < 0) throw ConfigError("make_split: negative split size");
    requested += c;
  }
  if (requested > static_cast<long long>(subject_ids.size())) {
    throw ConfigError("make_split: requested " + std::to_string(requested) +
                      " subjects but only " +
                      std::to_string(subject_ids.size()) + " exist");
  }
  std::vector<std::string> ids = subject_ids;
  Rng rng(seed);
  rng.shuffle(ids);
  SplitManifest m;
  m.seed = seed;
  auto it = ids.begin();
  m.train.assign(it, it + counts[0]);
  it += counts[0];
  m.val.assign(it, it + counts[1]);
  it += counts[1];
  m.test.assign(it, it + counts[2]);
  return m;
}

void write_split_manifest(const std::string& path, const SplitManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << "# seed=" << m.seed << "\n";
  for (const auto& s : m.train) out << s << "\ttrain\n";
  for (const auto& s : m.val) out << s << "\tval\n";
  for (const auto& s : m.test) out << s << "\ttest\n";
  if (!out) throw IoError(path, "write failed");
}

SplitManifest read_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  SplitManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# seed=", 0) == 0) m.seed = std::stoull(line.substr(7));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError(path, "line " + std::to_string(lineno) +
                              ": expected 'subject<TAB>split'");
    }
    const std::string subject = line.substr(0, tab);
    const std::string split = line.substr(tab + 1);
    if (m.contains(subject)) {
      throw IoError(path, "subject '" + subject + "' listed twice");
    }
    if (split == "train") m.train.push_back(subject);
    else if (split == "val") m.val.push_back(subject);
    else if (split == "test") m.test.push_back(subject);
    else throw IoError(path, "line " + std::to_string(lineno) +
                                 ": unknown split '" + split + "'");
  }
  return m;
}

std::vector<std::string> subject_ids(const std::vector<SamplePair>& samples) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.subject_id).second) out.push_back(s.subject_id);
  }
  return out;
}

Difficulty parse_difficulty(const std::string& s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "hard") return Difficulty::kHard;
  throw ConfigError("difficulty must be 'easy' or 'hard', got '" + s + "'");
}

const char* to_string(Difficulty d) {
  return d == Difficulty::kEasy ? "easy" : "hard";
}

bool Blob::contains(int y, int x) const {
  const double dy = y - cy;
  const double dx = x - cx;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  const double u = (ca * dy + sa * dx) / ry;
  const double v = (-sa * dy + ca * dx) / rx;
  const double rho = std::sqrt(u * u + v * v);
  if (rho == 0.0) return true;
  const double theta = std::atan2(v, u);
  const double boundary = 1.0 + amp2 * std::sin(2 * theta + phase2) +
                          amp3 * std::sin(3 * theta + phase3);
  return rho <= boundary;
}

std::array<double, 4> lesion_count_mixture(Difficulty) {
  return {0.10, 0.50, 0.25, 0.15};
}

namespace {

struct BrainEllipse {
  double cy, cx, ry, rx;
  bool contains(double y, double x, double shrink = 1.0) const {
    const double u = (y - cy) / (ry * shrink);
    const double v = (x - cx) / (rx * shrink);
    return u * u + v * v <= 1.0;
  }
};

Blob random_blob(Rng& rng, const BrainEllipse& brain, double r_min,
                 double r_max) {
  Blob b;
  // Center: rejection sample an integer pixel inside the inner brain region.
  do {
    b.cy = std::round(rng.uniform(brain.cy - brain.ry, brain.cy + brain.ry));
    b.cx = std::round(rng.uniform(brain.cx - brain.rx, brain.cx + brain.rx));
  } while (!brain.contains(b.cy, b.cx, 0.7));
  // Squaring the exponent skews toward small lesions with a long tail.
  const double u = rng.uniform();
  const double r = r_min * std::pow(r_max / r_min, u * u);
  const double aspect = rng.uniform(0.6, 1.0);
  b.ry = r;
  b.rx = r * aspect;
  b.angle = rng.uniform(0.0, M_PI);
  b.amp2 = rng.uniform(0.0, 0.2);
  b.phase2 = rng.uniform(0.0, 2 * M_PI);
  b.amp3 = rng.uniform(0.0, 0.15);
  b.phase3 = rng.uniform(0.0, 2 * M_PI);
  return b;
}

int draw_count(Rng& rng, const std::array<double, 4>& mixture) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    acc += mixture[k];
    if (u < acc) return k;
  }
  return 3;
}

}  // namespace

std::vector<SynthSample> synth_dataset_detailed(const SynthOptions& opt) {
  if (opt.count < 0) throw ConfigError("synth: count must be >= 0");
  if (opt.height < 16 || opt.width < 16 || opt.height % 16 != 0 ||
      opt.width % 16 != 0) {
    throw ConfigError("synth: size " + std::to_string(opt.height) + "x" +
                      std::to_string(opt.width) +
                      " must be positive multiples of 16");
  }
  if (opt.slices_per_subject < 1) {
    throw ConfigError("synth: slices_per_subject must be >= 1");
  }
  const int h = opt.height;
  const int w = opt.width;
  const bool hard = opt.difficulty == Difficulty::kHard;
  const auto mixture = lesion_count_mixture(opt.difficulty);
  // Easy lesions start at a few pixels across so their boundary does not
  // dominate the overlap scores; hard ones go down to a handful of pixels.
  const double r_max = std::max(2.0, 0.18 * std::min(h, w));
  const double r_min = hard ? 1.5 : std::min(r_max, std::max(2.0, 0.06 * std::min(h, w)));

  std::vector<SynthSample> out;
  out.reserve(opt.count);
  for (int i = 0; i < opt.count; ++i) {
    Rng rng = Rng::derive(opt.seed, static_cast<std::uint64_t>(i));
    SynthSample s;
    const int subject = i / opt.slices_per_subject;
    char id[32];
    std::snprintf(id, sizeof(id), "s%04d", subject);
    s.pair.subject_id = id;
    s.pair.slice_index = i % opt.slices_per_subject;

    const BrainEllipse brain{h / 2.0 + rng.uniform(-0.03, 0.03) * h,
                             w / 2.0 + rng.uniform(-0.03, 0.03) * w,
                             rng.uniform(0.38, 0.45) * h,
                             rng.uniform(0.35, 0.42) * w};
    // Texture: a few low-frequency sinusoids.
    double fy[3], fx[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
      fy[k] = rng.uniform(0.5, 3.0) * 2 * M_PI / h;
      fx[k] = rng.uniform(0.5, 3.0) * 2 * M_PI / w;
      ph[k] = rng.uniform(0.0, 2 * M_PI);
      amp[k] = rng.uniform(0.02, 0.05);
    }
    const int n_lesions = draw_count(rng, mixture);
    for (int k = 0; k < n_lesions; ++k) {
      s.lesions.push_back(random_blob(rng, brain, r_min, r_max));
    }
    if (hard) {
      const int n_distractors = 1 + static_cast<int>(rng.below(3));
      for (int k = 0; k < n_distractors; ++k) {
        s.distractors.push_back(random_blob(rng, brain, r_min, r_max));
      }
    }
    const double noise_sigma = hard ? 0.03 : 0.02;
    const double lesion_level = 0.22;
    const double distractor_level = 0.30;

    std::vector<float> img(static_cast<std::size_t>(h) * w);
    BinaryMask mask(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.05;
        if (brain.contains(y, x)) {
          v = 0.65;
          for (int k = 0; k < 3; ++k) {
            v += amp[k] * std::sin(fy[k] * y + fx[k] * x + ph[k]);
          }
        }
        for (const Blob& d : s.distractors) {
          if (d.contains(y, x)) v = distractor_level;
        }
        bool lesion = false;
        for (const Blob& b : s.lesions) lesion = lesion || b.contains(y, x);
        if (lesion) v = lesion_level;
        v += noise_sigma * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
        img[static_cast<std::size_t>(y) * w + x] =
            static_cast<float>(std::round(v * 65535.0) / 65535.0);
        mask.at(y, x) = lesion ? 1 : 0;
      }
    }
    s.pair.image = Tensor::from_data({1, 1, h, w}, std::move(img));
    s.pair.mask = std::move(mask);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SamplePair> synth_dataset(const SynthOptions& opt) {
  std::vector<SamplePair> out;
  for (auto& s : synth_dataset_detailed(opt)) out.push_back(std::move(s.pair));
  return out;
}

std::array<std::int64_t, 3> LesionSizeHistogram::totals() const {
  std::array<std::int64_t, 3> t{0, 0, 0};
  for (const auto& c : counts) {
    for (int k = 0; k < 3; ++k) t[k] += c[k];
  }
  return t;
}

std::vector<std::int64_t> linear_bins(std::int64_t max_size, int count) {
  if (count < 1) throw ConfigError("histogram: bin count must be >= 1");
  if (max_size < 1) return {};
  const std::int64_t span = max_size;  // covers [1, max_size + 1)
  const std::int64_t width = (span + count - 1) / count;
  std::vector<std::int64_t> edges;
  for (std::int64_t e = 1; e <= max_size; e += width) edges.push_back(e);
  edges.push_back(edges.back() + width);
  return edges;
}

LesionSizeHistogram lesion_size_histogram(
    const std::vector<SamplePair>& samples, const SplitManifest* splits,
    const std::vector<std::int64_t>& edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) {
      throw ConfigError("histogram: bin edges must be strictly increasing");
    }
  }
  LesionSizeHistogram h;
  h.edges = edges;
  h.counts.assign(edges.size() > 1 ? edges.size() - 1 : 0, {0, 0, 0});
  for (const auto& s : samples) {
    const std::int64_t size = s.mask.count();
    if (size == 0) continue;
    const int split =
        splits ? static_cast<int>(splits->split_of(s.subject_id)) : 0;
    const auto it = std::upper_bound(edges.begin(), edges.end(), size);
    if (it == edges.begin() || it == edges.end()) {
      throw ConfigError("histogram: lesion of " + std::to_string(size) +
                        " px in " + s.subject_id + " is outside the bins");
    }
    ++h.counts[static_cast<std::size_t>(it - edges.begin() - 1)][split];
  }
  return h;
}

std::string histogram_csv(const LesionSizeHistogram& h) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,train,val,test\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.counts[i][0] << ','
       << h.counts[i][1] << ',' << h.counts[i][2] << '\n';
  }
  return os.str();
}

Layout parse_layout(const std::string& s) {
  if (s == "png") return Layout::kPng;
  if (s == "tensor") return Layout::kTensor;
  throw ConfigError("layout must be 'png' or 'tensor', got '" + s + "'");
}

namespace {

const char* extension(Layout layout) {
  return layout == Layout::kPng ? ".png" : ".clct";
}

std::string stem(const SamplePair& s) {
  return s.subject_id + "_" + std::to_string(s.slice_index);
}

// "<subject>_<slice>" with the last underscore as separator.
bool parse_stem(const std::string& stem, std::string* subject, int* slice) {
  const auto us = stem.rfind('_');
  if (us == std::string::npos || us == 0 || us + 1 == stem.size()) return false;
  const std::string num = stem.substr(us + 1);
  if (!std::all_of(num.begin(), num.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  *subject = stem.substr(0, us);
  *slice = std::stoi(num);
  return true;
}

Tensor read_image(const std::string& path, Layout layout) {
  if (layout == Layout::kTensor) {
    Tensor t = load_tensor(path);
    if (t.shape().n != 1 || t.shape().c != 1) {
      throw IoError(path, "image tensor must be 1x1xHxW, got " +
                              to_string(t.shape()));
    }
    return t;
  }
  const detail::GrayImage g = detail::read_png_gray(path);
  const double scale = g.bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<float> v(g.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(g.pixels[i] / scale);
  }
  return Tensor::from_data({1, 1, g.h, g.w}, std::move(v));
}

BinaryMask read_mask(const std::string& path, Layout layout) {
  if (layout == Layout::kTensor) {
    const Tensor t = load_tensor(path);
    if (t.shape().n != 1 || t.shape().c != 1) {
      throw IoError(path, "mask tensor must be 1x1xHxW, got " +
                              to_string(t.shape()));
    }
    BinaryMask m(t.shape().h, t.shape().w);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      const float v = t.data()[i];
      if (v != 0.0f && v != 1.0f) {
        throw IoError(path, "non-binary mask value " + std::to_string(v));
      }
      m.values[i] = v != 0.0f;
    }
    return m;
  }
  const detail::GrayImage g = detail::read_png_gray(path);
  BinaryMask m(g.h, g.w);
  const std::uint16_t on = g.bit_depth == 16 ? 65535 : 255;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const std::uint16_t v = g.pixels[i];
    if (v != 0 && v != 1 && v != on) {
      throw IoError(path, "non-binary mask value " + std::to_string(v));
    }
    m.values[i] = v != 0;
  }
  return m;
}

}  // namespace

void save_dataset(const std::string& root, const std::vector<SamplePair>& s,
                  Layout layout) {
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  std::error_code ec;
  fs::create_directories(images, ec);
  fs::create_directories(masks, ec);
  if (ec) throw IoError(root, "cannot create dataset directories");
  for (const auto& sample : s) {
    validate_sample(sample);
    const std::string name = stem(sample) + extension(layout);
    const std::string img_path = (images / name).string();
    const std::string mask_path = (masks / name).string();
    if (layout == Layout::kTensor) {
      save_tensor(img_path, sample.image);
      save_tensor(mask_path, mask_to_tensor(sample.mask));
      continue;
    }
    detail::GrayImage img{sample.mask.h, sample.mask.w, 16, {}};
    img.pixels.resize(sample.image.numel());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      const double v = std::clamp<double>(sample.image.data()[i], 0.0, 1.0);
      img.pixels[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    detail::write_png_gray(img_path, img);
    detail::GrayImage m{sample.mask.h, sample.mask.w, 8, {}};
    m.pixels.resize(sample.mask.values.size());
    for (std::size_t i = 0; i < m.pixels.size(); ++i) {
      m.pixels[i] = sample.mask.values[i] ? 255 : 0;
    }
    detail::write_png_gray(mask_path, m);
  }
}

std::vector<SamplePair> load_dataset(const std::string& root, Layout layout) {
  if (!fs::exists(root)) throw IoError(root, "dataset directory does not exist");
  const fs::path images = fs::path(root) / "images";
  const fs::path masks = fs::path(root) / "masks";
  std::vector<SamplePair> out;
  if (!fs::exists(images)) return out;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.is_regular_file() &&
        entry.path().extension() == extension(layout)) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    SamplePair s;
    if (!parse_stem(file.stem().string(), &s.subject_id, &s.slice_index)) {
      throw IoError(file.string(), "file name must be <subject>_<slice>");
    }
    const fs::path mask_path = masks / file.filename();
    if (!fs::exists(mask_path)) {
      throw IoError(file.string(), "no matching mask " + mask_path.string());
    }
    s.image = read_image(file.string(), layout);
    s.mask = read_mask(mask_path.string(), layout);
    if (s.image.shape().h != s.mask.h || s.image.shape().w != s.mask.w) {
      throw IoError(mask_path.string(),
                    "mask " + std::to_string(s.mask.h) + "x" +
                        std::to_string(s.mask.w) + " does not match image " +
                        to_string(s.image.shape()));
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const SamplePair& a, const SamplePair& b) {
    return std::tie(a.subject_id, a.slice_index) <
           std::tie(b.subject_id, b.slice_index);
  });
  return out;
}

namespace {

template <typename Fill>
Tensor stack(const std::vector<SamplePair>& samples,
             const std::vector<std::size_t>& indices, Fill fill) {
  if (indices.empty()) throw ShapeError("cannot stack an empty batch");
  const SamplePair& first = samples.at(indices[0]);
  const int h = first.mask.h;
  const int w = first.mask.w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<float> v(plane * indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const SamplePair& s = samples.at(indices[b]);
    if (s.mask.h != h || s.mask.w != w) {
      throw ShapeError("batch mixes " + std::to_string(h) + "x" +
                       std::to_string(w) + " and " + std::to_string(s.mask.h) +
                       "x" + std::to_string(s.mask.w) + " samples");
    }
    fill(s, v.data() + b * plane);
  }
  return Tensor::from_data({static_cast<int>(indices.size()), 1, h, w},
                           std::move(v));
}

}  // namespace

Tensor stack_images(const std::vector<SamplePair>& samples,
                    const std::vector<std::size_t>& indices) {
  return stack(samples, indices, [](const SamplePair& s, float* dst) {
    std::copy(s.image.data().begin(), s.image.data().end(), dst);
  });
}

Tensor stack_masks(const std::vector<SamplePair>& samples,
                   const std::vector<std::size_t>& indices) {
  return stack(samples, indices, [](const SamplePair& s, float* dst) {
    std::copy(s.mask.values.begin(), s.mask.values.end(), dst);
  });
}

}  // namespace clci
