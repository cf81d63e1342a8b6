#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "clci/tensor.hpp"

namespace clci {

// Row-major binary mask.
struct BinaryMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int height, int width)
      : h(height), w(width), values(static_cast<std::size_t>(height) * width) {}

  std::uint8_t at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * w + x];
  }
  std::uint8_t& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * w + x];
  }
  std::int64_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

// Throws ShapeError unless the masks have equal dims, Error if a value is not
// 0 or 1.
void validate_mask(const BinaryMask& m);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t predicted() const { return tp + fp; }
  std::int64_t truth() const { return tp + fn; }
  std::int64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth);

// Empty-mask conventions: dsc is 1 when both masks are empty; precision and
// recall are 1 when their denominator and the other mask are both empty,
// else 0; voe is 0 for two empty masks.
double dsc(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double voe(const ConfusionCounts& c);  // percent

// Signed relative volume difference in percent. An empty truth with a
// non-empty prediction returns kRvdUndefined.
inline constexpr double kRvdUndefined = std::numeric_limits<double>::infinity();
double rvd(const ConfusionCounts& c);
double rvd(const BinaryMask& pred, const BinaryMask& truth);

// 1 where prob > threshold. Plane (b, 0) of an (n, 1, h, w) tensor.
BinaryMask binarize(const Tensor& prob, float threshold = 0.5f, int batch = 0);
// Inverse: values 0/1 in a (1, 1, h, w) tensor.
Tensor mask_to_tensor(const BinaryMask& m);

struct MetricsRow {
  std::string subject;
  int slice = 0;
  double dsc = 0;
  double precision = 0;
  double recall = 0;
  double voe = 0;
  double rvd = 0;
};

MetricsRow evaluate_pair(const std::string& subject, int slice,
                         const BinaryMask& pred, const BinaryMask& truth);

struct MetricsAggregate {
  double dsc = 0;
  double precision = 0;
  double recall = 0;
  double voe = 0;
  double rvd_signed = 0;
  double rvd_abs = 0;
  // Rows whose RVD is undefined are left out of both RVD means.
  int rvd_undefined = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsAggregate aggregate;
};

// Unweighted per-sample means. Throws ConfigError for an empty row list.
MetricsReport aggregate_report(std::vector<MetricsRow> rows);

// "subject,slice,dsc,precision,recall,voe,rvd", one line per row, then a
// final AGGREGATE line whose rvd column holds the signed mean. Undefined RVD
// values are written as "inf".
std::string report_csv(const MetricsReport& report);
// Writes the CSV and, next to it, "<path>.summary.txt" with every aggregate
// (including the mean of |rvd|) as key = value lines.
void write_report_csv(const std::string& path, const MetricsReport& report);
// One DSC value per line, row order.
void write_dsc_column(const std::string& path, const MetricsReport& report);

// "DSC Precision Recall VOE RVD" header plus the aggregate values.
std::string format_table_row(const MetricsAggregate& a);

}  // namespace clci
