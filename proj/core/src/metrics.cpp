#include "clci/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "clci/error.hpp"
#include "clci/kv.hpp"

namespace clci {

std::int64_t BinaryMask::count() const {
  std::int64_t n = 0;
  for (const auto v : values) n += v;
  return n;
}

void validate_mask(const BinaryMask& m) {
  if (m.h < 1 || m.w < 1 ||
      m.values.size() != static_cast<std::size_t>(m.h) * m.w) {
    throw ShapeError("mask " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                     " holds " + std::to_string(m.values.size()) + " values");
  }
  for (const auto v : m.values) {
    if (v > 1) throw Error("mask value " + std::to_string(v) + " is not binary");
  }
}

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.h != truth.h || pred.w != truth.w) {
    throw ShapeError("confusion: prediction " + std::to_string(pred.h) + "x" +
                     std::to_string(pred.w) + " vs truth " +
                     std::to_string(truth.h) + "x" + std::to_string(truth.w));
  }
  // Index 2*pred + truth: 0 tn, 1 fn, 2 fp, 3 tp.
  std::int64_t bins[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    ++bins[2 * (pred.values[i] != 0) + (truth.values[i] != 0)];
  }
  return {bins[3], bins[2], bins[1], bins[0]};
}

double dsc(const ConfusionCounts& c) {
  const std::int64_t den = 2 * c.tp + c.fp + c.fn;
  if (den == 0) return 1.0;
  return 2.0 * c.tp / den;
}

double precision(const ConfusionCounts& c) {
  if (c.predicted() == 0) return c.truth() == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / c.predicted();
}

double recall(const ConfusionCounts& c) {
  if (c.truth() == 0) return c.predicted() == 0 ? 1.0 : 0.0;
  return static_cast<double>(c.tp) / c.truth();
}

double voe(const ConfusionCounts& c) {
  const std::int64_t uni = c.tp + c.fp + c.fn;
  if (uni == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(c.tp) / uni);
}

double rvd(const ConfusionCounts& c) {
  const std::int64_t truth = c.truth();
  const std::int64_t pred = c.predicted();
  if (truth == 0) return pred == 0 ? 0.0 : kRvdUndefined;
  return 100.0 * static_cast<double>(pred - truth) / truth;
}

double rvd(const BinaryMask& pred, const BinaryMask& truth) {
  return rvd(confusion(pred, truth));
}

BinaryMask binarize(const Tensor& prob, float threshold, int batch) {
  const Shape& s = prob.shape();
  if (s.c != 1 || batch < 0 || batch >= s.n) {
    throw ShapeError("binarize: expected (n, 1, h, w) with batch index < n, "
                     "got " + to_string(s) + " and index " +
                     std::to_string(batch));
  }
  BinaryMask m(s.h, s.w);
  const float* src = prob.data().data() + batch * s.plane();
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = src[i] > threshold ? 1 : 0;
  }
  return m;
}

Tensor mask_to_tensor(const BinaryMask& m) {
  validate_mask(m);
  return Tensor::from_data({1, 1, m.h, m.w},
                           std::vector<float>(m.values.begin(), m.values.end()));
}

MetricsRow evaluate_pair(const std::string& subject, int slice,
                         const BinaryMask& pred, const BinaryMask& truth) {
  const ConfusionCounts c = confusion(pred, truth);
  return {subject, slice, dsc(c), precision(c), recall(c), voe(c), rvd(c)};
}

MetricsReport aggregate_report(std::vector<MetricsRow> rows) {
  if (rows.empty()) throw ConfigError("aggregate_report: no rows");
  MetricsReport r;
  MetricsAggregate& a = r.aggregate;
  int rvd_rows = 0;
  for (const auto& row : rows) {
    a.dsc += row.dsc;
    a.precision += row.precision;
    a.recall += row.recall;
    a.voe += row.voe;
    if (std::isinf(row.rvd)) {
      ++a.rvd_undefined;
    } else {
      a.rvd_signed += row.rvd;
      a.rvd_abs += std::abs(row.rvd);
      ++rvd_rows;
    }
  }
  const double n = static_cast<double>(rows.size());
  a.dsc /= n;
  a.precision /= n;
  a.recall /= n;
  a.voe /= n;
  if (rvd_rows > 0) {
    a.rvd_signed /= rvd_rows;
    a.rvd_abs /= rvd_rows;
  }
  r.rows = std::move(rows);
  return r;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

std::string report_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "subject,slice,dsc,precision,recall,voe,rvd\n";
  for (const auto& r : report.rows) {
    os << r.subject << ',' << r.slice << ',' << fmt(r.dsc) << ','
       << fmt(r.precision) << ',' << fmt(r.recall) << ',' << fmt(r.voe) << ','
       << fmt(r.rvd) << '\n';
  }
  const auto& a = report.aggregate;
  os << "AGGREGATE,," << fmt(a.dsc) << ',' << fmt(a.precision) << ','
     << fmt(a.recall) << ',' << fmt(a.voe) << ',' << fmt(a.rvd_signed) << '\n';
  return os.str();
}

void write_report_csv(const std::string& path, const MetricsReport& report) {
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out << report_csv(report);
    if (!out) throw IoError(path, "write failed");
  }
  const auto& a = report.aggregate;
  write_key_values(path + ".summary.txt",
                   {{"samples", std::to_string(report.rows.size())},
                    {"dsc", fmt(a.dsc)},
                    {"precision", fmt(a.precision)},
                    {"recall", fmt(a.recall)},
                    {"voe", fmt(a.voe)},
                    {"rvd_signed", fmt(a.rvd_signed)},
                    {"rvd_abs", fmt(a.rvd_abs)},
                    {"rvd_undefined", std::to_string(a.rvd_undefined)}});
}

void write_dsc_column(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& r : report.rows) out << fmt(r.dsc) << '\n';
  if (!out) throw IoError(path, "write failed");
}

std::string format_table_row(const MetricsAggregate& a) {
  std::ostringstream os;
  os << std::fixed;
  os << "DSC Precision Recall VOE RVD\n";
  os << std::setprecision(3) << a.dsc << ' ' << a.precision << ' ' << a.recall
     << ' ' << std::setprecision(1) << a.voe << ' ' << a.rvd_signed
     << "  (|RVD| " << a.rvd_abs << ")";
  return os.str();
}

}  // namespace clci
