#pragma once

// Confusion matrices and macro-averaged accuracy / Jaccard / F1.
//
// Undefined ratios (0/0) count as 0, and macro averages run over all C
// classes including those without support.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "labelreach/csv.hpp"
#include "labelreach/error.hpp"
#include "labelreach/raster.hpp"

namespace labelreach {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
    return s;
  }
  std::uint64_t row_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < classes_; ++k) s += at(c, k);
    return s;
  }
  std::uint64_t col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < classes_; ++k) s += at(k, c);
    return s;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw DataError("cannot add confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double jaccard = 0.0;
  std::uint64_t support = 0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_jaccard = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::uint64_t total = 0;
  bool empty = false;
};

/// Counts pixels where both rasters are labeled; everything else is skipped.
inline ConfusionMatrix confusion(const LabelRaster& truth, const LabelRaster& pred, std::size_t classes) {
  if (truth.width != pred.width || truth.height != pred.height)
    throw DataError("confusion: dimension mismatch " + std::to_string(truth.width) + "x" +
                    std::to_string(truth.height) + " vs " + std::to_string(pred.width) + "x" +
                    std::to_string(pred.height));
  ConfusionMatrix cm(classes);
  for (std::size_t p = 0; p < truth.ids.size(); ++p) {
    const auto t = truth.ids[p], q = pred.ids[p];
    if (t == kNodata || q == kNodata) continue;
    if (t >= classes || q >= classes)
      throw DataError("confusion: class id " + std::to_string(std::max(t, q)) + " ≥ class count " +
                      std::to_string(classes));
    ++cm.at(t, q);
  }
  return cm;
}

inline MetricsReport report(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (cm.classes() == 0 || total == 0) throw DataError("report: empty confusion matrix");
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  MetricsReport r;
  r.total = total;
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto row = static_cast<double>(cm.row_sum(c));
    const auto col = static_cast<double>(cm.col_sum(c));
    ClassMetrics m;
    m.support = cm.row_sum(c);
    m.precision = ratio(tp, col);
    m.recall = ratio(tp, row);
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.jaccard = ratio(tp, row + col - tp);
    r.macro_f1 += m.f1;
    r.macro_jaccard += m.jaccard;
    r.per_class.push_back(m);
  }
  r.macro_f1 /= static_cast<double>(cm.classes());
  r.macro_jaccard /= static_cast<double>(cm.classes());
  return r;
}

/// One report per band; pixels in rows outside every band are ignored. Bands
/// without evaluated pixels come back flagged empty.
inline std::vector<MetricsReport> evaluate_by_band(const LabelRaster& truth, const LabelRaster& pred,
                                                   std::span<const int> bands, std::size_t classes) {
  if (truth.width != pred.width || truth.height != pred.height) throw DataError("evaluate_by_band: dimension mismatch");
  if (bands.size() != truth.height) throw DataError("evaluate_by_band: need one band index per row");
  int n_bands = 0;
  for (int b : bands) n_bands = std::max(n_bands, b + 1);
  std::vector<ConfusionMatrix> cms(static_cast<std::size_t>(n_bands), ConfusionMatrix(classes));
  for (std::uint32_t y = 0; y < truth.height; ++y) {
    if (bands[y] < 0) continue;
    auto& cm = cms[static_cast<std::size_t>(bands[y])];
    for (std::uint32_t x = 0; x < truth.width; ++x) {
      const auto t = truth.at(y, x), q = pred.at(y, x);
      if (t == kNodata || q == kNodata) continue;
      if (t >= classes || q >= classes) throw DataError("evaluate_by_band: class id ≥ class count");
      ++cm.at(t, q);
    }
  }
  std::vector<MetricsReport> out;
  for (const auto& cm : cms) {
    if (cm.total() == 0) {
      MetricsReport empty;
      empty.empty = true;
      empty.per_class.resize(classes);
      out.push_back(std::move(empty));
    } else {
      out.push_back(report(cm));
    }
  }
  return out;
}

inline std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (std::size_t c = 0; c < cm.classes(); ++c) out += ',' + std::to_string(c);
  out += '\n';
  for (std::size_t t = 0; t < cm.classes(); ++t) {
    out += std::to_string(t);
    for (std::size_t p = 0; p < cm.classes(); ++p) out += ',' + std::to_string(cm.at(t, p));
    out += '\n';
  }
  return out;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"class_id", c},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"jaccard", m.jaccard},
                         {"support", m.support}});
  }
  return {{"accuracy", r.accuracy}, {"macro_jaccard", r.macro_jaccard}, {"macro_f1", r.macro_f1},
          {"total", r.total},       {"empty", r.empty},                 {"per_class", per_class}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_jaccard = j.at("macro_jaccard").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.total = j.value("total", std::uint64_t{0});
  r.empty = j.value("empty", false);
  for (const auto& m : j.at("per_class"))
    r.per_class.push_back({m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>(),
                           m.at("jaccard").get<double>(), m.at("support").get<std::uint64_t>()});
  return r;
}

}  // namespace labelreach
