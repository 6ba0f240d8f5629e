#pragma once

#include "trajlabel/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajlabel {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

// Road is the positive class.
inline Confusion confusion(const Mask& pred, const Mask& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("confusion: mask dimensions differ");
  Confusion c;
  for (std::size_t i = 0; i < pred.count(); ++i) {
    const bool p = pred.data()[i] != 0, g = gt.data()[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

struct Metrics {
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Ratios with an empty denominator are 0, except that an empty prediction
// against an empty ground truth scores 1 everywhere.
inline Metrics metrics(const Confusion& c) {
  Metrics m;
  if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0, 1.0, 1.0};
  const auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  m.iou = ratio(c.tp, c.tp + c.fp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

struct FrameMetrics {
  std::string frame_id;
  Confusion counts;
  Metrics values;
  bool skipped = false;
};

struct MetricsReport {
  std::string tag;
  std::vector<FrameMetrics> frames;
  Confusion total;
  Metrics micro;  // over summed counts
  Metrics macro;  // mean of per-frame metrics

  void add(FrameMetrics f) {
    total += f.counts;
    frames.push_back(std::move(f));
  }

  void finalize() {
    micro = metrics(total);
    macro = {};
    if (frames.empty()) return;
    for (const auto& f : frames) {
      macro.iou += f.values.iou;
      macro.precision += f.values.precision;
      macro.recall += f.values.recall;
      macro.f1 += f.values.f1;
    }
    const double n = static_cast<double>(frames.size());
    macro.iou /= n;
    macro.precision /= n;
    macro.recall /= n;
    macro.f1 /= n;
  }

  int skipped() const {
    int n = 0;
    for (const auto& f : frames) n += f.skipped ? 1 : 0;
    return n;
  }
};

inline nlohmann::json to_json(const Metrics& m) {
  return {{"iou", m.iou}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"frame_id", f.frame_id},
                      {"tp", f.counts.tp},
                      {"fp", f.counts.fp},
                      {"fn", f.counts.fn},
                      {"tn", f.counts.tn},
                      {"skipped", f.skipped},
                      {"metrics", to_json(f.values)}});
  }
  return {{"config", r.tag},
          {"micro", to_json(r.micro)},
          {"macro", to_json(r.macro)},
          {"totals", {{"tp", r.total.tp}, {"fp", r.total.fp}, {"fn", r.total.fn}, {"tn", r.total.tn}}},
          {"frames", frames}};
}

// Aligned text table, one row per configuration, values in percent.
inline std::string format_table(const std::vector<MetricsReport>& reports, bool macro = false) {
  std::size_t width = 14;
  for (const auto& r : reports) width = std::max(width, r.tag.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Config" << std::right << std::setw(8) << "IoU"
     << std::setw(8) << "PRE" << std::setw(8) << "REC" << std::setw(8) << "F1" << '\n';
  os << std::fixed << std::setprecision(1);
  for (const auto& r : reports) {
    const Metrics& m = macro ? r.macro : r.micro;
    os << std::left << std::setw(static_cast<int>(width)) << r.tag << std::right << std::setw(8) << 100.0 * m.iou
       << std::setw(8) << 100.0 * m.precision << std::setw(8) << 100.0 * m.recall << std::setw(8) << 100.0 * m.f1
       << '\n';
  }
  return os.str();
}

}  // namespace trajlabel
