#include "qivc/pcg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qivc/error.hpp"
#include "qivc/format.hpp"

namespace qivc::pcg {

namespace {

void check_inputs(std::span<const int> labels, std::span<const int> predicted, std::span<const double> scores) {
  if (labels.empty()) throw DataError("metrics: empty input");
  if (labels.size() != predicted.size() || labels.size() != scores.size()) {
    throw DataError("metrics: labels, predictions and scores differ in length");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predicted[i] != 0 && predicted[i] != 1)) {
      throw DataError("metrics: labels must be 0 or 1");
    }
    if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
      throw DataError("metrics: score " + std::to_string(scores[i]) + " at index " + std::to_string(i) +
                      " lies outside [0,1]");
    }
  }
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

}  // namespace

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw DataError("roc_auc: size mismatch");
  double pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) return 0.5;
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0, dfp = 0;
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? dtp : dfp) += 1;
    // Trapezoid between (fp, tp) and (fp + dfp, tp + dtp).
    area += dfp * (tp + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
  }
  return area / (pos * neg);
}

ReliabilityDiagram reliability(std::span<const int> labels, std::span<const int> predicted,
                               std::span<const double> scores, std::size_t bins) {
  check_inputs(labels, predicted, scores);
  if (bins == 0) throw ConfigError("reliability: need at least one bin");
  ReliabilityDiagram d;
  d.bins.resize(bins);
  std::vector<double> conf_sum(bins, 0), correct(bins, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double conf = predicted[i] == 1 ? scores[i] : 1.0 - scores[i];
    const auto b = std::min(bins - 1, static_cast<std::size_t>(conf * static_cast<double>(bins)));
    conf_sum[b] += conf;
    correct[b] += predicted[i] == labels[i] ? 1.0 : 0.0;
    ++d.bins[b].count;
  }
  const auto total = static_cast<double>(labels.size());
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = d.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    if (bin.count == 0) continue;
    const auto n = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / n;
    bin.accuracy = correct[b] / n;
    d.ece += (n / total) * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return d;
}

MetricsReport compute_metrics(std::span<const int> labels, std::span<const int> predicted,
                              std::span<const double> scores) {
  check_inputs(labels, predicted, scores);
  MetricsReport m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      (predicted[i] == 1 ? m.tp : m.fn) += 1;
    } else {
      (predicted[i] == 1 ? m.fp : m.tn) += 1;
    }
  }
  const auto tp = static_cast<double>(m.tp), fp = static_cast<double>(m.fp);
  const auto tn = static_cast<double>(m.tn), fn = static_cast<double>(m.fn);
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.sensitivity = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  m.auc = roc_auc(labels, scores);
  m.ece = reliability(labels, predicted, scores).ece;
  return m;
}

void write_metrics_header(std::ostream& os, const char* leading_columns) {
  os << leading_columns << "tp,fp,tn,fn,accuracy,sensitivity,specificity,f1,auc,ece\n";
}

void write_metrics_row(std::ostream& os, const MetricsReport& m) {
  os << m.tp << ',' << m.fp << ',' << m.tn << ',' << m.fn << ',' << fmt_real(m.accuracy) << ','
     << fmt_real(m.sensitivity) << ',' << fmt_real(m.specificity) << ',' << fmt_real(m.f1) << ','
     << fmt_real(m.auc) << ',' << fmt_real(m.ece) << '\n';
}

void write_reliability_csv(std::ostream& os, const ReliabilityDiagram& diagram) {
  os << "bin,lower,upper,mean_confidence,accuracy,count\n";
  for (std::size_t b = 0; b < diagram.bins.size(); ++b) {
    const auto& bin = diagram.bins[b];
    os << b << ',' << fmt_real(bin.lower) << ',' << fmt_real(bin.upper) << ',' << fmt_real(bin.mean_confidence) << ','
       << fmt_real(bin.accuracy) << ',' << bin.count << '\n';
  }
}

}  // namespace qivc::pcg
