#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

namespace qivc::pcg {

/// Confusion counts with abnormal (1) as the positive class, plus the
/// derived rates. A rate whose denominator is zero is reported as 0; AUC is
/// 0.5 when only one class is present.
struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0, sensitivity = 0, specificity = 0, f1 = 0, auc = 0, ece = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ReliabilityBin {
  double lower = 0, upper = 0;
  double mean_confidence = 0;  // 0 for empty bins
  double accuracy = 0;
  std::size_t count = 0;
};

struct ReliabilityDiagram {
  std::vector<ReliabilityBin> bins;
  double ece = 0;
};

/// `labels` and `predicted` hold 0/1; `scores` are positive-class
/// probabilities in [0,1].
MetricsReport compute_metrics(std::span<const int> labels, std::span<const int> predicted,
                              std::span<const double> scores);

/// Area under the ROC curve by trapezoidal integration over every distinct
/// score threshold (tied scores form one step).
double roc_auc(std::span<const int> labels, std::span<const double> scores);

/// Equal-width bins on the confidence of the predicted label: `score` for a
/// positive prediction, `1 - score` otherwise.
ReliabilityDiagram reliability(std::span<const int> labels, std::span<const int> predicted,
                               std::span<const double> scores, std::size_t bins = 10);

void write_metrics_header(std::ostream& os, const char* leading_columns);
void write_metrics_row(std::ostream& os, const MetricsReport& m);
void write_reliability_csv(std::ostream& os, const ReliabilityDiagram& diagram);

}  // namespace qivc::pcg
