#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hypm/dataset.hpp"
#include "hypm/model.hpp"

namespace hypm {

/// One scored test sample. `scores` holds the first C entries of the full
/// (C+1)-way softmax; the extra output absorbs probability mass for
/// out-of-distribution inputs but never participates in argmax.
struct EvalRecord {
  std::string sample_id;
  bool unknown = false;  // true class outside the known set
  int true_class = -1;   // valid iff !unknown
  std::vector<double> scores;
  int predicted = 0;        // argmax over the C known entries
  double confidence = 0.0;  // max over the C known entries
};

struct MetricsReport {
  double acc = 0.0;
  double h_score_at_threshold = 0.0;
  double h_score_best = 0.0;
  double oscr = 0.0;
  double threshold_used = 0.5;
  std::size_t n_known = 0;
  std::size_t n_unknown = 0;
};

/// Score every test-domain sample with the trained model. Samples of unknown
/// classes carry the unknown marker. The test domain must differ from every
/// training domain; callers pass the held-out domain's dataset.
std::vector<EvalRecord> score_test_set(const ModelState& state, const DomainDataset& test_data,
                                       const SplitSpec& split);

/// Fraction of known-class records with predicted == true (confidence
/// ignored). Unknown records are excluded from the denominator.
double closed_set_accuracy(const std::vector<EvalRecord>& records);

/// Harmonic mean of thresholded known accuracy (correct AND confidence >=
/// threshold) and unknown accuracy (confidence < threshold); 0 when both
/// are 0.
double h_score(const std::vector<EvalRecord>& records, double threshold);

/// Best h_score over all candidate thresholds (distinct confidences plus
/// sentinels 0, 0.5 and 1).
double h_score_best(const std::vector<EvalRecord>& records);

struct OscrPoint {
  double threshold = 0.0;
  double ccr = 0.0;  // knowns correct with confidence >= threshold
  double fpr = 0.0;  // unknowns with confidence >= threshold
};

/// The swept curve, one point per distinct confidence plus sentinels 0 and 1,
/// in descending-threshold order.
std::vector<OscrPoint> oscr_curve(const std::vector<EvalRecord>& records);

/// Trapezoidal area under the (FPR, CCR) curve sorted by FPR.
double oscr(const std::vector<EvalRecord>& records);

MetricsReport compute_metrics(const std::vector<EvalRecord>& records, double threshold = 0.5);

/// confidences.csv: sample_id, population, confidence, predicted, true.
void export_confidences(const std::vector<EvalRecord>& records,
                        const std::filesystem::path& path);
/// Inverse of export_confidences for round-trip checks; scores are reduced to
/// the exported confidence, which is all the metrics need.
std::vector<EvalRecord> import_confidences(const std::filesystem::path& path);

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
void write_oscr_curve_csv(const std::vector<OscrPoint>& curve, const std::filesystem::path& path);

}  // namespace hypm
