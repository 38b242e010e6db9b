#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace tckin {

struct Prediction {
  double probability = 0.0;
  int label = 0;
};

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
};

/// Predicts positive iff probability >= threshold.
Confusion confusion_at(std::span<const Prediction> predictions, double threshold);

double brier(std::span<const Prediction> predictions);

/// Mann–Whitney form with average ranks for tied scores, so ties count ½.
/// Throws DataError unless both classes are present.
double auroc(std::span<const Prediction> predictions);

/// Step-wise average precision over a descending-score sweep with tied
/// scores grouped into one threshold. Throws DataError without positives.
double auprc(std::span<const Prediction> predictions);

enum class ThresholdPolicy { kFixed, kYouden };

ThresholdPolicy parse_threshold_policy(const std::string& name);  // "fixed" | "youden"
std::string to_string(ThresholdPolicy policy);

/// Threshold maximizing sensitivity + specificity - 1 among the distinct
/// scores; the largest such score wins ties, for determinism.
double youden_threshold(std::span<const Prediction> predictions);

struct EvalReport {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
  double brier = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
  double threshold = 0.5;
  Confusion confusion;
};

/// Rates with an empty denominator are reported as 0.
EvalReport report(std::span<const Prediction> predictions, ThresholdPolicy policy = ThresholdPolicy::kFixed);

}  // namespace tckin
