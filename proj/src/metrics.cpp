#include "tckin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tckin/error.hpp"

namespace tckin {
namespace {

void check_nonempty(std::span<const Prediction> p, const char* what) {
  if (p.empty()) throw DataError(std::string(what) + ": no predictions");
  for (const auto& x : p) {
    if (x.label != 0 && x.label != 1) throw DataError(std::string(what) + ": label outside {0,1}");
    if (!(x.probability >= 0.0 && x.probability <= 1.0)) {
      throw DataError(std::string(what) + ": probability outside [0,1]");
    }
  }
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<Prediction> sorted_desc(std::span<const Prediction> p) {
  std::vector<Prediction> s(p.begin(), p.end());
  std::stable_sort(s.begin(), s.end(),
                   [](const Prediction& a, const Prediction& b) { return a.probability > b.probability; });
  return s;
}

}  // namespace

Confusion confusion_at(std::span<const Prediction> predictions, double threshold) {
  check_nonempty(predictions, "confusion");
  Confusion c;
  for (const auto& p : predictions) {
    const bool pos = p.probability >= threshold;
    if (p.label == 1) {
      pos ? ++c.tp : ++c.fn;
    } else {
      pos ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double brier(std::span<const Prediction> predictions) {
  check_nonempty(predictions, "brier");
  double s = 0.0;
  for (const auto& p : predictions) {
    const double d = p.probability - p.label;
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

double auroc(std::span<const Prediction> predictions) {
  check_nonempty(predictions, "auroc");
  std::vector<Prediction> s(predictions.begin(), predictions.end());
  std::sort(s.begin(), s.end(), [](const Prediction& a, const Prediction& b) { return a.probability < b.probability; });
  // Twice the rank sum of positives keeps average ranks integral.
  std::uint64_t n_pos = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0;
    while (j < s.size() && s[j].probability == s[i].probability) pos_in_group += static_cast<std::uint64_t>(s[j++].label);
    // Ranks i+1..j average to (i+1+j)/2.
    twice_rank_sum += pos_in_group * (i + 1 + j);
    n_pos += pos_in_group;
    i = j;
  }
  const std::uint64_t n_neg = s.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auroc: both classes are required");
  // U = R_pos - n_pos(n_pos+1)/2, so 2U = 2R_pos - n_pos(n_pos+1).
  const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(std::span<const Prediction> predictions) {
  check_nonempty(predictions, "auprc");
  const auto s = sorted_desc(predictions);
  std::uint64_t total_pos = 0;
  for (const auto& p : s) total_pos += static_cast<std::uint64_t>(p.label);
  if (total_pos == 0) throw DataError("auprc: no positive labels");
  std::uint64_t tp = 0, seen = 0;
  double ap = 0.0;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    std::uint64_t group_pos = 0;
    while (j < s.size() && s[j].probability == s[i].probability) group_pos += static_cast<std::uint64_t>(s[j++].label);
    tp += group_pos;
    seen += j - i;
    if (group_pos > 0) ap += ratio(tp, seen) * ratio(group_pos, total_pos);
    i = j;
  }
  return ap;
}

ThresholdPolicy parse_threshold_policy(const std::string& name) {
  if (name == "fixed") return ThresholdPolicy::kFixed;
  if (name == "youden") return ThresholdPolicy::kYouden;
  throw ConfigError("unknown threshold policy '" + name + "' (expected fixed or youden)");
}

std::string to_string(ThresholdPolicy policy) { return policy == ThresholdPolicy::kFixed ? "fixed" : "youden"; }

double youden_threshold(std::span<const Prediction> predictions) {
  check_nonempty(predictions, "youden");
  const auto s = sorted_desc(predictions);
  std::uint64_t pos = 0;
  for (const auto& p : s) pos += static_cast<std::uint64_t>(p.label);
  const std::uint64_t neg = s.size() - pos;
  // Sweep thresholds downward; at score v everything >= v is positive.
  std::uint64_t tp = 0, fp = 0;
  double best_j = -2.0, best_t = 0.5;
  for (std::size_t i = 0; i < s.size();) {
    std::size_t j = i;
    while (j < s.size() && s[j].probability == s[i].probability) {
      s[j].label == 1 ? ++tp : ++fp;
      ++j;
    }
    const double youden = ratio(tp, pos) + ratio(neg - fp, neg) - 1.0;
    if (youden > best_j) {
      best_j = youden;
      best_t = s[i].probability;
    }
    i = j;
  }
  return best_t;
}

EvalReport report(std::span<const Prediction> predictions, ThresholdPolicy policy) {
  EvalReport r;
  r.threshold = policy == ThresholdPolicy::kFixed ? 0.5 : youden_threshold(predictions);
  r.confusion = confusion_at(predictions, r.threshold);
  const auto& c = r.confusion;
  r.sensitivity = ratio(c.tp, c.tp + c.fn);
  r.specificity = ratio(c.tn, c.tn + c.fp);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.brier = brier(predictions);
  r.auroc = auroc(predictions);
  r.auprc = auprc(predictions);
  return r;
}

}  // namespace tckin
