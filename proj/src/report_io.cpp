#include "tckin/report_io.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tckin/error.hpp"

namespace tckin {

using nlohmann::json;

namespace {

json metrics_json(const EvalReport& r) {
  return {{"sensitivity", r.sensitivity},
          {"specificity", r.specificity},
          {"precision", r.precision},
          {"brier", r.brier},
          {"auroc", r.auroc},
          {"auprc", r.auprc},
          {"threshold", r.threshold},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
}

json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.std}}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string cell(const MetricSummary& s) { return fmt("%.4f", s.mean) + " ± " + fmt("%.4f", s.std); }

std::string pad(const std::string& s, std::size_t width) {
  // Column widths count code points; "±" is two bytes.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  return s + std::string(width > cps ? width - cps : 1, ' ');
}

}  // namespace

std::string cv_report_json(const CrossValidation& cv, const TrainConfig& config) {
  json j;
  j["format"] = "tckin-report";
  j["variant"] = cv.variant;
  j["threshold_policy"] = to_string(config.threshold_policy);
  json folds = json::array();
  for (const auto& f : cv.folds) {
    json fj = metrics_json(f.report);
    fj["fold"] = f.fold;
    fj["best_epoch"] = f.best_epoch;
    fj["epochs_run"] = f.curve.size();
    fj["n_val"] = f.val_ids.size();
    fj["sampling"] = {{"train_pos", f.audit.train_pos},     {"train_neg", f.audit.train_neg},
                      {"sampled_pos", f.audit.sampled_pos}, {"sampled_neg", f.audit.sampled_neg},
                      {"val_pos", f.audit.val_pos},         {"val_neg", f.audit.val_neg}};
    folds.push_back(fj);
  }
  j["folds"] = folds;
  const auto& a = cv.aggregate;
  j["aggregate"] = {{"sensitivity", summary_json(a.sensitivity)}, {"specificity", summary_json(a.specificity)},
                    {"precision", summary_json(a.precision)},     {"brier", summary_json(a.brier)},
                    {"auroc", summary_json(a.auroc)},             {"auprc", summary_json(a.auprc)}};
  return j.dump(2);
}

std::string curves_csv(const CrossValidation& cv) {
  std::ostringstream os;
  os << "fold,epoch,train_loss,val_loss,learning_rate\n";
  for (const auto& f : cv.folds) {
    for (const auto& e : f.curve) {
      os << f.fold << ',' << e.epoch << ',' << fmt("%.17g", e.train_loss) << ',' << fmt("%.17g", e.val_loss) << ','
         << fmt("%.17g", e.learning_rate) << '\n';
    }
  }
  return os.str();
}

std::string predictions_csv(const CrossValidation& cv, const Dataset& data) {
  std::ostringstream os;
  os << "id,fold,probability,label\n";
  for (const auto& f : cv.folds) {
    for (std::size_t k = 0; k < f.val_ids.size(); ++k) {
      os << data.ids[f.val_ids[k]] << ',' << f.fold << ',' << fmt("%.17g", f.predictions[k].probability) << ','
         << f.predictions[k].label << '\n';
    }
  }
  return os.str();
}

std::string summary_header() {
  return pad("Model", 16) + pad("Specificity", 20) + pad("Sensitivity", 20) + pad("AUC", 20) +
         pad("Brier Score", 20) + "AUPRC\n";
}

std::string summary_row(const std::string& label, const AggregateReport& a) {
  return pad(label, 16) + pad(cell(a.specificity), 20) + pad(cell(a.sensitivity), 20) + pad(cell(a.auroc), 20) +
         pad(cell(a.brier), 20) + cell(a.auprc) + "\n";
}

std::string summary_row(const std::string& label, const EvalReport& r) {
  return pad(label, 16) + pad(fmt("%.4f", r.specificity), 20) + pad(fmt("%.4f", r.sensitivity), 20) +
         pad(fmt("%.4f", r.auroc), 20) + pad(fmt("%.4f", r.brier), 20) + fmt("%.4f", r.auprc) + "\n";
}

std::string eval_report_json(const EvalReport& r, ThresholdPolicy policy) {
  json j = metrics_json(r);
  j["format"] = "tckin-eval";
  j["threshold_policy"] = to_string(policy);
  return j.dump(2);
}

std::string sweep_csv(std::span<const SweepCell> cells) {
  std::ostringstream os;
  os << "lr,batch,auroc_mean,auroc_std,auprc_mean,brier_mean,status\n";
  for (const auto& c : cells) {
    os << fmt("%g", c.learning_rate) << ',' << c.batch_size << ',';
    if (c.diverged) {
      os << ",,,,diverged\n";
      continue;
    }
    os << fmt("%.6f", c.aggregate.auroc.mean) << ','
       << fmt("%.6f", c.aggregate.auroc.std) << ',' << fmt("%.6f", c.aggregate.auprc.mean) << ','
       << fmt("%.6f", c.aggregate.brier.mean) << ",ok\n";
  }
  return os.str();
}

std::string statistics_json(const FoldStatistics& s) {
  json j;
  j["empirical_mean"] = std::vector<double>(s.empirical_mean.values().begin(), s.empirical_mean.values().end());
  j["temporal"] = {{"mean", s.temporal.mean}, {"scale", s.temporal.scale}};
  j["constant"] = {{"mean", s.constant.mean}, {"scale", s.constant.scale}};
  return j.dump();
}

FoldStatistics statistics_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    FoldStatistics s;
    auto m = j.at("empirical_mean").get<std::vector<double>>();
    const std::size_t n = m.size();
    s.empirical_mean = Tensor({n}, std::move(m));
    s.temporal = {j.at("temporal").at("mean").get<std::vector<double>>(),
                  j.at("temporal").at("scale").get<std::vector<double>>()};
    s.constant = {j.at("constant").at("mean").get<std::vector<double>>(),
                  j.at("constant").at("scale").get<std::vector<double>>()};
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fold statistics: ") + e.what());
  }
}

}  // namespace tckin
