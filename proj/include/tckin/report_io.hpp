#pragma once

#include <span>
#include <string>

#include "tckin/dataset.hpp"
#include "tckin/metrics.hpp"
#include "tckin/trainer.hpp"

namespace tckin {

/// Machine-readable cross-validation report: per-fold metrics, confusion
/// counts and sampling audit, plus the mean ± std aggregate.
std::string cv_report_json(const CrossValidation& cv, const TrainConfig& config);
/// fold,epoch,train_loss,val_loss,learning_rate
std::string curves_csv(const CrossValidation& cv);
/// id,fold,probability,label
std::string predictions_csv(const CrossValidation& cv, const Dataset& data);

/// Fixed-width table in the column order Specificity, Sensitivity, AUC,
/// Brier Score, AUPRC; one row per (label, aggregate).
std::string summary_header();
std::string summary_row(const std::string& label, const AggregateReport& a);
std::string summary_row(const std::string& label, const EvalReport& r);

std::string eval_report_json(const EvalReport& r, ThresholdPolicy policy);

/// lr,batch,auroc_mean,auroc_std,auprc_mean,brier_mean
std::string sweep_csv(std::span<const SweepCell> cells);

std::string statistics_json(const FoldStatistics& stats);
FoldStatistics statistics_from_json(const std::string& text);

}  // namespace tckin
