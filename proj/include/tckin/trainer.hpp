#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tckin/dataset.hpp"
#include "tckin/metrics.hpp"
#include "tckin/model.hpp"
#include "tckin/param_store.hpp"

namespace tckin {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.95;  // multiplicative, per epoch
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double oversample_ratio = 1.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t folds = 5;
  std::size_t workers = 1;  // folds trained concurrently
  ThresholdPolicy threshold_policy = ThresholdPolicy::kFixed;

  void validate() const;  // throws ConfigError
};

/// Adam with bias correction. Moments are keyed by parameter name and
/// persist across steps.
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// One update from the gradients currently in `store`. Throws ConfigError
  /// for an empty store.
  void step(ParamStore& store, double learning_rate);
  std::uint64_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments, std::less<>> moments_;
};

/// Tracks validation loss per epoch (1-based) and says when to stop.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  /// Returns true when training should stop after this epoch. A loss counts
  /// as an improvement only if strictly below the best so far.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t epochs() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_loss_ = 0.0;
  bool improved_ = false;
};

/// Statistics fitted on a fold's training indices only.
struct FoldStatistics {
  Tensor empirical_mean;   // [N], over standardized observed values
  FeatureScaler temporal;  // per temporal feature
  FeatureScaler constant;  // continuous constant columns
};

FoldStatistics fit_fold_statistics(const Dataset& data, std::span<const std::size_t> train);

/// Standardized copies of every episode under one fold's statistics.
struct PreparedInputs {
  std::vector<TemporalTensor> temporal;
  std::vector<Tensor> constants;
};
PreparedInputs prepare_inputs(const Dataset& data, const FoldStatistics& stats);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double learning_rate = 0.0;
};

/// Class counts behind the imbalance handling of one fold.
struct SamplingAudit {
  std::size_t train_pos = 0, train_neg = 0;      // natural training split
  std::size_t sampled_pos = 0, sampled_neg = 0;  // first epoch, after oversampling
  std::size_t val_pos = 0, val_neg = 0;          // validation, as evaluated
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t best_epoch = 0;
  std::vector<std::size_t> val_ids;     // dataset indices
  std::vector<Prediction> predictions;  // aligned with val_ids
  std::vector<EpochRecord> curve;
  FoldStatistics stats;
  ParamStore params;  // best-epoch parameters
  SamplingAudit audit;
  EvalReport report;
};

/// Builds the model used for every fold.
using ModelFactory = std::function<TckinModel(const Dataset&)>;
ModelFactory default_factory(const ModelConfig& config);

/// Trains on fold.train and evaluates on fold.val (natural distribution).
/// Fold `index` selects the derived random streams, so runs are
/// reproducible fold by fold.
FoldResult train_fold(const Dataset& data, const Fold& fold, std::size_t index, const ModelFactory& factory,
                      const TrainConfig& config);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across folds
};

struct AggregateReport {
  MetricSummary sensitivity, specificity, precision, brier, auroc, auprc;
};

AggregateReport aggregate(std::span<const EvalReport> reports);

struct CrossValidation {
  std::string variant;
  std::vector<FoldResult> folds;
  AggregateReport aggregate;
};

CrossValidation cross_validate(const Dataset& data, const ModelConfig& model, const TrainConfig& config);
CrossValidation cross_validate(const Dataset& data, const ModelFactory& factory, const TrainConfig& config);

struct SweepCell {
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  AggregateReport aggregate;
  bool diverged = false;  // training hit a non-finite loss; aggregate is meaningless
  std::string error;
};

/// One cross-validation per (lr, batch) pair, lr-major order. A cell whose
/// training goes non-finite is marked diverged instead of aborting the grid.
std::vector<SweepCell> sweep(const Dataset& data, const ModelConfig& model, const TrainConfig& config,
                             std::span<const double> learning_rates, std::span<const std::size_t> batch_sizes);

}  // namespace tckin
