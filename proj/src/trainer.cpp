#include "tckin/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "tckin/error.hpp"
#include "tckin/rng.hpp"

namespace tckin {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(oversample_ratio > 0.0 && oversample_ratio <= 1.0)) throw ConfigError("oversample_ratio must lie in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParamStore& store, double learning_rate) {
  if (store.size() == 0) throw ConfigError("optimizer step on an empty parameter store");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, entry] : store) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      it = moments_.emplace(name, Moments{Tensor::zeros_like(entry.value), Tensor::zeros_like(entry.value)}).first;
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    const Tensor& g = entry.grad;
    Tensor& w = entry.value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience_ < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::update(double val_loss) {
  ++epoch_;
  improved_ = epoch_ == 1 || val_loss < best_loss_;
  if (improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return false;
  }
  return ++since_best_ >= patience_;
}

FoldStatistics fit_fold_statistics(const Dataset& data, std::span<const std::size_t> train) {
  if (train.empty()) throw DataError("empty training split");
  FoldStatistics s;
  s.temporal = fit_temporal_scaler(data.temporal, train);
  std::vector<TemporalTensor> scaled;
  scaled.reserve(train.size());
  for (std::size_t i : train) scaled.push_back(apply_scaler(data.temporal[i], s.temporal));
  s.empirical_mean = fit_empirical_means(scaled);
  s.constant = fit_constant_scaler(data.constants, train, data.schema.constants.continuous.size());
  return s;
}

PreparedInputs prepare_inputs(const Dataset& data, const FoldStatistics& stats) {
  PreparedInputs p;
  p.temporal.reserve(data.size());
  p.constants.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    p.temporal.push_back(apply_scaler(data.temporal[i], stats.temporal));
    p.constants.push_back(apply_scaler(data.constants[i], stats.constant));
  }
  return p;
}

ModelFactory default_factory(const ModelConfig& config) {
  return [config](const Dataset& d) {
    return TckinModel(config, d.graph, d.schema.temporal.features.size(), d.schema.constants.width());
  };
}

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<double> predict_all(const TckinModel& model, ParamStore& store, std::span<const std::size_t> ids,
                                const PreparedInputs& in, const Dataset& data, const Tensor& mean) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (std::size_t b = 0; b < ids.size(); b += kEvalChunk) {
    const auto chunk = ids.subspan(b, std::min(kEvalChunk, ids.size() - b));
    const ModelBatch batch = make_batch(chunk, in.temporal, in.constants, data.code_rows, {}, mean);
    const auto p = model.predict(store, batch);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace

FoldResult train_fold(const Dataset& data, const Fold& fold, std::size_t index, const ModelFactory& factory,
                      const TrainConfig& config) {
  config.validate();
  if (fold.train.empty() || fold.val.empty()) throw DataError("fold " + std::to_string(index) + " is empty");
  {
    std::vector<std::size_t> a = fold.train, b = fold.val;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) throw DataError("fold " + std::to_string(index) + ": train and validation overlap");
  }

  const std::uint64_t fold_seed = mix_seed(config.seed, index);
  const TckinModel model = factory(data);
  FoldResult r;
  r.fold = index;
  r.val_ids = fold.val;
  r.stats = fit_fold_statistics(data, fold.train);
  const PreparedInputs in = prepare_inputs(data, r.stats);
  const Tensor& mean = r.stats.empirical_mean;

  ParamStore store;
  {
    Rng init(mix_seed(fold_seed, 1));
    model.init_params(store, init);
  }
  Rng dropout(mix_seed(fold_seed, 2));
  AdamOptimizer adam(config.beta1, config.beta2, config.adam_eps);
  EarlyStopper stopper(config.patience);
  ParamStore best = store;

  for (std::size_t i : fold.train) data.labels[i] == 1 ? ++r.audit.train_pos : ++r.audit.train_neg;
  for (std::size_t i : fold.val) data.labels[i] == 1 ? ++r.audit.val_pos : ++r.audit.val_neg;
  std::vector<double> val_labels;
  for (std::size_t i : fold.val) val_labels.push_back(data.labels[i]);

  double lr = config.learning_rate;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch, lr *= config.lr_decay) {
    std::vector<std::size_t> order =
        oversample(fold.train, data.labels, config.oversample_ratio, mix_seed(fold_seed, 1000 + epoch));
    Rng shuffler(mix_seed(fold_seed, 2000 + epoch));
    shuffler.shuffle(order);
    if (epoch == 1) {
      for (std::size_t i : order) data.labels[i] == 1 ? ++r.audit.sampled_pos : ++r.audit.sampled_neg;
    }

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const auto ids = std::span<const std::size_t>(order).subspan(b, std::min(config.batch_size, order.size() - b));
      const ModelBatch batch = make_batch(ids, in.temporal, in.constants, data.code_rows, data.labels, mean);
      Tape tape;
      Var logits = model.forward(tape, store, batch, Mode::kTrain, &dropout);
      Var loss = bce_with_logits(logits, batch.labels);
      tape.backward(loss, store);
      adam.step(store, lr);
      loss_sum += loss.value()[0] * static_cast<double>(ids.size());
    }

    const auto val_p = predict_all(model, store, fold.val, in, data, mean);
    const double val_loss = binary_cross_entropy(val_p, val_labels);
    if (!std::isfinite(val_loss)) throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    const bool stop = stopper.update(val_loss);
    if (stopper.improved()) best = store;
    r.curve.push_back({epoch, loss_sum / static_cast<double>(order.size()), val_loss, lr});
    if (stop) break;
  }

  r.best_epoch = stopper.best_epoch();
  r.params = std::move(best);
  const auto p = predict_all(model, r.params, fold.val, in, data, mean);
  for (std::size_t k = 0; k < p.size(); ++k) r.predictions.push_back({p[k], data.labels[fold.val[k]]});
  r.report = report(r.predictions, config.threshold_policy);
  return r;
}

AggregateReport aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw DataError("no reports to aggregate");
  auto summarize = [&](double EvalReport::*field) {
    MetricSummary s;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) s.mean += r.*field;
    s.mean /= n;
    if (reports.size() > 1) {
      double ss = 0.0;
      for (const auto& r : reports) ss += (r.*field - s.mean) * (r.*field - s.mean);
      s.std = std::sqrt(ss / (n - 1.0));
    }
    return s;
  };
  AggregateReport a;
  a.sensitivity = summarize(&EvalReport::sensitivity);
  a.specificity = summarize(&EvalReport::specificity);
  a.precision = summarize(&EvalReport::precision);
  a.brier = summarize(&EvalReport::brier);
  a.auroc = summarize(&EvalReport::auroc);
  a.auprc = summarize(&EvalReport::auprc);
  return a;
}

CrossValidation cross_validate(const Dataset& data, const ModelConfig& model, const TrainConfig& config) {
  CrossValidation cv = cross_validate(data, default_factory(model), config);
  cv.variant = variant_name(model);
  return cv;
}

CrossValidation cross_validate(const Dataset& data, const ModelFactory& factory, const TrainConfig& config) {
  config.validate();
  const auto folds = make_folds(data.labels, config.folds, config.seed);
  CrossValidation cv;
  cv.folds.resize(folds.size());
  std::vector<std::exception_ptr> errors(folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < folds.size();) {
      try {
        cv.folds[k] = train_fold(data, folds[k], k, factory, config);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(config.workers, folds.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<EvalReport> reports;
  for (const auto& f : cv.folds) reports.push_back(f.report);
  cv.aggregate = aggregate(reports);
  return cv;
}

std::vector<SweepCell> sweep(const Dataset& data, const ModelConfig& model, const TrainConfig& config,
                             std::span<const double> learning_rates, std::span<const std::size_t> batch_sizes) {
  if (learning_rates.empty() || batch_sizes.empty()) throw ConfigError("sweep grid is empty");
  std::vector<SweepCell> cells;
  for (double lr : learning_rates) {
    for (std::size_t bs : batch_sizes) {
      TrainConfig c = config;
      c.learning_rate = lr;
      c.batch_size = bs;
      SweepCell cell{lr, bs, {}, false, {}};
      try {
        cell.aggregate = cross_validate(data, model, c).aggregate;
      } catch (const NumericalError& e) {
        cell.diverged = true;
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace tckin
