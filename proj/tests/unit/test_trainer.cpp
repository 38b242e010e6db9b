#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "cohort.hpp"
#include "support.hpp"
#include "tckin/error.hpp"
#include "tckin/report_io.hpp"
#include "tckin/trainer.hpp"

using namespace tckin;

namespace {

TrainConfig quick_train(std::size_t epochs = 3) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 16;
  t.learning_rate = 5e-3;
  t.folds = 3;
  t.seed = 5;
  return t;
}

const Dataset& small_data() {
  static const Dataset d = test::synth_dataset(test::small_synth(60, 21));
  return d;
}

}  // namespace

TEST_CASE("Adam minimizes a scalar quadratic") {
  ParamStore store;
  store.add("w", Tensor::scalar(0.0));
  AdamOptimizer adam;
  int steps = 0;
  while (std::abs(store.value("w")[0] - 3.0) >= 1e-3 && steps < 2000) {
    store.grad("w")[0] = 2.0 * (store.value("w")[0] - 3.0);
    adam.step(store, 0.01);
    ++steps;
  }
  CHECK(std::abs(store.value("w")[0] - 3.0) < 1e-3);
  CHECK(steps < 2000);
  CHECK(adam.steps() == static_cast<std::uint64_t>(steps));
}

TEST_CASE("Adam moves at the learning rate under a constant gradient") {
  ParamStore store;
  store.add("w", Tensor::vector({0.0, 0.0}));
  AdamOptimizer adam;
  const double lr = 0.01;
  for (int i = 0; i < 200; ++i) {
    store.grad("w")[0] = 3.7;
    store.grad("w")[1] = -0.02;
    const double before0 = store.value("w")[0], before1 = store.value("w")[1];
    adam.step(store, lr);
    if (i >= 10) {
      CHECK(before0 - store.value("w")[0] == doctest::Approx(lr).epsilon(1e-6));
      CHECK(store.value("w")[1] - before1 == doctest::Approx(lr).epsilon(1e-5));
    }
  }
}

TEST_CASE("Adam leaves parameters alone under a zero gradient") {
  ParamStore store;
  store.add("w", Tensor::vector({1.5, -2.0}));
  AdamOptimizer adam;
  for (int i = 0; i < 5; ++i) adam.step(store, 0.1);
  CHECK(store.value("w") == Tensor::vector({1.5, -2.0}));
  ParamStore empty;
  CHECK_THROWS_AS(adam.step(empty, 0.1), ConfigError);
}

TEST_CASE("early stopping") {
  EarlyStopper s(1);
  CHECK_FALSE(s.update(1.0));
  CHECK(s.update(1.5));
  CHECK(s.epochs() == 2);
  CHECK(s.best_epoch() == 1);

  EarlyStopper p(3);
  const std::vector<double> losses{0.9, 0.8, 0.8, 0.85, 0.7, 0.71, 0.72, 0.73};
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (p.update(losses[i])) {
      stopped = i + 1;
      break;
    }
  }
  CHECK(stopped == 8);
  CHECK(p.best_epoch() == 5);
  CHECK(p.best_loss() == 0.7);
  CHECK_THROWS_AS(EarlyStopper(0), ConfigError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  for (auto bad : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& t) { t.learning_rate = 0; }, [](TrainConfig& t) { t.batch_size = 0; },
           [](TrainConfig& t) { t.patience = 0; }, [](TrainConfig& t) { t.lr_decay = 1.5; },
           [](TrainConfig& t) { t.oversample_ratio = 0; }, [](TrainConfig& t) { t.folds = 1; },
           [](TrainConfig& t) { t.workers = 0; }, [](TrainConfig& t) { t.beta2 = 1.0; }}) {
    TrainConfig t;
    bad(t);
    CHECK_THROWS_AS(t.validate(), ConfigError);
  }
}

TEST_CASE("fold statistics ignore validation episodes") {
  Dataset data = small_data();
  const auto folds = make_folds(data.labels, 5, 1);
  const auto before = fit_fold_statistics(data, folds[4].train);
  for (std::size_t i : folds[4].val) {
    for (double& v : data.temporal[i].values.values()) v = 1e9;
    for (double& v : data.temporal[i].mask.values()) v = 1.0;
    for (double& v : data.constants[i].values()) v = -1e9;
  }
  const auto after = fit_fold_statistics(data, folds[4].train);
  CHECK(after.empirical_mean == before.empirical_mean);
  CHECK(after.temporal.mean == before.temporal.mean);
  CHECK(after.temporal.scale == before.temporal.scale);
  CHECK(after.constant.mean == before.constant.mean);
  CHECK(after.constant.scale == before.constant.scale);
}

TEST_CASE("train_fold is reproducible and restores the best epoch") {
  const Dataset& data = small_data();
  const auto folds = make_folds(data.labels, 3, 2);
  TrainConfig tc = quick_train(6);
  tc.patience = 2;
  auto factory = default_factory(test::small_model());
  const FoldResult a = train_fold(data, folds[0], 0, factory, tc);
  const FoldResult b = train_fold(data, folds[0], 0, factory, tc);
  REQUIRE(a.predictions.size() == folds[0].val.size());
  for (std::size_t i = 0; i < a.predictions.size(); ++i) CHECK(a.predictions[i].probability == b.predictions[i].probability);
  for (const auto& [name, e] : a.params) CHECK(e.value == b.params.value(name));
  CHECK(a.curve.size() == b.curve.size());

  double best = 1e300;
  for (const auto& e : a.curve) best = std::min(best, e.val_loss);
  REQUIRE(a.best_epoch >= 1);
  CHECK(a.curve[a.best_epoch - 1].val_loss == best);
  std::vector<double> p, y;
  for (const auto& pr : a.predictions) p.push_back(pr.probability), y.push_back(pr.label);
  CHECK(binary_cross_entropy(p, y) == doctest::Approx(best).epsilon(1e-12));
  for (std::size_t e = 1; e < a.curve.size(); ++e)
    CHECK(a.curve[e].learning_rate == doctest::Approx(a.curve[e - 1].learning_rate * 0.95).epsilon(1e-14));

  std::set<std::size_t> val(folds[0].val.begin(), folds[0].val.end());
  CHECK(std::set<std::size_t>(a.val_ids.begin(), a.val_ids.end()) == val);
  CHECK(a.val_ids.size() == val.size());
}

TEST_CASE("oversampled epochs are balanced while validation stays natural") {
  const Dataset& data = small_data();
  const auto folds = make_folds(data.labels, 3, 2);
  const FoldResult r = train_fold(data, folds[1], 1, default_factory(test::small_model()), quick_train(1));
  const auto& a = r.audit;
  CHECK(a.sampled_pos == a.sampled_neg);
  CHECK(a.sampled_neg == std::max(a.train_pos, a.train_neg));
  std::size_t vp = 0;
  for (std::size_t i : folds[1].val) vp += static_cast<std::size_t>(data.labels[i]);
  CHECK(a.val_pos == vp);
  CHECK(a.val_neg == folds[1].val.size() - vp);
  CHECK(a.val_pos + a.val_neg == r.predictions.size());
}

TEST_CASE("overlapping or empty folds are rejected") {
  const Dataset& data = small_data();
  Fold bad{{0, 1, 2, 3}, {3, 4}};
  auto factory = default_factory(test::small_model());
  CHECK_THROWS_AS(train_fold(data, bad, 0, factory, quick_train(1)), DataError);
  Fold empty{{0, 1}, {}};
  CHECK_THROWS_AS(train_fold(data, empty, 0, factory, quick_train(1)), DataError);
}

TEST_CASE("a sixteen-episode training set can be memorized") {
  const Dataset& data = small_data();
  std::vector<std::size_t> train, val;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool p = data.labels[i] == 1;
    if ((p && pos < 8) || (!p && neg < 8)) {
      train.push_back(i);
      (p ? pos : neg)++;
    } else {
      val.push_back(i);
    }
  }
  REQUIRE(train.size() == 16);
  TrainConfig tc;
  tc.max_epochs = 300;
  tc.patience = 300;
  tc.batch_size = 16;
  tc.learning_rate = 0.02;
  tc.lr_decay = 1.0;
  ModelConfig mc = test::small_model();
  mc.dropout = 0.0;
  const FoldResult r = train_fold(data, Fold{train, val}, 0, default_factory(mc), tc);
  double best = 1e300;
  for (const auto& e : r.curve) best = std::min(best, e.train_loss);
  CHECK(best < 0.01);
}

TEST_CASE("cross validation covers every episode once") {
  const Dataset& data = small_data();
  TrainConfig tc = quick_train(2);
  tc.workers = 3;
  const auto cv = cross_validate(data, apply_variant(test::small_model(), "no_grud"), tc);
  CHECK(cv.variant == "no_grud");
  REQUIRE(cv.folds.size() == 3);
  std::vector<int> seen(data.size(), 0);
  double mean = 0.0;
  for (const auto& f : cv.folds) {
    for (std::size_t i : f.val_ids) ++seen[i];
    mean += f.report.auroc / 3.0;
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(cv.aggregate.auroc.mean == doctest::Approx(mean).epsilon(1e-14));

  tc.workers = 1;
  const auto serial = cross_validate(data, apply_variant(test::small_model(), "no_grud"), tc);
  for (std::size_t k = 0; k < 3; ++k) {
    REQUIRE(serial.folds[k].predictions.size() == cv.folds[k].predictions.size());
    for (std::size_t i = 0; i < serial.folds[k].predictions.size(); ++i)
      CHECK(serial.folds[k].predictions[i].probability == cv.folds[k].predictions[i].probability);
  }
}

TEST_CASE("aggregate uses the sample standard deviation") {
  std::vector<EvalReport> rs(3);
  rs[0].auroc = 0.6;
  rs[1].auroc = 0.7;
  rs[2].auroc = 0.8;
  const auto a = aggregate(rs);
  CHECK(a.auroc.mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(a.auroc.std == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(aggregate(std::vector<EvalReport>{}), DataError);
}

TEST_CASE("a one-cell sweep is a plain cross validation") {
  const Dataset& data = small_data();
  TrainConfig tc = quick_train(2);
  const std::vector<double> lrs{0.004};
  const std::vector<std::size_t> bs{8};
  const auto cells = sweep(data, test::small_model(), tc, lrs, bs);
  REQUIRE(cells.size() == 1);
  tc.learning_rate = 0.004;
  tc.batch_size = 8;
  const auto cv = cross_validate(data, test::small_model(), tc);
  CHECK(cells[0].aggregate.auroc.mean == cv.aggregate.auroc.mean);
  CHECK(cells[0].aggregate.brier.mean == cv.aggregate.brier.mean);
  CHECK(cells[0].learning_rate == 0.004);
  CHECK(cells[0].batch_size == 8);
  CHECK_THROWS_AS(sweep(data, test::small_model(), tc, std::vector<double>{}, bs), ConfigError);
}

TEST_CASE("a diverging cell is recorded without aborting the sweep") {
  const Dataset& data = small_data();
  const TrainConfig tc = quick_train(2);
  const std::vector<double> lrs{1e200, 0.004};
  const std::vector<std::size_t> bs{8};
  const auto cells = sweep(data, test::small_model(), tc, lrs, bs);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].diverged);
  CHECK_FALSE(cells[0].error.empty());
  CHECK_FALSE(cells[1].diverged);
  CHECK(std::isfinite(cells[1].aggregate.auroc.mean));
  const std::string csv = sweep_csv(cells);
  CHECK(csv.find("1e+200,8,,,,,diverged\n") != std::string::npos);
  CHECK(csv.find("0.004,8,") != std::string::npos);
}
