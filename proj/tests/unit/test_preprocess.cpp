#include <doctest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "tckin/error.hpp"
#include "tckin/preprocess.hpp"

using namespace tckin;

namespace {

EpisodeRecord episode(std::vector<Event> events) {
  EpisodeRecord e;
  e.id = "e";
  e.events = std::move(events);
  return e;
}

Tensor random_mask(Rng& rng, std::size_t T, std::size_t N, double p) {
  Tensor m({T, N});
  for (double& v : m.values()) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return m;
}

TemporalTensor random_temporal(Rng& rng, std::size_t N, double p) {
  TemporalTensor t{Tensor({kWindowHours, N}), random_mask(rng, kWindowHours, N, p), Tensor()};
  for (std::size_t i = 0; i < t.values.size(); ++i)
    if (t.mask[i] == 1.0) t.values[i] = rng.uniform(-5.0, 5.0);
  t.delta = interval_matrix(t.mask);
  return t;
}

}  // namespace

TEST_CASE("binning averages readings in a bin") {
  TemporalSchema schema{{"hr", "temp"}};
  auto t = bin_events(episode({{"temp", 0.5, 36.5}, {"temp", 0.9, 37.5}, {"hr", 3.0, 80.0}}), schema);
  CHECK(t.values.at(0, 1) == 37.0);
  CHECK(t.mask.at(0, 1) == 1.0);
  CHECK(t.values.at(3, 0) == 80.0);
  CHECK(t.mask.at(2, 0) == 0.0);
  CHECK(t.values.at(2, 0) == 0.0);
  CHECK(t.steps() == 24);
}

TEST_CASE("an unobserved feature has deltas 0..23") {
  TemporalSchema schema{{"hr", "temp"}};
  auto t = bin_events(episode({{"temp", 5.5, 36.5}}), schema);
  for (std::size_t s = 0; s < 24; ++s) {
    CHECK(t.mask.at(s, 0) == 0.0);
    CHECK(t.delta.at(s, 0) == static_cast<double>(s));
  }
}

TEST_CASE("delta recurrence on a hand example") {
  Tensor m({4, 1}, std::vector<double>{1, 0, 0, 1});
  Tensor d = interval_matrix(m);
  CHECK(d == Tensor({4, 1}, std::vector<double>{0, 1, 2, 3}));
  Tensor m2({5, 1}, std::vector<double>{0, 1, 1, 0, 1});
  CHECK(interval_matrix(m2) == Tensor({5, 1}, std::vector<double>{0, 1, 1, 1, 2}));
}

TEST_CASE("delta matches a brute-force scan") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor m = random_mask(rng, 24, 6, rng.uniform(0.05, 0.9));
    const Tensor d = interval_matrix(m);
    for (std::size_t t = 0; t < 24; ++t) {
      for (std::size_t n = 0; n < 6; ++n) {
        std::ptrdiff_t last = -1;
        for (std::size_t s = 0; s < t; ++s)
          if (m.at(s, n) == 1.0) last = static_cast<std::ptrdiff_t>(s);
        const double expect = last < 0 ? static_cast<double>(t) : static_cast<double>(t) - static_cast<double>(last);
        CHECK(d.at(t, n) == expect);
      }
    }
  }
}

TEST_CASE("binning rejects bad events") {
  TemporalSchema schema{{"hr"}};
  CHECK_THROWS_AS(bin_events(episode({{"hr", 24.0, 1.0}}), schema), DataError);
  CHECK_THROWS_AS(bin_events(episode({{"hr", -0.01, 1.0}}), schema), DataError);
  CHECK_THROWS_AS(bin_events(episode({{"sbp", 1.0, 1.0}}), schema), DataError);
  CHECK_THROWS_AS(bin_events(episode({{"hr", 1.0, std::nan("")}}), schema), DataError);
  CHECK_THROWS_AS(bin_events(episode({}), TemporalSchema{}), DataError);
}

TEST_CASE("binning ignores event order") {
  Rng rng(4);
  TemporalSchema schema{{"a", "b", "c"}};
  std::vector<Event> events;
  for (int i = 0; i < 60; ++i) {
    events.push_back({schema.features[rng.below(3)], rng.uniform(0.0, 24.0), std::round(rng.uniform(0, 100) * 4) / 4});
  }
  const auto ref = bin_events(episode(events), schema);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(events);
    const auto t = bin_events(episode(events), schema);
    CHECK(t.mask == ref.mask);
    CHECK(t.delta == ref.delta);
    for (std::size_t i = 0; i < t.values.size(); ++i) CHECK(t.values[i] == doctest::Approx(ref.values[i]).epsilon(1e-14));
  }
}

TEST_CASE("empirical means") {
  TemporalTensor one{Tensor({24, 2}), Tensor({24, 2}), Tensor()};
  one.values.at(0, 0) = 4;
  one.mask.at(0, 0) = 1;
  one.values.at(5, 0) = 6;
  one.mask.at(5, 0) = 1;
  one.delta = interval_matrix(one.mask);
  std::vector<TemporalTensor> v{one};
  Tensor m = fit_empirical_means(v);
  CHECK(m[0] == 5.0);
  CHECK(m[1] == 0.0);
  CHECK_THROWS_AS(fit_empirical_means(std::vector<TemporalTensor>{}), DataError);

  Rng rng(9);
  std::vector<TemporalTensor> many;
  for (int i = 0; i < 3; ++i) many.push_back(random_temporal(rng, 4, 0.4));
  Tensor fitted = fit_empirical_means(many);
  for (std::size_t n = 0; n < 4; ++n) {
    double s = 0, c = 0;
    for (const auto& t : many)
      for (std::size_t r = 0; r < 24; ++r)
        if (t.mask.at(r, n) == 1.0) s += t.values.at(r, n), c += 1;
    CHECK(fitted[n] == doctest::Approx(s / c).epsilon(1e-14));
  }
}

TEST_CASE("held-out tensors never reach fitted statistics") {
  Rng rng(21);
  std::vector<TemporalTensor> data;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    data.push_back(random_temporal(rng, 3, 0.5));
    labels.push_back(i % 5 == 0 ? 1 : 0);
  }
  const auto folds = make_folds(labels, 5, 3);
  const auto& train = folds[4].train;
  const Tensor before = fit_empirical_means(data, train);
  const FeatureScaler sb = fit_temporal_scaler(data, train);
  for (std::size_t idx : folds[4].val) {
    for (std::size_t i = 0; i < data[idx].values.size(); ++i) {
      data[idx].values[i] = 1e12;
      data[idx].mask[i] = 1.0;
    }
  }
  CHECK(fit_empirical_means(data, train) == before);
  const FeatureScaler sa = fit_temporal_scaler(data, train);
  CHECK(sa.mean == sb.mean);
  CHECK(sa.scale == sb.scale);
}

TEST_CASE("constant encoding") {
  ConstantSchema schema{{"age"}, {{"gender", {"M", "F"}}}};
  EpisodeRecord e;
  e.constant_continuous["age"] = 65;
  e.constant_categorical["gender"] = "F";
  auto v = encode_constants(e, schema);
  CHECK(v.values == Tensor::vector({65, 0, 1}));
  CHECK(v.unknown_categories == 0);

  EpisodeRecord missing;
  missing.constant_categorical["gender"] = "M";
  CHECK(encode_constants(missing, schema).values == Tensor::vector({0, 1, 0}));

  EpisodeRecord unknown;
  unknown.constant_continuous["age"] = 40;
  unknown.constant_categorical["gender"] = "X";
  auto u = encode_constants(unknown, schema);
  CHECK(u.values == Tensor::vector({40, 0, 0}));
  CHECK(u.unknown_categories == 1);
  CHECK(schema.column_names() == std::vector<std::string>{"age", "gender=M", "gender=F"});
}

TEST_CASE("constant vector length follows the schema") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    ConstantSchema schema;
    const std::size_t nc = rng.below(4);
    for (std::size_t i = 0; i < nc; ++i) schema.continuous.push_back("c" + std::to_string(i));
    std::size_t expect = nc;
    const std::size_t nk = rng.below(4);
    for (std::size_t i = 0; i < nk; ++i) {
      CategoricalFeature f{"k" + std::to_string(i), {}};
      const std::size_t vs = 1 + rng.below(5);
      for (std::size_t j = 0; j < vs; ++j) f.vocabulary.push_back("v" + std::to_string(j));
      expect += vs;
      schema.categorical.push_back(f);
    }
    EpisodeRecord e;
    if (rng.bernoulli(0.5)) e.constant_continuous["c0"] = 1.0;
    if (rng.bernoulli(0.5)) e.constant_categorical["k0"] = "v0";
    auto v = encode_constants(e, schema);
    CHECK(v.values.size() == expect);
    CHECK(schema.width() == expect);
    std::size_t col = nc;
    for (const auto& c : schema.categorical) {
      double s = 0;
      for (std::size_t j = 0; j < c.vocabulary.size(); ++j) s += v.values[col + j];
      CHECK((s == 0.0 || s == 1.0));
      col += c.vocabulary.size();
    }
  }
}

TEST_CASE("schema inference") {
  std::vector<EpisodeRecord> eps(2);
  eps[0].constant_continuous["weight"] = 70;
  eps[0].constant_categorical["sex"] = "M";
  eps[0].events = {{"sbp", 1, 120}, {"hr", 2, 80}};
  eps[1].constant_continuous["age"] = 50;
  eps[1].constant_categorical["sex"] = "F";
  eps[1].events = {{"temp", 3, 37}};
  CHECK(infer_temporal_schema(eps).features == std::vector<std::string>{"hr", "sbp", "temp"});
  auto cs = infer_constant_schema(eps);
  CHECK(cs.continuous == std::vector<std::string>{"age", "weight"});
  REQUIRE(cs.categorical.size() == 1);
  CHECK(cs.categorical[0].vocabulary == std::vector<std::string>{"F", "M"});
  eps[1].constant_categorical["weight"] = "heavy";
  CHECK_THROWS_AS(infer_constant_schema(eps), DataError);
}

TEST_CASE("scalers") {
  std::vector<Tensor> c{Tensor::vector({1, 0, 1}), Tensor::vector({3, 1, 0}), Tensor::vector({5, 0, 1})};
  const std::vector<std::size_t> all{0, 1, 2};
  auto s = fit_constant_scaler(c, all, 1);
  CHECK(s.mean[0] == 3.0);
  CHECK(s.scale[0] == 2.0);
  CHECK(s.mean[1] == 0.0);
  CHECK(s.scale[2] == 1.0);
  CHECK(apply_scaler(c[2], s) == Tensor::vector({1, 0, 1}));

  Rng rng(6);
  std::vector<TemporalTensor> ts{random_temporal(rng, 2, 0.5)};
  auto ts_scaler = fit_temporal_scaler(ts, std::vector<std::size_t>{0});
  auto scaled = apply_scaler(ts[0], ts_scaler);
  for (std::size_t i = 0; i < scaled.values.size(); ++i)
    if (ts[0].mask[i] == 0.0) CHECK(scaled.values[i] == 0.0);
  CHECK(fit_empirical_means(std::vector<TemporalTensor>{scaled})[0] == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
}

TEST_CASE("folds: forced stratification example") {
  std::vector<int> labels{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  auto folds = make_folds(labels, 5, 42);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    REQUIRE(f.val.size() == 2);
    CHECK(labels[f.val[0]] + labels[f.val[1]] == 1);
  }
  auto again = make_folds(labels, 5, 42);
  for (std::size_t i = 0; i < 5; ++i) CHECK(again[i].val == folds[i].val);
  CHECK_THROWS_AS(make_folds(std::vector<int>{1, 0, 0, 0, 0, 0}, 2, 1), DataError);
  CHECK_THROWS_AS(make_folds(labels, 1, 1), ConfigError);
}

TEST_CASE("folds partition and stay stratified") {
  Rng rng(30);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    const std::size_t npos = k + rng.below(30), nneg = k + rng.below(200);
    std::vector<int> labels(npos, 1);
    labels.resize(npos + nneg, 0);
    rng.shuffle(labels);
    auto folds = make_folds(labels, k, rng.next());
    std::vector<int> seen(labels.size(), 0);
    for (const auto& f : folds) {
      std::size_t p = 0;
      for (std::size_t i : f.val) {
        ++seen[i];
        p += static_cast<std::size_t>(labels[i]);
      }
      CHECK(f.train.size() + f.val.size() == labels.size());
      std::set<std::size_t> tr(f.train.begin(), f.train.end());
      for (std::size_t i : f.val) CHECK_FALSE(tr.contains(i));
      const double expect = static_cast<double>(npos) / static_cast<double>(k);
      CHECK(std::abs(static_cast<double>(p) - expect) < 1.0);
      const double nexp = static_cast<double>(nneg) / static_cast<double>(k);
      CHECK(std::abs(static_cast<double>(f.val.size() - p) - nexp) < 1.0);
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("oversampling examples") {
  std::vector<int> labels{1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto out = oversample(ids, labels, 1.0, 5);
  std::size_t pos = 0;
  for (std::size_t i : out) pos += static_cast<std::size_t>(labels[i]);
  CHECK(pos == 8);
  CHECK(out.size() - pos == 8);
  CHECK(std::equal(ids.begin(), ids.end(), out.begin()));

  std::vector<int> balanced{1, 0, 1, 0};
  std::vector<std::size_t> bids{0, 1, 2, 3};
  CHECK(oversample(bids, balanced, 1.0, 1) == bids);

  std::vector<int> skew(100, 0);
  skew[0] = 1;
  std::vector<std::size_t> sids(100);
  for (std::size_t i = 0; i < 100; ++i) sids[i] = i;
  auto s = oversample(sids, skew, 0.5, 9);
  const auto copies = std::count(s.begin(), s.end(), std::size_t{0});
  CHECK(copies >= 49);
  CHECK(copies <= 51);
  CHECK(s.size() - static_cast<std::size_t>(copies) == 99);

  std::vector<int> single{0, 0};
  CHECK_THROWS_AS(oversample(std::vector<std::size_t>{0, 1}, single, 1.0, 1), DataError);
  CHECK_THROWS_AS(oversample(ids, labels, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(oversample(ids, labels, 1.5, 1), ConfigError);
}
