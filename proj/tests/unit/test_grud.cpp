#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tckin/error.hpp"
#include "tckin/grud.hpp"

using namespace tckin;

namespace {

TemporalTensor random_temporal(Rng& rng, std::size_t N, double p) {
  TemporalTensor t{Tensor({kWindowHours, N}), Tensor({kWindowHours, N}), Tensor()};
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    if (rng.bernoulli(p)) {
      t.mask[i] = 1.0;
      t.values[i] = rng.uniform(-2.0, 2.0);
    }
  }
  t.delta = interval_matrix(t.mask);
  return t;
}

TemporalTensor full_temporal(Rng& rng, std::size_t N) {
  TemporalTensor t = random_temporal(rng, N, 1.0);
  t.delta.fill(0.0);
  return t;
}

void randomize(ParamStore& store, Rng& rng, double a = 0.5) {
  for (auto& [name, e] : store)
    for (double& v : e.value.values()) v = rng.uniform(-a, a);
}

}  // namespace

TEST_CASE("decay examples") {
  CHECK(decay(Tensor::vector({3.0}), Tensor::vector({0}), Tensor::vector({0}))[0] == 1.0);
  CHECK(decay(Tensor::vector({std::log(2.0)}), Tensor::vector({1}), Tensor::vector({0}))[0] ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(decay(Tensor::vector({1.0}), Tensor::vector({-5}), Tensor::vector({0}))[0] == 1.0);
  CHECK_THROWS_AS(decay(Tensor::vector({1, 2}), Tensor::vector({1}), Tensor::vector({0})), ShapeError);
}

TEST_CASE("decay lies in (0, 1] and does not grow with delta for w >= 0") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double w = rng.uniform(0.0, 3.0), b = rng.uniform(-2.0, 2.0);
    double prev = 2.0;
    for (double d = 0.0; d <= 24.0; d += 1.0) {
      const double g = decay(Tensor::vector({d}), Tensor::vector({w}), Tensor::vector({b}))[0];
      CHECK(g > 0.0);
      CHECK(g <= 1.0);
      CHECK(g <= prev);
      prev = g;
    }
    const double ws = rng.uniform(-3.0, 3.0), d = rng.uniform(0.0, 24.0);
    const double g = decay(Tensor::vector({d}), Tensor::vector({ws}), Tensor::vector({b}))[0];
    CHECK(g > 0.0);
    CHECK(g <= 1.0);
  }
}

TEST_CASE("tape decay matches the tensor version") {
  Rng rng(4);
  const Tensor d = test::random_tensor({3, 5}, rng, 0, 6), w = test::random_tensor({1, 5}, rng),
               b = test::random_tensor({1, 5}, rng);
  Tape tape;
  const Tensor g = decay_diagonal(tape.constant(d), tape.constant(w), tape.constant(b)).value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      CHECK(g.at(r, c) == decay(Tensor::vector({d.at(r, c)}), Tensor::vector({w[c]}), Tensor::vector({b[c]}))[0]);
}

TEST_CASE("imputation examples") {
  const Tensor v = Tensor::vector({1, 2, 3}), last = Tensor::vector({10, 10, 10}), mean = Tensor::vector({2, 2, 2});
  CHECK(impute(v, Tensor::vector({1, 1, 1}), Tensor::vector({0.3, 0.3, 0.3}), last, mean) == v);
  CHECK(impute(v, Tensor::vector({0, 0, 0}), Tensor::vector({1, 1, 1}), last, mean) == last);
  const Tensor x = impute(v, Tensor::vector({0, 1, 0}), Tensor::vector({0.3, 0.3, 0.3}), last, mean);
  CHECK(x[0] == doctest::Approx(4.4).epsilon(1e-15));
  CHECK(x[1] == 2.0);
  CHECK(x[2] == doctest::Approx(4.4).epsilon(1e-15));
}

TEST_CASE("imputation never alters observed entries") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor v = test::random_tensor({4, 6}, rng, -100, 100), g = test::random_tensor({4, 6}, rng, 0, 1),
                 l = test::random_tensor({4, 6}, rng), m = test::random_tensor({6}, rng);
    Tensor mask({4, 6});
    for (double& x : mask.values()) x = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Tensor out = impute(v, mask, g, l, m);
    Tape tape;
    const Tensor out2 = impute(tape.constant(v), tape.constant(mask), tape.constant(g), tape.constant(l),
                               tape.constant(m.reshaped({1, 6})))
                            .value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (mask[i] == 1.0) {
        CHECK(out[i] == v[i]);
        CHECK(out2[i] == v[i]);
      } else {
        CHECK(out2[i] == doctest::Approx(out[i]).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("sequence batch tracks the last observation strictly before each step") {
  TemporalTensor t{Tensor({24, 1}), Tensor({24, 1}), Tensor()};
  t.values.at(2, 0) = 7.0;
  t.mask.at(2, 0) = 1.0;
  t.values.at(5, 0) = -1.0;
  t.mask.at(5, 0) = 1.0;
  t.delta = interval_matrix(t.mask);
  const TemporalTensor* ptr = &t;
  auto sb = make_sequence_batch(std::span(&ptr, 1), Tensor::vector({3.0}));
  CHECK(sb.last_observed[0][0] == 3.0);
  CHECK(sb.last_observed[2][0] == 3.0);
  CHECK(sb.last_observed[3][0] == 7.0);
  CHECK(sb.last_observed[5][0] == 7.0);
  CHECK(sb.last_observed[6][0] == -1.0);
  CHECK(sb.delta[4][0] == 2.0);
  CHECK_THROWS_AS(make_sequence_batch(std::span(&ptr, 1), Tensor::vector({1, 2})), ShapeError);
}

TEST_CASE("zero weights halve the decayed state") {
  GrudEncoder enc("g", GrudConfig{2, 3, true, true, true});
  ParamStore store;
  Rng rng(1);
  enc.init_params(store, rng);
  for (auto& [n, e] : store) e.value.fill(0.0);
  Tape tape;
  StepInput in{tape.constant(Tensor::matrix({{1.5, -2}})), tape.constant(Tensor::matrix({{1, 0}})),
               tape.constant(Tensor::matrix({{3, 2}})), tape.constant(Tensor::matrix({{0, 4}})),
               tape.constant(Tensor::matrix({{0, 0}}))};
  Var h = tape.constant(Tensor::matrix({{0.8, -0.4, 2.0}}));
  const Tensor out = enc.step(tape, store, h, in).value();
  CHECK(out == Tensor::matrix({{0.4, -0.2, 1.0}}));

  std::vector<TemporalTensor> one{random_temporal(rng, 2, 0.5)};
  one[0].values = Tensor({1, 2}, std::vector<double>{1, 2});
  one[0].mask = Tensor({1, 2}, std::vector<double>{1, 1});
  one[0].delta = Tensor({1, 2});
  const TemporalTensor* ptr = &one[0];
  auto sb = make_sequence_batch(std::span(&ptr, 1), Tensor::vector({0, 0}));
  Tape t2;
  for (double v : enc.encode(t2, store, sb).value().values()) CHECK(v == 0.0);
}

TEST_CASE("saturated update gate copies the candidate") {
  GrudEncoder enc("g", GrudConfig{1, 2, false, false, false});
  ParamStore store;
  Rng rng(2);
  enc.init_params(store, rng);
  for (auto& [n, e] : store) e.value.fill(0.0);
  store.value("g.b_z").fill(40.0);
  store.value("g.W_h").fill(0.7);
  Tape tape;
  StepInput in{tape.constant(Tensor::matrix({{1.0}})), tape.constant(Tensor::matrix({{1.0}})),
               tape.constant(Tensor::matrix({{0.0}})), tape.constant(Tensor::matrix({{0.0}})),
               tape.constant(Tensor::matrix({{0.0}}))};
  const Tensor out = enc.step(tape, store, tape.constant(Tensor({1, 2})), in).value();
  CHECK(out[0] == doctest::Approx(std::tanh(0.7)).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(std::tanh(0.7)).epsilon(1e-12));
}

TEST_CASE("fully observed GRU-D without hidden decay equals the GRU cell") {
  Rng rng(10);
  const std::size_t N = 4, H = 5;
  std::vector<TemporalTensor> data;
  for (int i = 0; i < 3; ++i) data.push_back(full_temporal(rng, N));
  std::vector<const TemporalTensor*> ptrs{&data[0], &data[1], &data[2]};
  const Tensor mean = test::random_tensor({N}, rng);
  auto sb = make_sequence_batch(ptrs, mean);

  for (bool inject : {false, true}) {
    CAPTURE(inject);
    GrudEncoder grud("t", GrudConfig{N, H, inject, true, true});
    GruEncoder gru("t", N, H);
    ParamStore gs, rs;
    grud.init_params(gs, rng);
    gru.init_params(rs, rng);
    randomize(gs, rng);
    gs.value("t.gamma_h.w").fill(0.0);
    gs.value("t.gamma_h.b").fill(0.0);
    for (auto& [name, e] : rs) e.value = gs.value(name);
    if (inject) {
      // V·1 is a constant shift of each gate bias.
      for (const char* g : {"z", "r", "h"}) {
        const Tensor& v = gs.value(std::string("t.V_") + g);
        Tensor& b = rs.value(std::string("t.b_") + g);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t j = 0; j < H; ++j) b[j] += v.at(n, j);
      }
    }
    Tape t1, t2;
    const Tensor a = grud.encode(t1, gs, sb).value(), b = gru.encode(t2, rs, sb).value();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    Tape t3;
    CHECK(grud.encode(t3, gs, sb).value() == a);
  }
}

TEST_CASE("GRU ablation imputes with the empirical mean") {
  Rng rng(12);
  const std::size_t N = 3, H = 4;
  TemporalTensor t = random_temporal(rng, N, 0.4);
  const Tensor mean = test::random_tensor({N}, rng);
  TemporalTensor filled = t;
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    if (t.mask[i] == 0.0) filled.values[i] = mean[i % N];
    filled.mask[i] = 1.0;
  }
  GruEncoder gru("t", N, H);
  ParamStore s;
  gru.init_params(s, rng);
  const TemporalTensor* a = &t;
  const TemporalTensor* b = &filled;
  Tape t1, t2;
  CHECK(gru.encode(t1, s, make_sequence_batch(std::span(&a, 1), mean)).value() ==
        gru.encode(t2, s, make_sequence_batch(std::span(&b, 1), mean)).value());
}

TEST_CASE("GRU-D gradients through 24 steps") {
  Rng rng(2025);
  const std::size_t N = 3, H = 4;
  std::vector<TemporalTensor> data{random_temporal(rng, N, 0.35), random_temporal(rng, N, 0.6)};
  std::vector<const TemporalTensor*> ptrs{&data[0], &data[1]};
  auto sb = make_sequence_batch(ptrs, test::random_tensor({N}, rng));
  GrudEncoder enc("g", GrudConfig{N, H, true, true, true});
  ParamStore store;
  enc.init_params(store, rng);
  randomize(store, rng, 0.4);
  auto r = test::check_gradients(store, [&](Tape& t, ParamStore& s) { return sum(enc.encode(t, s, sb)); });
  CHECK_MESSAGE(r.ok, r.first_failure);
  CHECK(r.checked == store.num_scalars());
}

TEST_CASE("encoder shape errors") {
  Rng rng(1);
  TemporalTensor t = random_temporal(rng, 3, 0.5);
  const TemporalTensor* p = &t;
  auto sb = make_sequence_batch(std::span(&p, 1), Tensor::vector({0, 0, 0}));
  GrudEncoder enc("g", GrudConfig{4, 2, true, true, true});
  ParamStore store;
  enc.init_params(store, rng);
  Tape tape;
  CHECK_THROWS_AS(enc.encode(tape, store, sb), ShapeError);
  CHECK_THROWS_AS(GrudEncoder("g", GrudConfig{0, 2, true, true, true}), ConfigError);
}
