#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tckin/autodiff.hpp"
#include "tckin/error.hpp"

using namespace tckin;
using tckin::test::check_gradients;
using tckin::test::random_tensor;

namespace {

// Projects an op output onto fixed random weights so every output entry
// carries a distinct gradient.
struct Probe {
  Tensor weights;
  Var operator()(Var v) const { return sum(mul(v, v.tape()->constant(weights))); }
};

Probe probe(Shape shape, Rng& rng) { return {random_tensor(std::move(shape), rng)}; }

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  Tensor v = Tensor::vector({1, 2, 3});
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(shape_numel({}) == 0);
  CHECK(shape_numel({4, 5}) == 20);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
}

TEST_CASE("matmul examples") {
  Tape tape;
  Var i2 = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = tape.constant(Tensor::matrix({{2, 3}, {4, 5}}));
  CHECK(matmul(i2, b).value() == Tensor::matrix({{2, 3}, {4, 5}}));
  Var row = tape.constant(Tensor::matrix({{1, 2}}));
  Var col = tape.constant(Tensor::matrix({{3}, {4}}));
  CHECK(matmul(row, col).value()[0] == 11.0);
  CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul matches a triple loop") {
  Rng rng(11);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{3, 4, 2}, {7, 5, 19}, {1, 33, 17}, {16, 16, 16}}) {
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    Tape tape;
    const Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
        CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("elementwise examples") {
  Tape tape;
  CHECK(sigmoid(tape.constant(Tensor::scalar(0))).value()[0] == 0.5);
  CHECK(tanh(tape.constant(Tensor::scalar(0))).value()[0] == 0.0);
  CHECK(relu(tape.constant(Tensor::scalar(-3.2))).value()[0] == 0.0);
  CHECK(exp(tape.constant(Tensor::scalar(0))).value()[0] == 1.0);
  Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var r = tape.constant(Tensor::vector({10, 20}));
  CHECK(add(a, r).value() == Tensor::matrix({{11, 22}, {13, 24}}));
  CHECK(mul(a, tape.constant(Tensor::scalar(2))).value() == Tensor::matrix({{2, 4}, {6, 8}}));
  CHECK(sub(tape.constant(Tensor::scalar(1)), a).value() == Tensor::matrix({{0, -1}, {-2, -3}}));
  CHECK_THROWS_AS(add(a, tape.constant(Tensor::vector({1, 2, 3}))), ShapeError);
  CHECK(sigmoid(tape.constant(Tensor::scalar(-800))).value()[0] == 0.0);
  CHECK(sigmoid(tape.constant(Tensor::scalar(800))).value()[0] == 1.0);
}

TEST_CASE("backward examples") {
  Rng rng(1);
  ParamStore store;
  store.add("w", random_tensor({3, 4}, rng));
  {
    Tape tape;
    Var w = tape.param(store, "w");
    tape.backward(sum(w), store);
    for (double g : store.grad("w").values()) CHECK(g == 1.0);
  }
  {
    Tape tape;
    Var w = tape.param(store, "w");
    tape.backward(scale(sum(mul(w, w)), 0.5), store);
    CHECK(store.grad("w") == store.value("w"));
  }
}

TEST_CASE("backward errors and untouched parameters") {
  ParamStore store;
  store.add("w", Tensor({2, 2}, 1.0));
  store.add("unused", Tensor({3}, 1.0));
  store.grad("unused").fill(7.0);
  Tape tape;
  Var w = tape.param(store, "w");
  CHECK_THROWS_AS(tape.backward(w, store), ShapeError);
  Var c = sum(tape.constant(Tensor({2}, 1.0)));
  CHECK_THROWS_AS(tape.backward(c, store), Error);
  ParamStore other;
  other.add("w", Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(tape.backward(sum(w), other), Error);
  tape.backward(sum(w), store);
  for (double g : store.grad("unused").values()) CHECK(g == 0.0);
  CHECK_THROWS_AS(store.add("w", Tensor({1})), Error);
}

TEST_CASE("non-finite forward values are errors") {
  Tape tape;
  Var big = tape.constant(Tensor::scalar(1000.0));
  CHECK_THROWS_AS(exp(big), NumericalError);
}

TEST_CASE("finite differences for every op") {
  Rng rng(2024);
  ParamStore store;
  store.add("a", random_tensor({3, 4}, rng));
  store.add("b", random_tensor({3, 4}, rng));
  store.add("m", random_tensor({4, 5}, rng));
  store.add("row", random_tensor({4}, rng));
  store.add("s", random_tensor({1}, rng));
  auto p34 = probe({3, 4}, rng);
  auto p35 = probe({3, 5}, rng);
  auto p43 = probe({4, 3}, rng);
  auto p14 = probe({1, 4}, rng);
  auto p38 = probe({3, 8}, rng);
  auto p64 = probe({6, 4}, rng);
  auto p32 = probe({3, 2}, rng);
  auto pg = probe({3, 4}, rng);

  struct Case {
    const char* name;
    tckin::test::LossFn fn;
  };
  auto P = [](ParamStore& s, Tape& t, const char* n) { return t.param(s, n); };
  const std::vector<std::size_t> gather_idx{2, 0, 2};
  std::vector<Case> cases{
      {"matmul", [&](Tape& t, ParamStore& s) { return p35(matmul(P(s, t, "a"), P(s, t, "m"))); }},
      {"add", [&](Tape& t, ParamStore& s) { return p34(add(P(s, t, "a"), P(s, t, "b"))); }},
      {"add row", [&](Tape& t, ParamStore& s) { return p34(add(P(s, t, "a"), P(s, t, "row"))); }},
      {"add scalar", [&](Tape& t, ParamStore& s) { return p34(add(P(s, t, "s"), P(s, t, "a"))); }},
      {"sub", [&](Tape& t, ParamStore& s) { return p34(sub(P(s, t, "a"), P(s, t, "b"))); }},
      {"sub row", [&](Tape& t, ParamStore& s) { return p34(sub(P(s, t, "a"), P(s, t, "row"))); }},
      {"sub scalar", [&](Tape& t, ParamStore& s) { return p34(sub(P(s, t, "a"), P(s, t, "s"))); }},
      {"mul", [&](Tape& t, ParamStore& s) { return p34(mul(P(s, t, "a"), P(s, t, "b"))); }},
      {"mul row", [&](Tape& t, ParamStore& s) { return p34(mul(P(s, t, "a"), P(s, t, "row"))); }},
      {"mul scalar", [&](Tape& t, ParamStore& s) { return p34(mul(P(s, t, "s"), P(s, t, "b"))); }},
      {"scale", [&](Tape& t, ParamStore& s) { return p34(scale(P(s, t, "a"), -1.7)); }},
      {"shift", [&](Tape& t, ParamStore& s) { return p34(mul(shift(P(s, t, "a"), 0.3), P(s, t, "b"))); }},
      {"one_minus", [&](Tape& t, ParamStore& s) { return p34(mul(one_minus(P(s, t, "a")), P(s, t, "a"))); }},
      {"neg", [&](Tape& t, ParamStore& s) { return p34(neg(P(s, t, "a"))); }},
      {"sigmoid", [&](Tape& t, ParamStore& s) { return p34(sigmoid(scale(P(s, t, "a"), 3.0))); }},
      {"tanh", [&](Tape& t, ParamStore& s) { return p34(tanh(scale(P(s, t, "a"), 2.0))); }},
      {"exp", [&](Tape& t, ParamStore& s) { return p34(exp(P(s, t, "a"))); }},
      {"relu", [&](Tape& t, ParamStore& s) { return p34(relu(P(s, t, "a"))); }},
      {"silu", [&](Tape& t, ParamStore& s) { return p34(silu(scale(P(s, t, "a"), 3.0))); }},
      {"sum", [&](Tape& t, ParamStore& s) { return mul(sum(P(s, t, "a")), sum(P(s, t, "b"))); }},
      {"mean", [&](Tape& t, ParamStore& s) { return mul(mean(P(s, t, "a")), mean(P(s, t, "a"))); }},
      {"mean_rows", [&](Tape& t, ParamStore& s) { return p14(mul(mean_rows(P(s, t, "a")), P(s, t, "row"))); }},
      {"transpose", [&](Tape& t, ParamStore& s) { return p43(transpose(P(s, t, "a"))); }},
      {"softmax_rows", [&](Tape& t, ParamStore& s) { return p34(softmax_rows(scale(P(s, t, "a"), 2.0))); }},
      {"concat_cols",
       [&](Tape& t, ParamStore& s) {
         const std::array<Var, 2> parts{P(s, t, "a"), tanh(P(s, t, "b"))};
         return p38(concat_cols(parts));
       }},
      {"concat_rows",
       [&](Tape& t, ParamStore& s) {
         const std::array<Var, 2> parts{P(s, t, "a"), sigmoid(P(s, t, "b"))};
         return p64(concat_rows(parts));
       }},
      {"slice_cols", [&](Tape& t, ParamStore& s) { return p32(slice_cols(P(s, t, "a"), 1, 2)); }},
      {"gather_rows", [&](Tape& t, ParamStore& s) { return pg(gather_rows(P(s, t, "a"), gather_idx)); }},
      {"bce_with_logits",
       [&](Tape& t, ParamStore& s) {
         const std::vector<double> y{1, 0, 1};
         return bce_with_logits(matmul(P(s, t, "a"), slice_cols(P(s, t, "m"), 0, 1)), y);
       }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto r = check_gradients(store, c.fn);
    CHECK_MESSAGE(r.ok, r.first_failure);
  }
}

TEST_CASE("bce matches the scalar formula and clamps") {
  ParamStore store;
  store.add("z", Tensor::vector({0.0, 2.0, -1.0}));
  Tape tape;
  Var l = bce_with_logits(tape.param(store, "z"), std::vector<double>{1, 0, 1});
  const double p1 = 1.0 / (1.0 + std::exp(-2.0)), p2 = 1.0 / (1.0 + std::exp(1.0));
  CHECK(l.value()[0] == doctest::Approx((std::log(2.0) - std::log(1 - p1) - std::log(p2)) / 3.0).epsilon(1e-14));
  Tape t2;
  Var sat = bce_with_logits(t2.constant(Tensor::vector({100.0})), std::vector<double>{1});
  CHECK(sat.value()[0] == doctest::Approx(-std::log1p(-1e-7)).epsilon(1e-9));
  Tape t3;
  CHECK_THROWS_AS(bce_with_logits(t3.constant(Tensor::vector({0.0})), std::vector<double>{0.5}), DataError);
}

TEST_CASE("backward is deterministic") {
  Rng rng(5);
  ParamStore store;
  store.add("w", random_tensor({6, 6}, rng));
  store.add("x", random_tensor({4, 6}, rng));
  Tape tape;
  Var h = tanh(matmul(tape.param(store, "x"), tape.param(store, "w")));
  Var l = sum(mul(softmax_rows(h), h));
  tape.backward(l, store);
  const Tensor g1 = store.grad("w"), g2x = store.grad("x");
  tape.backward(l, store);
  CHECK(store.grad("w") == g1);
  CHECK(store.grad("x") == g2x);
}

TEST_CASE("batch gradient is the sum of per-sample gradients") {
  Rng rng(8);
  ParamStore store;
  store.add("w", random_tensor({5, 3}, rng));
  store.add("b", random_tensor({3}, rng));
  const Tensor x = random_tensor({3, 5}, rng);
  auto loss_on = [&](const Tensor& xb) {
    Tape tape;
    Var h = tanh(add(matmul(tape.constant(xb), tape.param(store, "w")), tape.param(store, "b")));
    tape.backward(sum(mul(h, h)), store);
    return std::pair{store.grad("w"), store.grad("b")};
  };
  const auto [gw, gb] = loss_on(x);
  Tensor sw({5, 3}), sb({3});
  for (std::size_t r = 0; r < 3; ++r) {
    Tensor xr({1, 5});
    for (std::size_t c = 0; c < 5; ++c) xr.at(0, c) = x.at(r, c);
    const auto [w, b] = loss_on(xr);
    for (std::size_t i = 0; i < sw.size(); ++i) sw[i] += w[i];
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] += b[i];
  }
  for (std::size_t i = 0; i < sw.size(); ++i) CHECK(gw[i] == doctest::Approx(sw[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < sb.size(); ++i) CHECK(gb[i] == doctest::Approx(sb[i]).epsilon(1e-12));
}
