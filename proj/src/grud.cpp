#include "tckin/grud.hpp"

#include <array>
#include <cmath>

#include "tckin/error.hpp"

namespace tckin {

SequenceBatch make_sequence_batch(std::span<const TemporalTensor* const> tensors, const Tensor& empirical_mean) {
  if (tensors.empty()) throw DataError("empty sequence batch");
  SequenceBatch sb;
  sb.batch = tensors.size();
  sb.steps = tensors[0]->steps();
  sb.features = tensors[0]->features();
  if (empirical_mean.size() != sb.features) throw ShapeError("empirical mean width differs from feature count");
  sb.empirical_mean = empirical_mean.reshaped({sb.features});
  const std::size_t B = sb.batch, N = sb.features;
  for (std::size_t t = 0; t < sb.steps; ++t) {
    sb.values.emplace_back(Shape{B, N});
    sb.mask.emplace_back(Shape{B, N});
    sb.delta.emplace_back(Shape{B, N});
    sb.last_observed.emplace_back(Shape{B, N});
  }
  for (std::size_t b = 0; b < B; ++b) {
    const TemporalTensor& tt = *tensors[b];
    if (tt.steps() != sb.steps || tt.features() != N) throw ShapeError("sequences in a batch differ in shape");
    std::vector<double> last(empirical_mean.values().begin(), empirical_mean.values().end());
    for (std::size_t t = 0; t < sb.steps; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        sb.values[t].at(b, n) = tt.values.at(t, n);
        sb.mask[t].at(b, n) = tt.mask.at(t, n);
        sb.delta[t].at(b, n) = tt.delta.at(t, n);
        sb.last_observed[t].at(b, n) = last[n];
      }
      for (std::size_t n = 0; n < N; ++n) {
        if (tt.mask.at(t, n) == 1.0) last[n] = tt.values.at(t, n);
      }
    }
  }
  return sb;
}

Tensor decay(const Tensor& delta, const Tensor& w, const Tensor& b) {
  if (w.size() != delta.size() || b.size() != delta.size()) throw ShapeError("decay: shapes differ");
  Tensor out(delta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(-std::max(0.0, w[i] * delta[i] + b[i]));
  return out;
}

Var decay_diagonal(Var delta, Var w, Var b) { return exp(neg(relu(add(mul(delta, w), b)))); }

Var decay_full(Var delta, Var w, Var b) { return exp(neg(relu(add(matmul(delta, w), b)))); }

Tensor impute(const Tensor& values, const Tensor& mask, const Tensor& gamma, const Tensor& last_observed,
              const Tensor& mean) {
  if (mask.size() != values.size() || gamma.size() != values.size() || last_observed.size() != values.size()) {
    throw ShapeError("impute: shapes differ");
  }
  const std::size_t N = values.cols();
  if (mean.size() != N) throw ShapeError("impute: mean width differs");
  Tensor out(values.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = gamma[i];
    const double fill = g * last_observed[i] + (1.0 - g) * mean[i % N];
    out[i] = mask[i] == 1.0 ? values[i] : fill;
  }
  return out;
}

Var impute(Var values, Var mask, Var gamma, Var last_observed, Var mean) {
  Var fill = add(mul(gamma, last_observed), mul(one_minus(gamma), mean));
  return add(mul(mask, values), mul(one_minus(mask), fill));
}

namespace {

Tensor uniform(Shape shape, double a, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

void add_gate_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t n, std::size_t h) {
  const double a = 1.0 / std::sqrt(static_cast<double>(h));
  for (const char* g : {"z", "r", "h"}) {
    store.add(prefix + ".W_" + g, uniform({n, h}, a, rng));
    store.add(prefix + ".U_" + g, uniform({h, h}, a, rng));
    store.add(prefix + ".b_" + g, Tensor({h}));
  }
}

struct GateWeights {
  Var w;     // [N×3H]
  Var uzr;   // [H×2H]
  Var uh;    // [H×H]
  Var bias;  // [1×3H]
};

GateWeights gate_weights(Tape& tape, ParamStore& store, const std::string& prefix) {
  auto p = [&](const char* n) { return tape.param(store, prefix + n); };
  const std::array<Var, 3> w{p(".W_z"), p(".W_r"), p(".W_h")};
  const std::array<Var, 2> u{p(".U_z"), p(".U_r")};
  const std::array<Var, 3> b{p(".b_z"), p(".b_r"), p(".b_h")};
  return {concat_cols(w), concat_cols(u), p(".U_h"), concat_cols(b)};
}

// Shared GRU gate algebra on an already-decayed hidden state:
//   z = σ(x W_z + h U_z + b_z), r = σ(x W_r + h U_r + b_r)
//   h̃ = tanh(x W_h + (r ⊙ h) U_h + b_h), h' = (1 - z) ⊙ h + z ⊙ h̃
// `xw` is the precomputed input term x W + b (+ mask term), [B×3H].
Var gru_update(Var xw, Var h, const GateWeights& gw, std::size_t H) {
  Var hu = matmul(h, gw.uzr);
  Var z = sigmoid(add(slice_cols(xw, 0, H), slice_cols(hu, 0, H)));
  Var r = sigmoid(add(slice_cols(xw, H, H), slice_cols(hu, H, H)));
  Var cand = tanh(add(slice_cols(xw, 2 * H, H), matmul(mul(r, h), gw.uh)));
  return add(mul(one_minus(z), h), mul(z, cand));
}

}  // namespace

GrudEncoder::GrudEncoder(std::string prefix, GrudConfig config) : prefix_(std::move(prefix)), config_(config) {
  if (config_.features == 0 || config_.hidden == 0) throw ConfigError("GRU-D dimensions must be positive");
}

void GrudEncoder::init_params(ParamStore& store, Rng& rng) const {
  const std::size_t N = config_.features, H = config_.hidden;
  add_gate_params(store, rng, prefix_, N, H);
  if (config_.mask_injection) {
    const double a = 1.0 / std::sqrt(static_cast<double>(H));
    for (const char* g : {"z", "r", "h"}) store.add(prefix_ + ".V_" + g, uniform({N, H}, a, rng));
  }
  if (config_.input_decay) {
    store.add(prefix_ + ".gamma_x.w", uniform({N}, 0.1, rng));
    store.add(prefix_ + ".gamma_x.b", Tensor({N}));
  }
  if (config_.hidden_decay) {
    store.add(prefix_ + ".gamma_h.w", uniform({N, H}, 1.0 / std::sqrt(static_cast<double>(N)), rng));
    store.add(prefix_ + ".gamma_h.b", Tensor({H}));
  }
}

Var GrudEncoder::step(Tape& tape, ParamStore& store, Var h, const StepInput& in) const {
  const std::size_t H = config_.hidden;
  const GateWeights gw = gate_weights(tape, store, prefix_);
  Var gamma_x = config_.input_decay ? decay_diagonal(in.delta, tape.param(store, prefix_ + ".gamma_x.w"),
                                                      tape.param(store, prefix_ + ".gamma_x.b"))
                                    : tape.constant(Tensor(in.values.shape(), 1.0));
  Var x = impute(in.values, in.mask, gamma_x, in.last_observed, in.mean);
  Var hd = h;
  if (config_.hidden_decay) {
    hd = mul(decay_full(in.delta, tape.param(store, prefix_ + ".gamma_h.w"), tape.param(store, prefix_ + ".gamma_h.b")),
             h);
  }
  Var xw = add(matmul(x, gw.w), gw.bias);
  if (config_.mask_injection) {
    const std::array<Var, 3> v{tape.param(store, prefix_ + ".V_z"), tape.param(store, prefix_ + ".V_r"),
                               tape.param(store, prefix_ + ".V_h")};
    xw = add(xw, matmul(in.mask, concat_cols(v)));
  }
  return gru_update(xw, hd, gw, H);
}

Var GrudEncoder::encode(Tape& tape, ParamStore& store, const SequenceBatch& batch) const {
  const std::size_t H = config_.hidden;
  if (batch.steps == 0) throw DataError("GRU-D needs at least one time step");
  if (batch.features != config_.features) {
    throw ShapeError("GRU-D built for " + std::to_string(config_.features) + " features, batch has " +
                     std::to_string(batch.features));
  }
  // Weight concatenations are hoisted out of the time loop.
  const GateWeights gw = gate_weights(tape, store, prefix_);
  Var vcat;
  if (config_.mask_injection) {
    const std::array<Var, 3> v{tape.param(store, prefix_ + ".V_z"), tape.param(store, prefix_ + ".V_r"),
                               tape.param(store, prefix_ + ".V_h")};
    vcat = concat_cols(v);
  }
  Var gxw, gxb, ghw, ghb;
  if (config_.input_decay) {
    gxw = tape.param(store, prefix_ + ".gamma_x.w");
    gxb = tape.param(store, prefix_ + ".gamma_x.b");
  }
  if (config_.hidden_decay) {
    ghw = tape.param(store, prefix_ + ".gamma_h.w");
    ghb = tape.param(store, prefix_ + ".gamma_h.b");
  }
  Var mean = tape.constant(batch.empirical_mean.reshaped({1, batch.features}));
  Var h = tape.constant(Tensor({batch.batch, H}));
  for (std::size_t t = 0; t < batch.steps; ++t) {
    try {
      Var values = tape.constant(batch.values[t]);
      Var mask = tape.constant(batch.mask[t]);
      Var delta = tape.constant(batch.delta[t]);
      Var last = tape.constant(batch.last_observed[t]);
      Var gamma_x = config_.input_decay ? decay_diagonal(delta, gxw, gxb) : tape.constant(Tensor(values.shape(), 1.0));
      Var x = impute(values, mask, gamma_x, last, mean);
      Var hd = config_.hidden_decay ? mul(decay_full(delta, ghw, ghb), h) : h;
      Var xw = add(matmul(x, gw.w), gw.bias);
      if (config_.mask_injection) xw = add(xw, matmul(mask, vcat));
      h = gru_update(xw, hd, gw, H);
    } catch (const NumericalError& e) {
      throw NumericalError("GRU-D step " + std::to_string(t) + ": " + e.what());
    }
  }
  return h;
}

GruEncoder::GruEncoder(std::string prefix, std::size_t features, std::size_t hidden)
    : prefix_(std::move(prefix)), features_(features), hidden_(hidden) {
  if (features_ == 0 || hidden_ == 0) throw ConfigError("GRU dimensions must be positive");
}

void GruEncoder::init_params(ParamStore& store, Rng& rng) const { add_gate_params(store, rng, prefix_, features_, hidden_); }

Var GruEncoder::step(Tape& tape, ParamStore& store, Var h, Var x) const {
  const GateWeights gw = gate_weights(tape, store, prefix_);
  return gru_update(add(matmul(x, gw.w), gw.bias), h, gw, hidden_);
}

Var GruEncoder::encode(Tape& tape, ParamStore& store, const SequenceBatch& batch) const {
  if (batch.steps == 0) throw DataError("GRU needs at least one time step");
  if (batch.features != features_) throw ShapeError("GRU feature count differs from the batch");
  const GateWeights gw = gate_weights(tape, store, prefix_);
  const std::size_t N = batch.features;
  Var h = tape.constant(Tensor({batch.batch, hidden_}));
  for (std::size_t t = 0; t < batch.steps; ++t) {
    // Mean imputation; no parameters involved, so it stays off the tape.
    Tensor x = batch.values[t];
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (batch.mask[t][i] != 1.0) x[i] = batch.empirical_mean[i % N];
    }
    try {
      h = gru_update(add(matmul(tape.constant(std::move(x)), gw.w), gw.bias), h, gw, hidden_);
    } catch (const NumericalError& e) {
      throw NumericalError("GRU step " + std::to_string(t) + ": " + e.what());
    }
  }
  return h;
}

}  // namespace tckin
