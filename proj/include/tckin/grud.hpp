#pragma once

#include <span>
#include <string>
#include <vector>

#include "tckin/autodiff.hpp"
#include "tckin/param_store.hpp"
#include "tckin/preprocess.hpp"
#include "tckin/rng.hpp"

namespace tckin {

/// A batch of equal-length sequences laid out per time step, each slice
/// [B×N]. `last_observed[t]` holds, per entry, the most recent observed value
/// strictly before t, or the empirical mean if there is none yet.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t features = 0;
  std::vector<Tensor> values;
  std::vector<Tensor> mask;
  std::vector<Tensor> delta;
  std::vector<Tensor> last_observed;
  Tensor empirical_mean;  // [N]
};

SequenceBatch make_sequence_batch(std::span<const TemporalTensor* const> tensors, const Tensor& empirical_mean);

/// γ = exp(-max(0, w ⊙ Δ + b)) with per-feature (diagonal) weights.
Tensor decay(const Tensor& delta, const Tensor& w, const Tensor& b);
/// Tape versions: diagonal weights (w, b row vectors [N]) ...
Var decay_diagonal(Var delta, Var w, Var b);
/// ... and full weights (W [N×H], b [H]) for the hidden-state decay.
Var decay_full(Var delta, Var w, Var b);

/// D̂ = I ⊙ D + (1 - I) ⊙ (γ ⊙ last + (1 - γ) ⊙ mean); mean is a row vector.
Tensor impute(const Tensor& values, const Tensor& mask, const Tensor& gamma, const Tensor& last_observed,
              const Tensor& mean);
Var impute(Var values, Var mask, Var gamma, Var last_observed, Var mean);

struct GrudConfig {
  std::size_t features = 1;
  std::size_t hidden = 64;
  bool mask_injection = true;  // V_* I_t terms in the gates
  bool input_decay = true;     // γ_x on imputed inputs
  bool hidden_decay = true;    // γ_h on h_{t-1}
};

/// Inputs of one time step.
struct StepInput {
  Var values;
  Var mask;
  Var delta;
  Var last_observed;
  Var mean;
};

/// GRU with trainable decay for irregularly observed inputs. Parameters live
/// under `prefix` (gamma_x.*, gamma_h.*, W_*, U_*, b_*, V_*); the gate
/// weights share names with GruEncoder so weights transfer between the two.
class GrudEncoder {
 public:
  GrudEncoder() = default;
  GrudEncoder(std::string prefix, GrudConfig config);

  void init_params(ParamStore& store, Rng& rng) const;
  /// One recurrence step from hidden state h [B×H].
  Var step(Tape& tape, ParamStore& store, Var h, const StepInput& in) const;
  /// Final hidden state h_T [B×H] from a zero initial state.
  Var encode(Tape& tape, ParamStore& store, const SequenceBatch& batch) const;

  const GrudConfig& config() const { return config_; }

 private:
  std::string prefix_;
  GrudConfig config_;
};

/// Plain GRU over mean-imputed inputs (no decay, no mask); the ablation cell.
class GruEncoder {
 public:
  GruEncoder() = default;
  GruEncoder(std::string prefix, std::size_t features, std::size_t hidden);

  void init_params(ParamStore& store, Rng& rng) const;
  Var step(Tape& tape, ParamStore& store, Var h, Var x) const;
  Var encode(Tape& tape, ParamStore& store, const SequenceBatch& batch) const;

  std::size_t hidden() const { return hidden_; }

 private:
  std::string prefix_;
  std::size_t features_ = 0;
  std::size_t hidden_ = 0;
};

}  // namespace tckin
