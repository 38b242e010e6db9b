#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tckin/attention.hpp"
#include "tckin/autodiff.hpp"
#include "tckin/concept_graph.hpp"
#include "tckin/grud.hpp"
#include "tckin/kan.hpp"
#include "tckin/param_store.hpp"
#include "tckin/rng.hpp"

namespace tckin {

enum class TemporalCell { kGrud, kGru };
enum class Encoder { kKan, kMlp };

struct ModelConfig {
  std::size_t hidden = 64;      // GRU-D state, |h_D|
  std::size_t gcn_hidden = 64;  // F1
  std::size_t gcn_out = 32;     // F2 = |h_icd| = d_k
  std::size_t kan_width = 32;   // hidden width of the constant KAN
  std::size_t static_out = 32;  // |h_s|
  SplineGrid grid;
  bool kan_base = true;
  bool mask_injection = true;
  bool attention_projection = false;
  double dropout = 0.2;
  TemporalCell temporal_cell = TemporalCell::kGrud;
  Encoder encoder = Encoder::kKan;

  std::size_t fused_width() const { return hidden + static_out + gcn_out; }
};

std::string variant_name(const ModelConfig& config);  // "full", "no_grud", "no_kan", "no_grud+no_kan"

/// Two-layer perceptron out = W2 silu(W1 x + b1) + b2 standing in for a KAN
/// in the no_kan ablation.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::size_t n_in, std::size_t n_hidden, std::size_t n_out);
  void init_params(ParamStore& store, Rng& rng) const;
  Var forward(Tape& tape, ParamStore& store, Var x) const;
  std::size_t num_params() const { return (n_in_ + 1) * n_hidden_ + (n_hidden_ + 1) * n_out_; }
  std::size_t hidden() const { return n_hidden_; }

 private:
  std::string prefix_;
  std::size_t n_in_ = 0, n_hidden_ = 0, n_out_ = 0;
};

/// Hidden width giving an n_in→h→n_out perceptron about `budget` parameters.
std::size_t matched_hidden(std::size_t budget, std::size_t n_in, std::size_t n_out);

/// Model inputs for B episodes.
struct ModelBatch {
  SequenceBatch temporal;
  Tensor constants;               // [B×M]
  std::vector<CodeRows> codes;    // B entries
  std::vector<double> labels;     // B entries (may be empty at inference)

  std::size_t size() const { return codes.size(); }
};

enum class Mode { kTrain, kEval };

/// TCKIN: GRU-D over (D, I, Δ) -> h_D; two-layer KAN over constants -> h_s;
/// two-layer GCN over the concept graph then ICD→CCS attention -> h_icd;
/// [h_D, h_s, h_icd] -> dropout -> one-layer KAN -> logit.
class TckinModel {
 public:
  TckinModel(ModelConfig config, std::shared_ptr<const ConceptGraph> graph, std::size_t n_temporal,
             std::size_t n_constant);

  void init_params(ParamStore& store, Rng& rng) const;
  /// Risk logits [B×1]. Train mode applies inverted dropout to the fused
  /// vector with masks drawn from `dropout_rng`.
  Var forward(Tape& tape, ParamStore& store, const ModelBatch& batch, Mode mode, Rng* dropout_rng = nullptr) const;
  /// The fused [B×fused_width] features before dropout.
  Var fused(Tape& tape, ParamStore& store, const ModelBatch& batch) const;
  /// Eval-mode probabilities, strictly inside (0, 1).
  std::vector<double> predict(ParamStore& store, const ModelBatch& batch) const;

  const ModelConfig& config() const { return config_; }
  const std::shared_ptr<const ConceptGraph>& graph() const { return graph_; }
  std::size_t n_temporal() const { return n_temporal_; }
  std::size_t n_constant() const { return n_constant_; }
  std::size_t fused_width() const { return config_.fused_width(); }
  /// Widths the MLP ablation picked (0 when the KAN encoder is in use).
  std::size_t mlp_static_hidden() const { return static_mlp_.hidden(); }
  std::size_t mlp_head_hidden() const { return head_mlp_.hidden(); }

  /// JSON construction manifest: dims, flags, spline grid, input widths and
  /// the data schema hash.
  std::string manifest(const std::string& schema_hash) const;

 private:
  ModelConfig config_;
  std::shared_ptr<const ConceptGraph> graph_;
  std::size_t n_temporal_, n_constant_;
  GrudEncoder grud_;
  GruEncoder gru_;
  std::vector<KanLayer> static_kan_;
  KanLayer head_kan_;
  Mlp static_mlp_;
  Mlp head_mlp_;
  DiagnosisAttention attention_;
};

/// Same inputs and outputs, with the GRU-D replaced by a plain GRU over
/// mean-imputed values ("no_grud") or every KAN replaced by a
/// parameter-matched perceptron ("no_kan"). Throws ConfigError otherwise.
TckinModel make_ablation(const TckinModel& model, const std::string& which);
/// Applies a --variant value ("full", "no_grud", "no_kan") to a config.
ModelConfig apply_variant(ModelConfig config, const std::string& variant);

/// Copies every parameter of `src` whose name and shape also exist in `dst`;
/// returns how many were copied.
std::size_t copy_shared_params(ParamStore& dst, const ParamStore& src);

/// Mean of −[y log p + (1−y) log(1−p)] with p clamped to [1e-7, 1−1e-7].
/// Throws DataError for labels outside {0,1}.
double binary_cross_entropy(std::span<const double> probabilities, std::span<const double> labels);

/// Gathers episodes `ids` of prepared per-episode inputs into a batch.
ModelBatch make_batch(std::span<const std::size_t> ids, std::span<const TemporalTensor> temporal,
                      std::span<const Tensor> constants, std::span<const CodeRows> codes,
                      std::span<const int> labels, const Tensor& empirical_mean);

}  // namespace tckin
