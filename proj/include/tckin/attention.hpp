#pragma once

#include <string>

#include "tckin/autodiff.hpp"
#include "tckin/param_store.hpp"
#include "tckin/rng.hpp"

namespace tckin {

/// Scaled dot-product attention with ICD embeddings as queries and CCS
/// embeddings as keys and values, mean-pooled over the query rows:
///
///   h = mean_rows( softmax(Q Kᵀ / √d_k) V )
///
/// With no queries (an episode without diagnoses) the result is a zero row.
/// Throws ShapeError when query and key widths differ or when there are
/// queries but no keys.
Var attend(Var queries, Var keys_values, std::size_t width);

/// Optional learned projections applied before attend(); off by default.
struct AttentionConfig {
  std::size_t d_k = 32;
  bool projections = false;
};

class DiagnosisAttention {
 public:
  DiagnosisAttention() = default;
  DiagnosisAttention(std::string prefix, AttentionConfig config);

  void init_params(ParamStore& store, Rng& rng) const;
  /// [c×d_k], [c'×d_k] -> [1×d_k]
  Var forward(Tape& tape, ParamStore& store, Var icd, Var ccs) const;
  const AttentionConfig& config() const { return config_; }

 private:
  std::string prefix_;
  AttentionConfig config_;
};

}  // namespace tckin
