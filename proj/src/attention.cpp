#include "tckin/attention.hpp"

#include <cmath>

#include "tckin/error.hpp"

namespace tckin {

Var attend(Var queries, Var keys_values, std::size_t width) {
  Tape& tape = *queries.tape();
  if (queries.rows() == 0 || queries.size() == 0) return tape.constant(Tensor({1, width}));
  if (queries.cols() != width || keys_values.cols() != width) {
    throw ShapeError("attention: query width " + std::to_string(queries.cols()) + " and key width " +
                     std::to_string(keys_values.cols()) + " must both be " + std::to_string(width));
  }
  if (keys_values.rows() == 0 || keys_values.size() == 0) throw ShapeError("attention: queries without keys");
  Var logits = scale(matmul(queries, transpose(keys_values)), 1.0 / std::sqrt(static_cast<double>(width)));
  Var weights = softmax_rows(logits);
  return mean_rows(matmul(weights, keys_values));
}

DiagnosisAttention::DiagnosisAttention(std::string prefix, AttentionConfig config)
    : prefix_(std::move(prefix)), config_(config) {
  if (config_.d_k == 0) throw ConfigError("attention width must be positive");
}

void DiagnosisAttention::init_params(ParamStore& store, Rng& rng) const {
  if (!config_.projections) return;
  const std::size_t d = config_.d_k;
  const double a = std::sqrt(6.0 / static_cast<double>(2 * d));
  for (const char* name : {".wq", ".wk", ".wv"}) {
    Tensor w({d, d});
    for (double& v : w.values()) v = rng.uniform(-a, a);
    store.add(prefix_ + name, std::move(w));
  }
}

Var DiagnosisAttention::forward(Tape& tape, ParamStore& store, Var icd, Var ccs) const {
  if (!config_.projections || icd.rows() == 0 || icd.size() == 0) return attend(icd, ccs, config_.d_k);
  if (ccs.rows() == 0 || ccs.size() == 0) throw ShapeError("attention: queries without keys");
  Var q = matmul(icd, tape.param(store, prefix_ + ".wq"));
  Var k = matmul(ccs, tape.param(store, prefix_ + ".wk"));
  Var v = matmul(ccs, tape.param(store, prefix_ + ".wv"));
  Var logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(config_.d_k)));
  return mean_rows(matmul(softmax_rows(logits), v));
}

}  // namespace tckin
