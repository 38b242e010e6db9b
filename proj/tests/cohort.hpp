#pragma once

#include "tckin/dataset.hpp"
#include "tckin/synth.hpp"
#include "tckin/trainer.hpp"

namespace tckin::test {

/// Synthetic cohort run through the regular schema inference and binning.
inline Dataset synth_dataset(const SynthConfig& config) {
  const SynthCohort cohort = generate(config);
  const DataSchema schema = infer_schema(cohort.episodes, cohort.mapping);
  return build_dataset(cohort.episodes, schema);
}

inline SynthConfig small_synth(std::size_t n, std::uint64_t seed) {
  SynthConfig c;
  c.n_episodes = n;
  c.seed = seed;
  c.positive_rate = 0.3;
  c.n_temporal_features = 3;
  c.n_constant_features = 2;
  c.code_vocab_size = 12;
  c.code_groups = 3;
  return c;
}

inline ModelConfig small_model() {
  ModelConfig m;
  m.hidden = 6;
  m.gcn_hidden = 5;
  m.gcn_out = 4;
  m.kan_width = 3;
  m.static_out = 3;
  m.grid = SplineGrid{-3.0, 3.0, 4, 3};
  return m;
}

/// Standardized batch of `ids` under statistics fitted on all episodes.
struct PreparedBatch {
  FoldStatistics stats;
  PreparedInputs inputs;
  ModelBatch batch;
};

inline PreparedBatch prepared_batch(const Dataset& data, std::span<const std::size_t> ids) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  PreparedBatch p;
  p.stats = fit_fold_statistics(data, all);
  p.inputs = prepare_inputs(data, p.stats);
  p.batch = make_batch(ids, p.inputs.temporal, p.inputs.constants, data.code_rows, data.labels,
                       p.stats.empirical_mean);
  return p;
}

}  // namespace tckin::test
