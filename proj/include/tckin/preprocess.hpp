#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tckin/episode.hpp"
#include "tckin/tensor.hpp"

namespace tckin {

/// Hourly bins in the observation window.
inline constexpr std::size_t kWindowHours = 24;

/// The (D, I, Δ) triple for one episode, each [T×N] with T = 24.
///
/// values holds the bin mean where mask is 1 and 0 elsewhere. delta counts
/// whole bins since the last observed bin: delta[0] = 0, and for t >= 1
/// delta[t] = 1 if mask[t-1] = 1 else delta[t-1] + 1.
struct TemporalTensor {
  Tensor values;
  Tensor mask;
  Tensor delta;

  std::size_t steps() const { return values.rows(); }
  std::size_t features() const { return values.cols(); }
};

struct TemporalSchema {
  std::vector<std::string> features;
  std::size_t index_of(const std::string& name) const;  // throws DataError
};

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> vocabulary;
};

/// Layout of the encoded constant vector: continuous features first, then
/// one one-hot block per categorical feature.
struct ConstantSchema {
  std::vector<std::string> continuous;
  std::vector<CategoricalFeature> categorical;

  std::size_t width() const;
  /// Column labels, e.g. "age", "gender=F".
  std::vector<std::string> column_names() const;
};

struct ConstantVector {
  Tensor values;                       // [width]
  std::size_t unknown_categories = 0;  // values seen outside the vocabulary
};

/// Per-feature affine standardization, (x - mean) / scale.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Δ from a [T×N] mask by the piecewise recurrence.
Tensor interval_matrix(const Tensor& mask);

/// Hourly mean binning of one episode's events. Throws DataError for events
/// outside [0, 24), non-finite values or features missing from the schema.
TemporalTensor bin_events(const EpisodeRecord& episode, const TemporalSchema& schema);

/// Per-feature mean over observed entries (mask = 1); 0 for a feature never
/// observed. Only the tensors listed in `subset` are read.
Tensor fit_empirical_means(std::span<const TemporalTensor> tensors);
Tensor fit_empirical_means(std::span<const TemporalTensor> tensors, std::span<const std::size_t> subset);

ConstantVector encode_constants(const EpisodeRecord& episode, const ConstantSchema& schema);

TemporalSchema infer_temporal_schema(std::span<const EpisodeRecord> episodes);
/// Continuous and categorical names plus vocabularies, all sorted.
ConstantSchema infer_constant_schema(std::span<const EpisodeRecord> episodes);

/// Mean/std of observed temporal entries of the subset (std floored to 1 for
/// constant or unobserved features).
FeatureScaler fit_temporal_scaler(std::span<const TemporalTensor> tensors, std::span<const std::size_t> subset);
/// Mean/std of the first `n_continuous` columns of the subset's constant
/// vectors; one-hot columns are left unscaled.
FeatureScaler fit_constant_scaler(std::span<const Tensor> constants, std::span<const std::size_t> subset,
                                  std::size_t n_continuous);
/// Scales observed entries only; missing slots stay 0.
TemporalTensor apply_scaler(const TemporalTensor& t, const FeatureScaler& scaler);
Tensor apply_scaler(const Tensor& constants, const FeatureScaler& scaler);

/// Stratified k-fold split of indices 0..labels.size()-1. Each class is
/// shuffled and dealt round-robin, so per-fold class counts differ by at most
/// one. Throws DataError if a class has fewer than k members.
std::vector<Fold> make_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Duplicates minority-class ids (uniformly, with replacement) until
/// minority/majority reaches target_ratio, i.e. ceil(ratio * majority)
/// minority entries. Input order is kept; the extra copies are appended.
std::vector<std::size_t> oversample(std::span<const std::size_t> ids, std::span<const int> labels,
                                    double target_ratio, std::uint64_t seed);

}  // namespace tckin
