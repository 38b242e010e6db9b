#include "tckin/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tckin/error.hpp"
#include "tckin/rng.hpp"

namespace tckin {

std::size_t TemporalSchema::index_of(const std::string& name) const {
  auto it = std::find(features.begin(), features.end(), name);
  if (it == features.end()) throw DataError("unknown temporal feature '" + name + "'");
  return static_cast<std::size_t>(it - features.begin());
}

std::size_t ConstantSchema::width() const {
  std::size_t w = continuous.size();
  for (const auto& c : categorical) w += c.vocabulary.size();
  return w;
}

std::vector<std::string> ConstantSchema::column_names() const {
  std::vector<std::string> out(continuous.begin(), continuous.end());
  for (const auto& c : categorical)
    for (const auto& v : c.vocabulary) out.push_back(c.name + "=" + v);
  return out;
}

Tensor interval_matrix(const Tensor& mask) {
  const std::size_t T = mask.rows(), N = mask.cols();
  Tensor delta({T, N});
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      delta.at(t, n) = mask.at(t - 1, n) == 1.0 ? 1.0 : 1.0 + delta.at(t - 1, n);
    }
  }
  return delta;
}

TemporalTensor bin_events(const EpisodeRecord& episode, const TemporalSchema& schema) {
  if (schema.features.empty()) throw DataError("temporal schema is empty");
  const std::size_t T = kWindowHours, N = schema.features.size();
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t n = 0; n < N; ++n) index.emplace(schema.features[n], n);

  Tensor sums({T, N});
  Tensor counts({T, N});
  for (const auto& e : episode.events) {
    auto it = index.find(e.feature);
    if (it == index.end()) {
      throw DataError("episode " + episode.id + ": unknown temporal feature '" + e.feature + "'");
    }
    if (!(e.offset_hours >= 0.0 && e.offset_hours < static_cast<double>(T))) {
      throw DataError("episode " + episode.id + ": event offset " + std::to_string(e.offset_hours) +
                      " h outside [0, 24)");
    }
    if (!std::isfinite(e.value)) throw DataError("episode " + episode.id + ": non-finite event value");
    const auto t = static_cast<std::size_t>(std::floor(e.offset_hours));
    sums.at(t, it->second) += e.value;
    counts.at(t, it->second) += 1.0;
  }

  TemporalTensor out{Tensor({T, N}), Tensor({T, N}), Tensor()};
  for (std::size_t i = 0; i < T * N; ++i) {
    if (counts[i] > 0.0) {
      out.values[i] = sums[i] / counts[i];
      out.mask[i] = 1.0;
    }
  }
  out.delta = interval_matrix(out.mask);
  return out;
}

Tensor fit_empirical_means(std::span<const TemporalTensor> tensors, std::span<const std::size_t> subset) {
  if (subset.empty()) throw DataError("cannot fit empirical means on an empty training set");
  const std::size_t N = tensors[subset[0]].features();
  std::vector<double> sum(N, 0.0), cnt(N, 0.0);
  for (std::size_t idx : subset) {
    const TemporalTensor& tt = tensors[idx];
    if (tt.features() != N) throw ShapeError("temporal tensors disagree on feature count");
    for (std::size_t t = 0; t < tt.steps(); ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        if (tt.mask.at(t, n) == 1.0) {
          sum[n] += tt.values.at(t, n);
          cnt[n] += 1.0;
        }
      }
    }
  }
  Tensor mean({N});
  for (std::size_t n = 0; n < N; ++n) mean[n] = cnt[n] > 0.0 ? sum[n] / cnt[n] : 0.0;
  return mean;
}

Tensor fit_empirical_means(std::span<const TemporalTensor> tensors) {
  std::vector<std::size_t> all(tensors.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return fit_empirical_means(tensors, all);
}

ConstantVector encode_constants(const EpisodeRecord& episode, const ConstantSchema& schema) {
  ConstantVector out{Tensor({schema.width()}), 0};
  std::size_t col = 0;
  for (const auto& name : schema.continuous) {
    auto it = episode.constant_continuous.find(name);
    if (it != episode.constant_continuous.end() && std::isfinite(it->second)) out.values[col] = it->second;
    ++col;
  }
  for (const auto& cat : schema.categorical) {
    auto it = episode.constant_categorical.find(cat.name);
    if (it != episode.constant_categorical.end()) {
      auto v = std::find(cat.vocabulary.begin(), cat.vocabulary.end(), it->second);
      if (v != cat.vocabulary.end()) {
        out.values[col + static_cast<std::size_t>(v - cat.vocabulary.begin())] = 1.0;
      } else {
        ++out.unknown_categories;
      }
    }
    col += cat.vocabulary.size();
  }
  return out;
}

TemporalSchema infer_temporal_schema(std::span<const EpisodeRecord> episodes) {
  std::set<std::string> names;
  for (const auto& ep : episodes)
    for (const auto& e : ep.events) names.insert(e.feature);
  return TemporalSchema{{names.begin(), names.end()}};
}

ConstantSchema infer_constant_schema(std::span<const EpisodeRecord> episodes) {
  std::set<std::string> continuous;
  std::map<std::string, std::set<std::string>> categorical;
  for (const auto& ep : episodes) {
    for (const auto& [k, _] : ep.constant_continuous) continuous.insert(k);
    for (const auto& [k, v] : ep.constant_categorical) categorical[k].insert(v);
  }
  ConstantSchema schema;
  for (const auto& k : continuous) {
    if (categorical.contains(k)) throw DataError("constant '" + k + "' is numeric in some episodes and text in others");
    schema.continuous.push_back(k);
  }
  for (const auto& [k, vocab] : categorical) schema.categorical.push_back({k, {vocab.begin(), vocab.end()}});
  return schema;
}

FeatureScaler fit_temporal_scaler(std::span<const TemporalTensor> tensors, std::span<const std::size_t> subset) {
  if (subset.empty()) throw DataError("cannot fit a scaler on an empty training set");
  const std::size_t N = tensors[subset[0]].features();
  std::vector<double> sum(N, 0.0), sq(N, 0.0), cnt(N, 0.0);
  for (std::size_t idx : subset) {
    const TemporalTensor& tt = tensors[idx];
    for (std::size_t i = 0; i < tt.values.size(); ++i) {
      if (tt.mask[i] != 1.0) continue;
      const std::size_t n = i % N;
      sum[n] += tt.values[i];
      cnt[n] += 1.0;
    }
  }
  FeatureScaler s{std::vector<double>(N, 0.0), std::vector<double>(N, 1.0)};
  for (std::size_t n = 0; n < N; ++n) {
    if (cnt[n] > 0.0) s.mean[n] = sum[n] / cnt[n];
  }
  for (std::size_t idx : subset) {
    const TemporalTensor& tt = tensors[idx];
    for (std::size_t i = 0; i < tt.values.size(); ++i) {
      if (tt.mask[i] != 1.0) continue;
      const std::size_t n = i % N;
      const double d = tt.values[i] - s.mean[n];
      sq[n] += d * d;
    }
  }
  for (std::size_t n = 0; n < N; ++n) {
    const double sd = cnt[n] > 1.0 ? std::sqrt(sq[n] / (cnt[n] - 1.0)) : 0.0;
    s.scale[n] = sd > 1e-8 ? sd : 1.0;
  }
  return s;
}

FeatureScaler fit_constant_scaler(std::span<const Tensor> constants, std::span<const std::size_t> subset,
                                  std::size_t n_continuous) {
  if (subset.empty()) throw DataError("cannot fit a scaler on an empty training set");
  const std::size_t W = constants[subset[0]].size();
  FeatureScaler s{std::vector<double>(W, 0.0), std::vector<double>(W, 1.0)};
  const double n = static_cast<double>(subset.size());
  for (std::size_t c = 0; c < n_continuous; ++c) {
    double sum = 0.0;
    for (std::size_t idx : subset) sum += constants[idx][c];
    const double m = sum / n;
    double sq = 0.0;
    for (std::size_t idx : subset) sq += (constants[idx][c] - m) * (constants[idx][c] - m);
    const double sd = subset.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    s.mean[c] = m;
    s.scale[c] = sd > 1e-8 ? sd : 1.0;
  }
  return s;
}

TemporalTensor apply_scaler(const TemporalTensor& t, const FeatureScaler& scaler) {
  TemporalTensor out = t;
  const std::size_t N = t.features();
  if (scaler.mean.size() != N) throw ShapeError("temporal scaler width differs from the tensor");
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.mask[i] == 1.0) {
      const std::size_t n = i % N;
      out.values[i] = (out.values[i] - scaler.mean[n]) / scaler.scale[n];
    }
  }
  return out;
}

Tensor apply_scaler(const Tensor& constants, const FeatureScaler& scaler) {
  if (scaler.mean.size() != constants.size()) throw ShapeError("constant scaler width differs from the vector");
  Tensor out = constants;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - scaler.mean[i]) / scaler.scale[i];
  return out;
}

std::vector<Fold> make_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.size() < k || neg.size() < k) {
    throw DataError("stratified " + std::to_string(k) + "-fold split needs at least " + std::to_string(k) +
                    " episodes per class (have " + std::to_string(pos.size()) + " positive, " +
                    std::to_string(neg.size()) + " negative)");
  }
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<std::vector<std::size_t>> val(k);
  std::size_t slot = 0;
  for (std::size_t i : pos) val[slot++ % k].push_back(i);
  for (std::size_t i : neg) val[slot++ % k].push_back(i);

  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(val[f].begin(), val[f].end());
    folds[f].val = val[f];
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), val[g].begin(), val[g].end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::vector<std::size_t> oversample(std::span<const std::size_t> ids, std::span<const int> labels,
                                    double target_ratio, std::uint64_t seed) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) throw ConfigError("oversample ratio must lie in (0, 1]");
  std::vector<std::size_t> pos, neg;
  for (std::size_t id : ids) (labels[id] == 1 ? pos : neg).push_back(id);
  if (pos.empty() || neg.empty()) throw DataError("oversampling needs both classes in the training set");
  const auto& minority = pos.size() <= neg.size() ? pos : neg;
  const auto& majority = pos.size() <= neg.size() ? neg : pos;
  const auto target = static_cast<std::size_t>(std::ceil(target_ratio * static_cast<double>(majority.size()) - 1e-9));

  std::vector<std::size_t> out(ids.begin(), ids.end());
  if (minority.size() >= target) return out;
  Rng rng(seed);
  for (std::size_t i = minority.size(); i < target; ++i) out.push_back(minority[rng.below(minority.size())]);
  return out;
}

}  // namespace tckin
