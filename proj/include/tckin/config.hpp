#pragma once

#include <filesystem>
#include <string>

#include "tckin/model.hpp"
#include "tckin/synth.hpp"
#include "tckin/trainer.hpp"

namespace tckin {

/// One declarative run configuration. JSON layout (every key optional):
///
///   {
///     "seed": 0,
///     "variant": "full",
///     "model": {"hidden": 64, "gcn_hidden": 64, "gcn_out": 32, "kan_width": 32,
///               "static_out": 32, "dropout": 0.2, "mask_injection": true,
///               "attention_projection": false,
///               "spline": {"intervals": 8, "order": 3, "range": 3.0, "base": true}},
///     "train": {"learning_rate": 0.001, "lr_decay": 0.95, "batch_size": 64,
///               "max_epochs": 50, "patience": 10, "oversample_ratio": 1.0,
///               "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_epsilon": 1e-8,
///               "folds": 5, "workers": 1, "threshold_policy": "fixed"},
///     "synth": {"n_episodes": 2000, "positive_rate": 0.12, ...}
///   }
///
/// Unknown keys and wrong types are ConfigErrors naming the offending field.
/// The top-level seed feeds both the generator and the trainer.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string variant = "full";
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;

  /// Model config with the variant applied.
  ModelConfig variant_model() const { return apply_variant(model, variant); }
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical JSON (all fields, fixed key order).
std::string run_config_to_json(const RunConfig& config);
/// fnv1a_hex of the canonical JSON.
std::string config_hash(const RunConfig& config);

}  // namespace tckin
