#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tckin/concept_graph.hpp"
#include "tckin/episode.hpp"

namespace tckin {

/// Synthetic cohort with a designed risk score
///
///   s = b + w_T z_T + w_S z_S + w_D z_D + w_M z_M,   label ~ Bernoulli(σ(s))
///
/// with independent standard-normal latents: z_T drives the level and drift
/// of every temporal feature, z_S shifts the continuous constants, z_D tilts
/// code choice toward high-severity leaves of a two-level CCS-like
/// hierarchy, and z_M (informative mode only) raises the observation rate.
/// The intercept b is solved so that mean σ(s) equals positive_rate.
struct SynthConfig {
  std::size_t n_episodes = 2000;
  double positive_rate = 0.12;
  std::size_t n_temporal_features = 6;
  std::size_t n_constant_features = 4;
  double missing_rate = 0.3;
  std::size_t code_vocab_size = 40;
  std::size_t code_groups = 5;
  double codes_per_episode = 4.0;
  double temporal_effect = 4.5;    // w_T
  double constant_effect = 3.0;    // w_S
  double code_effect = 1.5;        // w_D
  double missingness_effect = 0.0; // w_M, requires informative_missingness
  bool informative_missingness = false;
  double noise_scale = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError naming the field
};

struct EpisodeTruth {
  std::string id;
  double risk = 0.0;
  double probability = 0.0;
  int label = 0;
  double z_temporal = 0.0, z_static = 0.0, z_codes = 0.0, z_missing = 0.0;
};

struct SynthCohort {
  std::vector<EpisodeRecord> episodes;
  CodeMapping mapping;
  std::vector<EpisodeTruth> truth;
  double intercept = 0.0;
  double bayes_auroc = 0.5;
};

SynthCohort generate(const SynthConfig& config);

/// Expected AUROC of ranking by `risk` when labels are Bernoulli(σ(risk)):
///   Σ_{i≠j} p_i (1 − p_j) [s_i > s_j] (+½ on ties) / Σ_{i≠j} p_i (1 − p_j).
double bayes_auroc(std::span<const double> risk);

/// Writes cohort.jsonl, mapping.tsv, ground_truth.csv and generator.json.
void write_cohort(const std::filesystem::path& dir, const SynthCohort& cohort, const SynthConfig& config);

}  // namespace tckin
