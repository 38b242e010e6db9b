#include "tckin/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tckin/error.hpp"
#include "tckin/rng.hpp"

namespace tckin {
namespace {

struct FeatureSpec {
  const char* name;
  double mean;
  double sd;
};

constexpr std::array<FeatureSpec, 6> kVitals{{{"heart_rate", 85.0, 15.0},
                                              {"resp_rate", 20.0, 5.0},
                                              {"temperature", 37.0, 0.7},
                                              {"sbp", 115.0, 20.0},
                                              {"lactate", 2.0, 1.0},
                                              {"spo2", 96.0, 2.5}}};
constexpr std::array<FeatureSpec, 4> kStatics{
    {{"age", 65.0, 12.0}, {"weight", 80.0, 15.0}, {"charlson", 4.0, 2.0}, {"sofa", 6.0, 3.0}}};

FeatureSpec temporal_spec(std::size_t n, std::string& name) {
  if (n < kVitals.size()) {
    name = kVitals[n].name;
    return kVitals[n];
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "lab_%02zu", n);
  name = buf;
  return {nullptr, 10.0, 3.0};
}

FeatureSpec static_spec(std::size_t k, std::string& name) {
  if (k < kStatics.size()) {
    name = kStatics[k].name;
    return kStatics[k];
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "const_%02zu", k);
  name = buf;
  return {nullptr, 0.0, 1.0};
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

std::size_t poisson(Rng& rng, double lambda) {
  const double l = std::exp(-lambda);
  std::size_t k = 0;
  for (double p = rng.uniform(); p > l; p *= rng.uniform()) ++k;
  return k;
}

void check_rate(double v, const char* field) {
  if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(field) + " must lie in (0, 1)");
}

}  // namespace

void SynthConfig::validate() const {
  if (n_episodes < 2) throw ConfigError("n_episodes must be at least 2");
  check_rate(positive_rate, "positive_rate");
  if (missing_rate != 0.0) check_rate(missing_rate, "missing_rate");
  if (n_temporal_features == 0) throw ConfigError("n_temporal_features must be at least 1");
  if (code_vocab_size == 0) throw ConfigError("code_vocab_size must be at least 1");
  if (code_groups == 0 || code_groups > code_vocab_size) throw ConfigError("code_groups must lie in [1, code_vocab_size]");
  if (!(codes_per_episode >= 1.0)) throw ConfigError("codes_per_episode must be at least 1");
  if (!(noise_scale > 0.0)) throw ConfigError("noise_scale must be positive");
  for (auto [v, f] : {std::pair{temporal_effect, "temporal_effect"}, {constant_effect, "constant_effect"},
                      {code_effect, "code_effect"}, {missingness_effect, "missingness_effect"}}) {
    if (!std::isfinite(v)) throw ConfigError(std::string(f) + " must be finite");
  }
  if (missingness_effect != 0.0 && !informative_missingness) {
    throw ConfigError("missingness_effect needs informative_missingness");
  }
}

double bayes_auroc(std::span<const double> risk) {
  const std::size_t n = risk.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return risk[a] < risk[b]; });
  double num = 0.0, sum_p = 0.0, sum_q = 0.0, sum_pq = 0.0, below_q = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double grp_p = 0.0, grp_q = 0.0, grp_pq = 0.0;
    for (; j < n && risk[order[j]] == risk[order[i]]; ++j) {
      const double p = sigmoid(risk[order[j]]);
      grp_p += p;
      grp_q += 1.0 - p;
      grp_pq += p * (1.0 - p);
    }
    // Within a tie group each ordered pair (i≠j) counts ½.
    num += grp_p * below_q + 0.5 * (grp_p * grp_q - grp_pq);
    below_q += grp_q;
    sum_p += grp_p;
    sum_q += grp_q;
    sum_pq += grp_pq;
    i = j;
  }
  const double den = sum_p * sum_q - sum_pq;
  return den > 0.0 ? num / den : 0.5;
}

SynthCohort generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthCohort out;
  const std::size_t N = cfg.n_temporal_features, K = cfg.n_constant_features, V = cfg.code_vocab_size;
  const std::size_t G = cfg.code_groups;

  // Code hierarchy: group g -> subgroups g.1, g.2 -> leaves. Group severity
  // is spread over [-1, 1]; leaves jitter around their group.
  std::vector<std::string> leaf_code(V);
  std::vector<double> severity(V);
  for (std::size_t l = 0; l < V; ++l) {
    const std::size_t g = l % G, sub = (l / G) % 2;
    char code[32];
    std::snprintf(code, sizeof code, "X%03zu", l);
    leaf_code[l] = code;
    const double gs = G == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(g) / static_cast<double>(G - 1);
    severity[l] = gs + rng.uniform(-0.3, 0.3);
    const std::string l1 = std::to_string(g + 1), l2 = l1 + "." + std::to_string(sub + 1);
    out.mapping.icd_to_ccs[leaf_code[l]] = {{l1, "Synthetic group " + l1}, {l2, "Synthetic subgroup " + l2}};
  }

  std::vector<std::string> tnames(N), snames(K);
  std::vector<FeatureSpec> tspec(N), sspec(K);
  std::vector<double> level(N), drift(N), miss_load(N);
  for (std::size_t n = 0; n < N; ++n) {
    tspec[n] = temporal_spec(n, tnames[n]);
    const double sign = n % 2 == 0 ? 1.0 : -1.0;
    level[n] = sign * (0.6 + 0.4 * static_cast<double>(n) / static_cast<double>(N));
    drift[n] = 0.5 * level[n];
    miss_load[n] = 1.5;
  }
  std::vector<double> sload(K);
  for (std::size_t k = 0; k < K; ++k) {
    sspec[k] = static_spec(k, snames[k]);
    sload[k] = k % 2 == 0 ? 1.0 : -1.0;
  }

  const double base_obs = 1.0 - cfg.missing_rate;
  const double base_logit = cfg.missing_rate == 0.0 ? 0.0 : std::log(base_obs / (1.0 - base_obs));
  constexpr double kPhi = 0.6;

  std::vector<double> partial_risk(cfg.n_episodes);
  for (std::size_t e = 0; e < cfg.n_episodes; ++e) {
    EpisodeTruth truth;
    char id[24];
    std::snprintf(id, sizeof id, "syn%05zu", e);
    truth.id = id;
    truth.z_temporal = rng.normal();
    truth.z_static = rng.normal();
    truth.z_codes = rng.normal();
    truth.z_missing = cfg.informative_missingness ? rng.normal() : 0.0;

    EpisodeRecord ep;
    ep.id = id;
    for (std::size_t n = 0; n < N; ++n) {
      const double p_obs = cfg.missing_rate == 0.0 ? 1.0
                           : cfg.informative_missingness
                               ? sigmoid(base_logit + miss_load[n] * truth.z_missing)
                               : base_obs;
      double noise = rng.normal() * cfg.noise_scale;
      for (std::size_t t = 0; t < 24; ++t) {
        if (t > 0) noise = kPhi * noise + std::sqrt(1.0 - kPhi * kPhi) * cfg.noise_scale * rng.normal();
        const double frac = static_cast<double>(t) / 23.0;
        const double latent = level[n] * truth.z_temporal + drift[n] * truth.z_temporal * frac + noise;
        if (!(p_obs >= 1.0 || rng.bernoulli(p_obs))) continue;
        const std::size_t readings = rng.bernoulli(0.2) ? 2 : 1;
        for (std::size_t r = 0; r < readings; ++r) {
          const double offset = static_cast<double>(t) + rng.uniform();
          const double value = tspec[n].mean + tspec[n].sd * (latent + 0.05 * rng.normal());
          ep.events.push_back({tnames[n], offset, value});
        }
      }
    }
    std::stable_sort(ep.events.begin(), ep.events.end(),
                     [](const Event& a, const Event& b) { return a.offset_hours < b.offset_hours; });

    for (std::size_t k = 0; k < K; ++k) {
      const double z = sload[k] * truth.z_static + 0.3 * cfg.noise_scale * rng.normal();
      ep.constant_continuous[snames[k]] = sspec[k].mean + sspec[k].sd * z;
    }
    ep.constant_categorical["sex"] = rng.bernoulli(0.5) ? "F" : "M";
    static const std::array<const char*, 3> kAdmission{"elective", "emergency", "urgent"};
    ep.constant_categorical["admission_type"] = kAdmission[rng.below(3)];

    std::size_t n_codes = rng.bernoulli(0.03) ? 0 : 1 + poisson(rng, cfg.codes_per_episode - 1.0);
    n_codes = std::min(n_codes, V);
    std::vector<double> w(V);
    for (std::size_t l = 0; l < V; ++l) w[l] = std::exp(2.5 * truth.z_codes * severity[l]);
    for (std::size_t c = 0; c < n_codes; ++c) {
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      while (pick + 1 < V && (u -= w[pick]) >= 0.0) ++pick;
      while (w[pick] == 0.0) pick = (pick + 1) % V;
      ep.icd_codes.push_back(leaf_code[pick]);
      w[pick] = 0.0;
    }

    partial_risk[e] = cfg.temporal_effect * truth.z_temporal + cfg.constant_effect * truth.z_static +
                      cfg.code_effect * truth.z_codes + cfg.missingness_effect * truth.z_missing;
    out.truth.push_back(truth);
    out.episodes.push_back(std::move(ep));
  }

  // Intercept by bisection on the realized latents.
  double lo = -60.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double m = 0.0;
    for (double r : partial_risk) m += sigmoid(r + mid);
    m /= static_cast<double>(partial_risk.size());
    (m < cfg.positive_rate ? lo : hi) = mid;
  }
  out.intercept = 0.5 * (lo + hi);

  std::vector<double> risk(cfg.n_episodes);
  for (std::size_t e = 0; e < cfg.n_episodes; ++e) {
    auto& t = out.truth[e];
    t.risk = partial_risk[e] + out.intercept;
    t.probability = sigmoid(t.risk);
    t.label = rng.bernoulli(t.probability) ? 1 : 0;
    out.episodes[e].label = t.label;
    risk[e] = t.risk;
  }
  out.bayes_auroc = bayes_auroc(risk);
  return out;
}

void write_cohort(const std::filesystem::path& dir, const SynthCohort& cohort, const SynthConfig& cfg) {
  std::filesystem::create_directories(dir);
  write_episodes(dir / "cohort.jsonl", cohort.episodes);

  std::ofstream map(dir / "mapping.tsv");
  map << "icd\tccs_l1\tl1_label\tccs_l2\tl2_label\tccs_l3\tl3_label\n";
  for (const auto& [icd, chain] : cohort.mapping.icd_to_ccs) {
    map << icd;
    for (std::size_t l = 0; l < kMaxCcsLevels; ++l) {
      if (l < chain.size()) {
        map << '\t' << chain[l].id << '\t' << chain[l].label;
      } else {
        map << "\t\t";
      }
    }
    map << '\n';
  }

  std::ofstream gt(dir / "ground_truth.csv");
  gt << "id,risk,probability,label,z_temporal,z_static,z_codes,z_missing\n";
  char buf[512];
  for (const auto& t : cohort.truth) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", t.id.c_str(), t.risk,
                  t.probability, t.label, t.z_temporal, t.z_static, t.z_codes, t.z_missing);
    gt << buf;
  }

  nlohmann::json j;
  j["format"] = "tckin-synth";
  j["risk"] = "b + temporal_effect*z_T + constant_effect*z_S + code_effect*z_D + missingness_effect*z_M";
  j["intercept"] = cohort.intercept;
  j["bayes_auroc"] = cohort.bayes_auroc;
  j["config"] = {{"n_episodes", cfg.n_episodes},
                 {"positive_rate", cfg.positive_rate},
                 {"n_temporal_features", cfg.n_temporal_features},
                 {"n_constant_features", cfg.n_constant_features},
                 {"missing_rate", cfg.missing_rate},
                 {"code_vocab_size", cfg.code_vocab_size},
                 {"code_groups", cfg.code_groups},
                 {"codes_per_episode", cfg.codes_per_episode},
                 {"temporal_effect", cfg.temporal_effect},
                 {"constant_effect", cfg.constant_effect},
                 {"code_effect", cfg.code_effect},
                 {"missingness_effect", cfg.missingness_effect},
                 {"informative_missingness", cfg.informative_missingness},
                 {"noise_scale", cfg.noise_scale},
                 {"seed", cfg.seed}};
  std::ofstream(dir / "generator.json") << j.dump(2) << '\n';
}

}  // namespace tckin
