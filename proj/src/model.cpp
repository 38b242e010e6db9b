#include "tckin/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <json.hpp>

#include "tckin/error.hpp"

namespace tckin {

std::string variant_name(const ModelConfig& config) {
  const bool gru = config.temporal_cell == TemporalCell::kGru;
  const bool mlp = config.encoder == Encoder::kMlp;
  if (gru && mlp) return "no_grud+no_kan";
  if (gru) return "no_grud";
  if (mlp) return "no_kan";
  return "full";
}

Mlp::Mlp(std::string prefix, std::size_t n_in, std::size_t n_hidden, std::size_t n_out)
    : prefix_(std::move(prefix)), n_in_(n_in), n_hidden_(n_hidden), n_out_(n_out) {
  if (n_in == 0 || n_hidden == 0 || n_out == 0) throw ConfigError("perceptron dimensions must be positive");
}

void Mlp::init_params(ParamStore& store, Rng& rng) const {
  auto dense = [&](std::size_t fan_in, std::size_t fan_out) {
    Tensor w({fan_in, fan_out});
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.values()) v = rng.uniform(-a, a);
    return w;
  };
  store.add(prefix_ + ".w1", dense(n_in_, n_hidden_));
  store.add(prefix_ + ".b1", Tensor({n_hidden_}));
  store.add(prefix_ + ".w2", dense(n_hidden_, n_out_));
  store.add(prefix_ + ".b2", Tensor({n_out_}));
}

Var Mlp::forward(Tape& tape, ParamStore& store, Var x) const {
  if (x.cols() != n_in_) throw ShapeError("perceptron " + prefix_ + ": expected " + std::to_string(n_in_) + " inputs");
  Var h = silu(add(matmul(x, tape.param(store, prefix_ + ".w1")), tape.param(store, prefix_ + ".b1")));
  return add(matmul(h, tape.param(store, prefix_ + ".w2")), tape.param(store, prefix_ + ".b2"));
}

std::size_t matched_hidden(std::size_t budget, std::size_t n_in, std::size_t n_out) {
  // (n_in + 1) h + (h + 1) n_out = budget
  const double h = (static_cast<double>(budget) - static_cast<double>(n_out)) / static_cast<double>(n_in + 1 + n_out);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(h)));
}

TckinModel::TckinModel(ModelConfig config, std::shared_ptr<const ConceptGraph> graph, std::size_t n_temporal,
                       std::size_t n_constant)
    : config_(config), graph_(std::move(graph)), n_temporal_(n_temporal), n_constant_(n_constant) {
  if (!graph_) throw ConfigError("model needs a concept graph");
  if (n_temporal_ == 0) throw ConfigError("model needs at least one temporal feature");
  if (!(config_.dropout >= 0.0 && config_.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (config_.hidden == 0 || config_.gcn_hidden == 0 || config_.gcn_out == 0 || config_.kan_width == 0 ||
      config_.static_out == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (config_.temporal_cell == TemporalCell::kGrud) {
    grud_ = GrudEncoder("temporal", GrudConfig{n_temporal_, config_.hidden, config_.mask_injection, true, true});
  } else {
    gru_ = GruEncoder("temporal", n_temporal_, config_.hidden);
  }
  KanLayerConfig l0{n_constant_, config_.kan_width, config_.grid, config_.kan_base};
  KanLayerConfig l1{config_.kan_width, config_.static_out, config_.grid, config_.kan_base};
  KanLayerConfig head{config_.fused_width(), 1, config_.grid, config_.kan_base};
  if (config_.encoder == Encoder::kKan) {
    if (n_constant_ > 0) static_kan_ = {KanLayer("static.kan0", l0), KanLayer("static.kan1", l1)};
    head_kan_ = KanLayer("head.kan", head);
  } else {
    // Budgets follow the KAN layers the perceptrons replace.
    auto kan_params = [&](const KanLayerConfig& c) {
      return c.n_in * c.n_out * (c.grid.num_basis() + (c.base_enabled ? 2 : 1));
    };
    if (n_constant_ > 0) {
      const std::size_t budget = kan_params(l0) + kan_params(l1);
      static_mlp_ = Mlp("static.mlp", n_constant_, matched_hidden(budget, n_constant_, config_.static_out),
                        config_.static_out);
    }
    head_mlp_ = Mlp("head.mlp", config_.fused_width(), matched_hidden(kan_params(head), config_.fused_width(), 1), 1);
  }
  attention_ = DiagnosisAttention("attention", AttentionConfig{config_.gcn_out, config_.attention_projection});
}

void TckinModel::init_params(ParamStore& store, Rng& rng) const {
  if (config_.temporal_cell == TemporalCell::kGrud) {
    grud_.init_params(store, rng);
  } else {
    gru_.init_params(store, rng);
  }
  if (config_.encoder == Encoder::kKan) {
    for (const auto& l : static_kan_) l.init_params(store, rng);
    head_kan_.init_params(store, rng);
  } else {
    if (n_constant_ > 0) static_mlp_.init_params(store, rng);
    head_mlp_.init_params(store, rng);
  }
  auto glorot = [&](std::size_t r, std::size_t c) {
    Tensor w({r, c});
    const double a = std::sqrt(6.0 / static_cast<double>(r + c));
    for (double& v : w.values()) v = rng.uniform(-a, a);
    return w;
  };
  store.add("gcn.w0", glorot(graph_->size(), config_.gcn_hidden));
  store.add("gcn.w1", glorot(config_.gcn_hidden, config_.gcn_out));
  attention_.init_params(store, rng);
}

Var TckinModel::fused(Tape& tape, ParamStore& store, const ModelBatch& batch) const {
  const std::size_t B = batch.size();
  if (B == 0) throw DataError("empty batch");
  if (batch.temporal.batch != B || batch.constants.rows() != B) throw ShapeError("batch parts disagree on size");
  if (batch.temporal.features != n_temporal_) {
    throw ShapeError("model expects " + std::to_string(n_temporal_) + " temporal features, batch has " +
                     std::to_string(batch.temporal.features));
  }
  const std::size_t M = batch.constants.size() / B;
  if (M != n_constant_) {
    throw ShapeError("model expects " + std::to_string(n_constant_) + " constant columns, batch has " +
                     std::to_string(M));
  }

  Var h_d = config_.temporal_cell == TemporalCell::kGrud ? grud_.encode(tape, store, batch.temporal)
                                                          : gru_.encode(tape, store, batch.temporal);
  Var h_s;
  if (n_constant_ == 0) {
    h_s = tape.constant(Tensor({B, config_.static_out}));
  } else {
    Var x = tape.constant(batch.constants.reshaped({B, M}));
    h_s = config_.encoder == Encoder::kKan ? kan_encode(tape, store, static_kan_, x)
                                           : static_mlp_.forward(tape, store, x);
  }

  Var emb = gcn_forward(*graph_, tape.param(store, "gcn.w0"), tape.param(store, "gcn.w1"));
  std::vector<Var> rows;
  rows.reserve(B);
  for (const auto& cr : batch.codes) {
    if (cr.icd.empty()) {
      rows.push_back(tape.constant(Tensor({1, config_.gcn_out})));
      continue;
    }
    const CodeEmbeddings e = lookup_embeddings(emb, cr);
    rows.push_back(attention_.forward(tape, store, e.icd, e.ccs));
  }
  Var h_icd = concat_rows(rows);
  const std::array<Var, 3> parts{h_d, h_s, h_icd};
  return concat_cols(parts);
}

Var TckinModel::forward(Tape& tape, ParamStore& store, const ModelBatch& batch, Mode mode, Rng* dropout_rng) const {
  Var f = fused(tape, store, batch);
  if (mode == Mode::kTrain && config_.dropout > 0.0) {
    if (!dropout_rng) throw ConfigError("train mode with dropout needs a random stream");
    const double keep = 1.0 - config_.dropout;
    Tensor mask(f.shape());
    for (double& m : mask.values()) m = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    f = mul(f, tape.constant(std::move(mask)));
  }
  return config_.encoder == Encoder::kKan ? head_kan_.forward(tape, store, f) : head_mlp_.forward(tape, store, f);
}

std::vector<double> TckinModel::predict(ParamStore& store, const ModelBatch& batch) const {
  Tape tape;
  const Tensor& logits = forward(tape, store, batch, Mode::kEval).value();
  std::vector<double> p(logits.size());
  const double lo = 0x1p-1022, hi = std::nextafter(1.0, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double z = logits[i];
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    p[i] = std::clamp(s, lo, hi);
  }
  return p;
}

std::string TckinModel::manifest(const std::string& schema_hash) const {
  nlohmann::json j;
  j["format"] = "tckin-model";
  j["version"] = 1;
  j["variant"] = variant_name(config_);
  j["schema_hash"] = schema_hash;
  j["inputs"] = {{"temporal_features", n_temporal_}, {"constant_width", n_constant_}, {"graph_nodes", graph_->size()}};
  j["dims"] = {{"hidden", config_.hidden},       {"gcn_hidden", config_.gcn_hidden},
               {"gcn_out", config_.gcn_out},     {"kan_width", config_.kan_width},
               {"static_out", config_.static_out}, {"fused", config_.fused_width()}};
  j["spline"] = {{"lo", config_.grid.lo},
                 {"hi", config_.grid.hi},
                 {"intervals", config_.grid.intervals},
                 {"order", config_.grid.order},
                 {"base", config_.kan_base}};
  j["flags"] = {{"temporal_cell", config_.temporal_cell == TemporalCell::kGrud ? "grud" : "gru"},
                {"encoder", config_.encoder == Encoder::kKan ? "kan" : "mlp"},
                {"mask_injection", config_.mask_injection},
                {"attention_projection", config_.attention_projection},
                {"dropout", config_.dropout}};
  j["fusion_order"] = {"h_D", "h_s", "h_icd"};
  return j.dump(2);
}

ModelConfig apply_variant(ModelConfig config, const std::string& variant) {
  if (variant == "full") return config;
  if (variant == "no_grud") {
    config.temporal_cell = TemporalCell::kGru;
  } else if (variant == "no_kan") {
    config.encoder = Encoder::kMlp;
  } else {
    throw ConfigError("unknown variant '" + variant + "' (expected full, no_grud or no_kan)");
  }
  return config;
}

TckinModel make_ablation(const TckinModel& model, const std::string& which) {
  if (which != "no_grud" && which != "no_kan") {
    throw ConfigError("unknown ablation '" + which + "' (expected no_grud or no_kan)");
  }
  return TckinModel(apply_variant(model.config(), which), model.graph(), model.n_temporal(), model.n_constant());
}

std::size_t copy_shared_params(ParamStore& dst, const ParamStore& src) {
  std::size_t n = 0;
  for (auto& [name, entry] : dst) {
    if (!src.contains(name)) continue;
    const Tensor& v = src.value(name);
    if (v.shape() != entry.value.shape()) continue;
    entry.value = v;
    ++n;
  }
  return n;
}

double binary_cross_entropy(std::span<const double> probabilities, std::span<const double> labels) {
  if (probabilities.size() != labels.size()) throw ShapeError("probabilities and labels differ in length");
  if (probabilities.empty()) throw DataError("loss of an empty batch");
  constexpr double eps = 1e-7;
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw DataError("label outside {0,1}");
    const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
    s -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return s / static_cast<double>(labels.size());
}

ModelBatch make_batch(std::span<const std::size_t> ids, std::span<const TemporalTensor> temporal,
                      std::span<const Tensor> constants, std::span<const CodeRows> codes,
                      std::span<const int> labels, const Tensor& empirical_mean) {
  if (ids.empty()) throw DataError("empty batch");
  ModelBatch b;
  std::vector<const TemporalTensor*> ptrs;
  ptrs.reserve(ids.size());
  const std::size_t M = constants.empty() ? 0 : constants[ids[0]].size();
  b.constants = Tensor({ids.size(), M});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t i = ids[r];
    ptrs.push_back(&temporal[i]);
    const Tensor& c = constants[i];
    if (c.size() != M) throw ShapeError("constant vectors differ in width");
    std::copy(c.data(), c.data() + M, b.constants.data() + r * M);
    b.codes.push_back(codes[i]);
    if (!labels.empty()) b.labels.push_back(labels[i]);
  }
  b.temporal = make_sequence_batch(ptrs, empirical_mean);
  return b;
}

}  // namespace tckin
