#include "tckin/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tckin/error.hpp"
#include "tckin/hash.hpp"

namespace tckin {

using nlohmann::json;

namespace {

// Reads fields out of one JSON object, rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config field '" + where(k) + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config field '" + where(key) + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  Section sub(const char* key) { return Section(j_.at(key), where(key)); }

 private:
  std::string where(const std::string& k) const { return path_.empty() ? k : k.empty() ? path_ : path_ + "." + k; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(Section s, ModelConfig& m) {
  s.get("hidden", m.hidden);
  s.get("gcn_hidden", m.gcn_hidden);
  s.get("gcn_out", m.gcn_out);
  s.get("kan_width", m.kan_width);
  s.get("static_out", m.static_out);
  s.get("dropout", m.dropout);
  s.get("mask_injection", m.mask_injection);
  s.get("attention_projection", m.attention_projection);
  if (s.has("spline")) {
    Section sp = s.sub("spline");
    double range = m.grid.hi;
    sp.get("intervals", m.grid.intervals);
    sp.get("order", m.grid.order);
    sp.get("range", range);
    sp.get("base", m.kan_base);
    if (!(range > 0.0)) throw ConfigError("config field 'model.spline.range' must be positive");
    m.grid.lo = -range;
    m.grid.hi = range;
  }
  std::string cell = m.temporal_cell == TemporalCell::kGrud ? "grud" : "gru";
  std::string enc = m.encoder == Encoder::kKan ? "kan" : "mlp";
  s.get("temporal_cell", cell);
  s.get("encoder", enc);
  if (cell != "grud" && cell != "gru") throw ConfigError("config field 'model.temporal_cell' must be grud or gru");
  if (enc != "kan" && enc != "mlp") throw ConfigError("config field 'model.encoder' must be kan or mlp");
  m.temporal_cell = cell == "grud" ? TemporalCell::kGrud : TemporalCell::kGru;
  m.encoder = enc == "kan" ? Encoder::kKan : Encoder::kMlp;
}

void read_train(Section s, TrainConfig& t) {
  s.get("learning_rate", t.learning_rate);
  s.get("lr_decay", t.lr_decay);
  s.get("batch_size", t.batch_size);
  s.get("max_epochs", t.max_epochs);
  s.get("patience", t.patience);
  s.get("oversample_ratio", t.oversample_ratio);
  s.get("adam_beta1", t.beta1);
  s.get("adam_beta2", t.beta2);
  s.get("adam_epsilon", t.adam_eps);
  s.get("folds", t.folds);
  s.get("workers", t.workers);
  std::string policy = to_string(t.threshold_policy);
  s.get("threshold_policy", policy);
  t.threshold_policy = parse_threshold_policy(policy);
}

void read_synth(Section s, SynthConfig& c) {
  s.get("n_episodes", c.n_episodes);
  s.get("positive_rate", c.positive_rate);
  s.get("n_temporal_features", c.n_temporal_features);
  s.get("n_constant_features", c.n_constant_features);
  s.get("missing_rate", c.missing_rate);
  s.get("code_vocab_size", c.code_vocab_size);
  s.get("code_groups", c.code_groups);
  s.get("codes_per_episode", c.codes_per_episode);
  s.get("temporal_effect", c.temporal_effect);
  s.get("constant_effect", c.constant_effect);
  s.get("code_effect", c.code_effect);
  s.get("missingness_effect", c.missingness_effect);
  s.get("informative_missingness", c.informative_missingness);
  s.get("noise_scale", c.noise_scale);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  {
    Section top(j, "");
    top.get("seed", c.seed);
    top.get("variant", c.variant);
    if (top.has("model")) read_model(top.sub("model"), c.model);
    if (top.has("train")) read_train(top.sub("train"), c.train);
    if (top.has("synth")) read_synth(top.sub("synth"), c.synth);
  }
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  apply_variant(c.model, c.variant);
  c.train.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string run_config_to_json(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  const auto& s = c.synth;
  json j = json::object();
  j["seed"] = c.seed;
  j["variant"] = c.variant;
  j["model"] = {{"hidden", m.hidden},
                {"gcn_hidden", m.gcn_hidden},
                {"gcn_out", m.gcn_out},
                {"kan_width", m.kan_width},
                {"static_out", m.static_out},
                {"dropout", m.dropout},
                {"mask_injection", m.mask_injection},
                {"attention_projection", m.attention_projection},
                {"temporal_cell", m.temporal_cell == TemporalCell::kGrud ? "grud" : "gru"},
                {"encoder", m.encoder == Encoder::kKan ? "kan" : "mlp"},
                {"spline", {{"intervals", m.grid.intervals}, {"order", m.grid.order}, {"range", m.grid.hi},
                            {"base", m.kan_base}}}};
  j["train"] = {{"learning_rate", t.learning_rate},
                {"lr_decay", t.lr_decay},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"oversample_ratio", t.oversample_ratio},
                {"adam_beta1", t.beta1},
                {"adam_beta2", t.beta2},
                {"adam_epsilon", t.adam_eps},
                {"folds", t.folds},
                {"workers", t.workers},
                {"threshold_policy", to_string(t.threshold_policy)}};
  j["synth"] = {{"n_episodes", s.n_episodes},
                {"positive_rate", s.positive_rate},
                {"n_temporal_features", s.n_temporal_features},
                {"n_constant_features", s.n_constant_features},
                {"missing_rate", s.missing_rate},
                {"code_vocab_size", s.code_vocab_size},
                {"code_groups", s.code_groups},
                {"codes_per_episode", s.codes_per_episode},
                {"temporal_effect", s.temporal_effect},
                {"constant_effect", s.constant_effect},
                {"code_effect", s.code_effect},
                {"missingness_effect", s.missingness_effect},
                {"informative_missingness", s.informative_missingness},
                {"noise_scale", s.noise_scale}};
  return j.dump(2);
}

std::string config_hash(const RunConfig& config) { return fnv1a_hex(run_config_to_json(config)); }

}  // namespace tckin
