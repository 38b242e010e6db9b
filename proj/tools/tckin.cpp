// tckin: generate, preprocess, train, eval, sweep, ablate.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
// failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tckin/checkpoint.hpp"
#include "tckin/config.hpp"
#include "tckin/dataset.hpp"
#include "tckin/error.hpp"
#include "tckin/model.hpp"
#include "tckin/report_io.hpp"
#include "tckin/simd/kernels.hpp"
#include "tckin/synth.hpp"
#include "tckin/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tckin;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config;
  std::string data;
  std::string mapping;
  std::string schema;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::vector<double> lr;
  std::vector<std::size_t> batch;
  std::optional<std::size_t> folds;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> workers;
  std::optional<std::string> threshold_policy;
  std::string grid;
};

// flag > file > default
RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? parse_run_config("{}") : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.variant) c.variant = *o.variant;
  if (o.lr.size() == 1) c.train.learning_rate = o.lr[0];
  if (o.batch.size() == 1) c.train.batch_size = o.batch[0];
  if (o.folds) c.train.folds = *o.folds;
  if (o.epochs) c.train.max_epochs = *o.epochs;
  if (o.workers) c.train.workers = *o.workers;
  if (o.threshold_policy) c.train.threshold_policy = parse_threshold_policy(*o.threshold_policy);
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  apply_variant(c.model, c.variant);
  c.train.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// The only file carrying a timestamp.
void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c, const std::string& schema_hash,
                    const std::vector<std::string>& artifacts) {
  json j;
  j["tool"] = "tckin";
  j["version"] = kVersion;
  j["command"] = command;
  j["config_hash"] = config_hash(c);
  j["schema_hash"] = schema_hash;
  j["seed"] = c.seed;
  j["simd"] = simd::active().name;
  j["artifacts"] = artifacts;
  j["created"] = utc_now();
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required flag ") + flag);
}

Dataset load_data(const std::string& path) {
  require(path, "--data");
  if (!fs::is_directory(path)) throw DataError("--data " + path + " is not a preprocessed directory");
  return load_preprocessed(path);
}

int cmd_generate(const Options& o) {
  require(o.out, "--out");
  const RunConfig c = resolve(o);
  const SynthCohort cohort = generate(c.synth);
  write_cohort(o.out, cohort, c.synth);
  write_manifest(o.out, "generate", c, "", {"cohort.jsonl", "mapping.tsv", "ground_truth.csv", "generator.json"});
  std::cout << "wrote " << cohort.episodes.size() << " episodes to " << o.out << " (bayes auroc "
            << cohort.bayes_auroc << ")\n";
  return 0;
}

int cmd_preprocess(const Options& o) {
  require(o.data, "--data");
  require(o.out, "--out");
  const RunConfig c = resolve(o);
  const auto episodes = read_episodes(fs::path(o.data));
  DataSchema schema;
  if (!o.schema.empty()) {
    schema = schema_from_json(read_text(o.schema));
  } else {
    require(o.mapping, "--mapping");
    schema = infer_schema(episodes, load_mapping(o.mapping));
  }
  const Dataset d = build_dataset(episodes, schema);
  save_preprocessed(o.out, d);
  write_manifest(o.out, "preprocess", c, schema_hash(schema), {"schema.json", "tensors.jsonl"});
  std::cout << "episodes " << d.size() << ", temporal features " << schema.temporal.features.size()
            << ", constant width " << schema.constants.width() << ", graph nodes " << d.graph->size() << " ("
            << d.graph->ccs_count() << " CCS, " << d.graph->icd_count() << " ICD)\n";
  if (!d.rejected_codes.empty()) std::cout << "rejected unmapped codes: " << d.rejected_codes.size() << "\n";
  if (d.unknown_categories > 0) std::cout << "unknown categorical values: " << d.unknown_categories << "\n";
  if (schema.mapping.truncated_levels > 0) {
    std::cout << "warning: " << schema.mapping.truncated_levels << " CCS levels beyond 3 truncated\n";
  }
  return 0;
}

std::string checkpoint_metadata(const TckinModel& model, const Dataset& d, const RunConfig& c, const FoldResult& f) {
  json j;
  j["model"] = json::parse(model.manifest(schema_hash(d.schema)));
  j["run_config"] = json::parse(run_config_to_json(c));
  j["fold"] = f.fold;
  j["best_epoch"] = f.best_epoch;
  j["statistics"] = json::parse(statistics_json(f.stats));
  return j.dump();
}

void write_cv_outputs(const fs::path& dir, const CrossValidation& cv, const Dataset& d, const RunConfig& c,
                      std::vector<std::string>& artifacts, bool checkpoints) {
  fs::create_directories(dir);
  if (checkpoints) {
    const TckinModel model = default_factory(c.variant_model())(d);
    for (const auto& f : cv.folds) {
      const std::string name = "fold_" + std::to_string(f.fold) + ".ckpt";
      save_checkpoint(dir / name, f.params, checkpoint_metadata(model, d, c, f));
      artifacts.push_back(name);
    }
  }
  write_text(dir / "report.json", cv_report_json(cv, c.train) + "\n");
  write_text(dir / "curves.csv", curves_csv(cv));
  write_text(dir / "predictions.csv", predictions_csv(cv, d));
  write_text(dir / "summary.txt", summary_header() + summary_row(cv.variant, cv.aggregate));
  for (const char* a : {"report.json", "curves.csv", "predictions.csv", "summary.txt"}) artifacts.emplace_back(a);
}

int cmd_train(const Options& o) {
  require(o.out, "--out");
  const RunConfig c = resolve(o);
  const Dataset d = load_data(o.data);
  const CrossValidation cv = cross_validate(d, c.variant_model(), c.train);
  std::vector<std::string> artifacts;
  write_cv_outputs(o.out, cv, d, c, artifacts, true);
  write_manifest(o.out, "train", c, schema_hash(d.schema), artifacts);
  std::cout << summary_header() << summary_row(cv.variant, cv.aggregate);
  return 0;
}

int cmd_eval(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::exception&) {
    throw DataError("checkpoint metadata is not a tckin model manifest");
  }
  const Dataset d = load_data(o.data);
  const std::string want = meta.at("model").at("schema_hash").get<std::string>();
  const std::string have = schema_hash(d.schema);
  if (want != have) {
    throw DataError("schema hash mismatch: checkpoint was trained on " + want + ", data has " + have +
                    " (re-run preprocess with --schema from the training data)");
  }
  RunConfig c = parse_run_config(meta.at("run_config").dump());
  ThresholdPolicy policy = c.train.threshold_policy;
  if (o.threshold_policy) policy = parse_threshold_policy(*o.threshold_policy);

  const TckinModel model = default_factory(c.variant_model())(d);
  ParamStore store;
  Rng rng(0);
  model.init_params(store, rng);
  assign_params(store, ckpt.params);
  const FoldStatistics stats = statistics_from_json(meta.at("statistics").dump());
  const PreparedInputs in = prepare_inputs(d, stats);

  std::vector<Prediction> preds;
  std::vector<std::size_t> all(d.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (std::size_t b = 0; b < all.size(); b += 256) {
    const auto ids = std::span<const std::size_t>(all).subspan(b, std::min<std::size_t>(256, all.size() - b));
    const auto p = model.predict(store, make_batch(ids, in.temporal, in.constants, d.code_rows, {}, stats.empirical_mean));
    for (std::size_t k = 0; k < p.size(); ++k) preds.push_back({p[k], d.labels[ids[k]]});
  }
  const EvalReport r = report(preds, policy);
  std::cout << summary_header() << summary_row(variant_name(c.variant_model()), r);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text(fs::path(o.out) / "eval.json", eval_report_json(r, policy) + "\n");
    write_manifest(o.out, "eval", c, have, {"eval.json"});
  }
  return 0;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError(std::string("bad ") + what + " value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

int cmd_sweep(const Options& o) {
  require(o.out, "--out");
  const RunConfig c = resolve(o);
  std::vector<double> lrs{1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<std::size_t> batches{16, 32, 64, 128};
  if (!o.grid.empty()) {
    const auto colon = o.grid.find(':');
    if (colon == std::string::npos) throw ConfigError("--grid must look like LR,LR,...:BATCH,BATCH,...");
    lrs = parse_list<double>(o.grid.substr(0, colon), "--grid learning rate");
    batches = parse_list<std::size_t>(o.grid.substr(colon + 1), "--grid batch size");
  }
  if (!o.lr.empty()) lrs = o.lr;
  if (!o.batch.empty()) batches = o.batch;
  const Dataset d = load_data(o.data);
  const auto cells = sweep(d, c.variant_model(), c.train, lrs, batches);
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "sweep.csv", sweep_csv(cells));
  write_manifest(o.out, "sweep", c, schema_hash(d.schema), {"sweep.csv"});
  std::cout << sweep_csv(cells);
  return 0;
}

int cmd_ablate(const Options& o) {
  require(o.out, "--out");
  RunConfig c = resolve(o);
  const Dataset d = load_data(o.data);
  std::string table = summary_header();
  for (const char* v : {"full", "no_grud", "no_kan"}) {
    std::vector<std::string> artifacts;
    c.variant = v;
    const CrossValidation cv = cross_validate(d, c.variant_model(), c.train);
    write_cv_outputs(fs::path(o.out) / v, cv, d, c, artifacts, false);
    table += summary_row(v, cv.aggregate);
    std::cout << summary_row(v, cv.aggregate) << std::flush;
  }
  write_text(fs::path(o.out) / "ablation.txt", table);
  c.variant = "full";
  write_manifest(o.out, "ablate", c, schema_hash(d.schema),
                 {"ablation.txt", "full/report.json", "no_grud/report.json", "no_kan/report.json"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TCKIN sepsis mortality-risk model: synthetic cohorts, preprocessing, training, evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed; overrides the config");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "preprocessed directory");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--variant", o.variant, "full | no_grud | no_kan");
    sub->add_option("--folds", o.folds, "cross-validation folds");
    sub->add_option("--epochs", o.epochs, "maximum epochs");
    sub->add_option("--workers", o.workers, "folds trained concurrently");
    sub->add_option("--threshold-policy", o.threshold_policy, "fixed | youden");
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic cohort");
  common(gen);
  gen->add_option("--out", o.out, "output directory");

  auto* pre = app.add_subcommand("preprocess", "bin, encode and index a cohort");
  common(pre);
  pre->add_option("--data", o.data, "episode file (JSONL)");
  pre->add_option("--mapping", o.mapping, "ICD to CCS mapping (TSV)");
  pre->add_option("--schema", o.schema, "reuse the layout of an existing schema.json");
  pre->add_option("--out", o.out, "output directory");

  auto* train = app.add_subcommand("train", "k-fold cross-validated training");
  common(train);
  training(train);
  train->add_option("--lr", o.lr, "learning rate")->expected(1);
  train->add_option("--batch", o.batch, "batch size")->expected(1);

  auto* eval = app.add_subcommand("eval", "evaluate a fold checkpoint on preprocessed data");
  eval->add_option("--checkpoint", o.checkpoint, "fold checkpoint");
  eval->add_option("--data", o.data, "preprocessed directory");
  eval->add_option("--out", o.out, "optional output directory");
  eval->add_option("--threshold-policy", o.threshold_policy, "fixed | youden");

  auto* sw = app.add_subcommand("sweep", "learning-rate by batch-size grid");
  common(sw);
  training(sw);
  sw->add_option("--lr", o.lr, "learning rates (comma separated)")->delimiter(',');
  sw->add_option("--batch", o.batch, "batch sizes (comma separated)")->delimiter(',');
  sw->add_option("--grid", o.grid, "LR,...:BATCH,... (default 1e-4,1e-3,1e-2,1e-1:16,32,64,128)");

  auto* abl = app.add_subcommand("ablate", "full vs no_grud vs no_kan");
  common(abl);
  training(abl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*pre) return cmd_preprocess(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*sw) return cmd_sweep(o);
    if (*abl) return cmd_ablate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
