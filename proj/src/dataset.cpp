#include "tckin/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tckin/error.hpp"
#include "tckin/hash.hpp"

namespace tckin {

using nlohmann::json;

namespace {

json mapping_json(const CodeMapping& m) {
  json out = json::object();
  for (const auto& [icd, chain] : m.icd_to_ccs) {
    json levels = json::array();
    for (const auto& l : chain) levels.push_back({l.id, l.label});
    out[icd] = levels;
  }
  return out;
}

std::shared_ptr<const ConceptGraph> graph_for(const DataSchema& schema) {
  std::vector<std::string> codes;
  for (const auto& [icd, _] : schema.mapping.icd_to_ccs) codes.push_back(icd);
  if (codes.empty()) throw DataError("no episode carries a mapped ICD code");
  return std::make_shared<const ConceptGraph>(build_graph(codes, schema.mapping));
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

DataSchema infer_schema(std::span<const EpisodeRecord> episodes, const CodeMapping& mapping) {
  if (episodes.empty()) throw DataError("empty cohort");
  DataSchema s;
  s.temporal = infer_temporal_schema(episodes);
  if (s.temporal.features.empty()) throw DataError("cohort has no temporal events");
  s.constants = infer_constant_schema(episodes);
  s.mapping.truncated_levels = mapping.truncated_levels;
  for (const auto& ep : episodes) {
    for (const auto& code : ep.icd_codes) {
      auto it = mapping.icd_to_ccs.find(code);
      if (it != mapping.icd_to_ccs.end()) s.mapping.icd_to_ccs.insert(*it);
    }
  }
  return s;
}

std::string schema_hash(const DataSchema& schema) {
  std::ostringstream os;
  os << "temporal";
  for (const auto& f : schema.temporal.features) os << '|' << f;
  os << "\nconstants";
  for (const auto& c : schema.constants.column_names()) os << '|' << c;
  os << "\ncodes";
  for (const auto& [icd, chain] : schema.mapping.icd_to_ccs) {
    os << '|' << icd;
    for (const auto& l : chain) os << '>' << l.id;
  }
  return fnv1a_hex(os.str());
}

std::string schema_to_json(const DataSchema& schema) {
  json j;
  j["format"] = "tckin-schema";
  j["version"] = 1;
  j["hash"] = schema_hash(schema);
  j["temporal_features"] = schema.temporal.features;
  j["constant_continuous"] = schema.constants.continuous;
  json cats = json::array();
  for (const auto& c : schema.constants.categorical) cats.push_back({{"name", c.name}, {"vocabulary", c.vocabulary}});
  j["constant_categorical"] = cats;
  j["code_mapping"] = mapping_json(schema.mapping);
  return j.dump(2);
}

DataSchema schema_from_json(const std::string& text) {
  DataSchema s;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "tckin-schema") throw DataError("not a tckin schema file");
    s.temporal.features = j.at("temporal_features").get<std::vector<std::string>>();
    s.constants.continuous = j.at("constant_continuous").get<std::vector<std::string>>();
    for (const auto& c : j.at("constant_categorical")) {
      s.constants.categorical.push_back(
          {c.at("name").get<std::string>(), c.at("vocabulary").get<std::vector<std::string>>()});
    }
    for (const auto& [icd, levels] : j.at("code_mapping").items()) {
      auto& chain = s.mapping.icd_to_ccs[icd];
      for (const auto& l : levels) chain.push_back({l.at(0).get<std::string>(), l.at(1).get<std::string>()});
    }
    if (j.contains("hash") && j["hash"].get<std::string>() != schema_hash(s)) {
      throw DataError("schema file hash does not match its contents");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed schema: ") + e.what());
  }
  return s;
}

Dataset build_dataset(std::span<const EpisodeRecord> episodes, const DataSchema& schema) {
  if (episodes.empty()) throw DataError("empty cohort");
  Dataset d;
  d.schema = schema;
  d.graph = graph_for(schema);
  std::set<std::string> rejected;
  for (const auto& ep : episodes) {
    d.ids.push_back(ep.id);
    d.labels.push_back(ep.label);
    try {
      d.temporal.push_back(bin_events(ep, schema.temporal));
    } catch (const DataError& e) {
      throw DataError("episode '" + ep.id + "': " + e.what());
    }
    auto cv = encode_constants(ep, schema.constants);
    d.unknown_categories += cv.unknown_categories;
    d.constants.push_back(std::move(cv.values));
    std::vector<std::string> kept;
    for (const auto& code : ep.icd_codes) {
      if (d.graph->icd_index.contains(code)) {
        kept.push_back(code);
      } else {
        rejected.insert(code);
      }
    }
    d.code_rows.push_back(code_rows(*d.graph, kept));
    d.codes.push_back(std::move(kept));
  }
  d.rejected_codes.assign(rejected.begin(), rejected.end());
  return d;
}

void write_bundle(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    json j;
    j["id"] = data.ids[i];
    j["label"] = data.labels[i];
    j["values"] = to_vec(data.temporal[i].values);
    j["mask"] = to_vec(data.temporal[i].mask);
    j["delta"] = to_vec(data.temporal[i].delta);
    j["constants"] = to_vec(data.constants[i]);
    j["codes"] = data.codes[i];
    out << j.dump() << '\n';
  }
}

Dataset read_bundle(const std::filesystem::path& path, const DataSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  Dataset d;
  d.schema = schema;
  d.graph = graph_for(schema);
  const std::size_t N = schema.temporal.features.size(), M = schema.constants.width();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      auto grid = [&](const char* key) {
        auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != kWindowHours * N) throw DataError(std::string(key) + " has the wrong length");
        return Tensor({kWindowHours, N}, std::move(v));
      };
      TemporalTensor t{grid("values"), grid("mask"), grid("delta")};
      auto c = j.at("constants").get<std::vector<double>>();
      if (c.size() != M) throw DataError("constants have the wrong length");
      const int label = j.at("label").get<int>();
      if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
      auto codes = j.at("codes").get<std::vector<std::string>>();
      d.code_rows.push_back(code_rows(*d.graph, codes));
      d.ids.push_back(j.at("id").get<std::string>());
      d.labels.push_back(label);
      d.temporal.push_back(std::move(t));
      d.constants.emplace_back(Shape{M}, std::move(c));
      d.codes.push_back(std::move(codes));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (d.ids.empty()) throw DataError(path.string() + " holds no episodes");
  return d;
}

Dataset load_preprocessed(const std::filesystem::path& dir) {
  std::ifstream in(dir / "schema.json");
  if (!in) throw DataError("missing " + (dir / "schema.json").string());
  std::stringstream ss;
  ss << in.rdbuf();
  return read_bundle(dir / "tensors.jsonl", schema_from_json(ss.str()));
}

void save_preprocessed(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "schema.json");
  if (!out) throw DataError("cannot write " + (dir / "schema.json").string());
  out << schema_to_json(data.schema) << '\n';
  write_bundle(dir / "tensors.jsonl", data);
}

}  // namespace tckin
