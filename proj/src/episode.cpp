#include "tckin/episode.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tckin/error.hpp"

namespace tckin {

using nlohmann::json;

EpisodeRecord parse_episode(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed episode line: ") + e.what());
  }
  if (!j.is_object()) throw DataError("episode line is not a JSON object");
  EpisodeRecord ep;
  try {
    ep.id = j.at("id").get<std::string>();
    ep.label = j.at("label").get<int>();
    if (ep.label != 0 && ep.label != 1) throw DataError("episode " + ep.id + ": label must be 0 or 1");
    if (j.contains("constants")) {
      for (const auto& [name, v] : j["constants"].items()) {
        if (v.is_null()) continue;
        if (v.is_number()) {
          ep.constant_continuous[name] = v.get<double>();
        } else if (v.is_string()) {
          ep.constant_categorical[name] = v.get<std::string>();
        } else {
          throw DataError("episode " + ep.id + ": constant '" + name + "' must be a number, string or null");
        }
      }
    }
    if (j.contains("events")) {
      for (const auto& e : j["events"]) {
        if (!e.is_array() || e.size() != 3) throw DataError("episode " + ep.id + ": event must be [name, offset, value]");
        ep.events.push_back({e[0].get<std::string>(), e[1].get<double>(), e[2].get<double>()});
      }
    }
    if (j.contains("codes")) ep.icd_codes = j["codes"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError("episode " + (ep.id.empty() ? std::string("<no id>") : ep.id) + ": " + e.what());
  }
  return ep;
}

std::string format_episode(const EpisodeRecord& ep) {
  // Hand-rolled so number formatting is fixed (%.17g round-trips exactly).
  std::ostringstream os;
  os << std::setprecision(17);
  os << "{\"id\":" << json(ep.id).dump() << ",\"label\":" << ep.label << ",\"constants\":{";
  bool first = true;
  for (const auto& [k, v] : ep.constant_continuous) {
    os << (first ? "" : ",") << json(k).dump() << ':' << v;
    first = false;
  }
  for (const auto& [k, v] : ep.constant_categorical) {
    os << (first ? "" : ",") << json(k).dump() << ':' << json(v).dump();
    first = false;
  }
  os << "},\"events\":[";
  for (std::size_t i = 0; i < ep.events.size(); ++i) {
    const auto& e = ep.events[i];
    os << (i ? "," : "") << '[' << json(e.feature).dump() << ',' << e.offset_hours << ',' << e.value << ']';
  }
  os << "],\"codes\":[";
  for (std::size_t i = 0; i < ep.icd_codes.size(); ++i) os << (i ? "," : "") << json(ep.icd_codes[i]).dump();
  os << "]}";
  return os.str();
}

std::vector<EpisodeRecord> read_episodes(std::istream& in) {
  std::vector<EpisodeRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_episode(line));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(out.back().id).second) throw DataError("duplicate episode id '" + out.back().id + "'");
  }
  return out;
}

std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open episode file " + path.string());
  return read_episodes(in);
}

void write_episodes(std::ostream& out, const std::vector<EpisodeRecord>& episodes) {
  for (const auto& ep : episodes) out << format_episode(ep) << '\n';
}

void write_episodes(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write episode file " + path.string());
  write_episodes(out, episodes);
}

}  // namespace tckin
