#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace tckin {

struct Event {
  std::string feature;
  double offset_hours = 0.0;  // in [0, 24)
  double value = 0.0;
};

/// One ICU stay: constant attributes, timestamped measurements from the 24 h
/// window, diagnostic codes and the in-hospital death label.
struct EpisodeRecord {
  std::string id;
  std::map<std::string, double> constant_continuous;
  std::map<std::string, std::string> constant_categorical;
  std::vector<Event> events;
  std::vector<std::string> icd_codes;
  int label = 0;
};

// Line-delimited JSON, one episode per line:
//
//   {"id": "e17", "label": 1,
//    "constants": {"age": 71.0, "gender": "F", "weight": null},
//    "events": [["hr", 0.25, 88.0], ["temp", 3.5, 37.9]],
//    "codes": ["5761", "V1009"]}
//
// Numeric constants are continuous features, string constants categorical;
// null or absent means missing. Blank lines are skipped.

EpisodeRecord parse_episode(const std::string& line);
std::string format_episode(const EpisodeRecord& episode);

std::vector<EpisodeRecord> read_episodes(std::istream& in);
std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path);
void write_episodes(std::ostream& out, const std::vector<EpisodeRecord>& episodes);
void write_episodes(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes);

}  // namespace tckin
