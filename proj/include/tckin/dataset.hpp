#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tckin/concept_graph.hpp"
#include "tckin/episode.hpp"
#include "tckin/preprocess.hpp"

namespace tckin {

/// Everything needed to lay out an episode the same way at training and at
/// evaluation time: feature order, vocabularies, and the CCS chains of the
/// ICD codes seen in the training cohort.
struct DataSchema {
  TemporalSchema temporal;
  ConstantSchema constants;
  CodeMapping mapping;  // restricted to observed codes
};

DataSchema infer_schema(std::span<const EpisodeRecord> episodes, const CodeMapping& mapping);
/// 16 hex digits (FNV-1a 64) over a canonical rendering of the schema.
std::string schema_hash(const DataSchema& schema);

std::string schema_to_json(const DataSchema& schema);
DataSchema schema_from_json(const std::string& text);

/// Binned and encoded cohort. Values are raw (unstandardized); the trainer
/// fits per-fold statistics on training indices only.
struct Dataset {
  DataSchema schema;
  std::shared_ptr<const ConceptGraph> graph;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<TemporalTensor> temporal;
  std::vector<Tensor> constants;
  std::vector<std::vector<std::string>> codes;  // mapped codes only
  std::vector<CodeRows> code_rows;
  std::size_t unknown_categories = 0;
  std::vector<std::string> rejected_codes;  // dropped: not in the mapping

  std::size_t size() const { return ids.size(); }
};

Dataset build_dataset(std::span<const EpisodeRecord> episodes, const DataSchema& schema);

/// Preprocessed bundle: one JSON object per line with id, label, values,
/// mask, delta (row-major T×N), constants and codes.
void write_bundle(const std::filesystem::path& path, const Dataset& data);
Dataset read_bundle(const std::filesystem::path& path, const DataSchema& schema);

/// Reads `dir`/schema.json and `dir`/tensors.jsonl.
Dataset load_preprocessed(const std::filesystem::path& dir);
void save_preprocessed(const std::filesystem::path& dir, const Dataset& data);

}  // namespace tckin
