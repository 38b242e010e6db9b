#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tckin/autodiff.hpp"
#include "tckin/tensor.hpp"

namespace tckin {

/// Deepest CCS level modeled; deeper levels in a mapping file are dropped.
inline constexpr std::size_t kMaxCcsLevels = 3;

struct CcsLevel {
  std::string id;     // e.g. "9.7"
  std::string label;  // e.g. "Biliary tract disease"
};

/// ICD code -> CCS chain from level 1 down. Chains are prefix-consistent:
/// every level id extends its parent id with ".<digits>".
struct CodeMapping {
  std::map<std::string, std::vector<CcsLevel>> icd_to_ccs;
  std::size_t truncated_levels = 0;  // levels beyond kMaxCcsLevels that were dropped
};

/// Tab-separated: icd, l1 id, l1 label, l2 id, l2 label, l3 id, l3 label.
/// Trailing empty levels are allowed; '#' lines and a header row starting
/// with "icd" are skipped.
CodeMapping parse_mapping(std::istream& in);
CodeMapping load_mapping(const std::filesystem::path& path);

enum class NodeKind { kCcs, kIcd };

/// Medical concept forest over ICD leaves and their CCS ancestors.
///
/// `normalized` is D̃^{-1/2} Ã D̃^{-1/2} where Ã is the parent<->child
/// adjacency (symmetrized) plus the identity. Initial node features are the
/// identity matrix, so the first GCN weight has one row per node.
struct ConceptGraph {
  std::vector<std::string> nodes;  // "CCS:<id>" or "ICD:<code>"
  std::vector<NodeKind> kinds;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (parent, child)
  std::vector<std::ptrdiff_t> parent;                      // -1 for roots
  Tensor adjacency;   // Ã, [V×V]
  Tensor degree;      // diagonal of D̃, [V]
  Tensor normalized;  // [V×V]
  std::map<std::string, std::size_t> icd_index;
  std::map<std::string, std::size_t> ccs_index;
  std::vector<std::string> rejected;  // observed codes absent from the mapping

  std::size_t size() const { return nodes.size(); }
  std::size_t ccs_count() const { return ccs_index.size(); }
  std::size_t icd_count() const { return icd_index.size(); }
};

/// Builds the graph over `codes` and all CCS ancestors on their chains.
/// Codes missing from the mapping are listed in `rejected` and left out.
/// Throws DataError when no code can be placed.
ConceptGraph build_graph(std::span<const std::string> codes, const CodeMapping& mapping);

/// Recomputes adjacency/degree/normalized from `edges` (e.g. after node
/// reordering in tests).
void rebuild_adjacency(ConceptGraph& graph);

/// Two-layer GCN: relu(Â relu(Â H0 W0) W1) with H0 = I. Returns [V×F2].
Var gcn_forward(const ConceptGraph& graph, Var w0, Var w1);
/// Same, with explicit initial features H0 [V×F].
Var gcn_forward(const ConceptGraph& graph, Var h0, Var w0, Var w1);

/// Row indices into the GCN output for one episode: its ICD codes in input
/// order (duplicates dropped) and the union of their CCS ancestors,
/// deduplicated in first-occurrence order (level 1 before level 2, ...).
struct CodeRows {
  std::vector<std::size_t> icd;
  std::vector<std::size_t> ccs;
};

/// Throws DataError for a code absent from the graph.
CodeRows code_rows(const ConceptGraph& graph, std::span<const std::string> icd_codes);

struct CodeEmbeddings {
  Var icd;  // [c×F2]
  Var ccs;  // [c'×F2]
};

CodeEmbeddings lookup_embeddings(Var node_embeddings, const CodeRows& rows);

}  // namespace tckin
