#include "tckin/concept_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tckin/error.hpp"

namespace tckin {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, '\t')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = cell.find_first_not_of(' ');
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b));
  }
  return out;
}

bool extends(const std::string& child, const std::string& parent) {
  return child.size() > parent.size() + 1 && child.compare(0, parent.size(), parent) == 0 &&
         child[parent.size()] == '.';
}

}  // namespace

CodeMapping parse_mapping(std::istream& in) {
  CodeMapping m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_tabs(line);
    if (lineno == 1 && !cells.empty()) {
      std::string head = cells[0];
      std::transform(head.begin(), head.end(), head.begin(), [](unsigned char c) { return std::tolower(c); });
      if (head.starts_with("icd")) continue;
    }
    const std::string where = "mapping line " + std::to_string(lineno);
    if (cells.size() < 3) throw DataError(where + ": need at least an ICD code and one CCS level");
    const std::string& icd = cells[0];
    if (icd.empty()) throw DataError(where + ": empty ICD code");
    std::vector<CcsLevel> chain;
    for (std::size_t c = 1; c < cells.size(); c += 2) {
      const std::string id = cells[c];
      const std::string label = c + 1 < cells.size() ? cells[c + 1] : std::string();
      if (id.empty()) break;
      if (chain.size() == kMaxCcsLevels) {
        ++m.truncated_levels;
        continue;
      }
      if (!chain.empty() && !extends(id, chain.back().id)) {
        throw DataError(where + ": CCS id '" + id + "' does not extend its parent '" + chain.back().id + "'");
      }
      chain.push_back({id, label});
    }
    if (chain.empty()) throw DataError(where + ": ICD code '" + icd + "' has no CCS level");
    if (!m.icd_to_ccs.emplace(icd, std::move(chain)).second) {
      throw DataError(where + ": ICD code '" + icd + "' mapped twice");
    }
  }
  return m;
}

CodeMapping load_mapping(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mapping file " + path.string());
  return parse_mapping(in);
}

void rebuild_adjacency(ConceptGraph& g) {
  const std::size_t V = g.nodes.size();
  g.adjacency = Tensor({V, V});
  for (std::size_t i = 0; i < V; ++i) g.adjacency.at(i, i) = 1.0;
  for (auto [p, c] : g.edges) {
    g.adjacency.at(p, c) = 1.0;
    g.adjacency.at(c, p) = 1.0;
  }
  g.degree = Tensor({V});
  for (std::size_t i = 0; i < V; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < V; ++j) s += g.adjacency.at(i, j);
    g.degree[i] = s;
  }
  g.normalized = Tensor({V, V});
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t j = 0; j < V; ++j)
      g.normalized.at(i, j) = g.adjacency.at(i, j) / std::sqrt(g.degree[i] * g.degree[j]);
}

ConceptGraph build_graph(std::span<const std::string> codes, const CodeMapping& mapping) {
  if (codes.empty()) throw DataError("cannot build a concept graph from an empty code set");
  ConceptGraph g;
  std::set<std::string> icd_set;
  std::set<std::string> rejected;
  std::map<std::string, std::string> ccs_parent;  // ccs id -> parent ccs id ("" for level 1)
  for (const auto& code : codes) {
    auto it = mapping.icd_to_ccs.find(code);
    if (it == mapping.icd_to_ccs.end()) {
      rejected.insert(code);
      continue;
    }
    icd_set.insert(code);
    std::string parent;
    for (const auto& level : it->second) {
      auto [pos, inserted] = ccs_parent.emplace(level.id, parent);
      if (!inserted && pos->second != parent) {
        throw DataError("CCS node '" + level.id + "' has two parents ('" + pos->second + "', '" + parent + "')");
      }
      parent = level.id;
    }
  }
  if (icd_set.empty()) throw DataError("none of the observed codes appear in the mapping");

  for (const auto& [id, _] : ccs_parent) {
    g.ccs_index[id] = g.nodes.size();
    g.nodes.push_back("CCS:" + id);
    g.kinds.push_back(NodeKind::kCcs);
  }
  for (const auto& code : icd_set) {
    g.icd_index[code] = g.nodes.size();
    g.nodes.push_back("ICD:" + code);
    g.kinds.push_back(NodeKind::kIcd);
  }
  g.parent.assign(g.nodes.size(), -1);
  for (const auto& [id, parent] : ccs_parent) {
    if (parent.empty()) continue;
    const std::size_t p = g.ccs_index.at(parent), c = g.ccs_index.at(id);
    g.edges.emplace_back(p, c);
    g.parent[c] = static_cast<std::ptrdiff_t>(p);
  }
  for (const auto& code : icd_set) {
    const std::size_t p = g.ccs_index.at(mapping.icd_to_ccs.at(code).back().id), c = g.icd_index.at(code);
    g.edges.emplace_back(p, c);
    g.parent[c] = static_cast<std::ptrdiff_t>(p);
  }
  g.rejected.assign(rejected.begin(), rejected.end());
  rebuild_adjacency(g);
  return g;
}

Var gcn_forward(const ConceptGraph& graph, Var w0, Var w1) {
  Tape& tape = *w0.tape();
  if (w0.rows() != graph.size()) {
    throw ShapeError("gcn: first weight has " + std::to_string(w0.rows()) + " rows, graph has " +
                     std::to_string(graph.size()) + " nodes");
  }
  if (w1.rows() != w0.cols()) throw ShapeError("gcn: layer widths do not chain");
  Var a = tape.constant(graph.normalized);
  Var h1 = relu(matmul(a, w0));  // H0 = I
  return relu(matmul(a, matmul(h1, w1)));
}

Var gcn_forward(const ConceptGraph& graph, Var h0, Var w0, Var w1) {
  Tape& tape = *w0.tape();
  if (h0.rows() != graph.size()) throw ShapeError("gcn: feature rows differ from node count");
  if (h0.cols() != w0.rows() || w0.cols() != w1.rows()) throw ShapeError("gcn: weight shapes do not chain");
  Var a = tape.constant(graph.normalized);
  Var h1 = relu(matmul(a, matmul(h0, w0)));
  return relu(matmul(a, matmul(h1, w1)));
}

CodeRows code_rows(const ConceptGraph& graph, std::span<const std::string> icd_codes) {
  CodeRows rows;
  std::set<std::size_t> seen_icd, seen_ccs;
  for (const auto& code : icd_codes) {
    auto it = graph.icd_index.find(code);
    if (it == graph.icd_index.end()) throw DataError("ICD code '" + code + "' is not in the concept graph");
    if (!seen_icd.insert(it->second).second) continue;
    rows.icd.push_back(it->second);
    std::vector<std::size_t> chain;
    for (auto p = graph.parent[it->second]; p >= 0; p = graph.parent[static_cast<std::size_t>(p)]) {
      chain.push_back(static_cast<std::size_t>(p));
    }
    for (auto c = chain.rbegin(); c != chain.rend(); ++c) {
      if (seen_ccs.insert(*c).second) rows.ccs.push_back(*c);
    }
  }
  return rows;
}

CodeEmbeddings lookup_embeddings(Var node_embeddings, const CodeRows& rows) {
  return {gather_rows(node_embeddings, rows.icd), gather_rows(node_embeddings, rows.ccs)};
}

}  // namespace tckin
