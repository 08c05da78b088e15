#pragma once

// Row-to-node conversion: one node per tuple, one typed edge per
// (source tuple, foreign key) reference.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "viewex/relstore.hpp"

namespace viewex {

enum class Orientation { Out, In };

struct NodeId {
  std::size_t relation = 0;
  std::size_t row = 0;
  friend bool operator==(const NodeId&, const NodeId&) = default;
};

struct Edge {
  std::size_t src = 0;  // global node id
  std::size_t fk = 0;
  std::size_t dst = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Adjacency for one FK: every source row has exactly one outgoing
/// neighbour (FKs are total), target rows have CSR incoming lists.
struct FkAdjacency {
  std::size_t source = 0;
  std::size_t target = 0;
  std::vector<std::uint32_t> out;  // source row -> target row
  std::vector<std::uint32_t> in_offsets;  // target rows + 1
  std::vector<std::uint32_t> in_rows;  // source rows grouped by target row

  std::size_t in_degree(std::size_t target_row) const { return in_offsets[target_row + 1] - in_offsets[target_row]; }
};

class HeteroGraph {
 public:
  std::size_t node_count() const { return offsets_.back(); }
  std::size_t relation_count() const { return offsets_.size() - 1; }
  std::size_t relation_size(std::size_t rel) const { return offsets_[rel + 1] - offsets_[rel]; }
  std::size_t fk_count() const { return adj_.size(); }

  std::size_t node_id(std::size_t rel, std::size_t row) const { return offsets_[rel] + row; }

  NodeId node(std::size_t id) const {
    std::size_t rel = 0;
    while (offsets_[rel + 1] <= id) ++rel;
    return {rel, id - offsets_[rel]};
  }

  /// Node type: the relation the tuple came from.
  std::size_t type_of(std::size_t id) const { return node(id).relation; }

  const FkAdjacency& adjacency(std::size_t fk) const { return adj_.at(fk); }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& a : adj_) n += a.out.size();
    return n;
  }

  /// Edge list ordered by FK, then source row.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count());
    for (std::size_t f = 0; f < adj_.size(); ++f) {
      const auto& a = adj_[f];
      for (std::size_t r = 0; r < a.out.size(); ++r) out.push_back({node_id(a.source, r), f, node_id(a.target, a.out[r])});
    }
    return out;
  }

  /// Global ids of the neighbours of `id` through `fk` in the given orientation.
  std::vector<std::size_t> neighbors(std::size_t id, std::size_t fk, Orientation o) const {
    const auto n = node(id);
    const auto& a = adj_.at(fk);
    std::vector<std::size_t> out;
    if (o == Orientation::Out) {
      if (n.relation == a.source) out.push_back(node_id(a.target, a.out[n.row]));
    } else if (n.relation == a.target) {
      for (auto i = a.in_offsets[n.row]; i < a.in_offsets[n.row + 1]; ++i) out.push_back(node_id(a.source, a.in_rows[i]));
    }
    return out;
  }

  /// Debug dump: one edge per line as "src fk-id dst" with src/dst rendered as relation:row.
  void dump(const DatabaseSchema& schema, std::ostream& out) const {
    for (const auto& e : edges()) {
      const auto s = node(e.src), d = node(e.dst);
      out << schema.relation(s.relation).name << ':' << s.row << ' ' << schema.fk(e.fk).id << ' '
          << schema.relation(d.relation).name << ':' << d.row << '\n';
    }
  }

 private:
  friend HeteroGraph build_graph(const DatabaseSchema& schema, const Database& db);

  std::vector<std::size_t> offsets_{0};
  std::vector<FkAdjacency> adj_;
};

inline HeteroGraph build_graph(const DatabaseSchema& schema, const Database& db) {
  HeteroGraph g;
  g.offsets_.assign(1, 0);
  for (std::size_t r = 0; r < schema.relation_count(); ++r) g.offsets_.push_back(g.offsets_.back() + db.relation(r).rows());
  for (std::size_t f = 0; f < schema.fk_count(); ++f) {
    const auto& fk = schema.resolved_fk(f);
    FkAdjacency a;
    a.source = fk.source;
    a.target = fk.target;
    const auto targets = resolve_fk_targets(schema, db, f);
    a.out.assign(targets.begin(), targets.end());
    const std::size_t nt = db.relation(fk.target).rows();
    a.in_offsets.assign(nt + 1, 0);
    for (auto t : a.out) ++a.in_offsets[t + 1];
    for (std::size_t i = 0; i < nt; ++i) a.in_offsets[i + 1] += a.in_offsets[i];
    a.in_rows.resize(a.out.size());
    auto cursor = a.in_offsets;
    for (std::size_t r = 0; r < a.out.size(); ++r) a.in_rows[cursor[a.out[r]]++] = static_cast<std::uint32_t>(r);
    g.adj_.push_back(std::move(a));
  }
  return g;
}

}  // namespace viewex
