#pragma once

// Synthetic relational databases whose label is a known function of chosen
// attributes, reached from the target through known foreign keys.
//
// Relations: "entity" (target, holds the label) and "rel1".."relK". Every
// relation has a categorical key "id" and data attributes a0, a1, ...
// alternating numeric (uniform on [0,100), two decimals) and categorical
// (values c0..c{m-1}). Topologies:
//   star        entity -> relI for every I
//   chain       entity -> rel1 -> rel2 -> ...
//   random-dag  every relI references... is referenced by one random earlier
//               relation (entity counts as relation 0), plus random extra edges
// The FK column of X -> Y is named "<Y>_id" and lives in X.
//
// Label. Each signal attribute contributes f(v): numeric (v - 50) / 50,
// categorical +1 for odd value index, -1 for even. The value is read from the
// tuple reached by following the FK path from the entity tuple.
//   classification  y = 1[sum_i w_i f_i > 0], flipped with probability `noise`
//   regression      y = sum_i w_i f_i + N(0, noise^2)

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "viewex/explang.hpp"
#include "viewex/io.hpp"
#include "viewex/relstore.hpp"
#include "viewex/rng.hpp"

namespace viewex {

enum class Topology { Star, Chain, RandomDag };

inline std::string_view to_string(Topology t) {
  switch (t) {
    case Topology::Star: return "star";
    case Topology::Chain: return "chain";
    case Topology::RandomDag: return "random-dag";
  }
  return "?";
}

inline Topology parse_topology(std::string_view s) {
  if (s == "star") return Topology::Star;
  if (s == "chain") return Topology::Chain;
  if (s == "random-dag") return Topology::RandomDag;
  fail(ErrorKind::ConfigError, "unknown topology '" + std::string(s) + "'");
}

struct SignalAttr {
  std::size_t relation = 1;  // 0 = entity
  std::size_t attr = 0;  // index among the relation's data attributes
  double weight = 1.0;
};

struct PlantedConfig {
  std::size_t relations = 5;  // including the entity relation
  std::size_t entity_tuples = 1000;
  std::size_t tuples_per_relation = 100;
  Topology topology = Topology::Star;
  std::size_t data_attrs = 4;
  std::size_t categories = 4;
  std::vector<SignalAttr> signal{SignalAttr{}};
  double noise = 0.0;
  Task task = Task::BinaryClassification;
  bool duplicate_signal = false;  // copy of the first signal attribute as "dup"
  double extra_edge_prob = 0.3;  // random-dag only
  std::uint64_t seed = 0;

  void validate() const {
    if (relations < 1) fail(ErrorKind::ConfigError, "need at least one relation");
    if (entity_tuples < 1 || (relations > 1 && tuples_per_relation < 1)) fail(ErrorKind::ConfigError, "relations must be non-empty");
    if (data_attrs < 1) fail(ErrorKind::ConfigError, "need at least one data attribute per relation");
    if (categories < 2) fail(ErrorKind::ConfigError, "need at least two categories");
    if (noise < 0 || (task == Task::BinaryClassification && noise > 0.5))
      fail(ErrorKind::ConfigError, "noise out of range");
    if (signal.empty()) fail(ErrorKind::ConfigError, "need at least one signal attribute");
    for (const auto& s : signal)
      if (s.relation >= relations || s.attr >= data_attrs)
        fail(ErrorKind::ConfigError, "signal attribute references an undeclared element");
  }
};

inline Json planted_config_to_json(const PlantedConfig& c) {
  Json j;
  j["relations"] = c.relations;
  j["entity_tuples"] = c.entity_tuples;
  j["tuples_per_relation"] = c.tuples_per_relation;
  j["topology"] = to_string(c.topology);
  j["data_attrs"] = c.data_attrs;
  j["categories"] = c.categories;
  j["signal"] = Json::array();
  for (const auto& s : c.signal) j["signal"].push_back({{"relation", s.relation}, {"attr", s.attr}, {"weight", s.weight}});
  j["noise"] = c.noise;
  j["task"] = to_string(c.task);
  j["duplicate_signal"] = c.duplicate_signal;
  j["extra_edge_prob"] = c.extra_edge_prob;
  j["seed"] = c.seed;
  return j;
}

/// Overrides fields present in `j`; unknown keys are a ConfigError.
inline PlantedConfig planted_config_from_json(const Json& j, PlantedConfig c = {}) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "relations") c.relations = v.get<std::size_t>();
      else if (k == "entity_tuples") c.entity_tuples = v.get<std::size_t>();
      else if (k == "tuples_per_relation") c.tuples_per_relation = v.get<std::size_t>();
      else if (k == "topology") c.topology = parse_topology(v.get<std::string>());
      else if (k == "data_attrs") c.data_attrs = v.get<std::size_t>();
      else if (k == "categories") c.categories = v.get<std::size_t>();
      else if (k == "noise") c.noise = v.get<double>();
      else if (k == "task") c.task = parse_task(v.get<std::string>());
      else if (k == "duplicate_signal") c.duplicate_signal = v.get<bool>();
      else if (k == "extra_edge_prob") c.extra_edge_prob = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "signal") {
        c.signal.clear();
        for (const auto& s : v)
          c.signal.push_back({s.at("relation").get<std::size_t>(), s.at("attr").get<std::size_t>(), s.value("weight", 1.0)});
      } else
        fail(ErrorKind::ConfigError, "unknown planted-config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("planted config: ") + e.what());
  }
  return c;
}

struct GroundTruth {
  std::vector<std::pair<std::size_t, std::size_t>> attrs;  // (relation, column)
  std::vector<std::size_t> fks;  // FKs on the paths from the entity to signal relations
  std::vector<AtomicPredicate> predicates;  // selections isolating the positive side

  Explanation projection() const { return projection_explanation(attrs); }
  Explanation fkjoin() const { return fkjoin_explanation(fks); }
};

struct PlantedDataset {
  DatabaseSchema schema;
  Database db;
  GroundTruth truth;
};

inline std::string planted_relation_name(std::size_t i) { return i == 0 ? "entity" : "rel" + std::to_string(i); }

namespace detail {

/// Edges (from, to) meaning relation `from` holds an FK to `to`.
inline std::vector<std::pair<std::size_t, std::size_t>> planted_edges(const PlantedConfig& c, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t i = 1; i < c.relations; ++i) {
    switch (c.topology) {
      case Topology::Star: e.emplace_back(0, i); break;
      case Topology::Chain: e.emplace_back(i - 1, i); break;
      case Topology::RandomDag: {
        const auto parent = rng.index(i);
        e.emplace_back(parent, i);
        for (std::size_t j = 0; j < i; ++j)
          if (j != parent && rng.bernoulli(c.extra_edge_prob)) e.emplace_back(j, i);
        break;
      }
    }
  }
  std::sort(e.begin(), e.end());
  return e;
}

}  // namespace detail

inline PlantedDataset generate_planted(const PlantedConfig& cfg) {
  cfg.validate();
  Rng topo_rng(derive_seed(cfg.seed, 1));
  const auto edges = detail::planted_edges(cfg, topo_rng);
  const auto R = cfg.relations;

  std::vector<RelationSchema> rels(R);
  std::vector<ForeignKey> fks;
  std::vector<std::vector<std::size_t>> data_col(R);  // data attribute index -> column
  for (std::size_t r = 0; r < R; ++r) {
    auto& rs = rels[r];
    rs.name = planted_relation_name(r);
    rs.attributes.push_back({"id", AttrKind::Categorical});
    rs.key = {"id"};
    for (const auto& [from, to] : edges)
      if (from == r) rs.attributes.push_back({planted_relation_name(to) + "_id", AttrKind::Categorical});
    for (std::size_t a = 0; a < cfg.data_attrs; ++a) {
      data_col[r].push_back(rs.attributes.size());
      rs.attributes.push_back({"a" + std::to_string(a), a % 2 == 0 ? AttrKind::Numeric : AttrKind::Categorical});
    }
  }
  const auto& first = cfg.signal.front();
  std::optional<std::size_t> dup_col;
  if (cfg.duplicate_signal) {
    dup_col = rels[first.relation].attributes.size();
    rels[first.relation].attributes.push_back({"dup", first.attr % 2 == 0 ? AttrKind::Numeric : AttrKind::Categorical});
  }
  rels[0].attributes.push_back({"label", AttrKind::Numeric});
  for (const auto& [from, to] : edges)
    fks.push_back({planted_relation_name(from) + "_" + planted_relation_name(to), planted_relation_name(from),
                   {planted_relation_name(to) + "_id"}, planted_relation_name(to)});
  DatabaseSchema schema(rels, fks, "entity", cfg.task, "label");

  // Raw cell values: numeric as doubles, categorical as category indices.
  std::vector<std::size_t> sizes(R, cfg.tuples_per_relation);
  sizes[0] = cfg.entity_tuples;
  std::vector<std::vector<std::vector<double>>> cells(R);
  std::vector<std::vector<std::vector<std::size_t>>> refs(R);  // per relation, per out-edge, target row
  for (std::size_t r = 0; r < R; ++r) {
    Rng rng(derive_seed(cfg.seed, 100 + r));
    cells[r].assign(cfg.data_attrs, std::vector<double>(sizes[r]));
    for (std::size_t a = 0; a < cfg.data_attrs; ++a)
      for (auto& v : cells[r][a])
        v = a % 2 == 0 ? std::floor(rng.uniform() * 10000.0) / 100.0 : static_cast<double>(rng.index(cfg.categories));
  }
  std::vector<std::vector<std::size_t>> out_edges(R);  // edge indices by source relation
  for (std::size_t k = 0; k < edges.size(); ++k) out_edges[edges[k].first].push_back(k);
  std::vector<std::vector<std::size_t>> edge_ref(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    Rng rng(derive_seed(cfg.seed, 1000 + k));
    edge_ref[k].resize(sizes[edges[k].first]);
    for (auto& t : edge_ref[k]) t = rng.index(sizes[edges[k].second]);
  }

  // Paths from the entity: BFS over out-edges, first discovery wins.
  std::vector<std::optional<std::size_t>> via(R);  // edge used to reach relation
  std::vector<bool> seen(R, false);
  seen[0] = true;
  std::vector<std::size_t> queue{0};
  for (std::size_t qi = 0; qi < queue.size(); ++qi)
    for (auto k : out_edges[queue[qi]])
      if (!seen[edges[k].second]) {
        seen[edges[k].second] = true;
        via[edges[k].second] = k;
        queue.push_back(edges[k].second);
      }
  auto path_to = [&](std::size_t r) {
    std::vector<std::size_t> path;
    while (r != 0) {
      if (!via[r]) fail(ErrorKind::ConfigError, "signal relation " + planted_relation_name(r) + " is unreachable");
      path.push_back(*via[r]);
      r = edges[*via[r]].first;
    }
    std::reverse(path.begin(), path.end());
    return path;
  };

  GroundTruth truth;
  std::vector<std::vector<std::size_t>> signal_paths;
  for (const auto& s : cfg.signal) {
    signal_paths.push_back(path_to(s.relation));
    truth.attrs.emplace_back(s.relation, data_col[s.relation][s.attr]);
    for (auto k : signal_paths.back())
      if (std::find(truth.fks.begin(), truth.fks.end(), k) == truth.fks.end()) truth.fks.push_back(k);
    const auto col = data_col[s.relation][s.attr];
    if (s.attr % 2 == 0) {
      truth.predicates.push_back(s.weight >= 0 ? AtomicPredicate::range(s.relation, col, 50.0, 100.0)
                                               : AtomicPredicate::range(s.relation, col, 0.0, 50.0));
    } else {
      for (std::size_t v = (s.weight >= 0 ? 1 : 0); v < cfg.categories; v += 2)
        truth.predicates.push_back(AtomicPredicate::eq(s.relation, col, "c" + std::to_string(v)));
    }
  }
  std::sort(truth.attrs.begin(), truth.attrs.end());
  truth.attrs.erase(std::unique(truth.attrs.begin(), truth.attrs.end()), truth.attrs.end());
  std::sort(truth.fks.begin(), truth.fks.end());

  std::vector<double> labels(sizes[0]);
  {
    Rng rng(derive_seed(cfg.seed, 2));
    for (std::size_t row = 0; row < sizes[0]; ++row) {
      double score = 0.0;
      for (std::size_t i = 0; i < cfg.signal.size(); ++i) {
        std::size_t t = row;
        for (auto k : signal_paths[i]) t = edge_ref[k][t];
        const auto& s = cfg.signal[i];
        const double v = cells[s.relation][s.attr][t];
        const double f = s.attr % 2 == 0 ? (v - 50.0) / 50.0 : (static_cast<std::size_t>(v) % 2 == 1 ? 1.0 : -1.0);
        score += s.weight * f;
      }
      if (cfg.task == Task::BinaryClassification) {
        double y = score >= 0 ? 1.0 : 0.0;
        if (cfg.noise > 0 && rng.bernoulli(cfg.noise)) y = 1.0 - y;
        labels[row] = y;
      } else {
        labels[row] = score + (cfg.noise > 0 ? cfg.noise * rng.normal() : 0.0);
      }
    }
  }

  Database db = Database::empty(schema);
  for (std::size_t r = 0; r < R; ++r) {
    std::vector<std::string> row(rels[r].attributes.size());
    for (std::size_t i = 0; i < sizes[r]; ++i) {
      std::size_t c = 0;
      row[c++] = "k" + std::to_string(i);
      for (auto k : out_edges[r]) row[c++] = "k" + std::to_string(edge_ref[k][i]);
      for (std::size_t a = 0; a < cfg.data_attrs; ++a) {
        const double v = cells[r][a][i];
        row[c++] = a % 2 == 0 ? format_number(v) : "c" + std::to_string(static_cast<std::size_t>(v));
      }
      if (dup_col && r == first.relation) {
        const double v = cells[r][first.attr][i];
        row[c++] = first.attr % 2 == 0 ? format_number(v) : "c" + std::to_string(static_cast<std::size_t>(v));
      }
      if (r == 0) row[c++] = format_number(labels[i]);
      db.append_row(schema, r, row);
    }
  }
  return {std::move(schema), std::move(db), std::move(truth)};
}

inline Json ground_truth_to_json(const DatabaseSchema& schema, const GroundTruth& t) {
  Json j;
  j["attributes"] = Json::array();
  for (auto [r, c] : t.attrs)
    j["attributes"].push_back({{"relation", schema.relation(r).name}, {"attribute", schema.relation(r).attributes[c].name}});
  j["fks"] = Json::array();
  for (auto f : t.fks) j["fks"].push_back(schema.fk(f).id);
  j["predicates"] = Json::array();
  for (const auto& p : t.predicates) {
    auto pj = predicate_to_json(schema, p);
    pj["relation"] = schema.relation(p.relation).name;
    j["predicates"].push_back(std::move(pj));
  }
  return j;
}

inline GroundTruth ground_truth_from_json(const DatabaseSchema& schema, const Json& j) {
  try {
    GroundTruth t;
    for (const auto& a : j.at("attributes")) {
      const auto r = schema.relation_index(a.at("relation").get<std::string>());
      t.attrs.emplace_back(r, schema.relation(r).index_of(a.at("attribute").get<std::string>()));
    }
    for (const auto& f : j.at("fks")) t.fks.push_back(schema.fk_index(f.get<std::string>()));
    for (const auto& p : j.at("predicates")) {
      const auto r = schema.relation_index(p.at("relation").get<std::string>());
      const auto c = schema.relation(r).index_of(p.at("attribute").get<std::string>());
      if (p.at("op").get<std::string>() == "eq")
        t.predicates.push_back(AtomicPredicate::eq(r, c, p.at("value").get<std::string>()));
      else
        t.predicates.push_back(AtomicPredicate::range(r, c, p.at("lo").get<double>(), p.at("hi").get<double>()));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("ground truth: ") + e.what());
  }
}

/// Writes schema.json, data/<relation>.csv and truth.json under `dir`.
inline void write_planted(const PlantedDataset& d, const PlantedConfig& cfg, const std::filesystem::path& dir) {
  save_schema(dir / "schema.json", d.schema);
  write_csv_database(d.schema, d.db, dir / "data");
  Json t;
  t["config"] = planted_config_to_json(cfg);
  t["ground_truth"] = ground_truth_to_json(d.schema, d.truth);
  write_json_file(dir / "truth.json", t);
}

struct Recovery {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  std::size_t selected = 0;
  std::size_t relevant = 0;
};

/// Precision/recall of a selected unit set against the planted one. Precision of an empty selection is 0.
template <class T>
Recovery recovery(const std::vector<T>& selected, const std::vector<T>& truth) {
  Recovery r;
  r.selected = selected.size();
  r.relevant = truth.size();
  for (const auto& s : selected)
    if (std::find(truth.begin(), truth.end(), s) != truth.end()) ++r.true_positives;
  r.precision = r.selected ? static_cast<double>(r.true_positives) / static_cast<double>(r.selected) : 0.0;
  r.recall = r.relevant ? static_cast<double>(r.true_positives) / static_cast<double>(r.relevant) : 0.0;
  return r;
}

inline std::vector<std::pair<std::size_t, std::size_t>> explained_attrs(const Explanation& e) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& p : e.projections)
    for (auto c : p.data_attrs) out.emplace_back(p.relation, c);
  return out;
}

inline std::vector<std::size_t> explained_fks(const Explanation& e) {
  std::vector<std::size_t> out;
  for (const auto& j : e.joins) out.push_back(j.fk);
  return out;
}

inline std::vector<AtomicPredicate> explained_predicates(const Explanation& e) {
  std::vector<AtomicPredicate> out;
  for (const auto& s : e.selections) out.insert(out.end(), s.disjuncts.begin(), s.disjuncts.end());
  return out;
}

}  // namespace viewex
