#pragma once

// Typed in-memory relational store: schemas with keys and foreign keys,
// columnar relations, and constraint validation.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "viewex/error.hpp"

namespace viewex {

enum class AttrKind { Numeric, Categorical };
enum class AttrRole { Key, ForeignKeyPart, Data };
enum class Task { BinaryClassification, Regression };

inline std::string_view to_string(AttrKind k) { return k == AttrKind::Numeric ? "numeric" : "categorical"; }
inline std::string_view to_string(AttrRole r) {
  switch (r) {
    case AttrRole::Key: return "key";
    case AttrRole::ForeignKeyPart: return "foreign_key";
    case AttrRole::Data: return "data";
  }
  return "data";
}
inline std::string_view to_string(Task t) {
  return t == Task::BinaryClassification ? "binary_classification" : "regression";
}

/// Shortest decimal text that parses back to exactly `x`.
inline std::string format_number(double x) {
  if (x == 0.0) return "0";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline std::optional<double> parse_number(std::string_view text) {
  double x = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, x);
  if (ec != std::errc{} || ptr != last || !std::isfinite(x)) return std::nullopt;
  return x;
}

/// A single cell. Categorical values are per-column symbol ids.
struct Value {
  enum class Tag : std::uint8_t { Missing, Numeric, Categorical };

  Tag tag = Tag::Missing;
  double num = 0.0;
  std::int32_t sym = -1;

  static Value missing() { return {}; }
  static Value numeric(double x) { return {Tag::Numeric, x, -1}; }
  static Value symbol(std::int32_t id) { return {Tag::Categorical, 0.0, id}; }

  bool is_missing() const { return tag == Tag::Missing; }

  friend bool operator==(const Value& a, const Value& b) {
    if (a.tag != b.tag) return false;
    switch (a.tag) {
      case Tag::Missing: return true;
      case Tag::Numeric: return std::bit_cast<std::uint64_t>(a.num) == std::bit_cast<std::uint64_t>(b.num);
      case Tag::Categorical: return a.sym == b.sym;
    }
    return false;
  }

  friend bool operator<(const Value& a, const Value& b) {
    if (a.tag != b.tag) return a.tag < b.tag;
    if (a.tag == Tag::Numeric) return a.num < b.num;
    if (a.tag == Tag::Categorical) return a.sym < b.sym;
    return false;
  }
};

struct ValueHash {
  std::size_t operator()(const Value& v) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(v.tag) * 0x9e3779b97f4a7c15ULL;
    if (v.tag == Value::Tag::Numeric) h ^= std::bit_cast<std::uint64_t>(v.num) + 0x7f4a7c15;
    if (v.tag == Value::Tag::Categorical) h ^= static_cast<std::uint64_t>(v.sym) * 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 31;
    return static_cast<std::size_t>(h * 0x94d049bb133111ebULL);
  }
};

using KeyTuple = std::vector<Value>;

struct KeyTupleHash {
  std::size_t operator()(const KeyTuple& k) const noexcept {
    std::size_t h = 1469598103934665603ULL;
    for (const auto& v : k) h = (h ^ ValueHash{}(v)) * 1099511628211ULL;
    return h;
  }
};

struct AttributeDef {
  std::string name;
  AttrKind kind = AttrKind::Numeric;
  AttrRole role = AttrRole::Data;  // derived by DatabaseSchema
};

struct RelationSchema {
  std::string name;
  std::vector<AttributeDef> attributes;
  std::vector<std::string> key;

  std::optional<std::size_t> find(std::string_view attr) const {
    for (std::size_t i = 0; i < attributes.size(); ++i)
      if (attributes[i].name == attr) return i;
    return std::nullopt;
  }

  std::size_t index_of(std::string_view attr) const {
    if (auto i = find(attr)) return *i;
    fail(ErrorKind::NotFound, "attribute " + std::string(attr) + " in relation " + name);
  }
};

struct ForeignKey {
  std::string id;
  std::string source_relation;
  std::vector<std::string> source_attrs;
  std::string target_relation;
};

/// Foreign key with names resolved to relation and column indices.
struct ResolvedFk {
  std::size_t source = 0;
  std::vector<std::size_t> source_cols;
  std::size_t target = 0;
  std::vector<std::size_t> target_cols;
  /// False when a source column is also a key column; such FKs are never rewired.
  bool perturbable = true;
};

class DatabaseSchema {
 public:
  DatabaseSchema() = default;

  DatabaseSchema(std::vector<RelationSchema> relations, std::vector<ForeignKey> fks, std::string target_relation,
                 Task task, std::string label_attr)
      : relations_(std::move(relations)),
        fks_(std::move(fks)),
        target_relation_(std::move(target_relation)),
        task_(task),
        label_attr_(std::move(label_attr)) {
    finalize();
  }

  const std::vector<RelationSchema>& relations() const { return relations_; }
  const std::vector<ForeignKey>& fks() const { return fks_; }
  const std::string& target_relation_name() const { return target_relation_; }
  const std::string& label_attr_name() const { return label_attr_; }
  Task task() const { return task_; }

  std::size_t relation_count() const { return relations_.size(); }
  std::size_t fk_count() const { return fks_.size(); }
  std::size_t target() const { return target_index_; }
  std::size_t label_column() const { return label_index_; }

  std::optional<std::size_t> find_relation(std::string_view name) const {
    for (std::size_t i = 0; i < relations_.size(); ++i)
      if (relations_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t relation_index(std::string_view name) const {
    if (auto i = find_relation(name)) return *i;
    fail(ErrorKind::NotFound, "relation " + std::string(name));
  }

  const RelationSchema& relation(std::size_t i) const { return relations_.at(i); }
  const RelationSchema& relation(std::string_view name) const { return relations_[relation_index(name)]; }

  std::optional<std::size_t> find_fk(std::string_view id) const {
    for (std::size_t i = 0; i < fks_.size(); ++i)
      if (fks_[i].id == id) return i;
    return std::nullopt;
  }

  std::size_t fk_index(std::string_view id) const {
    if (auto i = find_fk(id)) return *i;
    fail(ErrorKind::NotFound, "foreign key " + std::string(id));
  }

  const ForeignKey& fk(std::size_t i) const { return fks_.at(i); }
  const ResolvedFk& resolved_fk(std::size_t i) const { return resolved_.at(i); }

  const std::vector<std::size_t>& key_columns(std::size_t rel) const { return key_cols_.at(rel); }
  /// All columns that take part in some FK's left-hand side, schema order.
  const std::vector<std::size_t>& fk_columns(std::size_t rel) const { return fk_cols_.at(rel); }
  /// Data columns that feed the model: data attributes minus the label.
  const std::vector<std::size_t>& feature_columns(std::size_t rel) const { return feature_cols_.at(rel); }

  AttrRole role(std::size_t rel, std::size_t col) const { return relations_.at(rel).attributes.at(col).role; }

  bool is_feature(std::size_t rel, std::size_t col) const {
    const auto& f = feature_cols_.at(rel);
    return std::find(f.begin(), f.end(), col) != f.end();
  }

  std::size_t total_feature_count() const {
    std::size_t n = 0;
    for (const auto& f : feature_cols_) n += f.size();
    return n;
  }

  /// FKs whose source or target is `rel`.
  std::vector<std::size_t> incident_fks(std::size_t rel) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < resolved_.size(); ++i)
      if (resolved_[i].source == rel || resolved_[i].target == rel) out.push_back(i);
    return out;
  }

 private:
  void finalize();

  std::vector<RelationSchema> relations_;
  std::vector<ForeignKey> fks_;
  std::string target_relation_;
  Task task_ = Task::BinaryClassification;
  std::string label_attr_;

  std::size_t target_index_ = 0;
  std::size_t label_index_ = 0;
  std::vector<ResolvedFk> resolved_;
  std::vector<std::vector<std::size_t>> key_cols_;
  std::vector<std::vector<std::size_t>> fk_cols_;
  std::vector<std::vector<std::size_t>> feature_cols_;
};

inline void DatabaseSchema::finalize() {
  auto violation = [](const std::string& what) { fail(ErrorKind::SchemaViolation, what); };

  std::unordered_set<std::string> rel_names;
  for (const auto& r : relations_) {
    if (r.name.empty()) violation("relation with empty name");
    if (!rel_names.insert(r.name).second) violation("duplicate relation " + r.name);
    std::unordered_set<std::string> names;
    for (const auto& a : r.attributes) {
      if (a.name.empty()) violation("empty attribute name in " + r.name);
      if (!names.insert(a.name).second) violation("duplicate attribute " + r.name + "." + a.name);
    }
    if (r.key.empty()) violation("relation " + r.name + " has an empty key");
    // key must be a subsequence of the attribute list
    std::size_t pos = 0;
    for (const auto& k : r.key) {
      auto idx = r.find(k);
      if (!idx) violation("key attribute " + r.name + "." + k + " is not declared");
      if (*idx < pos) violation("key of " + r.name + " is not a subsequence of its attributes");
      pos = *idx + 1;
    }
  }

  key_cols_.assign(relations_.size(), {});
  fk_cols_.assign(relations_.size(), {});
  feature_cols_.assign(relations_.size(), {});
  for (std::size_t r = 0; r < relations_.size(); ++r)
    for (const auto& k : relations_[r].key) key_cols_[r].push_back(relations_[r].index_of(k));

  resolved_.clear();
  std::unordered_set<std::string> fk_ids;
  std::vector<std::vector<bool>> in_fk(relations_.size());
  for (std::size_t r = 0; r < relations_.size(); ++r) in_fk[r].assign(relations_[r].attributes.size(), false);
  for (const auto& fk : fks_) {
    if (fk.id.empty()) violation("foreign key with empty id");
    if (!fk_ids.insert(fk.id).second) violation("duplicate foreign key id " + fk.id);
    ResolvedFk res;
    auto src = find_relation(fk.source_relation);
    auto tgt = find_relation(fk.target_relation);
    if (!src) violation("foreign key " + fk.id + " references unknown relation " + fk.source_relation);
    if (!tgt) violation("foreign key " + fk.id + " references unknown relation " + fk.target_relation);
    res.source = *src;
    res.target = *tgt;
    const auto& srel = relations_[res.source];
    const auto& trel = relations_[res.target];
    if (fk.source_attrs.size() != trel.key.size())
      violation("foreign key " + fk.id + " arity differs from key of " + trel.name);
    for (std::size_t i = 0; i < fk.source_attrs.size(); ++i) {
      auto col = srel.find(fk.source_attrs[i]);
      if (!col) violation("foreign key " + fk.id + " uses unknown attribute " + srel.name + "." + fk.source_attrs[i]);
      const auto tcol = key_cols_[res.target][i];
      if (srel.attributes[*col].kind != trel.attributes[tcol].kind)
        violation("foreign key " + fk.id + " component kinds differ at position " + std::to_string(i));
      if (in_fk[res.source][*col])
        violation("attribute " + srel.name + "." + srel.attributes[*col].name + " is used by two foreign keys");
      in_fk[res.source][*col] = true;
      res.source_cols.push_back(*col);
      res.target_cols.push_back(tcol);
      if (std::find(key_cols_[res.source].begin(), key_cols_[res.source].end(), *col) != key_cols_[res.source].end())
        res.perturbable = false;
    }
    resolved_.push_back(std::move(res));
  }

  for (std::size_t r = 0; r < relations_.size(); ++r) {
    auto& rel = relations_[r];
    for (std::size_t c = 0; c < rel.attributes.size(); ++c) {
      const bool is_key = std::find(key_cols_[r].begin(), key_cols_[r].end(), c) != key_cols_[r].end();
      rel.attributes[c].role = is_key ? AttrRole::Key : in_fk[r][c] ? AttrRole::ForeignKeyPart : AttrRole::Data;
      if (in_fk[r][c]) fk_cols_[r].push_back(c);
    }
  }

  auto t = find_relation(target_relation_);
  if (!t) violation("target relation " + target_relation_ + " is not declared");
  target_index_ = *t;
  auto l = relations_[target_index_].find(label_attr_);
  if (!l) violation("label attribute " + label_attr_ + " is not declared in " + target_relation_);
  label_index_ = *l;
  if (relations_[target_index_].attributes[label_index_].role != AttrRole::Data)
    violation("label attribute " + label_attr_ + " must be a data attribute");
  if (relations_[target_index_].attributes[label_index_].kind != AttrKind::Numeric)
    violation("label attribute " + label_attr_ + " must be numeric");

  for (std::size_t r = 0; r < relations_.size(); ++r)
    for (std::size_t c = 0; c < relations_[r].attributes.size(); ++c)
      if (relations_[r].attributes[c].role == AttrRole::Data && !(r == target_index_ && c == label_index_))
        feature_cols_[r].push_back(c);
}

/// Role of an attribute: Key if in key(R), else ForeignKeyPart if on the
/// left-hand side of some FK, else Data.
inline AttrRole attribute_role(const DatabaseSchema& schema, std::string_view relation, std::string_view attr) {
  const auto r = schema.relation_index(relation);
  return schema.role(r, schema.relation(r).index_of(attr));
}

/// Per-column interning of categorical strings.
struct SymbolTable {
  std::vector<std::string> names;
  std::unordered_map<std::string, std::int32_t> ids;

  std::int32_t intern(const std::string& s) {
    auto [it, inserted] = ids.emplace(s, static_cast<std::int32_t>(names.size()));
    if (inserted) names.push_back(s);
    return it->second;
  }

  std::optional<std::int32_t> find(const std::string& s) const {
    auto it = ids.find(s);
    if (it == ids.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return names.size(); }
};

struct RelationData {
  std::vector<std::vector<Value>> columns;
  std::vector<std::shared_ptr<SymbolTable>> symbols;  // null for numeric columns

  std::size_t rows() const { return columns.empty() ? row_count : columns.front().size(); }
  const Value& at(std::size_t row, std::size_t col) const { return columns[col][row]; }
  Value& at(std::size_t row, std::size_t col) { return columns[col][row]; }

  KeyTuple tuple(std::size_t row, const std::vector<std::size_t>& cols) const {
    KeyTuple k;
    k.reserve(cols.size());
    for (auto c : cols) k.push_back(columns[c][row]);
    return k;
  }

  std::size_t row_count = 0;  // used only for zero-column relations
};

/// Relations in schema order. Copies share symbol tables, which are frozen after loading.
class Database {
 public:
  Database() = default;

  static Database empty(const DatabaseSchema& schema) {
    Database db;
    for (const auto& rel : schema.relations()) {
      RelationData data;
      data.columns.resize(rel.attributes.size());
      for (const auto& a : rel.attributes)
        data.symbols.push_back(a.kind == AttrKind::Categorical ? std::make_shared<SymbolTable>() : nullptr);
      db.relations.push_back(std::move(data));
    }
    return db;
  }

  /// Parses text cells according to the declared kinds; empty text is Missing.
  void append_row(const DatabaseSchema& schema, std::size_t rel, const std::vector<std::string>& cells) {
    const auto& rs = schema.relation(rel);
    auto& data = relations.at(rel);
    if (cells.size() != rs.attributes.size())
      fail(ErrorKind::ParseError, "relation " + rs.name + " expects " + std::to_string(rs.attributes.size()) +
                                      " fields, got " + std::to_string(cells.size()));
    std::vector<Value> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        row.push_back(Value::missing());
      } else if (rs.attributes[c].kind == AttrKind::Numeric) {
        auto x = parse_number(cells[c]);
        if (!x) fail(ErrorKind::ParseError, "relation " + rs.name + " column " + rs.attributes[c].name +
                                                ": not a number: '" + cells[c] + "'");
        row.push_back(Value::numeric(*x));
      } else {
        row.push_back(Value::symbol(data.symbols[c]->intern(cells[c])));
      }
    }
    for (std::size_t c = 0; c < cells.size(); ++c) data.columns[c].push_back(row[c]);
    ++data.row_count;
  }

  void append_row(const DatabaseSchema& schema, std::string_view rel, const std::vector<std::string>& cells) {
    append_row(schema, schema.relation_index(rel), cells);
  }

  const RelationData& relation(std::size_t i) const { return relations.at(i); }
  RelationData& relation(std::size_t i) { return relations.at(i); }

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& r : relations) n += r.rows();
    return n;
  }

  /// Text form of a cell (empty for Missing).
  std::string render(std::size_t rel, std::size_t col, const Value& v) const {
    switch (v.tag) {
      case Value::Tag::Missing: return {};
      case Value::Tag::Numeric: return format_number(v.num);
      case Value::Tag::Categorical: {
        const auto& table = relations.at(rel).symbols.at(col);
        if (table && v.sym >= 0 && static_cast<std::size_t>(v.sym) < table->size()) return table->names[v.sym];
        return "#" + std::to_string(v.sym);
      }
    }
    return {};
  }

  std::vector<RelationData> relations;
};

/// Maps key tuples to row indices for one relation.
class KeyIndex {
 public:
  KeyIndex(const RelationData& data, const std::vector<std::size_t>& key_cols) {
    index_.reserve(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) index_.emplace(data.tuple(r, key_cols), r);
  }

  std::optional<std::size_t> find(const KeyTuple& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::unordered_map<KeyTuple, std::size_t, KeyTupleHash> index_;
};

struct Violation {
  enum class Kind { DuplicateKey, DanglingForeignKey, MissingKeyValue, KindMismatch, ArityMismatch };
  Kind kind;
  std::string where;  // relation name or FK id
  std::string value;  // offending key / FK value, rendered

  friend bool operator==(const Violation&, const Violation&) = default;
};

inline std::string_view to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::DuplicateKey: return "KeyViolation";
    case Violation::Kind::DanglingForeignKey: return "FkViolation";
    case Violation::Kind::MissingKeyValue: return "MissingKeyValue";
    case Violation::Kind::KindMismatch: return "KindMismatch";
    case Violation::Kind::ArityMismatch: return "ArityMismatch";
  }
  return "Violation";
}

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }

  std::string summary(std::size_t limit = 5) const {
    std::string s;
    for (std::size_t i = 0; i < violations.size() && i < limit; ++i) {
      if (!s.empty()) s += "; ";
      s += std::string(to_string(violations[i].kind)) + "(" + violations[i].where + ", " + violations[i].value + ")";
    }
    if (violations.size() > limit) s += "; ... (" + std::to_string(violations.size()) + " total)";
    return s;
  }
};

inline std::string render_tuple(const Database& db, std::size_t rel, const std::vector<std::size_t>& cols,
                                const KeyTuple& k) {
  std::string s;
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (i) s += ",";
    s += db.render(rel, cols[i], k[i]);
  }
  return s;
}

/// Checks cell kinds, key uniqueness, key/FK completeness and FK satisfaction.
/// Never mutates `db`.
inline ValidationReport validate_database(const DatabaseSchema& schema, const Database& db) {
  ValidationReport report;
  auto add = [&](Violation::Kind k, std::string where, std::string value) {
    report.violations.push_back({k, std::move(where), std::move(value)});
  };
  if (db.relations.size() != schema.relation_count()) {
    add(Violation::Kind::ArityMismatch, "database", std::to_string(db.relations.size()) + " relations");
    return report;
  }

  bool structural_ok = true;
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    const auto& rs = schema.relation(r);
    const auto& data = db.relation(r);
    if (data.columns.size() != rs.attributes.size()) {
      add(Violation::Kind::ArityMismatch, rs.name, std::to_string(data.columns.size()) + " columns");
      structural_ok = false;
      continue;
    }
    for (std::size_t c = 0; c < data.columns.size(); ++c) {
      if (data.columns[c].size() != data.rows()) {
        add(Violation::Kind::ArityMismatch, rs.name, "column " + rs.attributes[c].name);
        structural_ok = false;
        continue;
      }
      const auto expected =
          rs.attributes[c].kind == AttrKind::Numeric ? Value::Tag::Numeric : Value::Tag::Categorical;
      const bool must_be_total = rs.attributes[c].role != AttrRole::Data;
      for (std::size_t row = 0; row < data.rows(); ++row) {
        const auto& v = data.columns[c][row];
        if (v.is_missing()) {
          if (must_be_total) add(Violation::Kind::MissingKeyValue, rs.name, rs.attributes[c].name + "@" + std::to_string(row));
        } else if (v.tag != expected) {
          add(Violation::Kind::KindMismatch, rs.name, rs.attributes[c].name + "@" + std::to_string(row));
        }
      }
    }
  }
  if (!structural_ok) return report;

  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    const auto& data = db.relation(r);
    const auto& key = schema.key_columns(r);
    std::unordered_set<KeyTuple, KeyTupleHash> seen;
    seen.reserve(data.rows());
    for (std::size_t row = 0; row < data.rows(); ++row) {
      auto k = data.tuple(row, key);
      if (!seen.insert(k).second)
        add(Violation::Kind::DuplicateKey, schema.relation(r).name, render_tuple(db, r, key, k));
    }
  }

  for (std::size_t f = 0; f < schema.fk_count(); ++f) {
    const auto& fk = schema.resolved_fk(f);
    const auto& src = db.relation(fk.source);
    const auto& tgt = db.relation(fk.target);
    // symbol ids are per column, so compare through the rendered text for categoricals
    std::unordered_set<std::string> target_keys;
    for (std::size_t row = 0; row < tgt.rows(); ++row)
      target_keys.insert(render_tuple(db, fk.target, fk.target_cols, tgt.tuple(row, fk.target_cols)));
    for (std::size_t row = 0; row < src.rows(); ++row) {
      auto k = src.tuple(row, fk.source_cols);
      if (std::any_of(k.begin(), k.end(), [](const Value& v) { return v.is_missing(); })) continue;
      auto text = render_tuple(db, fk.source, fk.source_cols, k);
      if (!target_keys.count(text)) add(Violation::Kind::DanglingForeignKey, schema.fk(f).id, text);
    }
  }
  return report;
}

/// Active domain of one column: value multiset over non-missing cells, plus the missing count.
struct ActiveDomain {
  std::vector<std::pair<Value, std::size_t>> counts;  // sorted by value
  std::size_t missing = 0;

  std::size_t distinct() const { return counts.size(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [v, c] : counts) n += c;
    return n;
  }
  std::size_t count(const Value& v) const {
    for (const auto& [w, c] : counts)
      if (w == v) return c;
    return 0;
  }
};

inline ActiveDomain active_domain(const DatabaseSchema& schema, const Database& db, std::string_view relation,
                                  std::string_view attr) {
  const auto r = schema.relation_index(relation);
  const auto c = schema.relation(r).index_of(attr);
  ActiveDomain dom;
  std::map<Value, std::size_t> counts;
  for (const auto& v : db.relation(r).columns[c]) {
    if (v.is_missing())
      ++dom.missing;
    else
      ++counts[v];
  }
  dom.counts.assign(counts.begin(), counts.end());
  return dom;
}

/// Row indices of a relation that reference each target row through an FK,
/// translating categorical symbols between the two columns' tables.
inline std::vector<std::size_t> resolve_fk_targets(const DatabaseSchema& schema, const Database& db, std::size_t f) {
  const auto& fk = schema.resolved_fk(f);
  const auto& src = db.relation(fk.source);
  const auto& tgt = db.relation(fk.target);
  // Translate target key tuples into source-column symbol space once.
  std::unordered_map<std::string, std::size_t> by_text;
  by_text.reserve(tgt.rows());
  for (std::size_t row = 0; row < tgt.rows(); ++row)
    by_text.emplace(render_tuple(db, fk.target, fk.target_cols, tgt.tuple(row, fk.target_cols)), row);
  std::vector<std::size_t> out(src.rows());
  for (std::size_t row = 0; row < src.rows(); ++row) {
    auto text = render_tuple(db, fk.source, fk.source_cols, src.tuple(row, fk.source_cols));
    auto it = by_text.find(text);
    if (it == by_text.end())
      fail(ErrorKind::SchemaViolation, "foreign key " + schema.fk(f).id + " dangling value " + text);
    out[row] = it->second;
  }
  return out;
}

}  // namespace viewex
