#pragma once

// Explanation views: projection, FK-join and selection views and their
// composites, with cost, native evaluation and SQL rendering.
//
// Explanations are stored factored (projections, joins, selections). For
// checking and rendering they are resolved into concrete views:
//   Slice  SELECT cols FROM R WHERE d1 OR ... OR dl
//   Join   V_source JOIN V_target ON the FK equality
// Implicit slices (key and retained FK columns of every relation) are part of
// every explanation but are never rendered.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "viewex/io.hpp"
#include "viewex/relstore.hpp"

namespace viewex {

enum class Language { Projection, FKJoin, Selection, ProjSelect, FKJoinProj, FKJoinProjSelect };

inline std::string_view to_string(Language l) {
  switch (l) {
    case Language::Projection: return "Projection";
    case Language::FKJoin: return "FKJoin";
    case Language::Selection: return "Selection";
    case Language::ProjSelect: return "ProjSelect";
    case Language::FKJoinProj: return "FKJoinProj";
    case Language::FKJoinProjSelect: return "FKJoinProjSelect";
  }
  return "?";
}

inline Language parse_language(std::string_view s) {
  for (auto l : {Language::Projection, Language::FKJoin, Language::Selection, Language::ProjSelect,
                 Language::FKJoinProj, Language::FKJoinProjSelect})
    if (to_string(l) == s) return l;
  fail(ErrorKind::ParseError, "unknown explanation language '" + std::string(s) + "'");
}

inline bool has_projection(Language l) {
  return l == Language::Projection || l == Language::ProjSelect || l == Language::FKJoinProj ||
         l == Language::FKJoinProjSelect;
}
inline bool has_join(Language l) {
  return l == Language::FKJoin || l == Language::FKJoinProj || l == Language::FKJoinProjSelect;
}
inline bool has_selection(Language l) {
  return l == Language::Selection || l == Language::ProjSelect || l == Language::FKJoinProjSelect;
}

// ---------------------------------------------------------------------------
// Predicates

struct AtomicPredicate {
  enum class Form { Eq, Range };
  std::size_t relation = 0;
  std::size_t column = 0;
  Form form = Form::Eq;
  std::string value;  // Eq: original categorical text
  double lo = 0.0, hi = 0.0;  // Range: inclusive bounds

  static AtomicPredicate eq(std::size_t rel, std::size_t col, std::string v) {
    return {rel, col, Form::Eq, std::move(v), 0.0, 0.0};
  }
  static AtomicPredicate range(std::size_t rel, std::size_t col, double lo, double hi) {
    return {rel, col, Form::Range, {}, lo, hi};
  }

  friend bool operator==(const AtomicPredicate&, const AtomicPredicate&) = default;
  friend auto operator<=>(const AtomicPredicate& a, const AtomicPredicate& b) {
    return std::tie(a.relation, a.column, a.form, a.value, a.lo, a.hi) <=>
           std::tie(b.relation, b.column, b.form, b.value, b.lo, b.hi);
  }
};

/// Resolved against one database; Missing never satisfies a predicate.
class PredicateMatcher {
 public:
  PredicateMatcher(const Database& db, const AtomicPredicate& p) : p_(p), column_(&db.relation(p.relation).columns.at(p.column)) {
    if (p.form == AtomicPredicate::Form::Eq) {
      const auto& table = db.relation(p.relation).symbols.at(p.column);
      if (table) sym_ = table->find(p.value);
    }
  }

  bool operator()(std::size_t row) const {
    const auto& v = (*column_)[row];
    if (p_.form == AtomicPredicate::Form::Eq) return sym_ && v.tag == Value::Tag::Categorical && v.sym == *sym_;
    return v.tag == Value::Tag::Numeric && v.num >= p_.lo && v.num <= p_.hi;
  }

 private:
  AtomicPredicate p_;
  const std::vector<Value>* column_;
  std::optional<std::int32_t> sym_;
};

inline std::vector<std::uint32_t> satisfying_rows(const Database& db, const AtomicPredicate& p) {
  PredicateMatcher m(db, p);
  std::vector<std::uint32_t> rows;
  for (std::size_t r = 0; r < db.relation(p.relation).rows(); ++r)
    if (m(r)) rows.push_back(static_cast<std::uint32_t>(r));
  return rows;
}

inline std::string describe(const DatabaseSchema& schema, const AtomicPredicate& p) {
  const auto& rs = schema.relation(p.relation);
  const auto name = rs.name + "." + rs.attributes.at(p.column).name;
  if (p.form == AtomicPredicate::Form::Eq) return name + " = " + p.value;
  return name + " in [" + format_number(p.lo) + ", " + format_number(p.hi) + "]";
}

struct PredicateConfig {
  std::size_t top_values = 8;
  std::size_t bins = 4;
};

/// Eq predicates for the most frequent values of categorical attributes,
/// Range predicates over nearest-rank quantile bins of numeric attributes.
inline std::vector<AtomicPredicate> candidate_predicates(const DatabaseSchema& schema, const Database& db,
                                                         const std::vector<std::pair<std::size_t, std::size_t>>& attrs,
                                                         const PredicateConfig& cfg = {}) {
  if (cfg.bins == 0) fail(ErrorKind::ConfigError, "predicate bins must be positive");
  std::vector<AtomicPredicate> out;
  for (auto [r, c] : attrs) {
    if (!schema.is_feature(r, c))
      fail(ErrorKind::DomainError, "predicates are only defined on data attributes: " + schema.relation(r).name + "." +
                                       schema.relation(r).attributes.at(c).name);
    const auto& col = db.relation(r).columns[c];
    if (schema.relation(r).attributes[c].kind == AttrKind::Categorical) {
      std::map<std::int32_t, std::size_t> counts;
      for (const auto& v : col)
        if (v.tag == Value::Tag::Categorical) ++counts[v.sym];
      std::vector<std::pair<std::string, std::size_t>> ranked;
      for (auto [sym, n] : counts) ranked.emplace_back(db.render(r, c, Value::symbol(sym)), n);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
      });
      for (std::size_t i = 0; i < ranked.size() && i < cfg.top_values; ++i)
        out.push_back(AtomicPredicate::eq(r, c, ranked[i].first));
    } else {
      std::vector<double> vals;
      for (const auto& v : col)
        if (v.tag == Value::Tag::Numeric) vals.push_back(v.num);
      if (vals.empty()) continue;
      std::sort(vals.begin(), vals.end());
      const auto n = vals.size();
      auto quantile = [&](std::size_t i) {
        if (i == 0) return vals.front();
        const auto rank = static_cast<std::size_t>(std::ceil(static_cast<double>(i) * static_cast<double>(n) /
                                                             static_cast<double>(cfg.bins)));
        return vals[std::clamp<std::size_t>(rank, 1, n) - 1];
      };
      std::vector<AtomicPredicate> bins;
      for (std::size_t i = 0; i < cfg.bins; ++i) {
        auto p = AtomicPredicate::range(r, c, quantile(i), quantile(i + 1));
        if (std::find(bins.begin(), bins.end(), p) == bins.end()) bins.push_back(p);
      }
      out.insert(out.end(), bins.begin(), bins.end());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Views and explanations

struct ProjectionView {
  std::size_t relation = 0;
  std::vector<std::size_t> data_attrs;  // column indices, ascending
  friend bool operator==(const ProjectionView&, const ProjectionView&) = default;
};

struct FKJoinView {
  std::size_t fk = 0;
  friend bool operator==(const FKJoinView&, const FKJoinView&) = default;
};

struct SelectionView {
  std::size_t relation = 0;
  std::vector<AtomicPredicate> disjuncts;
  friend bool operator==(const SelectionView&, const SelectionView&) = default;
};

struct Explanation {
  Language language = Language::Projection;
  std::vector<ProjectionView> projections;  // ascending relation
  std::vector<FKJoinView> joins;  // ascending fk
  std::vector<SelectionView> selections;  // ascending relation

  static Explanation empty(Language l) { return Explanation{l, {}, {}, {}}; }

  const ProjectionView* projection_of(std::size_t rel) const {
    for (const auto& p : projections)
      if (p.relation == rel) return &p;
    return nullptr;
  }
  const SelectionView* selection_of(std::size_t rel) const {
    for (const auto& s : selections)
      if (s.relation == rel) return &s;
    return nullptr;
  }
  bool joins_fk(std::size_t fk) const {
    return std::any_of(joins.begin(), joins.end(), [&](const auto& j) { return j.fk == fk; });
  }

  /// Sorts views and drops empty ones.
  void normalize() {
    std::erase_if(projections, [](const auto& p) { return p.data_attrs.empty(); });
    std::erase_if(selections, [](const auto& s) { return s.disjuncts.empty(); });
    for (auto& p : projections) {
      std::sort(p.data_attrs.begin(), p.data_attrs.end());
      p.data_attrs.erase(std::unique(p.data_attrs.begin(), p.data_attrs.end()), p.data_attrs.end());
    }
    std::sort(projections.begin(), projections.end(), [](auto& a, auto& b) { return a.relation < b.relation; });
    std::sort(joins.begin(), joins.end(), [](auto& a, auto& b) { return a.fk < b.fk; });
    joins.erase(std::unique(joins.begin(), joins.end()), joins.end());
    std::sort(selections.begin(), selections.end(), [](auto& a, auto& b) { return a.relation < b.relation; });
  }

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

inline std::size_t cost(const Explanation& e) {
  std::size_t c = 0;
  for (const auto& p : e.projections) c += p.data_attrs.size();
  c += e.joins.size();
  for (const auto& s : e.selections) c += s.disjuncts.size();
  return c;
}

/// Builds a projection explanation from (relation, column) pairs.
inline Explanation projection_explanation(const std::vector<std::pair<std::size_t, std::size_t>>& attrs,
                                          Language lang = Language::Projection) {
  Explanation e = Explanation::empty(lang);
  for (auto [r, c] : attrs) {
    auto it = std::find_if(e.projections.begin(), e.projections.end(), [&](auto& p) { return p.relation == r; });
    if (it == e.projections.end()) {
      e.projections.push_back({r, {}});
      it = e.projections.end() - 1;
    }
    it->data_attrs.push_back(c);
  }
  e.normalize();
  return e;
}

inline Explanation fkjoin_explanation(const std::vector<std::size_t>& fks, Language lang = Language::FKJoin) {
  Explanation e = Explanation::empty(lang);
  for (auto f : fks) e.joins.push_back({f});
  e.normalize();
  return e;
}

/// All feature columns as (relation, column), schema order.
inline std::vector<std::pair<std::size_t, std::size_t>> all_features(const DatabaseSchema& schema) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t r = 0; r < schema.relation_count(); ++r)
    for (auto c : schema.feature_columns(r)) out.emplace_back(r, c);
  return out;
}

/// Explanation that retains everything its language can express.
inline Explanation full_explanation(const DatabaseSchema& schema, Language lang) {
  Explanation e = Explanation::empty(lang);
  if (has_projection(lang)) e = projection_explanation(all_features(schema), lang);
  if (has_join(lang))
    for (std::size_t f = 0; f < schema.fk_count(); ++f) e.joins.push_back({f});
  if (lang == Language::Selection) {
    for (std::size_t r = 0; r < schema.relation_count(); ++r)
      for (auto c : schema.feature_columns(r))
        if (schema.relation(r).attributes[c].kind == AttrKind::Numeric) {
          // Tautology over numbers; rows with a Missing value in this column are not covered.
          e.selections.push_back({r, {AtomicPredicate::range(r, c, std::numeric_limits<double>::lowest(),
                                                                   std::numeric_limits<double>::max())}});
          break;
        }
  }
  e.normalize();
  return e;
}

inline void validate_explanation(const DatabaseSchema& schema, const Explanation& e) {
  auto bad = [](const std::string& what) { fail(ErrorKind::DomainError, "invalid explanation: " + what); };
  if (!has_projection(e.language) && !e.projections.empty()) bad(std::string(to_string(e.language)) + " has projection views");
  if (!has_join(e.language) && !e.joins.empty()) bad(std::string(to_string(e.language)) + " has join views");
  if (!has_selection(e.language) && !e.selections.empty()) bad(std::string(to_string(e.language)) + " has selection views");
  std::set<std::size_t> seen;
  for (const auto& p : e.projections) {
    if (p.relation >= schema.relation_count()) bad("projection relation out of range");
    if (!seen.insert(p.relation).second) bad("two projection views on " + schema.relation(p.relation).name);
    for (auto c : p.data_attrs)
      if (c >= schema.relation(p.relation).attributes.size() || !schema.is_feature(p.relation, c))
        bad("projection on non-data attribute of " + schema.relation(p.relation).name);
  }
  seen.clear();
  for (const auto& j : e.joins) {
    if (j.fk >= schema.fk_count()) bad("join on undeclared FK");
    if (!seen.insert(j.fk).second) bad("duplicate join view " + schema.fk(j.fk).id);
  }
  seen.clear();
  for (const auto& s : e.selections) {
    if (s.relation >= schema.relation_count()) bad("selection relation out of range");
    if (!seen.insert(s.relation).second) bad("two selection views on " + schema.relation(s.relation).name);
    if (s.disjuncts.empty()) bad("selection view without predicates");
    const auto* proj = e.projection_of(s.relation);
    for (const auto& p : s.disjuncts) {
      if (p.relation != s.relation) bad("predicate on another relation inside selection view");
      if (p.column >= schema.relation(p.relation).attributes.size() || !schema.is_feature(p.relation, p.column))
        bad("predicate on non-data attribute");
      const auto kind = schema.relation(p.relation).attributes[p.column].kind;
      if (p.form == AtomicPredicate::Form::Eq && kind != AttrKind::Categorical) bad("equality predicate on numeric attribute");
      if (p.form == AtomicPredicate::Form::Range && (kind != AttrKind::Numeric || !(p.lo <= p.hi)))
        bad("malformed range predicate");
      if (has_projection(e.language) &&
          (!proj || !std::binary_search(proj->data_attrs.begin(), proj->data_attrs.end(), p.column)))
        bad("predicate attribute " + schema.relation(p.relation).attributes[p.column].name + " is not projected");
    }
  }
}

// ---------------------------------------------------------------------------
// Protected sets

/// FK columns retained verbatim: all of them, unless the language perturbs
/// foreign keys, in which case only those of joined or non-perturbable FKs.
inline std::vector<std::vector<bool>> retained_fk_columns(const DatabaseSchema& schema, const Explanation& e) {
  std::vector<std::vector<bool>> keep(schema.relation_count());
  for (std::size_t r = 0; r < schema.relation_count(); ++r) keep[r].assign(schema.relation(r).attributes.size(), false);
  for (std::size_t f = 0; f < schema.fk_count(); ++f) {
    const auto& fk = schema.resolved_fk(f);
    if (has_join(e.language) && fk.perturbable && !e.joins_fk(f)) continue;
    for (auto c : fk.source_cols) keep[fk.source][c] = true;
  }
  return keep;
}

/// Attr(E): key columns, retained FK columns and projected data attributes.
inline std::vector<std::vector<bool>> attrs_of(const DatabaseSchema& schema, const Explanation& e) {
  auto keep = retained_fk_columns(schema, e);
  for (std::size_t r = 0; r < schema.relation_count(); ++r)
    for (auto c : schema.key_columns(r)) keep[r][c] = true;
  for (const auto& p : e.projections)
    for (auto c : p.data_attrs) keep[p.relation][c] = true;
  return keep;
}

/// FK(E) as a per-FK flag.
inline std::vector<bool> fks_of(const DatabaseSchema& schema, const Explanation& e) {
  std::vector<bool> out(schema.fk_count(), false);
  for (const auto& j : e.joins) out.at(j.fk) = true;
  return out;
}

/// Tups(E): per relation, rows satisfying some disjunct of its selection view.
inline std::vector<std::vector<bool>> tups_of(const DatabaseSchema& schema, const Database& db, const Explanation& e) {
  std::vector<std::vector<bool>> out(schema.relation_count());
  for (std::size_t r = 0; r < schema.relation_count(); ++r) out[r].assign(db.relation(r).rows(), false);
  for (const auto& s : e.selections)
    for (const auto& p : s.disjuncts) {
      PredicateMatcher m(db, p);
      for (std::size_t row = 0; row < out[s.relation].size(); ++row)
        if (m(row)) out[s.relation][row] = true;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Concrete views

struct SliceView {
  std::size_t relation = 0;
  std::vector<std::size_t> columns;  // ascending
  std::vector<AtomicPredicate> where;  // disjunction; empty = no filter
  bool implicit = false;
};

struct JoinView {
  std::size_t fk = 0;
  SliceView source, target;
};

using ConcreteView = std::variant<SliceView, JoinView>;

namespace detail {

inline std::vector<std::size_t> merge_columns(std::vector<std::size_t> a) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

}  // namespace detail

/// Per-relation slice carrying the relation's explained content (composite of
/// its projection and selection views).
inline SliceView relation_slice(const DatabaseSchema& schema, const Explanation& e, std::size_t r) {
  const auto fkcols = retained_fk_columns(schema, e);
  std::vector<std::size_t> base(schema.key_columns(r));
  for (std::size_t c = 0; c < fkcols[r].size(); ++c)
    if (fkcols[r][c]) base.push_back(c);
  SliceView v{r, {}, {}, false};
  const auto* proj = e.projection_of(r);
  const auto* sel = e.selection_of(r);
  if (e.language == Language::Selection || e.language == Language::FKJoin) {
    for (std::size_t c = 0; c < schema.relation(r).attributes.size(); ++c)
      if (schema.role(r, c) == AttrRole::Data) base.push_back(c);
  } else if (proj) {
    base.insert(base.end(), proj->data_attrs.begin(), proj->data_attrs.end());
  }
  v.columns = detail::merge_columns(std::move(base));
  if (sel) v.where = sel->disjuncts;
  v.implicit = e.language == Language::FKJoin || (e.language == Language::Selection ? !sel : !proj && !sel);
  return v;
}

/// All views an explanation fixes, implicit ones included, in a stable order.
inline std::vector<ConcreteView> concrete_views(const DatabaseSchema& schema, const Explanation& e) {
  validate_explanation(schema, e);
  const auto fkcols = retained_fk_columns(schema, e);
  std::vector<ConcreteView> out;
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    std::vector<std::size_t> cols(schema.key_columns(r));
    for (std::size_t c = 0; c < fkcols[r].size(); ++c)
      if (fkcols[r][c]) cols.push_back(c);
    out.emplace_back(SliceView{r, detail::merge_columns(std::move(cols)), {}, true});
    auto v = relation_slice(schema, e, r);
    if (!v.implicit) out.emplace_back(std::move(v));
  }
  for (const auto& j : e.joins) {
    const auto& fk = schema.resolved_fk(j.fk);
    out.emplace_back(JoinView{j.fk, relation_slice(schema, e, fk.source), relation_slice(schema, e, fk.target)});
  }
  return out;
}

/// Native result of a view as a sorted set of rendered rows.
using ViewResult = std::vector<std::vector<std::string>>;

namespace detail {

inline std::vector<bool> slice_rows(const Database& db, const SliceView& v) {
  const auto n = db.relation(v.relation).rows();
  std::vector<bool> keep(n, v.where.empty());
  for (const auto& p : v.where) {
    PredicateMatcher m(db, p);
    for (std::size_t row = 0; row < n; ++row)
      if (!keep[row] && m(row)) keep[row] = true;
  }
  return keep;
}

inline void append_cells(const Database& db, const SliceView& v, std::size_t row, std::vector<std::string>& out) {
  for (auto c : v.columns) {
    const auto& cell = db.relation(v.relation).at(row, c);
    // Tag prefix keeps Missing distinct from the empty string.
    out.push_back(cell.is_missing() ? std::string("\x01") : db.render(v.relation, c, cell));
  }
}

}  // namespace detail

inline ViewResult evaluate_view(const DatabaseSchema& schema, const Database& db, const ConcreteView& view) {
  ViewResult out;
  if (const auto* s = std::get_if<SliceView>(&view)) {
    const auto keep = detail::slice_rows(db, *s);
    for (std::size_t row = 0; row < keep.size(); ++row) {
      if (!keep[row]) continue;
      std::vector<std::string> t;
      detail::append_cells(db, *s, row, t);
      out.push_back(std::move(t));
    }
  } else {
    const auto& j = std::get<JoinView>(view);
    const auto targets = resolve_fk_targets(schema, db, j.fk);
    const auto left = detail::slice_rows(db, j.source);
    const auto right = detail::slice_rows(db, j.target);
    for (std::size_t row = 0; row < targets.size(); ++row) {
      if (!left[row] || !right[targets[row]]) continue;
      std::vector<std::string> t;
      detail::append_cells(db, j.source, row, t);
      detail::append_cells(db, j.target, targets[row], t);
      out.push_back(std::move(t));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// SQL

namespace sql {

inline bool is_reserved(std::string_view w) {
  static const std::set<std::string, std::less<>> words = {
      "all",   "and",  "as",    "between", "by",     "case",   "create", "cross", "delete", "distinct",
      "else",  "end",  "from",  "full",    "group",  "having", "in",     "inner", "insert", "into",
      "is",    "join", "key",   "left",    "like",   "limit",  "not",    "null",  "on",     "or",
      "order", "outer", "right", "select",  "table",  "then",   "union",  "update", "using", "values",
      "view",  "when", "where", "with"};
  std::string lower(w);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return words.count(lower) > 0;
}

/// Double-quotes an identifier only when it is not a plain lower/upper/digit/underscore word.
inline std::string identifier(std::string_view name) {
  bool plain = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
  for (char ch : name)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_')) plain = false;
  if (plain && !is_reserved(name)) return std::string(name);
  std::string out = "\"";
  for (char ch : name) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// Categorical literal: canonical numbers render bare, other text single-quoted.
inline std::string literal(std::string_view text) {
  if (auto x = parse_number(text); x && format_number(*x) == text) return std::string(text);
  std::string out = "'";
  for (char ch : text) {
    if (ch == '\'') out += '\'';
    out += ch;
  }
  return out + "'";
}

/// Initials of the underscore-separated words of a relation name.
inline std::string initials(std::string_view name) {
  std::string out;
  bool start = true;
  for (char ch : name) {
    if (ch == '_') {
      start = true;
      continue;
    }
    if (start && std::isalpha(static_cast<unsigned char>(ch)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    start = false;
  }
  if (out.empty()) out = "t";
  return out;
}

class AliasTable {
 public:
  std::string assign(std::string_view relation) {
    auto base = initials(relation);
    std::string a = base;
    for (int k = 2; used_.count(a) || is_reserved(a); ++k) a = base + std::to_string(k);
    used_.insert(a);
    return a;
  }

 private:
  std::set<std::string> used_;
};

inline std::string predicate(const DatabaseSchema& schema, const AtomicPredicate& p, const std::string& alias) {
  const auto col = alias + "." + identifier(schema.relation(p.relation).attributes.at(p.column).name);
  if (p.form == AtomicPredicate::Form::Eq) return col + " = " + literal(p.value);
  return "(" + col + " >= " + format_number(p.lo) + " AND " + col + " <= " + format_number(p.hi) + ")";
}

inline std::string where_clause(const DatabaseSchema& schema, const std::vector<AtomicPredicate>& where,
                                const std::string& alias) {
  std::string s;
  for (std::size_t i = 0; i < where.size(); ++i) {
    if (i) s += " OR ";
    s += predicate(schema, where[i], alias);
  }
  return s;
}

inline std::string select_list(const DatabaseSchema& schema, const SliceView& v) {
  if (v.columns.size() == schema.relation(v.relation).attributes.size()) return "*";
  std::string s;
  for (std::size_t i = 0; i < v.columns.size(); ++i) {
    if (i) s += ", ";
    s += identifier(schema.relation(v.relation).attributes[v.columns[i]].name);
  }
  return s;
}

/// "a.x=b.y AND ..." for one FK, with the `first` side's alias leading.
inline std::string on_clause(const DatabaseSchema& schema, std::size_t f, const std::string& source_alias,
                             const std::string& target_alias, bool source_first) {
  const auto& fk = schema.resolved_fk(f);
  std::string s;
  for (std::size_t i = 0; i < fk.source_cols.size(); ++i) {
    if (i) s += " AND ";
    const auto lhs = source_alias + "." + identifier(schema.relation(fk.source).attributes[fk.source_cols[i]].name);
    const auto rhs = target_alias + "." + identifier(schema.relation(fk.target).attributes[fk.target_cols[i]].name);
    s += source_first ? lhs + "=" + rhs : rhs + "=" + lhs;
  }
  return s;
}

}  // namespace sql

inline std::string to_sql(const DatabaseSchema& schema, const SliceView& v) {
  sql::AliasTable aliases;
  const auto& name = schema.relation(v.relation).name;
  const auto alias = aliases.assign(name);
  std::string s = "SELECT " + sql::select_list(schema, v) + "\nFROM " + sql::identifier(name) + " " + alias;
  if (!v.where.empty()) s += "\nWHERE " + sql::where_clause(schema, v.where, alias);
  return s;
}

inline std::string to_sql(const DatabaseSchema& schema, const JoinView& j) {
  sql::AliasTable aliases;
  const auto& fk = schema.resolved_fk(j.fk);
  const auto& src = schema.relation(fk.source).name;
  const auto& tgt = schema.relation(fk.target).name;
  const auto sa = aliases.assign(src);
  const auto ta = aliases.assign(tgt);
  std::string s = "SELECT * FROM " + sql::identifier(src) + " " + sa + "\nJOIN " + sql::identifier(tgt) + " " + ta +
                  " ON " + sql::on_clause(schema, j.fk, sa, ta, true);
  std::vector<std::string> conds;
  if (!j.source.where.empty()) conds.push_back("(" + sql::where_clause(schema, j.source.where, sa) + ")");
  if (!j.target.where.empty()) conds.push_back("(" + sql::where_clause(schema, j.target.where, ta) + ")");
  if (!conds.empty()) {
    s += "\nWHERE " + conds[0];
    for (std::size_t i = 1; i < conds.size(); ++i) s += " AND " + conds[i];
  }
  return s;
}

inline std::string to_sql(const DatabaseSchema& schema, const ConcreteView& v) {
  return std::visit([&](const auto& x) { return to_sql(schema, x); }, v);
}

/// Joins of an explanation reachable from the target relation, rendered as
/// one statement in breadth-first order from the target. Empty if none.
inline std::string joined_sql(const DatabaseSchema& schema, const Explanation& e) {
  sql::AliasTable aliases;
  std::map<std::size_t, std::string> alias_of;
  const auto target = schema.target();
  alias_of[target] = aliases.assign(schema.relation(target).name);
  std::string s = "SELECT * FROM " + sql::identifier(schema.relation(target).name) + " " + alias_of[target];
  std::vector<bool> used(schema.fk_count(), false);
  std::vector<std::size_t> frontier{target};
  bool any = false;
  for (std::size_t i = 0; i < frontier.size(); ++i) {
    const auto r = frontier[i];
    for (const auto& j : e.joins) {
      if (used[j.fk]) continue;
      const auto& fk = schema.resolved_fk(j.fk);
      const bool from_source = fk.source == r;
      if (!from_source && fk.target != r) continue;
      const auto other = from_source ? fk.target : fk.source;
      used[j.fk] = true;
      any = true;
      std::string other_alias;
      if (other == r) {
        other_alias = aliases.assign(schema.relation(other).name);
      } else if (alias_of.count(other)) {
        other_alias = alias_of[other];
      } else {
        other_alias = aliases.assign(schema.relation(other).name);
        alias_of[other] = other_alias;
        frontier.push_back(other);
      }
      const auto& sa = from_source ? alias_of[r] : other_alias;
      const auto& ta = from_source ? other_alias : alias_of[r];
      s += "\nJOIN " + sql::identifier(schema.relation(other).name) + " " + other_alias + " ON " +
           sql::on_clause(schema, j.fk, sa, ta, from_source);
    }
  }
  return any ? s : std::string();
}

/// Every non-implicit view of `e` as a SQL statement, then the joined query when `e` has joins.
inline std::string explanation_sql(const DatabaseSchema& schema, const Explanation& e) {
  std::string out;
  for (const auto& v : concrete_views(schema, e)) {
    if (const auto* s = std::get_if<SliceView>(&v); s && s->implicit) continue;
    out += to_sql(schema, v) + ";\n\n";
  }
  if (has_join(e.language) && !e.joins.empty()) out += "-- joined\n" + joined_sql(schema, e) + ";\n";
  return out;
}

/// Collapses whitespace runs and drops whitespace next to operators and punctuation.
inline std::string normalize_sql(std::string_view text) {
  std::string collapsed;
  bool space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = true;
      continue;
    }
    if (space && !collapsed.empty()) collapsed += ' ';
    space = false;
    collapsed += ch;
  }
  auto tight = [](char ch) { return std::string_view("=,()<>!").find(ch) != std::string_view::npos; };
  std::string out;
  for (std::size_t i = 0; i < collapsed.size(); ++i) {
    if (collapsed[i] == ' ' && ((i > 0 && tight(collapsed[i - 1])) || (i + 1 < collapsed.size() && tight(collapsed[i + 1]))))
      continue;
    out += collapsed[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Explanation file

inline Json predicate_to_json(const DatabaseSchema& schema, const AtomicPredicate& p) {
  Json j;
  j["attribute"] = schema.relation(p.relation).attributes.at(p.column).name;
  if (p.form == AtomicPredicate::Form::Eq) {
    j["op"] = "eq";
    j["value"] = p.value;
  } else {
    j["op"] = "range";
    j["lo"] = p.lo;
    j["hi"] = p.hi;
  }
  return j;
}

/// Ordered document: language, cost, rendered views (with components, cost and SQL), joined SQL.
inline Json explanation_to_json(const DatabaseSchema& schema, const Explanation& e) {
  Json j;
  j["language"] = to_string(e.language);
  j["cost"] = cost(e);
  j["views"] = Json::array();
  for (const auto& v : concrete_views(schema, e)) {
    Json vj;
    if (const auto* s = std::get_if<SliceView>(&v)) {
      if (s->implicit) continue;
      const auto* proj = e.projection_of(s->relation);
      const auto* sel = e.selection_of(s->relation);
      vj["type"] = proj && sel ? "projection_selection" : proj ? "projection" : "selection";
      vj["relation"] = schema.relation(s->relation).name;
      vj["attributes"] = Json::array();
      std::size_t c = 0;
      if (proj) {
        for (auto a : proj->data_attrs) vj["attributes"].push_back(schema.relation(s->relation).attributes[a].name);
        c += proj->data_attrs.size();
      }
      vj["predicates"] = Json::array();
      if (sel) {
        for (const auto& p : sel->disjuncts) vj["predicates"].push_back(predicate_to_json(schema, p));
        c += sel->disjuncts.size();
      }
      vj["cost"] = c;
    } else {
      const auto& jv = std::get<JoinView>(v);
      vj["type"] = "join";
      vj["fk"] = schema.fk(jv.fk).id;
      vj["source"] = schema.relation(schema.resolved_fk(jv.fk).source).name;
      vj["target"] = schema.relation(schema.resolved_fk(jv.fk).target).name;
      vj["cost"] = 1;
    }
    vj["sql"] = to_sql(schema, v);
    j["views"].push_back(std::move(vj));
  }
  if (has_join(e.language)) j["joined_sql"] = joined_sql(schema, e);
  return j;
}

inline Explanation explanation_from_json(const DatabaseSchema& schema, const Json& j) {
  try {
    Explanation e = Explanation::empty(parse_language(j.at("language").get<std::string>()));
    for (const auto& vj : j.at("views")) {
      const auto type = vj.at("type").get<std::string>();
      if (type == "join") {
        e.joins.push_back({schema.fk_index(vj.at("fk").get<std::string>())});
        continue;
      }
      const auto r = schema.relation_index(vj.at("relation").get<std::string>());
      const auto& rs = schema.relation(r);
      if (type == "projection" || type == "projection_selection") {
        ProjectionView p{r, {}};
        for (const auto& a : vj.at("attributes")) p.data_attrs.push_back(rs.index_of(a.get<std::string>()));
        e.projections.push_back(std::move(p));
      }
      if (type == "selection" || type == "projection_selection") {
        SelectionView s{r, {}};
        for (const auto& pj : vj.at("predicates")) {
          const auto c = rs.index_of(pj.at("attribute").get<std::string>());
          const auto op = pj.at("op").get<std::string>();
          if (op == "eq")
            s.disjuncts.push_back(AtomicPredicate::eq(r, c, pj.at("value").get<std::string>()));
          else if (op == "range")
            s.disjuncts.push_back(AtomicPredicate::range(r, c, pj.at("lo").get<double>(), pj.at("hi").get<double>()));
          else
            fail(ErrorKind::ParseError, "unknown predicate op '" + op + "'");
        }
        e.selections.push_back(std::move(s));
      }
      if (type != "projection" && type != "selection" && type != "projection_selection")
        fail(ErrorKind::ParseError, "unknown view type '" + type + "'");
    }
    e.normalize();
    validate_explanation(schema, e);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::ParseError, std::string("explanation file: ") + ex.what());
  }
}

}  // namespace viewex
