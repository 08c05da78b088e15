#pragma once

// Contingency databases that agree with D on every view of an explanation.
//
// Per relation the data attributes split into
//   free       not explained; permuted across all rows
//   protected  explained; fixed on protected rows (Tups(E) when the relation
//              has a selection view, all rows otherwise) and permuted within
//              the remaining rows
// Foreign keys outside FK(E) are rewired first (FK languages only). Keys, the
// label and FK columns of joined or non-perturbable FKs never change.

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "viewex/explang.hpp"
#include "viewex/relstore.hpp"
#include "viewex/rng.hpp"

namespace viewex {

enum class PerturbFamily { IndPerm, JointPerm, FkUniform, FkFreq };

inline std::string_view to_string(PerturbFamily f) {
  switch (f) {
    case PerturbFamily::IndPerm: return "IndPerm";
    case PerturbFamily::JointPerm: return "JointPerm";
    case PerturbFamily::FkUniform: return "FkUniform";
    case PerturbFamily::FkFreq: return "FkFreq";
  }
  return "?";
}

inline PerturbFamily parse_family(std::string_view s) {
  for (auto f : {PerturbFamily::IndPerm, PerturbFamily::JointPerm, PerturbFamily::FkUniform, PerturbFamily::FkFreq})
    if (to_string(f) == s) return f;
  fail(ErrorKind::ParseError, "unknown perturbation family '" + std::string(s) + "'");
}

inline bool is_permutation_family(PerturbFamily f) { return f == PerturbFamily::IndPerm || f == PerturbFamily::JointPerm; }

/// `family` drives data permutation (or FK rewiring for pure FKJoin);
/// `fk_family` drives FK rewiring in the FKJoin composites.
struct PerturbationSpec {
  PerturbFamily family = PerturbFamily::IndPerm;
  PerturbFamily fk_family = PerturbFamily::FkUniform;
  std::uint64_t seed = 0;

  PerturbationSpec with_seed(std::uint64_t s) const {
    auto c = *this;
    c.seed = s;
    return c;
  }
};

inline PerturbationSpec default_spec(Language lang, std::uint64_t seed = 0) {
  if (lang == Language::FKJoin) return {PerturbFamily::FkUniform, PerturbFamily::FkUniform, seed};
  return {PerturbFamily::IndPerm, PerturbFamily::FkUniform, seed};
}

inline void check_compatible(Language lang, const PerturbationSpec& spec) {
  const bool ok = lang == Language::FKJoin ? !is_permutation_family(spec.family)
                  : has_join(lang)        ? is_permutation_family(spec.family) && !is_permutation_family(spec.fk_family)
                                          : is_permutation_family(spec.family);
  if (!ok)
    fail(ErrorKind::DomainError, "perturbation family " + std::string(to_string(spec.family)) + "/" +
                                     std::string(to_string(spec.fk_family)) + " does not fit language " +
                                     std::string(to_string(lang)));
}

struct RelationPlan {
  std::vector<std::size_t> free_attrs;
  std::vector<std::size_t> protected_attrs;
  std::vector<bool> protected_rows;
};

inline std::vector<RelationPlan> perturbation_plan(const DatabaseSchema& schema, const Database& db,
                                                   const Explanation& e) {
  const auto tups = tups_of(schema, db, e);
  std::vector<RelationPlan> plan(schema.relation_count());
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    auto& p = plan[r];
    const auto n = db.relation(r).rows();
    if (e.language == Language::FKJoin) {
      p.protected_attrs = schema.feature_columns(r);
      p.protected_rows.assign(n, true);
      continue;
    }
    std::vector<bool> explained(schema.relation(r).attributes.size(), e.language == Language::Selection);
    if (const auto* proj = e.projection_of(r))
      for (auto c : proj->data_attrs) explained[c] = true;
    for (auto c : schema.feature_columns(r)) (explained[c] ? p.protected_attrs : p.free_attrs).push_back(c);
    if (e.selection_of(r))
      p.protected_rows = tups[r];
    else
      p.protected_rows.assign(n, e.language != Language::Selection);
  }
  return plan;
}

namespace detail {

inline void permute_rows(std::vector<Value>& column, const std::vector<std::size_t>& rows,
                         const std::vector<std::size_t>& perm) {
  std::vector<Value> src(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) src[i] = column[rows[i]];
  for (std::size_t i = 0; i < rows.size(); ++i) column[rows[i]] = src[perm[i]];
}

/// Permutes `attrs` over `rows`: one permutation per attribute or one shared.
inline void permute_group(RelationData& rel, const std::vector<std::size_t>& attrs, const std::vector<std::size_t>& rows,
                          PerturbFamily family, Rng& rng) {
  if (attrs.empty() || rows.size() < 2) return;
  if (family == PerturbFamily::JointPerm) {
    const auto perm = rng.permutation(rows.size());
    for (auto c : attrs) permute_rows(rel.columns[c], rows, perm);
  } else {
    for (auto c : attrs) permute_rows(rel.columns[c], rows, rng.permutation(rows.size()));
  }
}

/// Points every source row of FK `f` at the given target rows, translating
/// categorical symbols into the source columns' own tables.
inline void rewire(const DatabaseSchema& schema, Database& db, std::size_t f, const std::vector<std::size_t>& targets) {
  const auto& fk = schema.resolved_fk(f);
  auto& src = db.relation(fk.source);
  const auto& tgt = db.relation(fk.target);
  for (std::size_t i = 0; i < fk.source_cols.size(); ++i) {
    const auto sc = fk.source_cols[i], tc = fk.target_cols[i];
    if (schema.relation(fk.source).attributes[sc].kind == AttrKind::Numeric) {
      for (std::size_t row = 0; row < targets.size(); ++row) src.columns[sc][row] = tgt.columns[tc][targets[row]];
      continue;
    }
    std::map<std::int32_t, std::int32_t> translate;
    bool cloned = false;
    for (std::size_t row = 0; row < targets.size(); ++row) {
      const auto& tv = tgt.columns[tc][targets[row]];
      auto it = translate.find(tv.sym);
      if (it == translate.end()) {
        const auto text = db.render(fk.target, tc, tv);
        auto id = src.symbols[sc]->find(text);
        if (!id) {
          if (!cloned) {
            src.symbols[sc] = std::make_shared<SymbolTable>(*src.symbols[sc]);
            cloned = true;
          }
          id = src.symbols[sc]->intern(text);
        }
        it = translate.emplace(tv.sym, *id).first;
      }
      src.columns[sc][row] = Value::symbol(it->second);
    }
  }
}

inline void perturb_fk(const DatabaseSchema& schema, Database& db, std::size_t f, PerturbFamily family, Rng& rng) {
  const auto& fk = schema.resolved_fk(f);
  const auto ns = db.relation(fk.source).rows();
  const auto nt = db.relation(fk.target).rows();
  if (ns == 0) return;
  if (nt == 0)
    fail(ErrorKind::ImpossiblePerturbation, "FK " + schema.fk(f).id + " has source tuples but its target relation " +
                                                schema.relation(fk.target).name + " is empty");
  std::vector<std::size_t> targets(ns);
  if (family == PerturbFamily::FkUniform) {
    for (auto& t : targets) t = rng.index(nt);
  } else {
    const auto current = resolve_fk_targets(schema, db, f);
    std::map<std::size_t, std::size_t> counts;
    for (auto t : current) ++counts[t];
    // Random injection of the distinct values onto a random subset of target keys.
    auto chosen = rng.subset(nt, counts.size());
    rng.shuffle(chosen);
    std::size_t pos = 0, k = 0;
    for (const auto& [value, count] : counts) {
      for (std::size_t i = 0; i < count; ++i) targets[pos++] = chosen[k];
      ++k;
    }
    rng.shuffle(targets);
  }
  rewire(schema, db, f, targets);
}

}  // namespace detail

inline Database perturb(const DatabaseSchema& schema, const Database& db, const Explanation& e,
                        const PerturbationSpec& spec) {
  validate_explanation(schema, e);
  check_compatible(e.language, spec);
  Database out = db;
  Rng rng(spec.seed);
  if (has_join(e.language)) {
    const auto fk_family = e.language == Language::FKJoin ? spec.family : spec.fk_family;
    for (std::size_t f = 0; f < schema.fk_count(); ++f)
      if (schema.resolved_fk(f).perturbable && !e.joins_fk(f)) detail::perturb_fk(schema, out, f, fk_family, rng);
  }
  if (e.language == Language::FKJoin) return out;
  const auto plan = perturbation_plan(schema, db, e);
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    const auto& p = plan[r];
    auto& rel = out.relation(r);
    std::vector<std::size_t> all_rows(rel.rows()), open_rows;
    for (std::size_t i = 0; i < all_rows.size(); ++i) {
      all_rows[i] = i;
      if (!p.protected_rows[i]) open_rows.push_back(i);
    }
    detail::permute_group(rel, p.free_attrs, all_rows, spec.family, rng);
    detail::permute_group(rel, p.protected_attrs, open_rows, spec.family, rng);
  }
  return out;
}

/// Checks that every view of `e` evaluates identically on both databases.
inline bool views_agree(const DatabaseSchema& schema, const Database& a, const Database& b, const Explanation& e) {
  for (const auto& v : concrete_views(schema, e))
    if (evaluate_view(schema, a, v) != evaluate_view(schema, b, v)) return false;
  return true;
}

}  // namespace viewex
