#pragma once

// Explanation discovery: gradient-based mask learning on a frozen model,
// thresholding into views, ranking and greedy baselines, and an exhaustive
// oracle for small search spaces.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "viewex/determinacy.hpp"
#include "viewex/explang.hpp"
#include "viewex/model.hpp"
#include "viewex/train.hpp"

namespace viewex {

enum class MaskKind { Column, FkPk, Filter };

inline std::string_view to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Column: return "column";
    case MaskKind::FkPk: return "fkpk";
    case MaskKind::Filter: return "filter";
  }
  return "?";
}

struct MaskTrainConfig {
  double lambda = 0.3;  // column and filter units
  double fk_lambda = 0.002;  // FK units: scaled aggregates with a zero replacement
  double learning_rate = 0.1;
  std::size_t epochs = 200;
  std::size_t patience = 20;
  double threshold = 0.5;
  double init = 0.9;  // initial mask value
  double holdout = 0.2;  // fraction of instances used for early stopping
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda >= 0) || !(fk_lambda >= 0)) fail(ErrorKind::ConfigError, "mask lambda must be non-negative");
    if (!(threshold > 0 && threshold < 1)) fail(ErrorKind::ConfigError, "mask threshold must lie in (0,1)");
    if (!(init > 0 && init < 1)) fail(ErrorKind::ConfigError, "initial mask value must lie in (0,1)");
    if (!(learning_rate > 0) || epochs == 0 || patience == 0) fail(ErrorKind::ConfigError, "mask optimizer settings must be positive");
    if (!(holdout >= 0 && holdout < 1)) fail(ErrorKind::ConfigError, "mask holdout fraction must lie in [0,1)");
  }
};

/// Learnable units of one mask kind, plus masks of other kinds held fixed.
struct MaskProblem {
  MaskKind kind = MaskKind::Column;
  std::vector<std::pair<std::size_t, std::size_t>> columns;  // Column units
  std::vector<AtomicPredicate> predicates;  // Filter units
  std::optional<ColumnMask> fixed_column;
  std::optional<FkMask> fixed_fk;
};

struct MaskBundle {
  MaskKind kind = MaskKind::Column;
  std::vector<double> logits;
  std::vector<std::pair<std::size_t, std::size_t>> columns;
  std::vector<AtomicPredicate> predicates;
  std::vector<double> loss_trace;  // training objective per epoch
  std::vector<double> task_trace;  // task loss part of it
  std::vector<double> holdout_trace;
  std::size_t best_epoch = 0;

  std::vector<double> values() const {
    std::vector<double> v(logits.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = kernels::sigmoid(logits[i]);
    return v;
  }
};

inline MaskProblem column_problem(const DatabaseSchema& schema) { return {MaskKind::Column, all_features(schema), {}, {}, {}}; }
inline MaskProblem fkpk_problem() { return {MaskKind::FkPk, {}, {}, {}, {}}; }
inline MaskProblem filter_problem(std::vector<AtomicPredicate> predicates) {
  return {MaskKind::Filter, {}, std::move(predicates), {}, {}};
}

/// Hard column mask: 1 on the given columns, 0 elsewhere.
inline ColumnMask hard_column_mask(const DatabaseSchema& schema, const Explanation& e) {
  ColumnMask m;
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    const auto& feats = schema.feature_columns(r);
    const auto* p = e.projection_of(r);
    std::vector<double> v(feats.size(), 0.0);
    for (std::size_t i = 0; i < feats.size(); ++i)
      if (p && std::binary_search(p->data_attrs.begin(), p->data_attrs.end(), feats[i])) v[i] = 1.0;
    m.values.push_back(std::move(v));
  }
  return m;
}

inline FkMask hard_fk_mask(const DatabaseSchema& schema, const Explanation& e) {
  FkMask m;
  for (std::size_t f = 0; f < schema.fk_count(); ++f) m.values.push_back(e.joins_fk(f) ? 1.0 : 0.0);
  return m;
}

namespace detail {

inline std::size_t feature_slot(const DatabaseSchema& schema, std::size_t r, std::size_t c) {
  const auto& feats = schema.feature_columns(r);
  return static_cast<std::size_t>(std::find(feats.begin(), feats.end(), c) - feats.begin());
}

/// Mask values for the model from the current unit values.
inline MaskValues assemble_masks(const DatabaseSchema& schema, const Database& db, const MaskProblem& p,
                                 const std::vector<double>& unit, const std::vector<std::vector<std::uint32_t>>& pred_rows) {
  MaskValues mv;
  if (p.fixed_column) mv.column = p.fixed_column;
  if (p.fixed_fk) mv.fk = p.fixed_fk;
  switch (p.kind) {
    case MaskKind::Column: {
      if (!mv.column) {
        mv.column = ColumnMask{};
        for (std::size_t r = 0; r < schema.relation_count(); ++r)
          mv.column->values.emplace_back(schema.feature_columns(r).size(), 1.0);
      }
      for (std::size_t i = 0; i < p.columns.size(); ++i) {
        const auto [r, c] = p.columns[i];
        mv.column->values[r][feature_slot(schema, r, c)] = unit[i];
      }
      break;
    }
    case MaskKind::FkPk:
      mv.fk = FkMask{unit};
      break;
    case MaskKind::Filter: {
      FilterMask f;
      f.values = unit;
      for (const auto& pr : p.predicates) f.relation.push_back(pr.relation);
      f.rows = pred_rows;
      mv.filter = std::move(f);
      break;
    }
  }
  (void)db;
  return mv;
}

/// Chain rule from the model's mask gradients to unit values.
inline std::vector<double> unit_gradients(const DatabaseSchema& schema, const MaskProblem& p, const MaskGradients& g) {
  switch (p.kind) {
    case MaskKind::Column: {
      std::vector<double> out;
      for (auto [r, c] : p.columns) out.push_back(g.column[r][feature_slot(schema, r, c)]);
      return out;
    }
    case MaskKind::FkPk: return g.fk;
    case MaskKind::Filter: return g.filter;
  }
  return {};
}

}  // namespace detail

/// Optimizes mask logits on a frozen model: mean task loss on the true labels
/// plus lambda * sum of mask values. Replacements are redrawn every pass.
/// Returns the logits with the best held-out objective.
inline MaskBundle learn_masks(const GnnModel& model, const Database& db, std::span<const std::size_t> instances,
                              const MaskProblem& problem, const MaskTrainConfig& cfg) {
  cfg.validate();
  const auto& S = model.schema();
  if (instances.empty()) fail(ErrorKind::DomainError, "mask learning needs instances");
  const auto graph = build_graph(S, db);
  std::size_t units = 0;
  switch (problem.kind) {
    case MaskKind::Column: units = problem.columns.size(); break;
    case MaskKind::FkPk: units = S.fk_count(); break;
    case MaskKind::Filter: units = problem.predicates.size(); break;
  }
  std::vector<std::vector<std::uint32_t>> pred_rows;
  for (const auto& p : problem.predicates) pred_rows.push_back(satisfying_rows(db, p));

  std::vector<std::size_t> order(instances.begin(), instances.end());
  Rng split_rng(derive_seed(cfg.seed, 0x4e1d));
  split_rng.shuffle(order);
  auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout * static_cast<double>(order.size())));
  if (n_hold >= order.size()) n_hold = 0;
  std::vector<std::size_t> fit(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> hold(order.end() - static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(fit.begin(), fit.end());
  std::sort(hold.begin(), hold.end());

  MaskBundle b;
  b.kind = problem.kind;
  b.columns = problem.columns;
  b.predicates = problem.predicates;
  b.logits.assign(units, kernels::logit(cfg.init));
  if (units == 0) return b;

  const double lambda = problem.kind == MaskKind::FkPk ? cfg.fk_lambda : cfg.lambda;
  Adam opt(units, cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, 0x3a5c));
  std::vector<double> best = b.logits;
  double best_obj = std::numeric_limits<double>::infinity();
  std::size_t since = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto vals = b.values();
    double reg = 0;
    for (double v : vals) reg += v;
    auto mv = detail::assemble_masks(S, db, problem, vals, pred_rows);
    auto draws = sample_replacements(S, db, mv, rng);
    auto g = backward(model, graph, db, fit, &mv, &draws, GradTarget::Masks);
    b.task_trace.push_back(g.loss);
    b.loss_trace.push_back(g.loss + lambda * reg);
    auto du = detail::unit_gradients(S, problem, g.masks);
    std::vector<double> dlogit(units);
    for (std::size_t i = 0; i < units; ++i) dlogit[i] = (du[i] + lambda) * vals[i] * (1.0 - vals[i]);
    opt.step(b.logits, dlogit);

    // Held-out objective at the updated logits.
    const auto nv = b.values();
    double nreg = 0;
    for (double v : nv) nreg += v;
    auto hv = detail::assemble_masks(S, db, problem, nv, pred_rows);
    auto hdraws = sample_replacements(S, db, hv, rng);
    const auto& eval = hold.empty() ? fit : hold;
    const double obj = batch_loss(model, graph, db, eval, &hv, &hdraws) + lambda * nreg;
    b.holdout_trace.push_back(obj);
    if (obj < best_obj) {
      best_obj = obj;
      best = b.logits;
      b.best_epoch = epoch;
      since = 0;
    } else if (++since >= cfg.patience) {
      break;
    }
  }
  b.logits = best;
  return b;
}

/// Keeps units with mask value >= delta.
inline Explanation threshold_mask(const DatabaseSchema& schema, const MaskBundle& b, double delta,
                                  std::optional<Language> language = std::nullopt) {
  if (!(delta > 0 && delta < 1)) fail(ErrorKind::DomainError, "threshold must lie in (0,1)");
  const auto vals = b.values();
  Explanation e;
  switch (b.kind) {
    case MaskKind::Column: {
      std::vector<std::pair<std::size_t, std::size_t>> keep;
      for (std::size_t i = 0; i < vals.size(); ++i)
        if (vals[i] >= delta) keep.push_back(b.columns[i]);
      e = projection_explanation(keep, language.value_or(Language::Projection));
      break;
    }
    case MaskKind::FkPk: {
      std::vector<std::size_t> keep;
      for (std::size_t f = 0; f < vals.size(); ++f)
        if (vals[f] >= delta) keep.push_back(f);
      e = fkjoin_explanation(keep, language.value_or(Language::FKJoin));
      break;
    }
    case MaskKind::Filter: {
      e = Explanation::empty(language.value_or(Language::Selection));
      for (std::size_t i = 0; i < vals.size(); ++i) {
        if (vals[i] < delta) continue;
        const auto& p = b.predicates[i];
        auto it = std::find_if(e.selections.begin(), e.selections.end(), [&](auto& s) { return s.relation == p.relation; });
        if (it == e.selections.end()) {
          e.selections.push_back({p.relation, {}});
          it = e.selections.end() - 1;
        }
        it->disjuncts.push_back(p);
      }
      e.normalize();
      break;
    }
  }
  (void)schema;
  return e;
}

inline MaskBundle learn_column_mask(const GnnModel& model, const Database& db, std::span<const std::size_t> instances,
                                    const MaskTrainConfig& cfg) {
  return learn_masks(model, db, instances, column_problem(model.schema()), cfg);
}

inline MaskBundle learn_fkpk_mask(const GnnModel& model, const Database& db, std::span<const std::size_t> instances,
                                  const MaskTrainConfig& cfg) {
  return learn_masks(model, db, instances, fkpk_problem(), cfg);
}

inline MaskBundle learn_filter_mask(const GnnModel& model, const Database& db, std::vector<AtomicPredicate> predicates,
                                    std::span<const std::size_t> instances, const MaskTrainConfig& cfg) {
  return learn_masks(model, db, instances, filter_problem(std::move(predicates)), cfg);
}

struct PipelineResult {
  Explanation explanation;
  std::vector<MaskBundle> stages;
};

/// Column masks first; selection candidates come only from surviving attributes,
/// learned with the surviving projection held as a hard 0/1 mask.
inline PipelineResult learn_proj_select(const GnnModel& model, const Database& db, std::span<const std::size_t> instances,
                                        const MaskTrainConfig& cfg, const PredicateConfig& pcfg = {},
                                        std::optional<FkMask> fixed_fk = std::nullopt,
                                        Language language = Language::ProjSelect,
                                        std::vector<std::pair<std::size_t, std::size_t>> columns = {}) {
  const auto& S = model.schema();
  PipelineResult out;
  auto cp = column_problem(S);
  if (!columns.empty()) cp.columns = std::move(columns);
  cp.fixed_fk = fixed_fk;
  out.stages.push_back(learn_masks(model, db, instances, cp, cfg));
  auto proj = threshold_mask(S, out.stages.back(), cfg.threshold, language);
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (const auto& p : proj.projections)
    for (auto c : p.data_attrs) kept.emplace_back(p.relation, c);
  auto fp = filter_problem(candidate_predicates(S, db, kept, pcfg));
  fp.fixed_column = hard_column_mask(S, proj);
  fp.fixed_fk = fixed_fk;
  out.stages.push_back(learn_masks(model, db, instances, fp, cfg));
  auto sel = threshold_mask(S, out.stages.back(), cfg.threshold, language);
  proj.selections = sel.selections;
  proj.normalize();
  out.explanation = std::move(proj);
  return out;
}

/// Relations connected to the target through the given FKs (undirected).
inline std::vector<bool> reachable_relations(const DatabaseSchema& schema, const std::vector<bool>& fks) {
  std::vector<bool> seen(schema.relation_count(), false);
  seen[schema.target()] = true;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t f = 0; f < schema.fk_count(); ++f) {
      if (!fks[f]) continue;
      const auto& fk = schema.resolved_fk(f);
      if (seen[fk.source] != seen[fk.target]) {
        seen[fk.source] = seen[fk.target] = true;
        changed = true;
      }
    }
  }
  return seen;
}

/// FK masks first; column masks (and optionally filter masks) only for
/// relations reachable from the target through kept joins.
inline PipelineResult learn_fkjoin_proj(const GnnModel& model, const Database& db, std::span<const std::size_t> instances,
                                        const MaskTrainConfig& cfg, bool with_selection = false,
                                        const PredicateConfig& pcfg = {}) {
  const auto& S = model.schema();
  const auto lang = with_selection ? Language::FKJoinProjSelect : Language::FKJoinProj;
  PipelineResult out;
  out.stages.push_back(learn_fkpk_mask(model, db, instances, cfg));
  const auto joins = threshold_mask(S, out.stages.back(), cfg.threshold, lang);
  const auto reach = reachable_relations(S, fks_of(S, joins));
  std::vector<std::pair<std::size_t, std::size_t>> cols;
  for (auto [r, c] : all_features(S))
    if (reach[r]) cols.emplace_back(r, c);
  const auto fixed = hard_fk_mask(S, joins);
  if (with_selection) {
    auto ps = learn_proj_select(model, db, instances, cfg, pcfg, fixed, lang, cols);
    out.stages.insert(out.stages.end(), ps.stages.begin(), ps.stages.end());
    out.explanation = std::move(ps.explanation);
  } else {
    auto cp = column_problem(S);
    cp.columns = cols;
    cp.fixed_fk = fixed;
    out.stages.push_back(learn_masks(model, db, instances, cp, cfg));
    out.explanation = threshold_mask(S, out.stages.back(), cfg.threshold, lang);
  }
  out.explanation.joins = joins.joins;
  out.explanation.normalize();
  return out;
}

// ---------------------------------------------------------------------------
// Baselines

struct RankedAttr {
  std::size_t relation = 0;
  std::size_t column = 0;
  double dev = 0.0;
};

/// Each attribute alone as a projection explanation; lower dev ranks first.
inline std::vector<RankedAttr> rank_local_impact(const DevEstimator& est, const DatabaseSchema& schema,
                                                 const PerturbationSpec& spec, std::size_t n_samples) {
  std::vector<RankedAttr> out;
  for (auto [r, c] : all_features(schema))
    out.push_back({r, c, est(projection_explanation({{r, c}}), spec, n_samples).mean});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.dev < b.dev; });
  return out;
}

/// All attributes but one; higher dev ranks first.
inline std::vector<RankedAttr> rank_pfi(const DevEstimator& est, const DatabaseSchema& schema,
                                        const PerturbationSpec& spec, std::size_t n_samples) {
  const auto feats = all_features(schema);
  std::vector<RankedAttr> out;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    auto rest = feats;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    out.push_back({feats[i].first, feats[i].second, est(projection_explanation(rest), spec, n_samples).mean});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.dev > b.dev; });
  return out;
}

struct GreedyStep {
  std::size_t unit = 0;  // feature index (projection) or FK index (expansion)
  double dev = 0.0;
  double sd = 0.0;
};

struct GreedyResult {
  Explanation explanation;
  std::vector<GreedyStep> trace;
};

/// Adds, one at a time, the attribute whose addition minimizes dev.
inline GreedyResult greedy_projection(const DevEstimator& est, const DatabaseSchema& schema,
                                      const PerturbationSpec& spec, std::size_t n_samples, std::size_t k_max) {
  if (k_max < 1) fail(ErrorKind::DomainError, "k_max must be at least 1");
  const auto feats = all_features(schema);
  std::vector<bool> used(feats.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  GreedyResult res;
  for (std::size_t step = 0; step < std::min(k_max, feats.size()); ++step) {
    std::size_t best = feats.size();
    DevReport best_rep;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      if (used[i]) continue;
      auto cand = chosen;
      cand.push_back(feats[i]);
      auto rep = est(projection_explanation(cand), spec, n_samples);
      if (best == feats.size() || rep.mean < best_rep.mean) best = i, best_rep = std::move(rep);
    }
    used[best] = true;
    chosen.push_back(feats[best]);
    res.trace.push_back({best, best_rep.mean, best_rep.sd});
  }
  res.explanation = projection_explanation(chosen);
  return res;
}

/// Greedy over FK joins incident to the relations already connected to the target.
inline GreedyResult greedy_expansion(const DevEstimator& est, const DatabaseSchema& schema,
                                     const PerturbationSpec& spec, std::size_t n_samples, std::size_t k_max) {
  if (k_max < 1) fail(ErrorKind::DomainError, "k_max must be at least 1");
  std::vector<bool> connected(schema.relation_count(), false), used(schema.fk_count(), false);
  connected[schema.target()] = true;
  std::vector<std::size_t> chosen;
  GreedyResult res;
  for (std::size_t step = 0; step < k_max; ++step) {
    std::size_t best = schema.fk_count();
    DevReport best_rep;
    for (std::size_t f = 0; f < schema.fk_count(); ++f) {
      const auto& fk = schema.resolved_fk(f);
      if (used[f] || !(connected[fk.source] || connected[fk.target])) continue;
      auto cand = chosen;
      cand.push_back(f);
      auto rep = est(fkjoin_explanation(cand), spec, n_samples);
      if (best == schema.fk_count() || rep.mean < best_rep.mean) best = f, best_rep = std::move(rep);
    }
    if (best == schema.fk_count()) break;
    used[best] = true;
    chosen.push_back(best);
    connected[schema.resolved_fk(best).source] = connected[schema.resolved_fk(best).target] = true;
    res.trace.push_back({best, best_rep.mean, best_rep.sd});
  }
  res.explanation = fkjoin_explanation(chosen);
  return res;
}

inline Explanation random_subset(const DatabaseSchema& schema, std::size_t k, std::uint64_t seed) {
  const auto feats = all_features(schema);
  if (k > feats.size())
    fail(ErrorKind::DomainError, "cannot sample " + std::to_string(k) + " of " + std::to_string(feats.size()) + " attributes");
  Rng rng(derive_seed(seed, 0x7a4d));
  std::vector<std::pair<std::size_t, std::size_t>> pick;
  for (auto i : rng.subset(feats.size(), k)) pick.push_back(feats[i]);
  return projection_explanation(pick);
}

inline constexpr std::uint64_t kOracleLimit = 1ULL << 20;

struct OracleResult {
  Explanation explanation;
  double dev = 0.0;
  std::size_t candidates = 0;
};

/// Argmin of dev over all explanations of cost <= k (Projection over data
/// attributes, FKJoin over FKs, Selection over `predicates`). Ties go to the
/// lexicographically smallest unit list.
inline OracleResult exhaustive_oracle(const DevEstimator& est, const DatabaseSchema& schema, Language language,
                                      std::size_t k, const PerturbationSpec& spec, std::size_t n_samples,
                                      const std::vector<AtomicPredicate>& predicates = {}) {
  std::size_t n = 0;
  if (language == Language::Projection)
    n = all_features(schema).size();
  else if (language == Language::FKJoin)
    n = schema.fk_count();
  else if (language == Language::Selection)
    n = predicates.size();
  else
    fail(ErrorKind::DomainError, "oracle supports Projection, FKJoin and Selection");
  k = std::min(k, n);
  std::uint64_t total = 0, binom = 1;
  for (std::size_t i = 0; i <= k; ++i) {
    if (i > 0) binom = binom * (n - i + 1) / i;
    total += binom;
    if (total > kOracleLimit)
      fail(ErrorKind::SpaceTooLarge, "oracle search space exceeds " + std::to_string(kOracleLimit) + " candidates");
  }
  const auto feats = all_features(schema);
  auto build = [&](const std::vector<std::size_t>& units) {
    if (language == Language::Projection) {
      std::vector<std::pair<std::size_t, std::size_t>> a;
      for (auto u : units) a.push_back(feats[u]);
      return projection_explanation(a);
    }
    if (language == Language::FKJoin) return fkjoin_explanation(units);
    Explanation e = Explanation::empty(Language::Selection);
    for (auto u : units) {
      const auto& p = predicates[u];
      auto it = std::find_if(e.selections.begin(), e.selections.end(), [&](auto& s) { return s.relation == p.relation; });
      if (it == e.selections.end()) {
        e.selections.push_back({p.relation, {}});
        it = e.selections.end() - 1;
      }
      it->disjuncts.push_back(p);
    }
    e.normalize();
    return e;
  };
  OracleResult best;
  bool have = false;
  std::vector<std::size_t> units;
  // Depth-first enumeration in lexicographic order of the unit lists.
  auto visit = [&](auto&& self, std::size_t start) -> void {
    const auto e = build(units);
    const double dev = est(e, spec, n_samples).mean;
    ++best.candidates;
    if (!have || dev < best.dev) {
      have = true;
      best.dev = dev;
      best.explanation = e;
    }
    if (units.size() == k) return;
    for (std::size_t u = start; u < n; ++u) {
      units.push_back(u);
      self(self, u + 1);
      units.pop_back();
    }
  };
  visit(visit, 0);
  return best;
}

}  // namespace viewex
