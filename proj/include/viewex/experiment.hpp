#pragma once

// One explanation method run against a trained model: explanation, its dev
// estimate on sampled instances, and recovery against planted ground truth.

#include <chrono>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "viewex/determinacy.hpp"
#include "viewex/planted.hpp"
#include "viewex/search.hpp"

namespace viewex {

inline const std::vector<std::string>& experiment_methods() {
  static const std::vector<std::string> m{
      "column-mask", "fkpk-mask", "filter-mask", "proj-select", "fkjoin-proj", "fkjoin-proj-select", "local-impact",
      "pfi",         "greedy",    "greedy-expansion", "random", "oracle",   "empty",              "full"};
  return m;
}

/// Language a method's explanation lives in; `empty`, `full` and `oracle` take it from the config.
inline Language method_language(const std::string& method, std::optional<Language> configured) {
  if (method == "column-mask" || method == "local-impact" || method == "pfi" || method == "greedy" || method == "random")
    return Language::Projection;
  if (method == "fkpk-mask" || method == "greedy-expansion") return Language::FKJoin;
  if (method == "filter-mask") return Language::Selection;
  if (method == "proj-select") return Language::ProjSelect;
  if (method == "fkjoin-proj") return Language::FKJoinProj;
  if (method == "fkjoin-proj-select") return Language::FKJoinProjSelect;
  if (method == "oracle" || method == "empty" || method == "full") return configured.value_or(Language::Projection);
  fail(ErrorKind::ConfigError, "unknown method '" + method + "'");
}

struct ExperimentConfig {
  std::string method = "column-mask";
  std::optional<Language> language;
  std::size_t train_instances = 100;  // mask learning and baseline search
  std::size_t eval_instances = 100;  // reported dev
  bool balanced = true;
  std::size_t dev_samples = 5;
  std::optional<PerturbFamily> family;
  std::optional<PerturbFamily> fk_family;
  std::optional<std::size_t> k;  // baselines: explanation size; unset = size found by the matching mask learner
  bool hard_label = false;
  MaskTrainConfig mask;
  PredicateConfig predicates;
  std::uint64_t seed = 0;

  void validate() const {
    const auto lang = method_language(method, language);
    if (train_instances == 0 || eval_instances == 0) fail(ErrorKind::ConfigError, "instance counts must be positive");
    if (dev_samples == 0) fail(ErrorKind::ConfigError, "dev_samples must be positive");
    if (k && *k == 0) fail(ErrorKind::ConfigError, "k must be positive");
    mask.validate();
    check_compatible(lang, spec());
  }

  PerturbationSpec spec() const { return spec_for(method_language(method, language)); }

  PerturbationSpec spec_for(Language lang) const {
    auto s = default_spec(lang, derive_seed(seed, 0xde5));
    if (family) s.family = *family;
    if (fk_family) s.fk_family = *fk_family;
    return s;
  }
};

struct ExperimentResult {
  std::string method;
  Language language = Language::Projection;
  Explanation explanation;
  DevReport dev;
  std::size_t cost = 0;
  double objective = 0.0;
  std::optional<std::size_t> k;
  std::string k_source;
  std::vector<RankedAttr> ranking;
  std::vector<GreedyStep> greedy_trace;
  std::vector<MaskBundle> stages;
  std::optional<std::size_t> oracle_candidates;
  std::optional<Recovery> attr_recovery, fk_recovery, predicate_recovery;
  double seconds = 0.0;
};

inline ExperimentResult run_experiment(const GnnModel& model, const Database& db, const ExperimentConfig& cfg,
                                       const GroundTruth* truth = nullptr) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto& S = model.schema();
  const auto lang = method_language(cfg.method, cfg.language);
  const auto spec = cfg.spec();
  const auto instances = sample_instances(S, db, cfg.train_instances, cfg.balanced, derive_seed(cfg.seed, 0x1257));
  DevEstimator est(model, db, instances, cfg.hard_label);
  DevEstimator eval(model, db, sample_instances(S, db, cfg.eval_instances, cfg.balanced, derive_seed(cfg.seed, 0xe7a1)),
                    cfg.hard_label);
  auto mcfg = cfg.mask;
  mcfg.seed = derive_seed(cfg.seed, 0x3a5c);

  ExperimentResult res;
  res.method = cfg.method;
  res.language = lang;
  const auto& m = cfg.method;

  // Size for baselines: configured, or the cost of the matching mask learner's explanation.
  auto baseline_k = [&](MaskKind kind) -> std::size_t {
    if (cfg.k) {
      res.k_source = "config";
      return *cfg.k;
    }
    const auto b = kind == MaskKind::Column ? learn_column_mask(model, db, instances, mcfg) : learn_fkpk_mask(model, db, instances, mcfg);
    res.k_source = std::string(to_string(kind)) + "-mask";
    return std::max<std::size_t>(1, cost(threshold_mask(S, b, mcfg.threshold)));
  };

  if (m == "column-mask") {
    res.stages.push_back(learn_column_mask(model, db, instances, mcfg));
    res.explanation = threshold_mask(S, res.stages.back(), mcfg.threshold);
  } else if (m == "fkpk-mask") {
    res.stages.push_back(learn_fkpk_mask(model, db, instances, mcfg));
    res.explanation = threshold_mask(S, res.stages.back(), mcfg.threshold);
  } else if (m == "filter-mask") {
    res.stages.push_back(
        learn_filter_mask(model, db, candidate_predicates(S, db, all_features(S), cfg.predicates), instances, mcfg));
    res.explanation = threshold_mask(S, res.stages.back(), mcfg.threshold);
  } else if (m == "proj-select") {
    auto p = learn_proj_select(model, db, instances, mcfg, cfg.predicates);
    res.stages = std::move(p.stages);
    res.explanation = std::move(p.explanation);
  } else if (m == "fkjoin-proj" || m == "fkjoin-proj-select") {
    auto p = learn_fkjoin_proj(model, db, instances, mcfg, m == "fkjoin-proj-select", cfg.predicates);
    res.stages = std::move(p.stages);
    res.explanation = std::move(p.explanation);
  } else if (m == "local-impact" || m == "pfi") {
    const auto k = baseline_k(MaskKind::Column);
    res.k = k;
    res.ranking = m == "pfi" ? rank_pfi(est, S, spec, cfg.dev_samples) : rank_local_impact(est, S, spec, cfg.dev_samples);
    std::vector<std::pair<std::size_t, std::size_t>> top;
    for (std::size_t i = 0; i < std::min(k, res.ranking.size()); ++i) top.emplace_back(res.ranking[i].relation, res.ranking[i].column);
    res.explanation = projection_explanation(top);
  } else if (m == "greedy") {
    res.k = baseline_k(MaskKind::Column);
    auto g = greedy_projection(est, S, spec, cfg.dev_samples, *res.k);
    res.explanation = std::move(g.explanation);
    res.greedy_trace = std::move(g.trace);
  } else if (m == "greedy-expansion") {
    res.k = baseline_k(MaskKind::FkPk);
    auto g = greedy_expansion(est, S, spec, cfg.dev_samples, *res.k);
    res.explanation = std::move(g.explanation);
    res.greedy_trace = std::move(g.trace);
  } else if (m == "random") {
    res.k = std::min(baseline_k(MaskKind::Column), all_features(S).size());
    res.explanation = random_subset(S, *res.k, derive_seed(cfg.seed, 0x7a4d));
  } else if (m == "oracle") {
    res.k = baseline_k(lang == Language::FKJoin ? MaskKind::FkPk : MaskKind::Column);
    const auto preds = lang == Language::Selection ? candidate_predicates(S, db, all_features(S), cfg.predicates)
                                                   : std::vector<AtomicPredicate>{};
    auto o = exhaustive_oracle(est, S, lang, *res.k, spec, cfg.dev_samples, preds);
    res.explanation = std::move(o.explanation);
    res.oracle_candidates = o.candidates;
  } else if (m == "empty") {
    res.explanation = Explanation::empty(lang);
  } else if (m == "full") {
    res.explanation = full_explanation(S, lang);
  }

  res.dev = eval(res.explanation, spec, cfg.dev_samples);
  res.cost = cost(res.explanation);
  res.objective = objective(res.dev.mean, res.cost, cfg.mask.lambda);
  if (truth) {
    if (has_projection(lang))
      res.attr_recovery = recovery(explained_attrs(res.explanation), truth->attrs);
    if (has_join(lang)) res.fk_recovery = recovery(explained_fks(res.explanation), truth->fks);
    if (has_selection(lang)) res.predicate_recovery = recovery(explained_predicates(res.explanation), truth->predicates);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// ---------------------------------------------------------------------------
// Reports. Wall-clock time is kept out so that replays compare byte for byte.

inline Json experiment_config_to_json(const ExperimentConfig& c) {
  Json j;
  j["method"] = c.method;
  j["language"] = c.language ? Json(std::string(to_string(*c.language))) : Json(nullptr);
  j["train_instances"] = c.train_instances;
  j["eval_instances"] = c.eval_instances;
  j["balanced"] = c.balanced;
  j["dev_samples"] = c.dev_samples;
  j["family"] = c.family ? Json(std::string(to_string(*c.family))) : Json(nullptr);
  j["fk_family"] = c.fk_family ? Json(std::string(to_string(*c.fk_family))) : Json(nullptr);
  j["k"] = c.k ? Json(*c.k) : Json(nullptr);
  j["hard_label"] = c.hard_label;
  j["mask"] = {{"lambda", c.mask.lambda},   {"fk_lambda", c.mask.fk_lambda}, {"learning_rate", c.mask.learning_rate},
               {"epochs", c.mask.epochs},   {"patience", c.mask.patience},   {"threshold", c.mask.threshold},
               {"init", c.mask.init},       {"holdout", c.mask.holdout}};
  j["predicates"] = {{"top_values", c.predicates.top_values}, {"bins", c.predicates.bins}};
  j["seed"] = c.seed;
  return j;
}

/// Overrides fields present in `j`; unknown keys are a ConfigError.
inline ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig c = {}) {
  auto opt_family = [](const Json& v) -> std::optional<PerturbFamily> {
    if (v.is_null()) return std::nullopt;
    try {
      return parse_family(v.get<std::string>());
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
  };
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "method") c.method = v.get<std::string>();
      else if (k == "language") {
        if (v.is_null())
          c.language.reset();
        else
          try {
            c.language = parse_language(v.get<std::string>());
          } catch (const Error& e) {
            fail(ErrorKind::ConfigError, e.what());
          }
      } else if (k == "train_instances") c.train_instances = v.get<std::size_t>();
      else if (k == "eval_instances") c.eval_instances = v.get<std::size_t>();
      else if (k == "balanced") c.balanced = v.get<bool>();
      else if (k == "dev_samples") c.dev_samples = v.get<std::size_t>();
      else if (k == "family") c.family = opt_family(v);
      else if (k == "fk_family") c.fk_family = opt_family(v);
      else if (k == "k") c.k = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
      else if (k == "hard_label") c.hard_label = v.get<bool>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "mask") {
        for (auto mt = v.begin(); mt != v.end(); ++mt) {
          const auto& mk = mt.key();
          if (mk == "lambda") c.mask.lambda = mt->get<double>();
          else if (mk == "fk_lambda") c.mask.fk_lambda = mt->get<double>();
          else if (mk == "learning_rate") c.mask.learning_rate = mt->get<double>();
          else if (mk == "epochs") c.mask.epochs = mt->get<std::size_t>();
          else if (mk == "patience") c.mask.patience = mt->get<std::size_t>();
          else if (mk == "threshold") c.mask.threshold = mt->get<double>();
          else if (mk == "init") c.mask.init = mt->get<double>();
          else if (mk == "holdout") c.mask.holdout = mt->get<double>();
          else fail(ErrorKind::ConfigError, "unknown mask key '" + mk + "'");
        }
      } else if (k == "predicates") {
        for (auto pt = v.begin(); pt != v.end(); ++pt) {
          if (pt.key() == "top_values") c.predicates.top_values = pt->get<std::size_t>();
          else if (pt.key() == "bins") c.predicates.bins = pt->get<std::size_t>();
          else fail(ErrorKind::ConfigError, "unknown predicates key '" + pt.key() + "'");
        }
      } else
        fail(ErrorKind::ConfigError, "unknown experiment key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("experiment config: ") + e.what());
  }
  return c;
}

inline Json recovery_to_json(const Recovery& r) {
  return Json{{"precision", r.precision}, {"recall", r.recall}, {"true_positives", r.true_positives},
              {"selected", r.selected},   {"relevant", r.relevant}};
}

inline Json experiment_to_json(const DatabaseSchema& schema, const Database& db, const ExperimentResult& r) {
  Json j;
  j["method"] = r.method;
  j["language"] = to_string(r.language);
  j["explanation"] = explanation_to_json(schema, r.explanation);
  j["cost"] = r.cost;
  j["dev"] = {{"mean", r.dev.mean}, {"sd", r.dev.sd}};
  j["objective"] = r.objective;
  if (r.k) j["k"] = {{"value", *r.k}, {"source", r.k_source}};
  if (r.attr_recovery || r.fk_recovery || r.predicate_recovery) {
    Json rec;
    if (r.attr_recovery) rec["attributes"] = recovery_to_json(*r.attr_recovery);
    if (r.fk_recovery) rec["fks"] = recovery_to_json(*r.fk_recovery);
    if (r.predicate_recovery) rec["predicates"] = recovery_to_json(*r.predicate_recovery);
    j["recovery"] = std::move(rec);
  }
  if (!r.ranking.empty()) {
    j["ranking"] = Json::array();
    for (const auto& a : r.ranking)
      j["ranking"].push_back({{"relation", schema.relation(a.relation).name},
                              {"attribute", schema.relation(a.relation).attributes[a.column].name},
                              {"dev", a.dev}});
  }
  if (!r.greedy_trace.empty()) {
    j["greedy_trace"] = Json::array();
    for (const auto& s : r.greedy_trace) j["greedy_trace"].push_back({{"unit", s.unit}, {"dev", s.dev}, {"sd", s.sd}});
  }
  if (!r.stages.empty()) {
    j["mask_stages"] = Json::array();
    for (const auto& b : r.stages) {
      Json sj;
      sj["kind"] = to_string(b.kind);
      sj["best_epoch"] = b.best_epoch;
      sj["epochs_run"] = b.loss_trace.size();
      Json units = Json::array();
      const auto vals = b.values();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        Json u;
        if (b.kind == MaskKind::Column) {
          u["relation"] = schema.relation(b.columns[i].first).name;
          u["attribute"] = schema.relation(b.columns[i].first).attributes[b.columns[i].second].name;
        } else if (b.kind == MaskKind::FkPk) {
          u["fk"] = schema.fk(i).id;
        } else {
          u["relation"] = schema.relation(b.predicates[i].relation).name;
          u["predicate"] = describe(schema, b.predicates[i]);
        }
        u["value"] = vals[i];
        units.push_back(std::move(u));
      }
      sj["units"] = std::move(units);
      j["mask_stages"].push_back(std::move(sj));
    }
  }
  if (r.oracle_candidates) j["oracle_candidates"] = *r.oracle_candidates;
  j["dev_report"] = dev_report_to_json(schema, db, r.dev);
  return j;
}

inline void write_experiment_csv(std::ostream& out, const ExperimentResult& r) {
  auto rec = [](const std::optional<Recovery>& x, bool precision) {
    return x ? format_number(precision ? x->precision : x->recall) : std::string();
  };
  csv::write_record(out, {"method", "language", "cost", "dev_mean", "dev_sd", "objective", "attr_precision",
                          "attr_recall", "fk_precision", "fk_recall", "predicate_precision", "predicate_recall"});
  csv::write_record(out, {r.method, std::string(to_string(r.language)), std::to_string(r.cost), format_number(r.dev.mean),
                          format_number(r.dev.sd), format_number(r.objective), rec(r.attr_recovery, true),
                          rec(r.attr_recovery, false), rec(r.fk_recovery, true), rec(r.fk_recovery, false),
                          rec(r.predicate_recovery, true), rec(r.predicate_recovery, false)});
}

}  // namespace viewex
