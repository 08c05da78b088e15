#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"

using namespace viewex;
using namespace viewex::testing;

namespace {

/// entity(a0, a1) -> rel1(a0, a1, dup) with dup a copy of the signal rel1.a0.
const PlantedFixture& duplicate_fixture() {
  static const PlantedFixture f = [] {
    PlantedConfig pc;
    pc.relations = 2;
    pc.data_attrs = 2;
    pc.entity_tuples = 400;
    pc.tuples_per_relation = 60;
    pc.duplicate_signal = true;
    pc.seed = 4;
    auto d = generate_planted(pc);
    TrainConfig tc;
    tc.seed = 4;
    auto tr = train(d.schema, d.db, tc);
    return PlantedFixture{std::move(d), std::move(tr)};
  }();
  return f;
}

std::vector<std::size_t> instances(const PlantedFixture& f, std::size_t n = 40) {
  return sample_instances(f.data.schema, f.data.db, n, true, 2);
}

std::pair<std::size_t, std::size_t> signal(const PlantedFixture& f) { return f.data.truth.attrs.front(); }

MaskBundle bundle(MaskKind kind, std::vector<double> values) {
  MaskBundle b;
  b.kind = kind;
  for (double v : values) b.logits.push_back(std::log(v / (1 - v)));
  return b;
}

}  // namespace

TEST(Masks, LukasiewiczTupleMasks) {
  FilterMask f;
  f.values = {0.4, 0.5};
  f.relation = {0, 0};
  f.rows = {{0, 1}, {0}};
  auto [sum, m] = tuple_masks(f, 0, 3);
  EXPECT_NEAR(m[0], 0.9, 1e-15);
  EXPECT_EQ(m[1], 0.4);
  EXPECT_EQ(m[2], 0.0);
  f.values = {0.7, 0.6};
  EXPECT_EQ(tuple_masks(f, 0, 3).second[0], 1.0);
  const std::vector<double> both{0.7, 0.6};
  EXPECT_EQ(lukasiewicz(both), 1.0);
  EXPECT_EQ(lukasiewicz(std::span<const double>{}), 0.0);
}

TEST(Masks, ThresholdKeepsUnitsAtOrAboveDelta) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  auto b = bundle(MaskKind::Column, {0.6, 0.3, 0.2});
  b.logits.push_back(0.0);
  b.columns = {all_features(S)[0], all_features(S)[1], all_features(S)[2], all_features(S)[3]};
  const auto e = threshold_mask(S, b, 0.5);
  EXPECT_EQ(explained_attrs(e), (std::vector<std::pair<std::size_t, std::size_t>>{b.columns[0], b.columns[3]}));
  const auto none = threshold_mask(S, bundle(MaskKind::FkPk, {0.1, 0.2, 0.3, 0.49}), 0.5);
  EXPECT_EQ(cost(none), 0u);
  EXPECT_EQ(none.language, Language::FKJoin);
  EXPECT_EQ(error_kind([&] { threshold_mask(S, b, 1.0); }), ErrorKind::DomainError);
}

TEST(Masks, UnitForeignKeyMasksChangeNothing) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  MaskValues mv;
  mv.fk = FkMask{std::vector<double>(S.fk_count(), 1.0)};
  const auto g = build_graph(S, f.data.db);
  const auto inst = instances(f);
  EXPECT_EQ(predict_rows(f.trained.model, g, f.data.db, inst, &mv), predict_rows(f.trained.model, g, f.data.db, inst));
}

TEST(Masks, UninstantiatedForeignKeyHasZeroGradient) {
  const auto s = DatabaseSchema({{"A", {cat("id"), num("x"), num("y")}, {"id"}},
                                 {"B", {cat("bid"), cat("aid"), num("v")}, {"bid"}},
                                 {"C", {cat("cid"), cat("aid"), num("w")}, {"cid"}}},
                                {{"b_a", "B", {"aid"}, "A"}, {"c_a", "C", {"aid"}, "A"}}, "A",
                                Task::BinaryClassification, "y");
  auto db = Database::empty(s);
  for (int i = 0; i < 6; ++i) db.append_row(s, "A", {"a" + std::to_string(i), std::to_string(i), std::to_string(i % 2)});
  for (int i = 0; i < 9; ++i) db.append_row(s, "B", {"b" + std::to_string(i), "a" + std::to_string(i % 6), std::to_string(i)});
  GnnModel m(s, FeatureStats::from_database(s, db), {}, 1);
  MaskValues mv;
  mv.fk = FkMask{{0.5, 0.5}};
  const std::vector<std::size_t> batch{0, 1, 2, 3, 4, 5};
  const auto gr = backward(m, build_graph(s, db), db, batch, &mv, nullptr, GradTarget::Masks);
  EXPECT_EQ(gr.masks.fk[1], 0.0);
  EXPECT_NE(gr.masks.fk[0], 0.0);
}

TEST(Masks, NoSparsityPressureDoesNotIncreaseTaskLoss) {
  const auto& f = planted_fixture();
  MaskTrainConfig cfg;
  cfg.lambda = 0.0;
  cfg.epochs = 40;
  const auto b = learn_column_mask(f.trained.model, f.data.db, instances(f, 60), cfg);
  ASSERT_FALSE(b.task_trace.empty());
  EXPECT_LE(b.task_trace[b.best_epoch], b.task_trace.front() + 1e-12);
  const auto vals = b.values();
  const auto it = std::find(b.columns.begin(), b.columns.end(), signal(f));
  ASSERT_NE(it, b.columns.end());
  EXPECT_GE(vals[static_cast<std::size_t>(it - b.columns.begin())], cfg.init);
}

TEST(Masks, HeavySparsityPressureClosesEverything) {
  const auto& f = planted_fixture();
  MaskTrainConfig cfg;
  cfg.lambda = 50.0;
  cfg.fk_lambda = 50.0;
  cfg.epochs = 60;
  const auto inst = instances(f, 40);
  for (const auto& b : {learn_column_mask(f.trained.model, f.data.db, inst, cfg),
                        learn_fkpk_mask(f.trained.model, f.data.db, inst, cfg)}) {
    for (double v : b.values()) EXPECT_LT(v, 0.05);
    EXPECT_EQ(cost(threshold_mask(f.data.schema, b, 0.5)), 0u);
  }
}

TEST(Masks, ColumnMaskFindsSignal) {
  const auto& f = planted_fixture();
  const auto b = learn_column_mask(f.trained.model, f.data.db, instances(f, 100), MaskTrainConfig{});
  const auto e = threshold_mask(f.data.schema, b, 0.5);
  const auto rec = recovery(explained_attrs(e), f.data.truth.attrs);
  EXPECT_EQ(rec.recall, 1.0);
  EXPECT_GE(rec.precision, 0.5);
}

TEST(Masks, FilterMaskLearnsSomething) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  const auto preds = candidate_predicates(S, f.data.db, {signal(f)});
  MaskTrainConfig cfg;
  cfg.epochs = 40;
  const auto b = learn_filter_mask(f.trained.model, f.data.db, preds, instances(f, 40), cfg);
  EXPECT_EQ(b.values().size(), preds.size());
  EXPECT_EQ(b.predicates, preds);
  const auto e = threshold_mask(S, b, 0.5);
  EXPECT_EQ(e.language, Language::Selection);
  validate_explanation(S, e);
}

TEST(Baselines, RankingsPutSignalFirst) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  DevEstimator est(f.trained.model, f.data.db, instances(f));
  const auto spec = default_spec(Language::Projection, 9);
  const auto li = rank_local_impact(est, S, spec, 3);
  const auto pfi = rank_pfi(est, S, spec, 3);
  EXPECT_EQ(std::make_pair(li.front().relation, li.front().column), signal(f));
  EXPECT_EQ(std::make_pair(pfi.front().relation, pfi.front().column), signal(f));
  const auto li2 = rank_local_impact(est, S, spec, 3);
  for (std::size_t i = 0; i < li.size(); ++i) {
    EXPECT_EQ(li[i].dev, li2[i].dev);
    EXPECT_EQ(li[i].column, li2[i].column);
  }
}

TEST(Baselines, DuplicatedSignalRanksBothCopiesFirst) {
  const auto& f = duplicate_fixture();
  const auto& S = f.data.schema;
  ASSERT_GE(f.trained.test_metric, 0.95);
  DevEstimator est(f.trained.model, f.data.db, instances(f));
  const auto spec = default_spec(Language::Projection, 9);
  const auto r1 = S.relation_index("rel1");
  const std::set<std::pair<std::size_t, std::size_t>> pair{{r1, S.relation(r1).index_of("a0")},
                                                           {r1, S.relation(r1).index_of("dup")}};
  const auto li = rank_local_impact(est, S, spec, 5);
  const std::set<std::pair<std::size_t, std::size_t>> li_top{{li[0].relation, li[0].column}, {li[1].relation, li[1].column}};
  EXPECT_EQ(li_top, pair);
  // Both copies carry the signal, so each alone is sufficient and each removal is costly.
  const auto pfi = rank_pfi(est, S, spec, 5);
  const std::set<std::pair<std::size_t, std::size_t>> pfi_top{{pfi[0].relation, pfi[0].column}, {pfi[1].relation, pfi[1].column}};
  EXPECT_EQ(pfi_top, pair);
}

TEST(Baselines, GreedyChainEndsAtZero) {
  const auto& f = duplicate_fixture();
  const auto& S = f.data.schema;
  DevEstimator est(f.trained.model, f.data.db, instances(f, 20));
  const auto spec = default_spec(Language::Projection, 3);
  const auto g = greedy_projection(est, S, spec, 2, S.total_feature_count());
  ASSERT_EQ(g.trace.size(), S.total_feature_count());
  EXPECT_EQ(g.trace.back().dev, 0.0);
  EXPECT_EQ(cost(g.explanation), S.total_feature_count());
  const auto first = all_features(S)[g.trace.front().unit];
  EXPECT_TRUE(first == signal(f) || S.relation(first.first).attributes[first.second].name == "dup");
}

TEST(Baselines, GreedyPicksSignal) {
  const auto& f = planted_fixture();
  DevEstimator est(f.trained.model, f.data.db, instances(f));
  const auto g = greedy_projection(est, f.data.schema, default_spec(Language::Projection, 3), 3, 1);
  EXPECT_EQ(explained_attrs(g.explanation), f.data.truth.attrs);
}

TEST(Baselines, GreedyExpansionStaysConnected) {
  for (auto topo : {Topology::Chain, Topology::RandomDag}) {
    PlantedConfig pc;
    pc.topology = topo;
    pc.relations = 5;
    pc.entity_tuples = 200;
    pc.tuples_per_relation = 30;
    pc.signal = {SignalAttr{4, 0, 1.0}};
    const auto d = generate_planted(pc);
    TrainConfig tc;
    tc.epochs = 5;
    const auto tr = train(d.schema, d.db, tc);
    DevEstimator est(tr.model, d.db, sample_instances(d.schema, d.db, 20, true, 0));
    const auto g = greedy_expansion(est, d.schema, default_spec(Language::FKJoin, 1), 2, d.schema.fk_count());
    std::vector<bool> connected(d.schema.relation_count(), false);
    connected[d.schema.target()] = true;
    for (const auto& step : g.trace) {
      const auto& fk = d.schema.resolved_fk(step.unit);
      ASSERT_TRUE(connected[fk.source] || connected[fk.target]) << "step joins a detached FK";
      connected[fk.source] = connected[fk.target] = true;
    }
    EXPECT_EQ(g.explanation.joins.size(), g.trace.size());
  }
}

TEST(Baselines, RandomSubset) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  EXPECT_EQ(cost(random_subset(S, 0, 1)), 0u);
  EXPECT_EQ(random_subset(S, S.total_feature_count(), 1), full_explanation(S, Language::Projection));
  EXPECT_EQ(random_subset(S, 5, 7), random_subset(S, 5, 7));
  EXPECT_EQ(cost(random_subset(S, 5, 7)), 5u);
  EXPECT_EQ(error_kind([&] { random_subset(S, S.total_feature_count() + 1, 0); }), ErrorKind::DomainError);
}

TEST(Oracle, EnumeratesEverySmallExplanation) {
  const auto& f = duplicate_fixture();
  const auto& S = f.data.schema;
  ASSERT_EQ(S.total_feature_count(), 5u);
  DevEstimator est(f.trained.model, f.data.db, instances(f, 20));
  const auto spec = default_spec(Language::Projection, 6);
  const auto o = exhaustive_oracle(est, S, Language::Projection, 2, spec, 2);
  EXPECT_EQ(o.candidates, 1u + 5u + 10u);
  const auto feats = all_features(S);
  double best = est(Explanation::empty(Language::Projection), spec, 2).mean;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    best = std::min(best, est(projection_explanation({feats[i]}), spec, 2).mean);
    for (std::size_t j = i + 1; j < feats.size(); ++j)
      best = std::min(best, est(projection_explanation({feats[i], feats[j]}), spec, 2).mean);
  }
  EXPECT_EQ(o.dev, best);
  EXPECT_EQ(est(o.explanation, spec, 2).mean, best);
}

TEST(Oracle, OptimumContainsSignal) {
  const auto& f = planted_fixture();
  DevEstimator est(f.trained.model, f.data.db, instances(f, 30));
  const auto o = exhaustive_oracle(est, f.data.schema, Language::Projection, 1, default_spec(Language::Projection, 2), 2);
  EXPECT_EQ(explained_attrs(o.explanation), f.data.truth.attrs);
  const auto fo = exhaustive_oracle(est, f.data.schema, Language::FKJoin, 1, default_spec(Language::FKJoin, 2), 2);
  EXPECT_EQ(explained_fks(fo.explanation), f.data.truth.fks);
}

TEST(Oracle, ZeroBudgetIsEmpty) {
  const auto& f = planted_fixture();
  DevEstimator est(f.trained.model, f.data.db, instances(f, 20));
  const auto spec = default_spec(Language::Projection, 2);
  const auto o = exhaustive_oracle(est, f.data.schema, Language::Projection, 0, spec, 2);
  EXPECT_EQ(cost(o.explanation), 0u);
  EXPECT_EQ(o.candidates, 1u);
  EXPECT_EQ(o.dev, est(Explanation::empty(Language::Projection), spec, 2).mean);
}
