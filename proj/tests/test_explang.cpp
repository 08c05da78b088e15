#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"

using namespace viewex;
using namespace viewex::testing;

TEST(Explang, CostCountsAtomicUnits) {
  const auto s = clinical_schema();
  const auto d = s.relation_index("designs");
  EXPECT_EQ(cost(projection_explanation({{d, 2}, {d, 3}, {d, 4}})), 3u);
  Explanation joins = Explanation::empty(Language::FKJoin);
  for (std::size_t f = 0; f < 10; ++f) joins.joins.push_back({f});
  EXPECT_EQ(cost(joins), 10u);
  Explanation sel = Explanation::empty(Language::Selection);
  sel.selections.push_back({d, {AtomicPredicate::eq(d, 2, "0"), AtomicPredicate::eq(d, 3, "1")}});
  EXPECT_EQ(cost(sel), 2u);
  EXPECT_EQ(cost(designs_view(s)), 5u);
}

TEST(Explang, CostIsAdditiveOverDisjointUnions) {
  const auto a = projection_explanation({{0, 1}, {1, 2}});
  const auto b = projection_explanation({{3, 1}});
  EXPECT_EQ(cost(projection_explanation({{0, 1}, {1, 2}, {3, 1}})), cost(a) + cost(b));
}

TEST(Explang, FullProjectionEvaluatesToRelation) {
  const auto s = clinical_schema();
  const auto db = clinical_db(s);
  const auto e = full_explanation(s, Language::Projection);
  const auto r = s.relation_index("designs");
  const auto v = relation_slice(s, e, r);
  const auto rows = evaluate_view(s, db, v);
  ASSERT_EQ(rows.size(), db.relation(r).rows());
  EXPECT_EQ(v.columns.size(), s.relation(r).attributes.size());
  for (const auto& row : rows) EXPECT_EQ(row.size(), s.relation(r).attributes.size());
}

TEST(Explang, JoinViewPairsMatchingTuples) {
  const auto s = DatabaseSchema({{"R", {cat("A"), num("y")}, {"A"}}, {"T", {cat("id"), cat("A"), cat("B")}, {"id"}}},
                                {{"t_r", "T", {"A"}, "R"}}, "R", Task::BinaryClassification, "y");
  auto db = Database::empty(s);
  db.append_row(s, "R", {"a1", "1"});
  db.append_row(s, "R", {"a2", "0"});
  db.append_row(s, "T", {"t1", "a1", "x"});
  db.append_row(s, "T", {"t2", "a1", "y"});
  db.append_row(s, "T", {"t3", "a2", "z"});
  const auto views = concrete_views(s, fkjoin_explanation({0}));
  const JoinView* join = nullptr;
  for (const auto& v : views)
    if (const auto* j = std::get_if<JoinView>(&v)) join = j;
  ASSERT_NE(join, nullptr);
  const auto rows = evaluate_view(s, db, *join);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    // T(id, A, B) then R(A, y)
    ASSERT_EQ(row.size(), 5u);
    EXPECT_EQ(row[1], row[3]);
  }
}

TEST(Explang, SelectionReturnsQualifyingTuples) {
  const auto s = DatabaseSchema({{"Product", {num("pid"), cat("category"), num("price"), num("bought")}, {"pid"}}}, {},
                                "Product", Task::BinaryClassification, "bought");
  auto db = Database::empty(s);
  db.append_row(s, 0, {"1", "electronics", "20", "1"});
  db.append_row(s, 0, {"2", "electronics", "80", "0"});
  db.append_row(s, 0, {"3", "books", "10", "1"});
  db.append_row(s, 0, {"4", "electronics", "49.5", "1"});
  SliceView v{0, {0, 1, 2}, {AtomicPredicate::range(0, 2, 0, 49.99)}, false};
  std::vector<std::vector<std::string>> low;
  for (const auto& row : evaluate_view(s, db, v))
    if (row[1] == "electronics") low.push_back(row);
  EXPECT_EQ(low, (std::vector<std::vector<std::string>>{{"1", "electronics", "20"}, {"4", "electronics", "49.5"}}));
}

TEST(Explang, ProjectionSelectionSql) {
  const auto s = clinical_schema();
  const auto d = s.relation_index("designs");
  EXPECT_EQ(to_sql(s, relation_slice(s, designs_view(s), d)),
            "SELECT id, nct_id, allocation, intervention_model, primary_purpose\n"
            "FROM designs d\n"
            "WHERE d.allocation = 0 OR d.intervention_model = 0");
}

TEST(Explang, ProjectionSelectionMatchesGolden) {
  const auto s = clinical_schema();
  const auto sql = to_sql(s, relation_slice(s, designs_view(s), s.relation_index("designs")));
  const auto golden = read_file(source_dir() / "tests" / "golden" / "designs_proj_select.sql");
  ASSERT_FALSE(golden.empty());
  EXPECT_EQ(normalize_sql(sql), normalize_sql(golden));
}

TEST(Explang, JoinPathMatchesGolden) {
  const auto s = clinical_schema();
  const auto sql = joined_sql(s, facilities_join(s));
  EXPECT_EQ(sql,
            "SELECT * FROM studies s\n"
            "JOIN facilities_studies fs ON s.nct_id=fs.nct_id\n"
            "JOIN facilities f ON fs.facility_id=f.facility_id");
  const auto golden = read_file(source_dir() / "tests" / "golden" / "studies_facilities_join.sql");
  EXPECT_EQ(normalize_sql(sql), normalize_sql(golden));
}

TEST(Explang, SingleJoinViewSql) {
  const auto s = clinical_schema();
  const auto f = s.fk_index("facilities_studies_facilities");
  const auto e = fkjoin_explanation({f});
  const auto& fk = s.resolved_fk(f);
  const JoinView j{f, relation_slice(s, e, fk.source), relation_slice(s, e, fk.target)};
  const auto sql = to_sql(s, j);
  EXPECT_EQ(sql, "SELECT * FROM facilities_studies fs\nJOIN facilities f ON fs.facility_id=f.facility_id");
}

TEST(Explang, RangePredicateSql) {
  const auto s = clinical_schema();
  const auto st = s.relation_index("studies");
  Explanation e = Explanation::empty(Language::Selection);
  e.selections.push_back({st, {AtomicPredicate::range(st, 2, 27, 55.5)}});
  EXPECT_EQ(to_sql(s, relation_slice(s, e, st)),
            "SELECT *\nFROM studies s\nWHERE (s.enrollment >= 27 AND s.enrollment <= 55.5)");
}

TEST(Explang, SqlQuotingAndLiterals) {
  EXPECT_EQ(sql::identifier("plain_name"), "plain_name");
  EXPECT_EQ(sql::identifier("order"), "\"order\"");
  EXPECT_EQ(sql::identifier("two words"), "\"two words\"");
  EXPECT_EQ(sql::literal("0"), "0");
  EXPECT_EQ(sql::literal("007"), "'007'");
  EXPECT_EQ(sql::literal("it's"), "'it''s'");
}

TEST(Explang, AttrsOfEmptyProjectionIsKeysAndForeignKeys) {
  const auto s = clinical_schema();
  const auto attrs = attrs_of(s, Explanation::empty(Language::Projection));
  for (std::size_t r = 0; r < s.relation_count(); ++r)
    for (std::size_t c = 0; c < s.relation(r).attributes.size(); ++c)
      EXPECT_EQ(attrs[r][c], s.role(r, c) != AttrRole::Data) << s.relation(r).name << "." << s.relation(r).attributes[c].name;
}

TEST(Explang, FksOfJoinExplanation) {
  const auto s = clinical_schema();
  const auto fks = fks_of(s, fkjoin_explanation({1}));
  EXPECT_EQ(fks, (std::vector<bool>{false, true, false}));
}

TEST(Explang, TautologicalSelectionKeepsAllTuples) {
  const auto s = clinical_schema();
  const auto db = clinical_db(s);
  const auto st = s.relation_index("studies");
  const auto preds = candidate_predicates(s, db, {{st, 2}});
  Explanation e = Explanation::empty(Language::Selection);
  e.selections.push_back({st, {AtomicPredicate::range(st, 2, preds.front().lo, preds.back().hi)}});
  const auto tups = tups_of(s, db, e);
  EXPECT_EQ(tups[st], std::vector<bool>(db.relation(st).rows(), true));
}

TEST(Explang, AddingDisjunctNeverShrinksTups) {
  const auto s = clinical_schema();
  const auto db = clinical_db(s);
  const auto d = s.relation_index("designs");
  const auto preds = candidate_predicates(s, db, {{d, 2}, {d, 3}, {d, 5}});
  Explanation e = Explanation::empty(Language::Selection);
  e.selections.push_back({d, {}});
  std::size_t prev = 0;
  for (const auto& p : preds) {
    e.selections[0].disjuncts.push_back(p);
    const auto t = tups_of(s, db, e)[d];
    const auto n = static_cast<std::size_t>(std::count(t.begin(), t.end(), true));
    EXPECT_GE(n, prev);
    prev = n;
  }
}

TEST(Explang, CandidatePredicates) {
  const auto s = clinical_schema();
  const auto db = clinical_db(s, 20);
  const auto d = s.relation_index("designs");
  const auto st = s.relation_index("studies");
  const auto eq = candidate_predicates(s, db, {{d, s.relation(d).index_of("intervention_model")}});
  ASSERT_EQ(eq.size(), 3u);
  for (const auto& p : eq) EXPECT_EQ(p.form, AtomicPredicate::Form::Eq);
  const auto range = candidate_predicates(s, db, {{st, s.relation(st).index_of("enrollment")}});
  ASSERT_EQ(range.size(), 4u);
  EXPECT_EQ(range.front().lo, 20.0);
  EXPECT_EQ(range.back().hi, 20.0 + 7 * 19);
  for (std::size_t i = 1; i < range.size(); ++i) EXPECT_EQ(range[i].lo, range[i - 1].hi);
  const auto phase = candidate_predicates(s, db, {{st, s.relation(st).index_of("phase")}});
  std::set<std::string> values;
  for (const auto& p : phase) values.insert(p.value);
  for (const auto* v : {"0", "2", "4"}) EXPECT_TRUE(values.count(v)) << v;
  EXPECT_EQ(error_kind([&] { candidate_predicates(s, db, {{d, 0}}); }), ErrorKind::DomainError);
}

TEST(Explang, ExplanationJsonRoundTrip) {
  const auto s = clinical_schema();
  const auto e = designs_view(s);
  EXPECT_EQ(explanation_from_json(s, explanation_to_json(s, e)), e);
  const auto j = facilities_join(s);
  EXPECT_EQ(explanation_from_json(s, explanation_to_json(s, j)), j);
  Explanation r = Explanation::empty(Language::Selection);
  r.selections.push_back({0, {AtomicPredicate::range(0, 2, 1.5, 7.25)}});
  EXPECT_EQ(explanation_from_json(s, explanation_to_json(s, r)), r);
}

TEST(Explang, InvalidExplanationsAreRejected) {
  const auto s = clinical_schema();
  auto e = projection_explanation({{1, 0}});
  EXPECT_EQ(error_kind([&] { validate_explanation(s, e); }), ErrorKind::DomainError);
  auto j = fkjoin_explanation({0});
  j.language = Language::Projection;
  EXPECT_EQ(error_kind([&] { validate_explanation(s, j); }), ErrorKind::DomainError);
}
