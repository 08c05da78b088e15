#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "invariants.hpp"

using namespace viewex;
using namespace viewex::testing;

namespace {

/// T(k key, y label) referenced by S(id, t) with the given FK values.
DatabaseSchema ts_schema() {
  return DatabaseSchema({{"T", {num("k"), num("y")}, {"k"}}, {"S", {num("id"), num("t"), num("v")}, {"id"}}},
                        {{"s_t", "S", {"t"}, "T"}}, "T", Task::BinaryClassification, "y");
}

Database ts_db(const DatabaseSchema& s, std::size_t targets, const std::vector<int>& refs) {
  auto db = Database::empty(s);
  for (std::size_t k = 1; k <= targets; ++k) db.append_row(s, "T", {std::to_string(k), std::to_string(k % 2)});
  for (std::size_t i = 0; i < refs.size(); ++i)
    db.append_row(s, "S", {std::to_string(i), std::to_string(refs[i]), std::to_string(i * 3)});
  return db;
}

bool same(const Database& a, const Database& b) {
  for (std::size_t r = 0; r < a.relations.size(); ++r)
    if (a.relation(r).columns != b.relation(r).columns) return false;
  return true;
}

}  // namespace

TEST(Perturb, FullProjectionLeavesDatabaseUnchanged) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  for (auto fam : {PerturbFamily::IndPerm, PerturbFamily::JointPerm}) {
    const auto out = perturb(S, f.data.db, full_explanation(S, Language::Projection), {fam, PerturbFamily::FkUniform, 3});
    EXPECT_TRUE(same(out, f.data.db));
  }
}

TEST(Perturb, JointPermutationKeepsCorrelatedColumnsTogether) {
  const auto s = abcf_schema();
  const auto db = abcf_db(s, 40);
  const auto e = projection_explanation({{0, 1}});
  bool moved = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = perturb(s, db, e, {PerturbFamily::JointPerm, PerturbFamily::FkUniform, seed});
    const auto& r = out.relation(0);
    for (std::size_t i = 0; i < r.rows(); ++i) {
      EXPECT_EQ(r.at(i, 3).num, 2 * r.at(i, 2).num);
      EXPECT_EQ(r.at(i, 1), db.relation(0).at(i, 1));
      moved = moved || !(r.at(i, 2) == db.relation(0).at(i, 2));
    }
  }
  EXPECT_TRUE(moved);
}

TEST(Perturb, IndependentPermutationPreservesMultisets) {
  const auto s = abcf_schema();
  const auto db = abcf_db(s, 40);
  const auto out = perturb(s, db, Explanation::empty(Language::Projection), {PerturbFamily::IndPerm, PerturbFamily::FkUniform, 9});
  bool broken = false;
  for (std::size_t c = 1; c <= 3; ++c) EXPECT_EQ(sorted_column(db, 0, c), sorted_column(out, 0, c));
  for (std::size_t i = 0; i < 40; ++i) broken = broken || out.relation(0).at(i, 3).num != 2 * out.relation(0).at(i, 2).num;
  EXPECT_TRUE(broken);
  EXPECT_EQ(out.relation(0).columns[0], db.relation(0).columns[0]);
}

TEST(Perturb, AllForeignKeysJoinedLeavesDatabaseUnchanged) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  for (auto fam : {PerturbFamily::FkUniform, PerturbFamily::FkFreq}) {
    const auto out = perturb(S, f.data.db, full_explanation(S, Language::FKJoin), {fam, fam, 5});
    EXPECT_TRUE(same(out, f.data.db));
  }
}

TEST(Perturb, FrequencyFamilyPreservesCounts) {
  const auto s = ts_schema();
  const auto db = ts_db(s, 5, {1, 1, 1, 1, 2, 3});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = perturb(s, db, Explanation::empty(Language::FKJoin), {PerturbFamily::FkFreq, PerturbFamily::FkFreq, seed});
    EXPECT_EQ(fk_frequencies(s, out, 0), (std::vector<std::size_t>{1, 1, 4}));
    EXPECT_TRUE(validate_database(s, out).ok());
    EXPECT_EQ(out.relation(1).columns[2], db.relation(1).columns[2]);
  }
}

TEST(Perturb, UniformFamilyDrawsTargetKeys) {
  const auto s = ts_schema();
  const auto db = ts_db(s, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  std::set<double> seen;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = perturb(s, db, Explanation::empty(Language::FKJoin), {PerturbFamily::FkUniform, PerturbFamily::FkUniform, seed});
    for (const auto& v : out.relation(1).columns[1]) {
      EXPECT_TRUE(v.num == 1 || v.num == 2 || v.num == 3) << v.num;
      seen.insert(v.num);
    }
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Perturb, TautologicalSelectionLeavesDatabaseUnchanged) {
  const auto s = abcf_schema();
  const auto db = abcf_db(s, 20);
  Explanation e = Explanation::empty(Language::Selection);
  e.selections.push_back({0, {AtomicPredicate::range(0, 2, 1, 20)}});
  const auto out = perturb(s, db, e, {PerturbFamily::IndPerm, PerturbFamily::FkUniform, 1});
  EXPECT_TRUE(same(out, db));
}

TEST(Perturb, SelectedTuplesAreKeptVerbatim) {
  const auto s = abcf_schema();
  const auto db = abcf_db(s, 12);
  Explanation e = Explanation::empty(Language::Selection);
  e.selections.push_back({0, {AtomicPredicate::range(0, 2, 1, 2)}});
  const std::vector<std::vector<std::string>> kept{{"1", "0", "1", "2"}, {"2", "1", "2", "4"}};
  bool others_moved = false;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = perturb(s, db, e, {PerturbFamily::IndPerm, PerturbFamily::FkUniform, seed});
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<std::string> row;
      for (std::size_t c = 0; c < 4; ++c) row.push_back(out.render(0, c, out.relation(0).at(i, c)));
      EXPECT_EQ(row, kept[i]);
    }
    for (std::size_t i = 2; i < 12; ++i) others_moved = others_moved || !(out.relation(0).at(i, 2) == db.relation(0).at(i, 2));
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(out.relation(0).at(i, 0), db.relation(0).at(i, 0));
  }
  EXPECT_TRUE(others_moved);
}

TEST(Perturb, UnsatisfiedSelectionPermutesEverything) {
  const auto s = abcf_schema();
  const auto db = abcf_db(s, 12);
  Explanation none = Explanation::empty(Language::Selection);
  none.selections.push_back({0, {AtomicPredicate::range(0, 2, 100, 200)}});
  const PerturbationSpec spec{PerturbFamily::IndPerm, PerturbFamily::FkUniform, 4};
  EXPECT_TRUE(same(perturb(s, db, none, spec), perturb(s, db, Explanation::empty(Language::Selection), spec)));
  EXPECT_FALSE(same(perturb(s, db, none, spec), db));
}

TEST(Perturb, EmptyExplanationPermutesEveryDataAttribute) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  const auto out = perturb(S, f.data.db, Explanation::empty(Language::Projection), default_spec(Language::Projection, 8));
  for (std::size_t r = 0; r < S.relation_count(); ++r)
    for (auto c : S.feature_columns(r)) {
      EXPECT_NE(out.relation(r).columns[c], f.data.db.relation(r).columns[c]) << S.relation(r).name << "." << c;
      EXPECT_EQ(sorted_column(out, r, c), sorted_column(f.data.db, r, c));
    }
}

TEST(Perturb, FixedSeedIsDeterministic) {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  const auto e = f.data.truth.projection();
  const auto spec = default_spec(Language::Projection, 21);
  EXPECT_TRUE(same(perturb(S, f.data.db, e, spec), perturb(S, f.data.db, e, spec)));
  EXPECT_FALSE(same(perturb(S, f.data.db, e, spec), perturb(S, f.data.db, e, spec.with_seed(22))));
}

TEST(Perturb, IncompatibleFamilyIsRejected) {
  const auto s = abcf_schema();
  const auto db = abcf_db(s);
  EXPECT_EQ(error_kind([&] {
              perturb(s, db, Explanation::empty(Language::Projection), {PerturbFamily::FkFreq, PerturbFamily::FkUniform, 0});
            }),
            ErrorKind::DomainError);
  EXPECT_EQ(error_kind([&] {
              perturb(s, db, Explanation::empty(Language::FKJoin), {PerturbFamily::IndPerm, PerturbFamily::FkUniform, 0});
            }),
            ErrorKind::DomainError);
}

TEST(Perturb, RandomizedInvariants) {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const auto t = random_trial(seed);
    const auto out = perturb(t.schema, t.db, t.e, t.spec);
    EXPECT_EQ(check_perturbation(t, out), "") << "seed " << seed << " language " << to_string(t.e.language);
  }
}
