// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sys/wait.h>
#include <functional>
#include <iostream>
#include <set>

#include "fixtures.hpp"
#include "invariants.hpp"

using namespace viewex;
using namespace viewex::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

/// Planted database plus a model trained on it with the default training config.
PlantedFixture planted_with_model(const PlantedConfig& pc) {
  auto d = generate_planted(pc);
  TrainConfig tc;
  tc.seed = pc.seed;
  auto tr = train(d.schema, d.db, tc);
  return {std::move(d), std::move(tr)};
}

// 1 -------------------------------------------------------------------------

Outcome perturbation_invariants() {
  const auto t0 = Clock::now();
  std::size_t failures = 0;
  std::string first;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto t = random_trial(seed);
    const auto msg = check_perturbation(t, perturb(t.schema, t.db, t.e, t.spec));
    if (!msg.empty() && failures++ == 0) first = "seed " + std::to_string(seed) + ": " + msg;
  }
  const double s = seconds_since(t0);
  Outcome o{failures == 0 && s < 60.0, "1000 trials, " + std::to_string(failures) + " failures, " + fmt(s) + " s"};
  if (!first.empty()) o.detail += "; first: " + first;
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome determinacy_sanity() {
  const auto& f = planted_fixture();
  const auto& S = f.data.schema;
  Outcome o;
  const auto inst = sample_instances(S, f.data.db, 100, true, 1);
  for (auto lang : {Language::Projection, Language::FKJoin, Language::FKJoinProj}) {
    const double d = estimate_dev(f.trained.model, f.data.db, full_explanation(S, lang), default_spec(lang, 1), inst, 3).mean;
    if (d != 0.0) o = {false, "dev(full " + std::string(to_string(lang)) + ") = " + fmt(d)};
  }
  GnnModel constant = f.trained.model;
  const auto trainable = constant.params().trainable_mask();
  for (std::size_t i = 0; i < trainable.size(); ++i)
    if (trainable[i]) constant.params().data()[i] = 0.0;
  for (auto lang : {Language::Projection, Language::FKJoin, Language::Selection}) {
    const double d = estimate_dev(constant, f.data.db, Explanation::empty(lang), default_spec(lang, 1), inst, 3).mean;
    if (d != 0.0) o = {false, "constant model dev = " + fmt(d)};
  }
  std::size_t wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = default_spec(Language::Projection, seed);
    const auto ev = sample_instances(S, f.data.db, 100, true, seed);
    const double empty = estimate_dev(f.trained.model, f.data.db, Explanation::empty(Language::Projection), spec, ev, 5).mean;
    const double truth = estimate_dev(f.trained.model, f.data.db, f.data.truth.projection(), spec, ev, 5).mean;
    wins += empty > truth;
  }
  if (wins < 9) o.pass = false;
  o.detail = (o.detail.empty() ? "full and constant dev exactly 0; " : o.detail + "; ") + "dev(Empty) > dev(truth) in " +
             std::to_string(wins) + "/10 seeds";
  return o;
}

// 3 -------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto s = DatabaseSchema({{"A", {cat("id"), num("x"), cat("c"), num("y")}, {"id"}},
                                 {"B", {cat("bid"), cat("aid"), num("v"), cat("w")}, {"bid"}}},
                                {{"b_a", "B", {"aid"}, "A"}}, "A", Task::BinaryClassification, "y");
  auto db = Database::empty(s);
  Rng data(5);
  for (std::size_t i = 0; i < 12; ++i)
    db.append_row(s, "A", {"a" + std::to_string(i), format_number(data.uniform(0, 10)), i % 3 ? "p" : "q",
                           std::to_string(i % 2)});
  for (std::size_t i = 0; i < 18; ++i)
    db.append_row(s, "B", {"b" + std::to_string(i), "a" + std::to_string(data.index(10)),
                           format_number(data.uniform(0, 10)), i % 2 ? "u" : "v"});
  const auto g = build_graph(s, db);
  GnnModel m(s, FeatureStats::from_database(s, db), {}, 13);
  MaskValues mv;
  mv.column = ColumnMask{{{0.7, 0.3}, {0.6, 0.8}}};
  mv.fk = FkMask{{0.4}};
  FilterMask fm;
  fm.values = {0.3, 0.25, 0.45};
  fm.relation = {0, 1, 1};
  fm.rows = {{0, 2, 5, 7}, {1, 3, 4, 11}, {3, 9, 12}};
  mv.filter = fm;
  Rng rng(17);
  const auto draws = sample_replacements(s, db, mv, rng);
  std::vector<std::size_t> batch(12);
  for (std::size_t i = 0; i < 12; ++i) batch[i] = i;
  const auto gr = backward(m, g, db, batch, &mv, &draws, GradTarget::Both);
  const double h = 1e-5;
  auto fd = [&](double& v) {
    const double o = v;
    v = o + h;
    const double lp = batch_loss(m, g, db, batch, &mv, &draws);
    v = o - h;
    const double lm = batch_loss(m, g, db, batch, &mv, &draws);
    v = o;
    return (lp - lm) / (2 * h);
  };
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); };
  double worst = 0.0;
  std::size_t checked = 0;
  auto& P = m.params().data();
  const auto trainable = m.params().trainable_mask();
  std::vector<std::size_t> pool;
  for (std::size_t k = 0; k < P.size(); ++k)
    if (trainable[k]) pool.push_back(k);
  Rng pick(19);
  for (auto i : pick.subset(pool.size(), std::min<std::size_t>(150, pool.size()))) {
    worst = std::max(worst, rel(fd(P[pool[i]]), gr.params[pool[i]]));
    ++checked;
  }
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c, ++checked) worst = std::max(worst, rel(fd(mv.column->values[r][c]), gr.masks.column[r][c]));
  worst = std::max(worst, rel(fd(mv.fk->values[0]), gr.masks.fk[0]));
  ++checked;
  for (std::size_t p = 0; p < 3; ++p, ++checked) worst = std::max(worst, rel(fd(mv.filter->values[p]), gr.masks.filter[p]));
  return {worst <= 1e-4 && checked >= 100 && g.node_count() <= 30,
          std::to_string(g.node_count()) + " nodes, " + std::to_string(checked) + " coordinates, max rel err " + fmt(worst)};
}

// 4 -------------------------------------------------------------------------

Outcome mask_formulas() {
  Rng rng(23);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(-100, 100), u = rng.uniform(-100, 100);
    mismatches += mask_mix(x, 1.0, u) != x;
    mismatches += mask_mix(x, 0.0, u) != u;
  }
  // Elementwise through the encoder.
  const auto s = abcf_schema();
  const auto db = abcf_db(s, 10);
  GnnModel m(s, FeatureStats::from_database(s, db), {}, 3);
  const std::vector<double> ones(3, 1.0), zeros(3, 0.0);
  const std::vector<std::uint32_t> donors{7, 7, 7};
  for (std::uint32_t row = 0; row < 10; ++row) {
    mismatches += encode_node(m, db, {0, row}, ones, donors) != encode_node(m, db, {0, row}, {}, {});
    mismatches += encode_node(m, db, {0, row}, zeros, donors) != encode_node(m, db, {0, 7}, {}, {});
  }
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t rows = 1 + rng.index(20), preds = rng.index(8);
    FilterMask f;
    for (std::size_t p = 0; p < preds; ++p) {
      f.values.push_back(rng.uniform());
      f.relation.push_back(0);
      std::vector<std::uint32_t> sat;
      for (std::uint32_t i = 0; i < rows; ++i)
        if (rng.bernoulli(0.4)) sat.push_back(i);
      f.rows.push_back(sat);
    }
    const auto got = tuple_masks(f, 0, rows).second;
    for (std::uint32_t i = 0; i < rows; ++i) {
      double sum = 0.0;
      for (std::size_t p = 0; p < preds; ++p)
        if (std::find(f.rows[p].begin(), f.rows[p].end(), i) != f.rows[p].end()) sum += f.values[p];
      worst = std::max(worst, std::abs(got[i] - std::min(1.0, sum)));
    }
  }
  return {mismatches == 0 && worst <= 1e-15,
          std::to_string(mismatches) + " mix mismatches, max Lukasiewicz error " + fmt(worst)};
}

// 5 -------------------------------------------------------------------------

Outcome planted_recovery() {
  std::size_t tp = 0, selected = 0, recalled = 0, fk_recalled = 0;
  double slowest = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PlantedConfig pc;
    pc.seed = seed;
    const auto f = planted_with_model(pc);
    const auto inst = sample_instances(f.data.schema, f.data.db, 100, true, derive_seed(seed, 0x1257));
    MaskTrainConfig mc;
    mc.seed = seed;
    auto t0 = Clock::now();
    const auto col = learn_column_mask(f.trained.model, f.data.db, inst, mc);
    slowest = std::max(slowest, seconds_since(t0));
    const auto rc = recovery(explained_attrs(threshold_mask(f.data.schema, col, mc.threshold)), f.data.truth.attrs);
    tp += rc.true_positives;
    selected += rc.selected;
    recalled += rc.recall == 1.0;
    t0 = Clock::now();
    const auto fk = learn_fkpk_mask(f.trained.model, f.data.db, inst, mc);
    slowest = std::max(slowest, seconds_since(t0));
    fk_recalled += recovery(explained_fks(threshold_mask(f.data.schema, fk, mc.threshold)), f.data.truth.fks).recall == 1.0;
  }
  const double precision = selected == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(selected);
  return {precision >= 0.8 && recalled == 10 && fk_recalled == 10 && slowest < 300.0,
          "column precision " + fmt(precision) + ", column recall 1 in " + std::to_string(recalled) +
              "/10, FK recall 1 in " + std::to_string(fk_recalled) + "/10, slowest mask run " + fmt(slowest) + " s"};
}

// 6 -------------------------------------------------------------------------

Outcome oracle_agreement() {
  std::size_t agree = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PlantedConfig pc;
    pc.relations = 2;
    pc.data_attrs = 2;
    pc.entity_tuples = 400;
    pc.tuples_per_relation = 60;
    pc.seed = seed;
    const auto f = planted_with_model(pc);
    const auto& S = f.data.schema;
    DevEstimator est(f.trained.model, f.data.db, sample_instances(S, f.data.db, 60, true, seed));
    const auto spec = default_spec(Language::Projection, 1000 + seed);
    const auto o = exhaustive_oracle(est, S, Language::Projection, 1, spec, 3);
    const auto g = greedy_projection(est, S, spec, 3, 1);
    const auto li = rank_local_impact(est, S, spec, 3);
    const auto top = projection_explanation({{li.front().relation, li.front().column}});
    agree += o.explanation == g.explanation && g.explanation == top;
  }
  return {agree >= 9, "oracle = greedy = local impact in " + std::to_string(agree) + "/10 seeds"};
}

// 7 -------------------------------------------------------------------------

Outcome baseline_contract() {
  std::size_t runs = 0, detached = 0, nondeterministic = 0;
  for (auto topo : {Topology::Star, Topology::Chain, Topology::RandomDag})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      PlantedConfig pc;
      pc.topology = topo;
      pc.relations = 5;
      pc.entity_tuples = 200;
      pc.tuples_per_relation = 30;
      pc.data_attrs = 2;
      pc.signal = {SignalAttr{4, 0, 1.0}};
      pc.seed = seed;
      const auto d = generate_planted(pc);
      TrainConfig tc;
      tc.epochs = 10;
      tc.seed = seed;
      const auto tr = train(d.schema, d.db, tc);
      DevEstimator est(tr.model, d.db, sample_instances(d.schema, d.db, 30, true, seed));
      const auto g = greedy_expansion(est, d.schema, default_spec(Language::FKJoin, seed), 2, d.schema.fk_count());
      std::vector<bool> connected(d.schema.relation_count(), false);
      connected[d.schema.target()] = true;
      for (const auto& step : g.trace) {
        const auto& fk = d.schema.resolved_fk(step.unit);
        detached += !(connected[fk.source] || connected[fk.target]);
        connected[fk.source] = connected[fk.target] = true;
      }
      const auto spec = default_spec(Language::Projection, seed);
      auto same = [](const std::vector<RankedAttr>& a, const std::vector<RankedAttr>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
          if (a[i].relation != b[i].relation || a[i].column != b[i].column || a[i].dev != b[i].dev) return false;
        return true;
      };
      nondeterministic += !same(rank_pfi(est, d.schema, spec, 2), rank_pfi(est, d.schema, spec, 2));
      nondeterministic += !same(rank_local_impact(est, d.schema, spec, 2), rank_local_impact(est, d.schema, spec, 2));
      ++runs;
    }
  return {detached == 0 && nondeterministic == 0,
          std::to_string(runs) + " runs, " + std::to_string(detached) + " detached joins, " +
              std::to_string(nondeterministic) + " nondeterministic rankings"};
}

// 8 -------------------------------------------------------------------------

Outcome retrain_check() {
  const auto& f = planted_fixture();
  TrainConfig tc;
  const auto gt = retrain_reduced(f.data.schema, f.data.db, f.data.truth.projection(), tc, &f.trained);
  const auto empty = retrain_reduced(f.data.schema, f.data.db, Explanation::empty(Language::Projection), tc, &f.trained);
  return {std::abs(gt.diff) <= 0.02 && gt.size_reduction >= 0.3 && empty.masked_perf >= 0.4 && empty.masked_perf <= 0.6,
          "full AUC " + fmt(gt.perf) + ", truth AUC " + fmt(gt.masked_perf) + " with size reduction " +
              fmt(gt.size_reduction) + ", empty AUC " + fmt(empty.masked_perf)};
}

// 9 -------------------------------------------------------------------------

Outcome golden_sql() {
  const auto s = clinical_schema();
  const auto golden = source_dir() / "tests" / "golden";
  const auto proj = to_sql(s, relation_slice(s, designs_view(s), s.relation_index("designs")));
  const auto join = joined_sql(s, facilities_join(s));
  const bool a = normalize_sql(proj) == normalize_sql(read_file(golden / "designs_proj_select.sql"));
  const bool b = normalize_sql(join) == normalize_sql(read_file(golden / "studies_facilities_join.sql"));
  return {a && b, std::string("projection-selection ") + (a ? "matches" : "differs") + ", join path " +
                      (b ? "matches" : "differs")};
}

// 10 ------------------------------------------------------------------------

int cli(const std::string& args) {
  const auto cmd = std::string(VIEWEX_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome cli_determinism() {
  const auto dir = scratch_dir("acceptance_cli");
  Json cfg = {{"planted", {{"entity_tuples", 200}, {"tuples_per_relation", 30}}},
              {"train", {{"epochs", 20}}},
              {"experiment", {{"train_instances", 30}, {"eval_instances", 30}, {"dev_samples", 2}, {"mask", {{"epochs", 20}}}}}};
  write_json_file(dir / "cfg.json", cfg);
  const auto c = " --config " + (dir / "cfg.json").string();
  const auto data = dir / "gen";
  const auto schema = " --schema " + (data / "schema.json").string() + " --data " + (data / "data").string();
  const auto model = " --model " + (dir / "train" / "model.ckpt").string();
  const auto expl = " --explanation " + (dir / "explain" / "explanation.json").string();
  const auto truth = " --truth " + (data / "truth.json").string();
  const std::vector<std::pair<std::string, std::string>> runs{
      {"gen", "gen" + c},
      {"train", "train" + c + schema},
      {"explain", "explain" + c + schema + model + truth + " --method column-mask"},
      {"oracle", "oracle" + c + schema + model + truth + " --k 1"},
      {"evaluate", "evaluate" + c + schema + model + expl + truth},
      {"retrain", "retrain" + c + schema + expl},
      {"emit-sql", "emit-sql --schema " + (data / "schema.json").string() + expl}};
  std::size_t compared = 0;
  for (const auto& [name, args] : runs) {
    const auto out = dir / name;
    if (int rc = cli(args + " --out " + out.string()); rc != 0)
      return {false, name + " exited with " + std::to_string(rc)};
    const auto again = dir / (name + "_replay");
    if (int rc = cli("replay --manifest " + (out / "manifest.json").string() + " --out " + again.string()); rc != 0)
      return {false, name + " replay exited with " + std::to_string(rc)};
    for (const auto& entry : std::filesystem::recursive_directory_iterator(out)) {
      if (!entry.is_regular_file()) continue;
      const auto file = entry.path().filename().string();
      if (file == "manifest.json" || file == "timing.json") continue;
      const auto relp = std::filesystem::relative(entry.path(), out);
      if (read_file(entry.path()) != read_file(again / relp)) return {false, name + ": " + relp.string() + " differs on replay"};
      ++compared;
    }
  }
  return {compared > 0, std::to_string(runs.size()) + " subcommands replayed, " + std::to_string(compared) +
                            " report files byte-identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"perturbation invariants", perturbation_invariants},
      {"determinacy sanity", determinacy_sanity},
      {"gradient correctness", gradient_correctness},
      {"mask formula exactness", mask_formulas},
      {"planted-signal recovery", planted_recovery},
      {"oracle agreement", oracle_agreement},
      {"baseline contract", baseline_contract},
      {"retrain check", retrain_check},
      {"golden SQL", golden_sql},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << " ("
              << fmt(seconds_since(t0)) << " s)" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
