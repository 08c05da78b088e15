#pragma once

// Retraining on the information an explanation keeps. Feature cells outside
// the explanation are blanked to Missing; FK joins outside FK(E) are held at
// mask value 0 during training and evaluation.

#include <optional>
#include <vector>

#include "viewex/explang.hpp"
#include "viewex/io.hpp"
#include "viewex/search.hpp"
#include "viewex/train.hpp"

namespace viewex {

struct ReducedDatabase {
  Database db;
  std::optional<FkMask> fk_mask;
  std::size_t retained_cells = 0;
  std::size_t total_cells = 0;

  double size_reduction() const {
    return total_cells == 0 ? 0.0 : 1.0 - static_cast<double>(retained_cells) / static_cast<double>(total_cells);
  }
};

/// Per relation, per feature column, per row: whether the explanation keeps the cell.
inline ReducedDatabase reduce_database(const DatabaseSchema& schema, const Database& db, const Explanation& e) {
  validate_explanation(schema, e);
  ReducedDatabase out{db, std::nullopt, 0, 0};
  std::vector<bool> reach(schema.relation_count(), true);
  if (has_join(e.language)) {
    reach = reachable_relations(schema, fks_of(schema, e));
    out.fk_mask = hard_fk_mask(schema, e);
  }
  const auto tups = has_selection(e.language) ? tups_of(schema, db, e) : std::vector<std::vector<bool>>{};
  for (std::size_t r = 0; r < schema.relation_count(); ++r) {
    auto& rel = out.db.relation(r);
    const auto n = rel.rows();
    std::vector<bool> rows(n, true);
    if (has_selection(e.language)) {
      if (e.selection_of(r))
        rows = tups[r];
      else if (!has_projection(e.language))
        rows.assign(n, false);
    }
    const auto* proj = e.projection_of(r);
    for (auto c : schema.feature_columns(r)) {
      bool col = reach[r];
      if (has_projection(e.language))
        col = col && proj && std::binary_search(proj->data_attrs.begin(), proj->data_attrs.end(), c);
      for (std::size_t i = 0; i < n; ++i) {
        ++out.total_cells;
        if (col && rows[i])
          ++out.retained_cells;
        else
          rel.columns[c][i] = Value::missing();
      }
    }
  }
  return out;
}

struct RetrainReport {
  double perf = 0.0;  // full model, test split
  double masked_perf = 0.0;  // model retrained on the reduced database, same split
  double diff = 0.0;  // perf - masked_perf
  double size_reduction = 0.0;
  std::size_t retained_cells = 0;
  std::size_t total_cells = 0;
};

/// `full` is the model trained on the unreduced database with the same config;
/// when absent it is trained here.
inline RetrainReport retrain_reduced(const DatabaseSchema& schema, const Database& db, const Explanation& e,
                                     const TrainConfig& cfg, const TrainResult* full = nullptr) {
  const auto split = split_instances(schema, db, cfg);
  std::optional<TrainResult> own;
  if (!full) {
    own = train_on_split(schema, db, split, cfg);
    full = &*own;
  }
  const auto reduced = reduce_database(schema, db, e);
  MaskValues fixed;
  fixed.fk = reduced.fk_mask;
  const auto masked = train_on_split(schema, reduced.db, split, cfg, fixed.any() ? &fixed : nullptr);
  RetrainReport rep;
  rep.perf = full->test_metric;
  rep.masked_perf = masked.test_metric;
  rep.diff = rep.perf - rep.masked_perf;
  rep.size_reduction = reduced.size_reduction();
  rep.retained_cells = reduced.retained_cells;
  rep.total_cells = reduced.total_cells;
  return rep;
}

inline Json retrain_report_to_json(const RetrainReport& r) {
  return Json{{"perf", r.perf},
              {"masked_perf", r.masked_perf},
              {"diff", r.diff},
              {"size_reduction", r.size_reduction},
              {"retained_cells", r.retained_cells},
              {"total_cells", r.total_cells}};
}

}  // namespace viewex
