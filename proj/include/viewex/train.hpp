#pragma once

// Seeded train/validation/test split, Adam, early stopping, and evaluation metrics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "viewex/model.hpp"

namespace viewex {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::size_t patience = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0) || epochs == 0 || batch_size == 0 || patience == 0 || model.layers < 1)
      fail(ErrorKind::ConfigError, "training hyperparameters must be positive");
    if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1 && epsilon > 0))
      fail(ErrorKind::ConfigError, "optimizer moments must lie in (0,1)");
    if (!(train_fraction > 0 && validation_fraction > 0 && train_fraction + validation_fraction < 1))
      fail(ErrorKind::ConfigError, "split fractions must be positive and leave room for a test split");
  }
};

inline constexpr std::size_t kMinLabeledInstances = 10;

struct Split {
  std::vector<std::size_t> train, validation, test;  // target-relation rows, ascending
};

/// Target rows with a non-missing label, ascending.
inline std::vector<std::size_t> labeled_rows(const DatabaseSchema& schema, const Database& db) {
  std::vector<std::size_t> rows;
  const auto& col = db.relation(schema.target()).columns[schema.label_column()];
  for (std::size_t r = 0; r < col.size(); ++r)
    if (col[r].tag == Value::Tag::Numeric) rows.push_back(r);
  return rows;
}

inline Split split_instances(const DatabaseSchema& schema, const Database& db, const TrainConfig& cfg) {
  auto rows = labeled_rows(schema, db);
  if (rows.size() < kMinLabeledInstances)
    fail(ErrorKind::InsufficientData, "need at least " + std::to_string(kMinLabeledInstances) +
                                          " labeled instances, found " + std::to_string(rows.size()));
  Rng rng(derive_seed(cfg.seed, 0x5b117));
  rng.shuffle(rows);
  const auto n = rows.size();
  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.train_fraction * n)));
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.validation_fraction * n)));
  Split s;
  s.train.assign(rows.begin(), rows.begin() + n_train);
  s.validation.assign(rows.begin() + n_train, rows.begin() + n_train + n_val);
  s.test.assign(rows.begin() + n_train + n_val, rows.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline constexpr double kScoreTieTolerance = 1e-9;

/// Rank-based ROC-AUC with averaged ranks for ties; NaN when a class is absent.
/// Consecutive sorted scores closer than kScoreTieTolerance (relative) form one
/// tie group, so rounding noise does not rank otherwise identical predictions.
inline double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] - scores[order[j]] <=
                            kScoreTieTolerance * std::max(1.0, std::abs(scores[order[j]])))
      ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] > 0.5) pos += 1, rank_sum += rank[i];
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

inline double mean_absolute_error(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  /// One update; entries with mask 0 are left untouched.
  void step(std::vector<double>& x, const std::vector<double>& grad, const std::vector<std::uint8_t>* mask = nullptr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (mask && !(*mask)[i]) continue;
      m_[i] = b1_ * m_[i] + (1 - b1_) * grad[i];
      v_[i] = b2_ * v_[i] + (1 - b2_) * grad[i] * grad[i];
      x[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Label-scale predictions for target rows.
inline std::vector<double> predict_rows(const GnnModel& model, const HeteroGraph& graph, const Database& db,
                                        std::span<const std::size_t> rows, const MaskValues* masks = nullptr,
                                        const ReplacementDraws* draws = nullptr) {
  auto p = forward(model, graph, db, rows, masks, draws);
  for (auto& x : p) x = model.to_label_scale(x);
  return p;
}

struct InstancePrediction {
  std::size_t row = 0;
  std::string key;  // rendered key, components joined by ','
  double prediction = 0.0;
};

/// One prediction per target tuple, in row order.
inline std::vector<InstancePrediction> predict_all(const GnnModel& model, const Database& db,
                                                   const MaskValues* masks = nullptr) {
  const auto& S = model.schema();
  const auto graph = build_graph(S, db);
  const auto n = db.relation(S.target()).rows();
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  const auto pred = predict_rows(model, graph, db, rows, masks);
  std::vector<InstancePrediction> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {i, render_tuple(db, S.target(), S.key_columns(S.target()),
                                  db.relation(S.target()).tuple(i, S.key_columns(S.target()))), pred[i]};
  return out;
}

inline std::vector<double> label_values(const DatabaseSchema& schema, const Database& db,
                                        std::span<const std::size_t> rows) {
  std::vector<double> y;
  for (auto r : rows) {
    const auto& v = db.relation(schema.target()).at(r, schema.label_column());
    if (v.tag != Value::Tag::Numeric) fail(ErrorKind::DomainError, "instance row " + std::to_string(r) + " has no label");
    y.push_back(v.num);
  }
  return y;
}

/// ROC-AUC for classification, MAE for regression, on the label scale.
inline double evaluate_metric(const GnnModel& model, const HeteroGraph& graph, const Database& db,
                              std::span<const std::size_t> rows, const MaskValues* masks = nullptr,
                              const ReplacementDraws* draws = nullptr) {
  const auto pred = predict_rows(model, graph, db, rows, masks, draws);
  const auto y = label_values(model.schema(), db, rows);
  return model.schema().task() == Task::BinaryClassification ? roc_auc(pred, y) : mean_absolute_error(pred, y);
}

inline bool metric_higher_is_better(Task task) { return task == Task::BinaryClassification; }

struct TrainResult {
  GnnModel model;
  Split split;
  std::vector<double> train_loss;  // mean over batches, per epoch
  std::vector<double> validation_metric;  // per epoch
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  double test_metric = 0.0;
};

/// Trains on `split.train`, early-stopping on `split.validation`. `fixed` holds
/// masks applied throughout (only FK masks, which need no replacement draws).
inline TrainResult train_on_split(const DatabaseSchema& schema, const Database& db, const Split& split,
                                  const TrainConfig& cfg, const MaskValues* fixed = nullptr) {
  cfg.validate();
  if (fixed && (fixed->column || fixed->filter))
    fail(ErrorKind::ConfigError, "fixed training masks may only drop FK joins");
  if (split.train.empty() || split.validation.empty()) fail(ErrorKind::InsufficientData, "empty train or validation split");
  const auto graph = build_graph(schema, db);
  GnnModel model(schema, FeatureStats::from_database(schema, db), cfg.model, derive_seed(cfg.seed, 0x1417));
  if (schema.task() == Task::Regression) {
    const auto y = label_values(schema, db, split.train);
    double mean = 0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss = 0;
    for (double v : y) ss += (v - mean) * (v - mean);
    model.set_label_stats(mean, std::sqrt(ss / static_cast<double>(y.size())));
  }
  const bool higher = metric_higher_is_better(schema.task());
  const auto trainable = model.params().trainable_mask();
  Adam opt(model.params().size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  auto validation_score = [&](double& loss_out) {
    const double metric = evaluate_metric(model, graph, db, split.validation, fixed);
    loss_out = batch_loss(model, graph, db, split.validation, fixed);
    return metric;
  };

  TrainResult res{model, split, {}, {}, 0, 0.0, 0.0};
  std::vector<double> best = model.params().data();
  double best_metric = higher ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0x10000 + epoch));
    rng.shuffle(order);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const auto hi = std::min(order.size(), lo + cfg.batch_size);
      std::span<const std::size_t> batch(order.data() + lo, hi - lo);
      auto g = backward(model, graph, db, batch, fixed, nullptr, GradTarget::Params);
      opt.step(model.params().data(), g.params, &trainable);
      epoch_loss += g.loss;
      ++batches;
    }
    res.train_loss.push_back(epoch_loss / static_cast<double>(batches));
    double vloss = 0;
    const double metric = validation_score(vloss);
    res.validation_metric.push_back(metric);
    // NaN AUC (single-class validation split) and metric ties fall back to validation loss.
    bool improved;
    if (std::isnan(metric) || metric == best_metric)
      improved = vloss < best_loss;
    else
      improved = higher ? metric > best_metric : metric < best_metric;
    if (improved || epoch == 0) {
      if (!std::isnan(metric)) best_metric = metric;
      best_loss = vloss;
      best = model.params().data();
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model.params().data() = best;
  res.best_validation = best_metric;
  res.test_metric = split.test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : evaluate_metric(model, graph, db, split.test, fixed);
  res.model = std::move(model);
  return res;
}

inline TrainResult train(const DatabaseSchema& schema, const Database& db, const TrainConfig& cfg) {
  cfg.validate();
  return train_on_split(schema, db, split_instances(schema, db, cfg), cfg);
}

}  // namespace viewex
