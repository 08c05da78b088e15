#pragma once

// Monte-Carlo estimate of the expected prediction distance between D and
// contingency databases D' drawn for an explanation.

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "viewex/explang.hpp"
#include "viewex/io.hpp"
#include "viewex/perturb.hpp"
#include "viewex/train.hpp"

namespace viewex {

/// Classification: |a-b| on probabilities (or on 0/1 labels with `hard_label`).
/// Regression: |a-b| / (|a|+|b|), 0 when both are 0.
inline double dist(double a, double b, Task task, bool hard_label = false) {
  if (task == Task::BinaryClassification) {
    if (hard_label) return (a >= 0.5) == (b >= 0.5) ? 0.0 : 1.0;
    return std::abs(a - b);
  }
  const double denom = std::abs(a) + std::abs(b);
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

inline double objective(double dev, std::size_t cost, double lambda) {
  if (lambda < 0) fail(ErrorKind::DomainError, "lambda must be non-negative");
  return dev + lambda * static_cast<double>(cost);
}

struct DevReport {
  std::vector<std::size_t> instances;
  std::vector<double> instance_mean;
  std::vector<double> instance_sd;
  std::vector<double> sample_mean;  // average distance over instances, per sample
  double mean = 0.0;
  double sd = 0.0;  // across sample averages
  std::size_t n_samples = 0;
  PerturbationSpec spec;
};

/// Fixes model, database and instances so that many explanations can be
/// scored against one set of reference predictions.
class DevEstimator {
 public:
  DevEstimator(const GnnModel& model, const Database& db, std::vector<std::size_t> instances, bool hard_label = false)
      : model_(model), db_(db), instances_(std::move(instances)), hard_label_(hard_label) {
    if (instances_.empty()) fail(ErrorKind::DomainError, "no instances to evaluate");
    const auto graph = build_graph(model_.schema(), db_);
    reference_ = predict_rows(model_, graph, db_, instances_);
  }

  const std::vector<std::size_t>& instances() const { return instances_; }
  const std::vector<double>& reference() const { return reference_; }

  /// Sample j uses seed spec.seed + j.
  DevReport operator()(const Explanation& e, const PerturbationSpec& spec, std::size_t n_samples) const {
    if (n_samples == 0) fail(ErrorKind::ConfigError, "n_samples must be positive");
    const auto& S = model_.schema();
    const auto n = instances_.size();
    DevReport rep;
    rep.instances = instances_;
    rep.n_samples = n_samples;
    rep.spec = spec;
    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    for (std::size_t j = 0; j < n_samples; ++j) {
      const auto perturbed = perturb(S, db_, e, spec.with_seed(spec.seed + j));
      const auto graph = build_graph(S, perturbed);
      const auto pred = predict_rows(model_, graph, perturbed, instances_);
      double avg = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = dist(reference_[i], pred[i], S.task(), hard_label_);
        sum[i] += d;
        sumsq[i] += d * d;
        avg += d;
      }
      rep.sample_mean.push_back(avg / static_cast<double>(n));
    }
    const double k = static_cast<double>(n_samples);
    for (std::size_t i = 0; i < n; ++i) {
      const double m = sum[i] / k;
      rep.instance_mean.push_back(m);
      rep.instance_sd.push_back(std::sqrt(std::max(0.0, sumsq[i] / k - m * m)));
      rep.mean += m;
    }
    rep.mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double s : rep.sample_mean) ss += (s - rep.mean) * (s - rep.mean);
    rep.sd = std::sqrt(ss / k);
    return rep;
  }

 private:
  const GnnModel& model_;
  const Database& db_;
  std::vector<std::size_t> instances_;
  bool hard_label_;
  std::vector<double> reference_;
};

inline DevReport estimate_dev(const GnnModel& model, const Database& db, const Explanation& e,
                              const PerturbationSpec& spec, std::vector<std::size_t> instances, std::size_t n_samples,
                              bool hard_label = false) {
  return DevEstimator(model, db, std::move(instances), hard_label)(e, spec, n_samples);
}

/// Balanced classification sampling takes ceil(n/2) instances per class;
/// otherwise n instances uniformly without replacement. Sorted output.
inline std::vector<std::size_t> sample_instances(const DatabaseSchema& schema, const Database& db, std::size_t n,
                                                 bool balanced, std::uint64_t seed) {
  const auto rows = labeled_rows(schema, db);
  Rng rng(derive_seed(seed, 0x1a57));
  std::vector<std::size_t> out;
  if (balanced && schema.task() == Task::BinaryClassification) {
    std::vector<std::size_t> cls[2];
    for (auto r : rows) cls[db.relation(schema.target()).at(r, schema.label_column()).num > 0.5 ? 1 : 0].push_back(r);
    const auto per = (n + 1) / 2;
    for (int c = 0; c < 2; ++c) {
      if (cls[c].size() < per)
        fail(ErrorKind::InsufficientClassMembers, "class " + std::to_string(c) + " has " +
                                                      std::to_string(cls[c].size()) + " instances, need " +
                                                      std::to_string(per));
      for (auto i : rng.subset(cls[c].size(), per)) out.push_back(cls[c][i]);
    }
  } else {
    if (n > rows.size())
      fail(ErrorKind::InsufficientData, "requested " + std::to_string(n) + " instances, only " +
                                            std::to_string(rows.size()) + " labeled");
    for (auto i : rng.subset(rows.size(), n)) out.push_back(rows[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline Json spec_to_json(const PerturbationSpec& s) {
  return Json{{"family", to_string(s.family)}, {"fk_family", to_string(s.fk_family)}, {"seed", s.seed}};
}

inline Json dev_report_to_json(const DatabaseSchema& schema, const Database& db, const DevReport& r) {
  Json j;
  j["mean"] = r.mean;
  j["sd"] = r.sd;
  j["n_samples"] = r.n_samples;
  j["spec"] = spec_to_json(r.spec);
  j["sample_mean"] = r.sample_mean;
  j["instances"] = Json::array();
  const auto t = schema.target();
  for (std::size_t i = 0; i < r.instances.size(); ++i)
    j["instances"].push_back({{"key", render_tuple(db, t, schema.key_columns(t),
                                                   db.relation(t).tuple(r.instances[i], schema.key_columns(t)))},
                              {"mean", r.instance_mean[i]},
                              {"sd", r.instance_sd[i]}});
  return j;
}

inline void write_dev_csv(std::ostream& out, const DatabaseSchema& schema, const Database& db, const DevReport& r) {
  csv::write_record(out, {"instance", "mean", "sd"});
  const auto t = schema.target();
  for (std::size_t i = 0; i < r.instances.size(); ++i)
    csv::write_record(out, {render_tuple(db, t, schema.key_columns(t),
                                         db.relation(t).tuple(r.instances[i], schema.key_columns(t))),
                            format_number(r.instance_mean[i]), format_number(r.instance_sd[i])});
}

}  // namespace viewex
