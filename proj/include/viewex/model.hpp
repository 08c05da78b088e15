#pragma once

// Heterogeneous message-passing model over the row-to-node graph.
//
//   x_v      = Enc_R( slot_1 (+) ... (+) slot_k ) ,  slot_i = mu(Enc_{R.A_i}(t[A_i]), m_{R.A_i})
//   h^0_v    = mu(x_v, m_(R,t))                                  (selection masks)
//   h^l_v    = ReLU( W_self h^{l-1}_v + sum_{(fk,o)} W_{fk,o} mu(mean{h^{l-1}_u : u in N^o_fk(v)}, m_fk) + b )
//   M(v)     = W2 ReLU(W1 h^L_v + b1) + b2      (sigmoid for binary classification)
//
// with mu(x, m) = m x + (1 - m) u. Column and tuple replacements u are the
// encodings of donor rows drawn from the same relation; the FK replacement is
// the zero vector. Row-vector convention throughout: activations are n x d
// matrices and weights multiply on the right.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "viewex/graph.hpp"
#include "viewex/relstore.hpp"
#include "viewex/rng.hpp"
#include "viewex/tensor.hpp"

namespace viewex {

struct ModelConfig {
  std::size_t attr_dim = 4;
  std::size_t rel_dim = 16;
  std::size_t hidden_dim = 16;
  std::size_t layers = 2;
};

inline constexpr std::size_t kNoTensor = std::numeric_limits<std::size_t>::max();

/// Encoder of one data attribute. Categorical: embedding table with row 0
/// reserved for Missing/unseen. Numeric: scale * z + bias on the z-scored
/// value, with a learned vector for Missing.
struct AttrSlot {
  std::size_t column = 0;
  AttrKind kind = AttrKind::Numeric;
  std::size_t offset = 0;  // position inside the concatenated encoding
  std::size_t vocab = 0;
  std::size_t table = kNoTensor;
  std::size_t scale = kNoTensor;
  std::size_t bias = kNoTensor;
  std::size_t missing = kNoTensor;
  std::size_t stats = kNoTensor;  // non-trainable (mean, sd)
};

struct RelationEncoder {
  std::vector<AttrSlot> attrs;  // one per feature column, schema order
  std::size_t width = 0;
  std::size_t weight = kNoTensor;  // width x rel_dim
  std::size_t bias = kNoTensor;  // 1 x rel_dim
};

/// One (fk, orientation) message channel, owned by the relation whose nodes receive it.
struct MessageBlock {
  std::size_t fk = 0;
  Orientation orientation = Orientation::Out;
  std::size_t owner = 0;
  std::size_t other = 0;
};

struct LayerParams {
  std::vector<std::size_t> self;  // per relation, rel_dim x rel_dim
  std::vector<std::size_t> bias;  // per relation, 1 x rel_dim
  std::vector<std::size_t> block;  // per message block, rel_dim x rel_dim
};

struct HeadParams {
  std::size_t w1 = kNoTensor, b1 = kNoTensor, w2 = kNoTensor, b2 = kNoTensor;
};

/// Column statistics the encoders are sized and normalized with.
struct FeatureStats {
  std::vector<std::vector<std::size_t>> vocab;  // [relation][feature], 0 for numeric
  std::vector<std::vector<std::pair<double, double>>> moments;  // [relation][feature] (mean, sd)

  static FeatureStats from_database(const DatabaseSchema& schema, const Database& db) {
    FeatureStats s;
    for (std::size_t r = 0; r < schema.relation_count(); ++r) {
      std::vector<std::size_t> vocab;
      std::vector<std::pair<double, double>> moments;
      for (auto c : schema.feature_columns(r)) {
        const auto& rel = db.relation(r);
        if (schema.relation(r).attributes[c].kind == AttrKind::Categorical) {
          vocab.push_back(rel.symbols[c] ? rel.symbols[c]->size() : 0);
          moments.emplace_back(0.0, 0.0);
        } else {
          vocab.push_back(0);
          double sum = 0.0, n = 0.0;
          for (const auto& v : rel.columns[c])
            if (!v.is_missing()) sum += v.num, n += 1.0;
          const double mean = n > 0 ? sum / n : 0.0;
          double ss = 0.0;
          for (const auto& v : rel.columns[c])
            if (!v.is_missing()) ss += (v.num - mean) * (v.num - mean);
          moments.emplace_back(mean, n > 0 ? std::sqrt(ss / n) : 0.0);
        }
      }
      s.vocab.push_back(std::move(vocab));
      s.moments.push_back(std::move(moments));
    }
    return s;
  }
};

class GnnModel {
 public:
  GnnModel(DatabaseSchema schema, const FeatureStats& stats, ModelConfig config, std::uint64_t seed)
      : schema_(std::move(schema)), config_(config) {
    if (config_.layers < 1) fail(ErrorKind::ConfigError, "model needs at least one layer");
    if (config_.attr_dim == 0 || config_.rel_dim == 0 || config_.hidden_dim == 0)
      fail(ErrorKind::ConfigError, "model dimensions must be positive");
    build(stats);
    Rng rng(seed);
    for (std::size_t t = 0; t < params_.tensors().size(); ++t) {
      const auto& info = params_.info(t);
      if (!info.trainable) continue;
      if (info.name.ends_with(".b") || info.name.ends_with(".bias") || info.name.ends_with(".b1") ||
          info.name.ends_with(".b2"))
        continue;
      params_.init_glorot(t, rng);
    }
    for (const auto& enc : encoders_)
      for (const auto& a : enc.attrs)
        if (a.kind == AttrKind::Numeric) std::fill(params_.span(a.scale).begin(), params_.span(a.scale).end(), 1.0);
  }

  const DatabaseSchema& schema() const { return schema_; }
  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<RelationEncoder>& encoders() const { return encoders_; }
  const std::vector<MessageBlock>& blocks() const { return blocks_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  const HeadParams& head() const { return head_; }

  double label_mean() const { return params_.ptr(meta_)[0]; }
  double label_sd() const { return params_.ptr(meta_)[1]; }
  void set_label_stats(double mean, double sd) {
    params_.ptr(meta_)[0] = mean;
    params_.ptr(meta_)[1] = sd > 0 ? sd : 1.0;
  }

  /// Maps a raw model output to the label scale (identity for classification).
  double to_label_scale(double output) const {
    return schema_.task() == Task::Regression ? output * label_sd() + label_mean() : output;
  }

  double standardize_label(double y) const {
    return schema_.task() == Task::Regression ? (y - label_mean()) / label_sd() : y;
  }

 private:
  void build(const FeatureStats& stats) {
    const auto& S = schema_;
    const auto d = config_.rel_dim;
    const auto da = config_.attr_dim;
    auto meta_config = params_.add("meta.config", 1, 4, false);
    params_.ptr(meta_config)[0] = static_cast<double>(config_.attr_dim);
    params_.ptr(meta_config)[1] = static_cast<double>(config_.rel_dim);
    params_.ptr(meta_config)[2] = static_cast<double>(config_.hidden_dim);
    params_.ptr(meta_config)[3] = static_cast<double>(config_.layers);
    meta_ = params_.add("meta.label", 1, 2, false);
    set_label_stats(0.0, 1.0);

    for (std::size_t r = 0; r < S.relation_count(); ++r) {
      const auto& rs = S.relation(r);
      RelationEncoder enc;
      const auto& feats = S.feature_columns(r);
      for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto c = feats[i];
        const std::string prefix = "enc." + rs.name + "." + rs.attributes[c].name;
        AttrSlot slot;
        slot.column = c;
        slot.kind = rs.attributes[c].kind;
        slot.offset = enc.width;
        if (slot.kind == AttrKind::Categorical) {
          slot.vocab = stats.vocab.at(r).at(i);
          slot.table = params_.add(prefix + ".table", slot.vocab + 1, da);
        } else {
          slot.scale = params_.add(prefix + ".scale", 1, da);
          slot.bias = params_.add(prefix + ".bias", 1, da);
          slot.missing = params_.add(prefix + ".missing", 1, da);
          slot.stats = params_.add(prefix + ".stats", 1, 2, false);
          params_.ptr(slot.stats)[0] = stats.moments.at(r).at(i).first;
          params_.ptr(slot.stats)[1] = stats.moments.at(r).at(i).second;
        }
        enc.width += da;
        enc.attrs.push_back(slot);
      }
      enc.weight = params_.add("enc." + rs.name + ".W", enc.width, d);
      enc.bias = params_.add("enc." + rs.name + ".b", 1, d);
      encoders_.push_back(std::move(enc));
    }

    // (fk, orientation) in lexicographic order fixes the message ordering.
    for (std::size_t f = 0; f < S.fk_count(); ++f) {
      const auto& fk = S.resolved_fk(f);
      blocks_.push_back({f, Orientation::Out, fk.source, fk.target});
      blocks_.push_back({f, Orientation::In, fk.target, fk.source});
    }

    for (std::size_t l = 0; l < config_.layers; ++l) {
      LayerParams lp;
      const std::string prefix = "layer" + std::to_string(l + 1) + ".";
      for (std::size_t r = 0; r < S.relation_count(); ++r) {
        lp.self.push_back(params_.add(prefix + S.relation(r).name + ".self", d, d));
        lp.bias.push_back(params_.add(prefix + S.relation(r).name + ".bias", 1, d));
      }
      for (const auto& b : blocks_)
        lp.block.push_back(
            params_.add(prefix + S.fk(b.fk).id + (b.orientation == Orientation::Out ? ".out" : ".in"), d, d));
      layers_.push_back(std::move(lp));
    }

    head_.w1 = params_.add("head.W1", d, config_.hidden_dim);
    head_.b1 = params_.add("head.b1", 1, config_.hidden_dim);
    head_.w2 = params_.add("head.W2", config_.hidden_dim, 1);
    head_.b2 = params_.add("head.b2", 1, 1);
  }

  DatabaseSchema schema_;
  ModelConfig config_;
  ParamStore params_;
  std::vector<RelationEncoder> encoders_;
  std::vector<MessageBlock> blocks_;
  std::vector<LayerParams> layers_;
  HeadParams head_;
  std::size_t meta_ = kNoTensor;
};

// ---------------------------------------------------------------------------
// Masks

/// Projection masks: one value per (relation, feature column).
struct ColumnMask {
  std::vector<std::vector<double>> values;
};

/// FK-join masks: one value per FK, shared by both orientations and all layers.
struct FkMask {
  std::vector<double> values;
};

/// Selection masks: one value per atomic predicate, plus the rows each predicate selects.
struct FilterMask {
  std::vector<double> values;
  std::vector<std::size_t> relation;
  std::vector<std::vector<std::uint32_t>> rows;
};

struct MaskValues {
  std::optional<ColumnMask> column;
  std::optional<FkMask> fk;
  std::optional<FilterMask> filter;

  bool any() const { return column || fk || filter; }
};

/// Donor rows for the replacement vectors of one forward pass.
struct ReplacementDraws {
  std::vector<std::vector<std::vector<std::uint32_t>>> column;  // [relation][feature][row]
  std::vector<std::vector<std::uint32_t>> tuple;  // [relation][row]
};

inline double mask_mix(double x, double m, double u) { return m * x + (1.0 - m) * u; }

/// Lukasiewicz t-conorm of the masks of the predicates a tuple satisfies.
inline double lukasiewicz(std::span<const double> masks) {
  double s = 0.0;
  for (double m : masks) s += m;
  return std::min(1.0, s);
}

inline void check_masks(const DatabaseSchema& schema, const Database& db, const MaskValues& masks) {
  auto check = [](double m) {
    if (!(m >= 0.0 && m <= 1.0)) fail(ErrorKind::DomainError, "mask value outside [0,1]: " + format_number(m));
  };
  if (masks.column) {
    if (masks.column->values.size() != schema.relation_count())
      fail(ErrorKind::DomainError, "column mask does not cover every relation");
    for (std::size_t r = 0; r < schema.relation_count(); ++r) {
      if (masks.column->values[r].size() != schema.feature_columns(r).size())
        fail(ErrorKind::DomainError, "column mask size mismatch for " + schema.relation(r).name);
      for (double m : masks.column->values[r]) check(m);
    }
  }
  if (masks.fk) {
    if (masks.fk->values.size() != schema.fk_count()) fail(ErrorKind::DomainError, "FK mask size mismatch");
    for (double m : masks.fk->values) check(m);
  }
  if (masks.filter) {
    const auto& f = *masks.filter;
    if (f.relation.size() != f.values.size() || f.rows.size() != f.values.size())
      fail(ErrorKind::DomainError, "filter mask arrays disagree in length");
    for (std::size_t p = 0; p < f.values.size(); ++p) {
      check(f.values[p]);
      if (f.relation[p] >= schema.relation_count()) fail(ErrorKind::DomainError, "filter mask relation out of range");
      for (auto row : f.rows[p])
        if (row >= db.relation(f.relation[p]).rows()) fail(ErrorKind::DomainError, "filter mask row out of range");
    }
  }
}

/// Draws a fresh donor row for every masked slot (uniform over the relation).
inline ReplacementDraws sample_replacements(const DatabaseSchema& schema, const Database& db, const MaskValues& masks,
                                            Rng& rng) {
  ReplacementDraws d;
  const auto R = schema.relation_count();
  if (masks.column) {
    d.column.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      const auto n = db.relation(r).rows();
      d.column[r].resize(schema.feature_columns(r).size());
      for (auto& draws : d.column[r]) {
        draws.resize(n);
        for (auto& x : draws) x = static_cast<std::uint32_t>(rng.index(n));
      }
    }
  }
  if (masks.filter) {
    d.tuple.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      const auto n = db.relation(r).rows();
      d.tuple[r].resize(n);
      for (auto& x : d.tuple[r]) x = static_cast<std::uint32_t>(rng.index(n));
    }
  }
  return d;
}

/// Per-row tuple masks of one relation: (sum of satisfied predicate masks, clamped mask).
inline std::pair<std::vector<double>, std::vector<double>> tuple_masks(const FilterMask& f, std::size_t rel,
                                                                       std::size_t rows) {
  std::vector<double> sum(rows, 0.0);
  for (std::size_t p = 0; p < f.values.size(); ++p)
    if (f.relation[p] == rel)
      for (auto row : f.rows[p]) sum[row] += f.values[p];
  std::vector<double> m(rows);
  for (std::size_t i = 0; i < rows; ++i) m[i] = std::min(1.0, sum[i]);
  return {std::move(sum), std::move(m)};
}

// ---------------------------------------------------------------------------
// Encoding

inline void encode_value(const GnnModel& model, const AttrSlot& slot, const Value& v, double* out) {
  const auto da = model.config().attr_dim;
  const auto& P = model.params();
  if (slot.kind == AttrKind::Categorical) {
    std::size_t row = 0;
    if (v.tag == Value::Tag::Categorical && v.sym >= 0 && static_cast<std::size_t>(v.sym) < slot.vocab)
      row = static_cast<std::size_t>(v.sym) + 1;
    const double* e = P.ptr(slot.table) + row * da;
    std::copy(e, e + da, out);
    return;
  }
  if (v.tag != Value::Tag::Numeric) {
    const double* e = P.ptr(slot.missing);
    std::copy(e, e + da, out);
    return;
  }
  const double mean = P.ptr(slot.stats)[0], sd = P.ptr(slot.stats)[1];
  const double z = sd > 0 ? (v.num - mean) / sd : 0.0;
  const double* s = P.ptr(slot.scale);
  const double* b = P.ptr(slot.bias);
  for (std::size_t j = 0; j < da; ++j) out[j] = s[j] * z + b[j];
}

/// Accumulates d(loss)/d(encoder params) for one encoded value.
inline void encode_value_backward(const GnnModel& model, const AttrSlot& slot, const Value& v, const double* d,
                                  std::vector<double>& grad) {
  const auto da = model.config().attr_dim;
  const auto& P = model.params();
  if (slot.kind == AttrKind::Categorical) {
    std::size_t row = 0;
    if (v.tag == Value::Tag::Categorical && v.sym >= 0 && static_cast<std::size_t>(v.sym) < slot.vocab)
      row = static_cast<std::size_t>(v.sym) + 1;
    double* g = grad.data() + P.info(slot.table).offset + row * da;
    for (std::size_t j = 0; j < da; ++j) g[j] += d[j];
    return;
  }
  if (v.tag != Value::Tag::Numeric) {
    double* g = grad.data() + P.info(slot.missing).offset;
    for (std::size_t j = 0; j < da; ++j) g[j] += d[j];
    return;
  }
  const double mean = P.ptr(slot.stats)[0], sd = P.ptr(slot.stats)[1];
  const double z = sd > 0 ? (v.num - mean) / sd : 0.0;
  double* gs = grad.data() + P.info(slot.scale).offset;
  double* gb = grad.data() + P.info(slot.bias).offset;
  for (std::size_t j = 0; j < da; ++j) {
    gs[j] += z * d[j];
    gb[j] += d[j];
  }
}

/// Masked feature vector of a single node. `attr_masks` holds one value per
/// feature column (empty = all ones); `donors` the replacement row per feature.
inline std::vector<double> encode_node(const GnnModel& model, const Database& db, NodeId node,
                                       std::span<const double> attr_masks, std::span<const std::uint32_t> donors) {
  const auto& enc = model.encoders().at(node.relation);
  const auto da = model.config().attr_dim;
  const auto d = model.config().rel_dim;
  if (!attr_masks.empty() && attr_masks.size() != enc.attrs.size())
    fail(ErrorKind::DomainError, "attribute mask count does not match feature count");
  for (double m : attr_masks)
    if (!(m >= 0.0 && m <= 1.0)) fail(ErrorKind::DomainError, "mask value outside [0,1]: " + format_number(m));
  const auto& rel = db.relation(node.relation);
  std::vector<double> concat(enc.width), x(da), u(da);
  for (std::size_t i = 0; i < enc.attrs.size(); ++i) {
    const auto& slot = enc.attrs[i];
    encode_value(model, slot, rel.at(node.row, slot.column), x.data());
    const double m = attr_masks.empty() ? 1.0 : attr_masks[i];
    if (m != 1.0) {
      if (donors.size() != enc.attrs.size()) fail(ErrorKind::DomainError, "masked encoding needs one donor per feature");
      encode_value(model, slot, rel.at(donors[i], slot.column), u.data());
      for (std::size_t j = 0; j < da; ++j) x[j] = mask_mix(x[j], m, u[j]);
    }
    std::copy(x.begin(), x.end(), concat.begin() + static_cast<std::ptrdiff_t>(slot.offset));
  }
  const auto& P = model.params();
  std::vector<double> out(P.ptr(enc.bias), P.ptr(enc.bias) + d);
  kernels::gemm_acc(concat.data(), P.ptr(enc.weight), out.data(), 1, enc.width, d);
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardPass {
  std::vector<std::vector<Matrix>> attr_x;  // [relation][feature] unmasked encodings
  std::vector<std::vector<Matrix>> attr_u;  // replacement encodings (column masks only)
  std::vector<Matrix> concat;
  std::vector<Matrix> x0;  // encoder outputs before tuple masking
  std::vector<std::vector<double>> tuple_sum, tuple_mask;
  std::vector<std::vector<Matrix>> h;  // [layer 0..L][relation]
  std::vector<std::vector<Matrix>> agg;  // [layer 0..L-1][block], unmasked
  std::vector<std::vector<Matrix>> z;  // [layer 1..L stored at l-1][relation]
  std::vector<std::size_t> rows;  // target rows evaluated by the head
  Matrix head_in, a1, r1;
  std::vector<double> out;  // raw head outputs
  std::vector<double> pred;  // sigmoid(out) for classification, out for regression
};

inline void aggregate(const HeteroGraph& graph, const MessageBlock& b, const Matrix& other, Matrix& agg) {
  const auto& a = graph.adjacency(b.fk);
  const auto d = other.cols;
  if (b.orientation == Orientation::Out) {
    for (std::size_t r = 0; r < a.out.size(); ++r) std::copy(other.row(a.out[r]), other.row(a.out[r]) + d, agg.row(r));
    return;
  }
  for (std::size_t t = 0; t + 1 < a.in_offsets.size(); ++t) {
    const auto lo = a.in_offsets[t], hi = a.in_offsets[t + 1];
    if (lo == hi) continue;
    double* dst = agg.row(t);
    for (auto i = lo; i < hi; ++i) {
      const double* src = other.row(a.in_rows[i]);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t j = 0; j < d; ++j) dst[j] *= inv;
  }
}

inline void aggregate_backward(const HeteroGraph& graph, const MessageBlock& b, const Matrix& dagg, Matrix& dother) {
  const auto& a = graph.adjacency(b.fk);
  const auto d = dagg.cols;
  if (b.orientation == Orientation::Out) {
    for (std::size_t r = 0; r < a.out.size(); ++r) {
      double* dst = dother.row(a.out[r]);
      const double* src = dagg.row(r);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    return;
  }
  for (std::size_t t = 0; t + 1 < a.in_offsets.size(); ++t) {
    const auto lo = a.in_offsets[t], hi = a.in_offsets[t + 1];
    if (lo == hi) continue;
    const double inv = 1.0 / static_cast<double>(hi - lo);
    const double* src = dagg.row(t);
    for (auto i = lo; i < hi; ++i) {
      double* dst = dother.row(a.in_rows[i]);
      for (std::size_t j = 0; j < d; ++j) dst[j] += inv * src[j];
    }
  }
}

/// Full-graph forward pass; the head is evaluated on `rows` of the target relation.
inline ForwardPass run_forward(const GnnModel& model, const HeteroGraph& graph, const Database& db,
                               std::span<const std::size_t> rows, const MaskValues* masks = nullptr,
                               const ReplacementDraws* draws = nullptr) {
  const auto& S = model.schema();
  const auto& P = model.params();
  const auto& cfg = model.config();
  const auto R = S.relation_count();
  const auto d = cfg.rel_dim, da = cfg.attr_dim;
  const auto target = S.target();
  if (graph.relation_count() != R || db.relations.size() != R)
    fail(ErrorKind::DomainError, "graph/database do not match the model schema");
  for (auto row : rows)
    if (row >= db.relation(target).rows())
      fail(ErrorKind::DomainError, "instance row " + std::to_string(row) + " is not in the target relation");
  const bool col_mask = masks && masks->column;
  const bool fk_mask = masks && masks->fk;
  const bool filter_mask = masks && masks->filter;
  if (masks) {
    check_masks(S, db, *masks);
    if ((col_mask || filter_mask) && !draws) fail(ErrorKind::DomainError, "masked forward pass needs replacement draws");
  }

  ForwardPass fp;
  fp.attr_x.resize(R);
  fp.attr_u.resize(R);
  fp.concat.resize(R);
  fp.x0.resize(R);
  fp.tuple_sum.resize(R);
  fp.tuple_mask.resize(R);
  fp.h.assign(cfg.layers + 1, std::vector<Matrix>(R));
  for (std::size_t r = 0; r < R; ++r) {
    const auto& enc = model.encoders()[r];
    const auto& rel = db.relation(r);
    const auto n = rel.rows();
    fp.concat[r] = Matrix(n, enc.width);
    fp.attr_x[r].resize(enc.attrs.size());
    if (col_mask) fp.attr_u[r].resize(enc.attrs.size());
    for (std::size_t i = 0; i < enc.attrs.size(); ++i) {
      const auto& slot = enc.attrs[i];
      Matrix x(n, da);
      for (std::size_t row = 0; row < n; ++row) encode_value(model, slot, rel.at(row, slot.column), x.row(row));
      if (col_mask) {
        const double m = masks->column->values[r][i];
        Matrix u(n, da);
        const auto& donor = draws->column.at(r).at(i);
        for (std::size_t row = 0; row < n; ++row) encode_value(model, slot, rel.at(donor[row], slot.column), u.row(row));
        for (std::size_t row = 0; row < n; ++row)
          for (std::size_t j = 0; j < da; ++j) fp.concat[r](row, slot.offset + j) = mask_mix(x(row, j), m, u(row, j));
        fp.attr_u[r][i] = std::move(u);
      } else {
        for (std::size_t row = 0; row < n; ++row)
          std::copy(x.row(row), x.row(row) + da, fp.concat[r].row(row) + slot.offset);
      }
      fp.attr_x[r][i] = std::move(x);
    }
    Matrix x0(n, d);
    const double* b = P.ptr(enc.bias);
    for (std::size_t row = 0; row < n; ++row) std::copy(b, b + d, x0.row(row));
    kernels::gemm_acc(fp.concat[r].data.data(), P.ptr(enc.weight), x0.data.data(), n, enc.width, d);
    if (filter_mask) {
      auto [sum, m] = tuple_masks(*masks->filter, r, n);
      Matrix x(n, d);
      const auto& donor = draws->tuple.at(r);
      for (std::size_t row = 0; row < n; ++row)
        for (std::size_t j = 0; j < d; ++j) x(row, j) = mask_mix(x0(row, j), m[row], x0(donor[row], j));
      fp.tuple_sum[r] = std::move(sum);
      fp.tuple_mask[r] = std::move(m);
      fp.h[0][r] = std::move(x);
    } else {
      fp.h[0][r] = x0;
    }
    fp.x0[r] = std::move(x0);
  }

  fp.agg.resize(cfg.layers);
  fp.z.resize(cfg.layers);
  const auto& blocks = model.blocks();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& lp = model.layers()[l];
    const auto& hin = fp.h[l];
    fp.agg[l].resize(blocks.size());
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const auto& b = blocks[bi];
      fp.agg[l][bi] = Matrix(hin[b.owner].rows, d);
      aggregate(graph, b, hin[b.other], fp.agg[l][bi]);
    }
    fp.z[l].resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      const auto n = hin[r].rows;
      Matrix z(n, d);
      const double* b = P.ptr(lp.bias[r]);
      for (std::size_t row = 0; row < n; ++row) std::copy(b, b + d, z.row(row));
      kernels::gemm_acc(hin[r].data.data(), P.ptr(lp.self[r]), z.data.data(), n, d, d);
      for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        if (blocks[bi].owner != r) continue;
        const double m = fk_mask ? masks->fk->values[blocks[bi].fk] : 1.0;
        if (m == 0.0) continue;
        if (m == 1.0) {
          kernels::gemm_acc(fp.agg[l][bi].data.data(), P.ptr(lp.block[bi]), z.data.data(), n, d, d);
        } else {
          Matrix scaled = fp.agg[l][bi];
          for (auto& v : scaled.data) v *= m;
          kernels::gemm_acc(scaled.data.data(), P.ptr(lp.block[bi]), z.data.data(), n, d, d);
        }
      }
      Matrix h = z;
      for (auto& v : h.data) v = v > 0.0 ? v : 0.0;
      fp.z[l][r] = std::move(z);
      fp.h[l + 1][r] = std::move(h);
    }
  }

  const auto& H = model.head();
  const auto hd = cfg.hidden_dim;
  const auto B = rows.size();
  fp.rows.assign(rows.begin(), rows.end());
  fp.head_in = Matrix(B, d);
  const auto& hl = fp.h[cfg.layers][target];
  for (std::size_t i = 0; i < B; ++i) std::copy(hl.row(rows[i]), hl.row(rows[i]) + d, fp.head_in.row(i));
  fp.a1 = Matrix(B, hd);
  for (std::size_t i = 0; i < B; ++i) std::copy(P.ptr(H.b1), P.ptr(H.b1) + hd, fp.a1.row(i));
  kernels::gemm_acc(fp.head_in.data.data(), P.ptr(H.w1), fp.a1.data.data(), B, d, hd);
  fp.r1 = fp.a1;
  for (auto& v : fp.r1.data) v = v > 0.0 ? v : 0.0;
  fp.out.assign(B, P.ptr(H.b2)[0]);
  kernels::gemm_acc(fp.r1.data.data(), P.ptr(H.w2), fp.out.data(), B, hd, 1);
  fp.pred.resize(B);
  for (std::size_t i = 0; i < B; ++i)
    fp.pred[i] = S.task() == Task::BinaryClassification ? kernels::sigmoid(fp.out[i]) : fp.out[i];
  return fp;
}

/// Predictions for target rows (probabilities for classification, standardized outputs for regression).
inline std::vector<double> forward(const GnnModel& model, const HeteroGraph& graph, const Database& db,
                                   std::span<const std::size_t> rows, const MaskValues* masks = nullptr,
                                   const ReplacementDraws* draws = nullptr) {
  return run_forward(model, graph, db, rows, masks, draws).pred;
}

inline constexpr double kProbClamp = 1e-7;

/// Per-instance loss: binary cross-entropy on a clamped probability, or squared error.
inline double loss(double pred, double label, Task task) {
  if (task == Task::BinaryClassification) {
    const double p = std::clamp(pred, kProbClamp, 1.0 - kProbClamp);
    return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  }
  return (pred - label) * (pred - label);
}

inline double loss(double pred, const Value& label, Task task) {
  if (label.tag != Value::Tag::Numeric) fail(ErrorKind::DomainError, "label is missing");
  return loss(pred, label.num, task);
}

enum class GradTarget { Params, Masks, Both };

struct MaskGradients {
  std::vector<std::vector<double>> column;
  std::vector<double> fk;
  std::vector<double> filter;
};

struct Gradients {
  double loss = 0.0;  // mean batch loss
  std::vector<double> params;  // flat, aligned with ParamStore::data()
  MaskGradients masks;
};

/// Label of a target row on the model's training scale.
inline double training_label(const GnnModel& model, const Database& db, std::size_t row) {
  const auto& v = db.relation(model.schema().target()).at(row, model.schema().label_column());
  if (v.tag != Value::Tag::Numeric) fail(ErrorKind::DomainError, "instance row " + std::to_string(row) + " has no label");
  return model.standardize_label(v.num);
}

/// Reverse-mode gradients of the mean batch loss. Donor draws are constants of the pass.
inline Gradients backward(const GnnModel& model, const HeteroGraph& graph, const Database& db,
                          std::span<const std::size_t> batch, const MaskValues* masks,
                          const ReplacementDraws* draws, GradTarget which) {
  const auto& S = model.schema();
  const auto& P = model.params();
  const auto& cfg = model.config();
  const auto R = S.relation_count();
  const auto d = cfg.rel_dim, da = cfg.attr_dim, hd = cfg.hidden_dim;
  const bool want_params = which != GradTarget::Masks;
  const bool want_masks = which != GradTarget::Params;
  if (batch.empty()) fail(ErrorKind::DomainError, "empty batch");

  auto fp = run_forward(model, graph, db, batch, masks, draws);
  const bool col_mask = masks && masks->column;
  const bool fk_mask = masks && masks->fk;
  const bool filter_mask = masks && masks->filter;

  Gradients g;
  g.params.assign(P.size(), 0.0);
  if (col_mask) {
    g.masks.column.resize(R);
    for (std::size_t r = 0; r < R; ++r) g.masks.column[r].assign(S.feature_columns(r).size(), 0.0);
  }
  if (fk_mask) g.masks.fk.assign(S.fk_count(), 0.0);
  if (filter_mask) g.masks.filter.assign(masks->filter->values.size(), 0.0);
  auto gptr = [&](std::size_t tensor) { return g.params.data() + P.info(tensor).offset; };

  const auto B = batch.size();
  const double invB = 1.0 / static_cast<double>(B);
  std::vector<double> dout(B);
  for (std::size_t i = 0; i < B; ++i) {
    const double y = training_label(model, db, batch[i]);
    g.loss += loss(fp.pred[i], y, S.task()) * invB;
    if (S.task() == Task::BinaryClassification) {
      const double p = fp.pred[i];
      dout[i] = (p < kProbClamp || p > 1.0 - kProbClamp) ? 0.0 : (p - y) * invB;
    } else {
      dout[i] = 2.0 * (fp.out[i] - y) * invB;
    }
  }

  // head
  const auto& H = model.head();
  Matrix dr1(B, hd);
  kernels::gemm_nt_acc(dout.data(), P.ptr(H.w2), dr1.data.data(), B, hd, 1);
  if (want_params) {
    kernels::gemm_tn_acc(fp.r1.data.data(), dout.data(), gptr(H.w2), B, hd, 1);
    for (double v : dout) gptr(H.b2)[0] += v;
  }
  Matrix& da1 = dr1;
  for (std::size_t k = 0; k < da1.data.size(); ++k)
    if (fp.a1.data[k] <= 0.0) da1.data[k] = 0.0;
  if (want_params) {
    kernels::gemm_tn_acc(fp.head_in.data.data(), da1.data.data(), gptr(H.w1), B, d, hd);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < hd; ++j) gptr(H.b1)[j] += da1(i, j);
  }
  Matrix dhead(B, d);
  kernels::gemm_nt_acc(da1.data.data(), P.ptr(H.w1), dhead.data.data(), B, d, hd);

  std::vector<Matrix> dh(R);
  for (std::size_t r = 0; r < R; ++r) dh[r] = Matrix(fp.h[cfg.layers][r].rows, d);
  for (std::size_t i = 0; i < B; ++i) {
    double* dst = dh[S.target()].row(batch[i]);
    for (std::size_t j = 0; j < d; ++j) dst[j] += dhead(i, j);
  }

  // message-passing layers
  const auto& blocks = model.blocks();
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const auto& lp = model.layers()[l];
    const auto& hin = fp.h[l];
    std::vector<Matrix> dprev(R);
    for (std::size_t r = 0; r < R; ++r) dprev[r] = Matrix(hin[r].rows, d);
    for (std::size_t r = 0; r < R; ++r) {
      const auto n = hin[r].rows;
      Matrix dz = std::move(dh[r]);
      for (std::size_t k = 0; k < dz.data.size(); ++k)
        if (fp.z[l][r].data[k] <= 0.0) dz.data[k] = 0.0;
      if (want_params) {
        kernels::gemm_tn_acc(hin[r].data.data(), dz.data.data(), gptr(lp.self[r]), n, d, d);
        for (std::size_t row = 0; row < n; ++row)
          for (std::size_t j = 0; j < d; ++j) gptr(lp.bias[r])[j] += dz(row, j);
      }
      kernels::gemm_nt_acc(dz.data.data(), P.ptr(lp.self[r]), dprev[r].data.data(), n, d, d);
      for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& b = blocks[bi];
        if (b.owner != r) continue;
        const auto& agg = fp.agg[l][bi];
        const double m = fk_mask ? masks->fk->values[b.fk] : 1.0;
        if (want_params && m != 0.0) {
          Matrix grad_w(d, d);
          kernels::gemm_tn_acc(agg.data.data(), dz.data.data(), grad_w.data.data(), n, d, d);
          double* gw = gptr(lp.block[bi]);
          for (std::size_t k = 0; k < grad_w.data.size(); ++k) gw[k] += m * grad_w.data[k];
        }
        Matrix dmasked(n, d);
        kernels::gemm_nt_acc(dz.data.data(), P.ptr(lp.block[bi]), dmasked.data.data(), n, d, d);
        if (fk_mask && want_masks) {
          double s = 0.0;
          for (std::size_t k = 0; k < dmasked.data.size(); ++k) s += dmasked.data[k] * agg.data[k];
          g.masks.fk[b.fk] += s;
        }
        if (m != 0.0) {
          if (m != 1.0)
            for (auto& v : dmasked.data) v *= m;
          aggregate_backward(graph, b, dmasked, dprev[b.other]);
        }
      }
    }
    dh = std::move(dprev);
  }

  // tuple (selection) masks
  std::vector<Matrix> dx0(R);
  for (std::size_t r = 0; r < R; ++r) {
    const auto n = fp.x0[r].rows;
    if (!filter_mask) {
      dx0[r] = std::move(dh[r]);
      continue;
    }
    dx0[r] = Matrix(n, d);
    const auto& donor = draws->tuple[r];
    const auto& m = fp.tuple_mask[r];
    std::vector<double> dm(n, 0.0);
    for (std::size_t row = 0; row < n; ++row) {
      const double* dx = dh[r].row(row);
      double* own = dx0[r].row(row);
      double* other = dx0[r].row(donor[row]);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        own[j] += m[row] * dx[j];
        other[j] += (1.0 - m[row]) * dx[j];
        s += (fp.x0[r](row, j) - fp.x0[r](donor[row], j)) * dx[j];
      }
      dm[row] = s;
    }
    if (want_masks) {
      const auto& f = *masks->filter;
      for (std::size_t p = 0; p < f.values.size(); ++p) {
        if (f.relation[p] != r) continue;
        for (auto row : f.rows[p])
          if (fp.tuple_sum[r][row] < 1.0) g.masks.filter[p] += dm[row];
      }
    }
  }

  // encoders
  for (std::size_t r = 0; r < R; ++r) {
    const auto& enc = model.encoders()[r];
    const auto& rel = db.relation(r);
    const auto n = rel.rows();
    if (want_params) {
      kernels::gemm_tn_acc(fp.concat[r].data.data(), dx0[r].data.data(), gptr(enc.weight), n, enc.width, d);
      for (std::size_t row = 0; row < n; ++row)
        for (std::size_t j = 0; j < d; ++j) gptr(enc.bias)[j] += dx0[r](row, j);
    }
    if (enc.attrs.empty()) continue;
    Matrix dconcat(n, enc.width);
    kernels::gemm_nt_acc(dx0[r].data.data(), P.ptr(enc.weight), dconcat.data.data(), n, enc.width, d);
    std::vector<double> tmp(da);
    for (std::size_t i = 0; i < enc.attrs.size(); ++i) {
      const auto& slot = enc.attrs[i];
      const double m = col_mask ? masks->column->values[r][i] : 1.0;
      double dm = 0.0;
      for (std::size_t row = 0; row < n; ++row) {
        const double* ds = dconcat.row(row) + slot.offset;
        if (col_mask) {
          const double* x = fp.attr_x[r][i].row(row);
          const double* u = fp.attr_u[r][i].row(row);
          for (std::size_t j = 0; j < da; ++j) dm += (x[j] - u[j]) * ds[j];
        }
        if (!want_params) continue;
        for (std::size_t j = 0; j < da; ++j) tmp[j] = m * ds[j];
        encode_value_backward(model, slot, rel.at(row, slot.column), tmp.data(), g.params);
        if (col_mask && m != 1.0) {
          for (std::size_t j = 0; j < da; ++j) tmp[j] = (1.0 - m) * ds[j];
          encode_value_backward(model, slot, rel.at(draws->column[r][i][row], slot.column), tmp.data(), g.params);
        }
      }
      if (col_mask && want_masks) g.masks.column[r][i] = dm;
    }
  }

  if (!want_params) g.params.clear();
  return g;
}

/// Mean batch loss without gradients.
inline double batch_loss(const GnnModel& model, const HeteroGraph& graph, const Database& db,
                         std::span<const std::size_t> batch, const MaskValues* masks = nullptr,
                         const ReplacementDraws* draws = nullptr) {
  const auto pred = forward(model, graph, db, batch, masks, draws);
  double s = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) s += loss(pred[i], training_label(model, db, batch[i]), model.schema().task());
  return s / static_cast<double>(batch.size());
}

}  // namespace viewex
