#pragma once

// Flat parameter storage with named row-major tensors, and the handful of
// dense kernels the model needs.

#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "viewex/error.hpp"
#include "viewex/rng.hpp"

namespace viewex {

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

struct TensorInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  bool trainable = true;

  std::size_t size() const { return rows * cols; }
};

class ParamStore {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols, bool trainable = true) {
    for (const auto& t : tensors_)
      if (t.name == name) fail(ErrorKind::DomainError, "duplicate tensor " + name);
    tensors_.push_back({std::move(name), rows, cols, data_.size(), trainable});
    data_.resize(data_.size() + rows * cols, 0.0);
    return tensors_.size() - 1;
  }

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& info(std::size_t id) const { return tensors_.at(id); }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i)
      if (tensors_[i].name == name) return i;
    return std::nullopt;
  }

  double* ptr(std::size_t id) { return data_.data() + tensors_[id].offset; }
  const double* ptr(std::size_t id) const { return data_.data() + tensors_[id].offset; }
  std::span<double> span(std::size_t id) { return {ptr(id), tensors_[id].size()}; }
  std::span<const double> span(std::size_t id) const { return {ptr(id), tensors_[id].size()}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  /// Mask over flat indices: 1 for trainable entries.
  std::vector<std::uint8_t> trainable_mask() const {
    std::vector<std::uint8_t> m(data_.size(), 0);
    for (const auto& t : tensors_)
      if (t.trainable) std::fill(m.begin() + t.offset, m.begin() + t.offset + t.size(), 1);
    return m;
  }

  /// Glorot-uniform fill.
  void init_glorot(std::size_t id, Rng& rng) {
    const auto& t = tensors_[id];
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    for (auto& x : span(id)) x = rng.uniform(-limit, limit);
  }

  /// 64-bit FNV-1a over the raw bytes of all tensors.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data_.data());
    for (std::size_t i = 0; i < data_.size() * sizeof(double); ++i) h = (h ^ bytes[i]) * 1099511628211ULL;
    return h;
  }

 private:
  std::vector<TensorInfo> tensors_;
  std::vector<double> data_;
};

namespace kernels {

/// out(n x m) += a(n x k) * w(k x m)
inline void gemm_acc(const double* a, const double* w, double* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* oi = out + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      const double* wp = w + p * m;
      for (std::size_t j = 0; j < m; ++j) oi[j] += s * wp[j];
    }
  }
}

/// out(n x k) += d(n x m) * w(k x m)^T
inline void gemm_nt_acc(const double* d, const double* w, double* out, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* di = d + i * m;
    double* oi = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* wp = w + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += di[j] * wp[j];
      oi[p] += s;
    }
  }
}

/// gw(k x m) += a(n x k)^T * d(n x m)
inline void gemm_tn_acc(const double* a, const double* d, double* gw, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* di = d + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ai[p];
      if (s == 0.0) continue;
      double* gp = gw + p * m;
      for (std::size_t j = 0; j < m; ++j) gp[j] += s * di[j];
    }
  }
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace kernels

}  // namespace viewex
