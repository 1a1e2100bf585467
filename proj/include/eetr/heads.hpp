#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eetr/entity.hpp"
#include "eetr/error.hpp"
#include "eetr/matrix.hpp"
#include "eetr/random.hpp"

namespace eetr {

enum class Similarity { inner_product, cosine };
enum class Pooling { max, mean };
enum class RetrieverMode { dense, sparse };

inline std::string to_string(Similarity s) {
  return s == Similarity::inner_product ? "dot" : "cosine";
}
inline std::string to_string(Pooling p) { return p == Pooling::max ? "max" : "mean"; }
inline std::string to_string(RetrieverMode m) {
  return m == RetrieverMode::dense ? "dense" : "sparse";
}

inline double sim(std::span<const double> a, std::span<const double> b,
                  Similarity kind = Similarity::inner_product) {
  if (a.size() != b.size()) {
    throw Error("similarity dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  const double ab = dot(a, b);
  if (kind == Similarity::inner_product) return ab;
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return ab / (na * nb);
}

/// Accumulates upstream * d sim / da into da and likewise for b.
inline void sim_backward(std::span<const double> a, std::span<const double> b, Similarity kind,
                         double upstream, std::span<double> da, std::span<double> db) {
  if (upstream == 0.0) return;
  if (kind == Similarity::inner_product) {
    axpy(upstream, b, da);
    axpy(upstream, a, db);
    return;
  }
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return;
  const double c = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] += upstream * (b[i] / (na * nb) - c * a[i] / (na * na));
    db[i] += upstream * (a[i] / (na * nb) - c * b[i] / (nb * nb));
  }
}

/// Whole-sequence dense representation: the [CLS] row.
inline std::vector<double> dense_rep(const Matrix& hidden) {
  if (hidden.rows() == 0) throw Error("dense_rep of an empty sequence");
  auto r = hidden.row(0);
  return {r.begin(), r.end()};
}

/// Per-type mean of member-token rows. Rows of absent types are exactly zero.
struct TypePooled {
  Matrix rows;                      // K x d
  std::vector<bool> present;        // K
  std::vector<std::size_t> tokens;  // member token count per type
};

/// For each type, averages the rows of every token covered by any span of that type,
/// weighting each token once; several same-type spans pool their tokens together.
inline TypePooled pool_by_type(const Matrix& states, const EntityAnnotation& ann,
                               std::size_t type_count, bool relu_first = false) {
  TypePooled out{Matrix(type_count, states.cols()), std::vector<bool>(type_count, false),
                 std::vector<std::size_t>(type_count, 0)};
  for (std::size_t k = 0; k < type_count && k < ann.grouped.size(); ++k) {
    auto row = out.rows.row(k);
    for (const auto& span : ann.grouped[k]) {
      if (span.token_end >= states.rows()) throw Error("entity span beyond sequence length");
      for (std::size_t t = span.token_start; t <= span.token_end; ++t) {
        auto src = states.row(t);
        for (std::size_t d = 0; d < row.size(); ++d) {
          row[d] += relu_first ? std::max(0.0, src[d]) : src[d];
        }
        ++out.tokens[k];
      }
    }
    if (out.tokens[k] > 0) {
      out.present[k] = true;
      const double inv = 1.0 / static_cast<double>(out.tokens[k]);
      for (double& v : row) v *= inv;
    }
  }
  return out;
}

inline void pool_by_type_backward(const Matrix& d_pooled, const TypePooled& pooled,
                                  const EntityAnnotation& ann, const Matrix& states,
                                  bool relu_first, Matrix& d_states) {
  for (std::size_t k = 0; k < pooled.present.size(); ++k) {
    if (!pooled.present[k]) continue;
    const double inv = 1.0 / static_cast<double>(pooled.tokens[k]);
    auto g = d_pooled.row(k);
    for (const auto& span : ann.grouped[k]) {
      for (std::size_t t = span.token_start; t <= span.token_end; ++t) {
        auto dst = d_states.row(t);
        auto src = states.row(t);
        for (std::size_t d = 0; d < g.size(); ++d) {
          if (!relu_first || src[d] > 0.0) dst[d] += inv * g[d];
        }
      }
    }
  }
}

struct InteractionWeights {
  double query_entity = 0.1;   // weight of sim(q_cls, table entity rows)
  double table_entity = 0.3;   // weight of sim(t_cls, query entity rows)
  double sparse_entity = 0.2;  // weight of the same-type sparse interaction
  double flops = 1e-3;
};

struct DenseInteraction {
  double base = 0.0;          // sim(q_cls, t_cls)
  double query_entity = 0.0;  // sum over table types of sim(q_cls, t_entity[k])
  double table_entity = 0.0;  // sum over query types of sim(t_cls, q_entity[k])
};

/// Asymmetric interactions: the query vector against the table's type-pooled rows and the
/// table vector against the query's. Absent types contribute nothing.
inline DenseInteraction interaction_scores_dense(std::span<const double> q_cls,
                                                 std::span<const double> t_cls,
                                                 const TypePooled& q_pooled,
                                                 const TypePooled& t_pooled,
                                                 Similarity kind = Similarity::inner_product) {
  DenseInteraction s;
  s.base = sim(q_cls, t_cls, kind);
  for (std::size_t k = 0; k < t_pooled.present.size(); ++k) {
    if (t_pooled.present[k]) s.query_entity += sim(q_cls, t_pooled.rows.row(k), kind);
  }
  for (std::size_t k = 0; k < q_pooled.present.size(); ++k) {
    if (q_pooled.present[k]) s.table_entity += sim(t_cls, q_pooled.rows.row(k), kind);
  }
  return s;
}

inline double train_score_dense(const DenseInteraction& s, double lambda_query_entity,
                                double lambda_table_entity) {
  return s.base + lambda_query_entity * s.query_entity + lambda_table_entity * s.table_entity;
}

/// Same-type interaction: sum over types present on both sides of sim(q[k], t[k]).
inline double sparse_entity_score(const TypePooled& q_pooled, const TypePooled& t_pooled,
                                  Similarity kind = Similarity::inner_product) {
  double s = 0.0;
  const std::size_t n = std::min(q_pooled.present.size(), t_pooled.present.size());
  for (std::size_t k = 0; k < n; ++k) {
    if (q_pooled.present[k] && t_pooled.present[k]) {
      s += sim(q_pooled.rows.row(k), t_pooled.rows.row(k), kind);
    }
  }
  return s;
}

inline double train_score_sparse(double base, double entity, double lambda_sparse_entity) {
  return base + lambda_sparse_entity * entity;
}

/// Vocabulary projection A (|V| x h) and bias (1 x |V|).
struct SparseHeadParams {
  Matrix projection;
  Matrix bias;

  bool empty() const { return projection.empty(); }

  template <typename Fn>
  void for_each(const std::string& prefix, Fn&& fn) {
    if (!projection.empty()) {
      fn(prefix + "sparse.projection", projection);
      fn(prefix + "sparse.bias", bias);
    }
  }
  template <typename Fn>
  void for_each(const std::string& prefix, Fn&& fn) const {
    if (!projection.empty()) {
      fn(prefix + "sparse.projection", projection);
      fn(prefix + "sparse.bias", bias);
    }
  }

  SparseHeadParams zeros_like() const {
    return {projection.zeros_like(), bias.zeros_like()};
  }
};

inline SparseHeadParams init_sparse_head(std::size_t vocab_size, std::size_t hidden_dim,
                                         std::uint64_t seed) {
  Rng rng = Rng(seed).fork(0x5a11);
  SparseHeadParams p{Matrix(vocab_size, hidden_dim), Matrix(1, vocab_size)};
  const double stddev = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (double& v : p.projection.values()) v = rng.normal(0.0, stddev);
  return p;
}

/// S = H A^T + b, one row of vocabulary logits per position.
inline Matrix sparse_logits(const Matrix& hidden, const SparseHeadParams& head) {
  if (hidden.cols() != head.projection.cols() || head.bias.cols() != head.projection.rows()) {
    throw Error("sparse head shape mismatch: hidden " + hidden.shape_string() + ", projection " +
                head.projection.shape_string() + ", bias " + head.bias.shape_string());
  }
  Matrix s = matmul_bt(hidden, head.projection);
  add_row_vector(s, head.bias);
  return s;
}

/// Backward of sparse_logits: accumulates head gradients, adds dL/dH into `d_hidden`.
inline void sparse_logits_backward(const Matrix& hidden, const SparseHeadParams& head,
                                   const Matrix& d_logits, SparseHeadParams& grads,
                                   Matrix& d_hidden) {
  add_matmul_at(grads.projection, d_logits, hidden);
  add_column_sums(grads.bias, d_logits);
  d_hidden += matmul(d_logits, head.projection);
}

/// Pooled ReLU activations in dense form, with what backward needs.
struct PooledActivation {
  std::vector<double> values;
  std::vector<std::size_t> argmax;  // max pooling: winning row per column
  std::size_t rows = 0;
};

inline PooledActivation pool_activations(const Matrix& logits, Pooling pooling) {
  if (logits.rows() == 0) throw Error("sparse pooling over an empty sequence");
  PooledActivation out;
  out.rows = logits.rows();
  out.values.assign(logits.cols(), 0.0);
  if (pooling == Pooling::max) {
    out.argmax.assign(logits.cols(), 0);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      auto r = logits.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j] > out.values[j]) {
          out.values[j] = r[j];
          out.argmax[j] = i;
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      auto r = logits.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) out.values[j] += std::max(0.0, r[j]);
    }
    for (double& v : out.values) v /= static_cast<double>(logits.rows());
  }
  return out;
}

inline void pool_activations_backward(const Matrix& logits, const PooledActivation& pooled,
                                      Pooling pooling, std::span<const double> d_pooled,
                                      Matrix& d_logits) {
  if (pooling == Pooling::max) {
    for (std::size_t j = 0; j < d_pooled.size(); ++j) {
      if (pooled.values[j] > 0.0) d_logits(pooled.argmax[j], j) += d_pooled[j];
    }
    return;
  }
  const double inv = 1.0 / static_cast<double>(pooled.rows);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] > 0.0) d_logits(i, j) += inv * d_pooled[j];
    }
  }
}

/// Non-negative vocabulary-space vector stored as ascending (index, weight > 0) pairs.
class SparseVector {
 public:
  using Entry = std::pair<std::uint32_t, double>;

  SparseVector() = default;

  static SparseVector from_dense(std::span<const double> dense) {
    SparseVector v;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] > 0.0) v.entries_.emplace_back(static_cast<std::uint32_t>(i), dense[i]);
    }
    return v;
  }

  /// Validates ordering and positivity.
  static SparseVector from_entries(std::vector<Entry> entries) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!(entries[i].second > 0.0) || !std::isfinite(entries[i].second)) {
        throw InputError("sparse weights must be finite and positive");
      }
      if (i > 0 && entries[i].first <= entries[i - 1].first) {
        throw InputError("sparse indices must be strictly ascending");
      }
    }
    SparseVector v;
    v.entries_ = std::move(entries);
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::vector<double> to_dense(std::size_t dim) const {
    std::vector<double> d(dim, 0.0);
    for (auto [i, w] : entries_) d.at(i) = w;
    return d;
  }

  double norm() const {
    double s = 0.0;
    for (auto [i, w] : entries_) s += w * w;
    return std::sqrt(s);
  }

  /// Merge-join dot product.
  friend double dot(const SparseVector& a, const SparseVector& b) {
    double s = 0.0;
    auto ia = a.entries_.begin(), ib = b.entries_.begin();
    while (ia != a.entries_.end() && ib != b.entries_.end()) {
      if (ia->first < ib->first) {
        ++ia;
      } else if (ib->first < ia->first) {
        ++ib;
      } else {
        s += ia->second * ib->second;
        ++ia;
        ++ib;
      }
    }
    return s;
  }

  /// `(index:weight)` pairs separated by spaces; 9 significant digits unless asked for more.
  std::string serialize(int digits = 9) const {
    std::string out;
    char buf[64];
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%s(%u:%.*g)", k ? " " : "", entries_[k].first, digits,
                    entries_[k].second);
      out += buf;
    }
    return out;
  }

  static SparseVector parse(const std::string& text) {
    std::vector<Entry> entries;
    std::size_t i = 0;
    while (i < text.size()) {
      if (text[i] == ' ' || text[i] == '\t') {
        ++i;
        continue;
      }
      const auto close = text.find(')', i);
      const auto colon = text.find(':', i);
      if (text[i] != '(' || close == std::string::npos || colon == std::string::npos ||
          colon > close) {
        throw InputError("malformed sparse representation near '" + text.substr(i, 16) + "'");
      }
      try {
        entries.emplace_back(static_cast<std::uint32_t>(std::stoul(text.substr(i + 1, colon - i - 1))),
                             std::stod(text.substr(colon + 1, close - colon - 1)));
      } catch (const std::exception&) {
        throw InputError("malformed sparse entry '" + text.substr(i, close - i + 1) + "'");
      }
      i = close + 1;
    }
    return from_entries(std::move(entries));
  }

  bool operator==(const SparseVector&) const = default;

 private:
  std::vector<Entry> entries_;
};

inline double sim(const SparseVector& a, const SparseVector& b,
                  Similarity kind = Similarity::inner_product) {
  const double ab = dot(a, b);
  if (kind == Similarity::inner_product) return ab;
  const double na = a.norm(), nb = b.norm();
  return na == 0.0 || nb == 0.0 ? 0.0 : ab / (na * nb);
}

/// ReLU, then column pooling over all positions, then drop zeros.
inline SparseVector sparse_rep(const Matrix& logits, Pooling pooling = Pooling::max) {
  return SparseVector::from_dense(pool_activations(logits, pooling).values);
}

/// Sum over vocabulary terms of the squared batch-mean activation.
inline double flops_reg(const std::vector<std::vector<double>>& batch) {
  if (batch.empty()) throw Error("flops_reg of an empty batch");
  const std::size_t dim = batch.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& rep : batch) {
    if (rep.size() != dim) throw Error("flops_reg dimension mismatch");
    axpy(1.0, rep, mean);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  double s = 0.0;
  for (double& m : mean) {
    m *= inv;
    s += m * m;
  }
  return s;
}

/// d flops_reg / d rep_i = 2 * mean / B, identical for every batch member.
inline std::vector<double> flops_reg_grad(const std::vector<std::vector<double>>& batch) {
  const std::size_t dim = batch.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& rep : batch) axpy(1.0, rep, mean);
  const double b = static_cast<double>(batch.size());
  for (double& m : mean) m = 2.0 * (m / b) / b;
  return mean;
}

inline double flops_reg(std::span<const SparseVector> batch, std::size_t dim) {
  std::vector<std::vector<double>> dense;
  dense.reserve(batch.size());
  for (const auto& v : batch) dense.push_back(v.to_dense(dim));
  return flops_reg(dense);
}

/// Fraction of non-zero vocabulary entries.
inline double density(const SparseVector& v, std::size_t dim) {
  return dim == 0 ? 0.0 : static_cast<double>(v.nnz()) / static_cast<double>(dim);
}

}  // namespace eetr
