#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/encoder.hpp"
#include "eetr/entity.hpp"
#include "eetr/heads.hpp"

namespace eetr {

struct RetrieverConfig {
  EncoderConfig encoder;
  RetrieverMode mode = RetrieverMode::dense;
  Similarity similarity = Similarity::inner_product;
  Pooling pooling = Pooling::max;
  /// One encoder for both queries and tables; false gives each side its own weights.
  bool tie_encoders = true;
  /// Apply ReLU to logits before type pooling for the sparse entity interaction.
  bool sparse_entity_relu = false;
};

struct RetrieverParams {
  EncoderParams query_encoder;
  EncoderParams table_encoder;  // unused (empty) when encoders are tied
  SparseHeadParams sparse;      // empty in dense mode

  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  RetrieverParams zeros_like() const {
    RetrieverParams z;
    z.query_encoder = query_encoder.zeros_like();
    if (!table_encoder.token.empty()) z.table_encoder = table_encoder.zeros_like();
    if (!sparse.empty()) z.sparse = sparse.zeros_like();
    return z;
  }

  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> out;
    for_each([&](const std::string&, Matrix& m) { out.push_back(&m); });
    return out;
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    self.query_encoder.for_each(self.table_encoder.token.empty() ? "encoder." : "query_encoder.",
                                fn);
    if (!self.table_encoder.token.empty()) self.table_encoder.for_each("table_encoder.", fn);
    self.sparse.for_each("head.", fn);
  }
};

/// Pairs every retriever parameter with its gradient buffer by name.
inline std::vector<NamedTensor> named_tensors(RetrieverParams& params, const RetrieverParams& grads) {
  std::vector<NamedTensor> out;
  params.for_each([&](const std::string& name, Matrix& m) { out.push_back({name, &m, nullptr}); });
  std::size_t i = 0;
  grads.for_each([&](const std::string&, const Matrix& m) {
    if (i < out.size()) out[i].gradient = &m;
    ++i;
  });
  if (i != out.size()) throw Error("gradient tape does not match parameters");
  return out;
}

/// A query/table text ready for encoding: tokens, aligned entities, per-position types.
struct PreparedText {
  std::string id;
  TokenSequence seq;
  EntityAnnotation entities;
  std::vector<TypeIndex> position_types;
};

inline PreparedText prepare_text(std::string id, TokenSequence seq, EntityAnnotation entities) {
  PreparedText p{std::move(id), std::move(seq), std::move(entities), {}};
  p.position_types = position_types(p.entities, p.seq.size());
  if (p.entities.grouped.empty()) p.entities.grouped.resize(EntityTypeSet::kSize);
  return p;
}

/// Forward products of one text, kept for scoring and backward.
struct EncodedText {
  ForwardCache cache;
  Matrix hidden;
  std::vector<double> cls;     // dense mode
  Matrix logits;               // sparse mode
  PooledActivation activation; // sparse mode
  TypePooled entity;           // over hidden (dense) or logits (sparse)
};

/// dL/d(outputs of EncodedText).
struct TextGrad {
  std::vector<double> cls;
  std::vector<double> activation;
  Matrix entity;
};

class Retriever {
 public:
  Retriever(RetrieverConfig config, RetrieverParams params)
      : config_(std::move(config)), params_(std::move(params)) {}

  static Retriever create(RetrieverConfig config) {
    config.encoder.validate();
    RetrieverParams p;
    p.query_encoder = init_encoder(config.encoder);
    if (!config.tie_encoders) {
      EncoderConfig other = config.encoder;
      other.seed = Rng::mix(config.encoder.seed ^ 0x7ab1e);
      p.table_encoder = init_encoder(other);
    }
    if (config.mode == RetrieverMode::sparse) {
      p.sparse = init_sparse_head(config.encoder.vocab_size, config.encoder.hidden_dim,
                                  config.encoder.seed);
    }
    return Retriever(std::move(config), std::move(p));
  }

  const RetrieverConfig& config() const { return config_; }
  RetrieverParams& params() { return params_; }
  const RetrieverParams& params() const { return params_; }

  const EncoderParams& encoder_for(TextKind kind) const {
    return kind == TextKind::table && !config_.tie_encoders ? params_.table_encoder
                                                            : params_.query_encoder;
  }

  /// Runs encoder and the mode's head. `use_types` feeds entity types into the embedding;
  /// `with_entities` also builds the type-pooled rows used by the interaction scores.
  EncodedText forward(const PreparedText& text, TextKind kind, bool use_types,
                      bool with_entities, bool record) const {
    EncodedText out;
    const std::span<const TypeIndex> types =
        use_types ? std::span<const TypeIndex>(text.position_types) : std::span<const TypeIndex>();
    out.hidden = encoder_forward(config_.encoder, encoder_for(kind), text.seq.token_ids, types,
                                 record ? &out.cache : nullptr);
    const std::size_t k = config_.encoder.type_count;
    if (config_.mode == RetrieverMode::dense) {
      out.cls = dense_rep(out.hidden);
      if (with_entities) out.entity = pool_by_type(out.hidden, text.entities, k);
    } else {
      out.logits = sparse_logits(out.hidden, params_.sparse);
      out.activation = pool_activations(out.logits, config_.pooling);
      if (with_entities) {
        out.entity = pool_by_type(out.logits, text.entities, k, config_.sparse_entity_relu);
      }
    }
    return out;
  }

  /// Accumulates parameter gradients for one recorded forward pass.
  void backward(const PreparedText& text, TextKind kind, const EncodedText& enc,
                const TextGrad& grad, RetrieverParams& grads) const {
    Matrix d_hidden = enc.hidden.zeros_like();
    if (config_.mode == RetrieverMode::dense) {
      if (!grad.cls.empty()) axpy(1.0, grad.cls, d_hidden.row(0));
      if (!grad.entity.empty()) {
        pool_by_type_backward(grad.entity, enc.entity, text.entities, enc.hidden, false, d_hidden);
      }
    } else {
      Matrix d_logits = enc.logits.zeros_like();
      if (!grad.activation.empty()) {
        pool_activations_backward(enc.logits, enc.activation, config_.pooling, grad.activation,
                                  d_logits);
      }
      if (!grad.entity.empty()) {
        pool_by_type_backward(grad.entity, enc.entity, text.entities, enc.logits,
                              config_.sparse_entity_relu, d_logits);
      }
      sparse_logits_backward(enc.hidden, params_.sparse, d_logits, grads.sparse, d_hidden);
    }
    const bool table_side = kind == TextKind::table && !config_.tie_encoders;
    encoder_backward(config_.encoder, encoder_for(kind), enc.cache, d_hidden,
                     table_side ? grads.table_encoder : grads.query_encoder);
  }

  std::vector<double> dense_embedding(const PreparedText& text, TextKind kind,
                                      bool use_types) const {
    return forward(text, kind, use_types, false, false).cls;
  }

  SparseVector sparse_embedding(const PreparedText& text, TextKind kind, bool use_types) const {
    return SparseVector::from_dense(forward(text, kind, use_types, false, false).activation.values);
  }

  /// Inference relevance: the plain dense or sparse similarity. Interaction terms and their
  /// weights play no part here; only the entity types reach the encoder.
  double inference_score(const PreparedText& query, const PreparedText& table,
                         bool query_types = true, bool table_types = true) const {
    if (config_.mode == RetrieverMode::dense) {
      return sim(dense_embedding(query, TextKind::query, query_types),
                 dense_embedding(table, TextKind::table, table_types), config_.similarity);
    }
    return sim(sparse_embedding(query, TextKind::query, query_types),
               sparse_embedding(table, TextKind::table, table_types), config_.similarity);
  }

 private:
  RetrieverConfig config_;
  RetrieverParams params_;
};

}  // namespace eetr
