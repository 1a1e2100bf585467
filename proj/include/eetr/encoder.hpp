#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/entity.hpp"
#include "eetr/error.hpp"
#include "eetr/matrix.hpp"
#include "eetr/random.hpp"

namespace eetr {

struct EncoderConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 0;  // 0 means 4 * hidden_dim
  std::size_t max_len = 256;
  std::size_t vocab_size = 0;
  std::size_t type_count = EntityTypeSet::kSize;
  /// Whether the gated entity-type embedding exists at all. A model built without it
  /// is the vanilla encoder.
  bool entity_types = true;
  bool position_embeddings = true;
  double init_stddev = 0.02;
  std::uint64_t seed = 0;

  std::size_t ffn() const { return ffn_dim == 0 ? 4 * hidden_dim : ffn_dim; }
  std::size_t head_dim() const { return hidden_dim / num_heads; }

  void validate() const {
    if (hidden_dim == 0 || num_heads == 0 || max_len == 0 || vocab_size == 0 || type_count == 0) {
      throw ConfigError("encoder dimensions must be positive");
    }
    if (hidden_dim % num_heads != 0) throw ConfigError("hidden_dim must be divisible by num_heads");
    if (max_len < 2) throw ConfigError("max_len must be at least 2");
  }
};

struct LayerParams {
  Matrix wq, bq, wk, wv, bv, wo, bo;  // keys carry no bias: it shifts every logit of a query equally
  Matrix ln1_gain, ln1_bias;
  Matrix w1, b1, w2, b2;
  Matrix ln2_gain, ln2_bias;

  template <typename Self, typename Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "attn.wq", self.wq);
    fn(prefix + "attn.bq", self.bq);
    fn(prefix + "attn.wk", self.wk);
    fn(prefix + "attn.wv", self.wv);
    fn(prefix + "attn.bv", self.bv);
    fn(prefix + "attn.wo", self.wo);
    fn(prefix + "attn.bo", self.bo);
    fn(prefix + "ln1.gain", self.ln1_gain);
    fn(prefix + "ln1.bias", self.ln1_bias);
    fn(prefix + "ffn.w1", self.w1);
    fn(prefix + "ffn.b1", self.b1);
    fn(prefix + "ffn.w2", self.w2);
    fn(prefix + "ffn.b2", self.b2);
    fn(prefix + "ln2.gain", self.ln2_gain);
    fn(prefix + "ln2.bias", self.ln2_bias);
  }
};

/// Embedding tables, gate, and transformer layers. The same struct doubles as the gradient
/// tape: `zeros_like()` yields buffers of identical shapes.
struct EncoderParams {
  Matrix token;        // |V| x h
  Matrix position;     // max_len x h
  Matrix entity_type;  // K x h, empty for the vanilla encoder
  Matrix gate_weight;  // 2h x h, rows [0,h) act on E_in, rows [h,2h) on E_en
  Matrix gate_bias;    // 1 x h
  std::vector<LayerParams> layers;

  template <typename Fn>
  void for_each(const std::string& prefix, Fn&& fn) {
    visit(*this, prefix, fn);
  }
  template <typename Fn>
  void for_each(const std::string& prefix, Fn&& fn) const {
    visit(*this, prefix, fn);
  }

  EncoderParams zeros_like() const {
    EncoderParams z = *this;
    z.for_each("", [](const std::string&, Matrix& m) { m.fill(0.0); });
    return z;
  }

  bool has_entity_types() const { return !entity_type.empty(); }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "embed.token", self.token);
    fn(prefix + "embed.position", self.position);
    if (!self.entity_type.empty()) {
      fn(prefix + "embed.entity_type", self.entity_type);
      fn(prefix + "gate.weight", self.gate_weight);
      fn(prefix + "gate.bias", self.gate_bias);
    }
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      LayerParams::visit(self.layers[l], prefix + "layer" + std::to_string(l) + ".", fn);
    }
  }
};

namespace detail {

inline void fill_normal(Matrix& m, Rng& rng, double stddev) {
  for (double& v : m.values()) v = rng.normal(0.0, stddev);
}

inline Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

}  // namespace detail

/// Embedding tables ~ N(0, init_stddev^2); linear layers ~ N(0, 1/fan_in); biases and the
/// gate weight zero. The entity-type table draws from its own stream, so a vanilla encoder
/// and an entity-aware one built from the same seed share every other parameter.
inline EncoderParams init_encoder(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t h = cfg.hidden_dim, f = cfg.ffn();
  EncoderParams p;
  p.token = Matrix(cfg.vocab_size, h);
  detail::fill_normal(p.token, rng, cfg.init_stddev);
  p.position = Matrix(cfg.max_len, h);
  detail::fill_normal(p.position, rng, cfg.init_stddev);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(h));
  const double down_std = 1.0 / std::sqrt(static_cast<double>(f));
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerParams layer;
    for (Matrix* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
      *w = Matrix(h, h);
      detail::fill_normal(*w, rng, proj_std);
    }
    layer.bq = layer.bv = layer.bo = Matrix(1, h);
    layer.ln1_gain = layer.ln2_gain = detail::ones(1, h);
    layer.ln1_bias = layer.ln2_bias = Matrix(1, h);
    layer.w1 = Matrix(h, f);
    detail::fill_normal(layer.w1, rng, proj_std);
    layer.b1 = Matrix(1, f);
    layer.w2 = Matrix(f, h);
    detail::fill_normal(layer.w2, rng, down_std);
    layer.b2 = Matrix(1, h);
    p.layers.push_back(std::move(layer));
  }
  if (cfg.entity_types) {
    Rng type_rng = Rng(cfg.seed).fork(0x7f3e);
    p.entity_type = Matrix(cfg.type_count, h);
    detail::fill_normal(p.entity_type, type_rng, cfg.init_stddev);
    p.gate_weight = Matrix(2 * h, h);
    p.gate_bias = Matrix(1, h);
  }
  return p;
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Result of the input embedding stage for one sequence.
struct EmbeddedInput {
  Matrix token_position;  // E_in
  Matrix entity;          // E_en (zero rows at untyped positions)
  Matrix gate;            // sigmoid([E_in, E_en] W_g + b); zero rows when no type embedding
  Matrix combined;        // E_all
  std::vector<TokenId> tokens;
  std::vector<TypeIndex> types;
};

/// E_all = E_in + Gate * E_en with Gate = sigmoid([E_in, E_en] W_g + b). Untyped positions
/// carry E_en = 0, so E_all equals E_in there exactly.
inline EmbeddedInput embed_input(const EncoderConfig& cfg, const EncoderParams& p,
                                 std::span<const TokenId> tokens,
                                 std::span<const TypeIndex> types) {
  const std::size_t n = tokens.size(), h = cfg.hidden_dim;
  if (n > cfg.max_len) {
    throw Error("sequence length " + std::to_string(n) + " exceeds max_len " +
                std::to_string(cfg.max_len));
  }
  if (!types.empty() && types.size() != n) throw Error("type ids must align with tokens");
  EmbeddedInput e;
  e.tokens.assign(tokens.begin(), tokens.end());
  e.types.assign(n, kNoType);
  e.token_position = Matrix(n, h);
  e.entity = Matrix(n, h);
  e.gate = Matrix(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] >= p.token.rows()) throw Error("token id out of range");
    auto row = e.token_position.row(i);
    auto tok = p.token.row(tokens[i]);
    for (std::size_t d = 0; d < h; ++d) row[d] = tok[d];
    if (cfg.position_embeddings) axpy(1.0, p.position.row(i), row);
  }
  if (!types.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      const TypeIndex t = types[i];
      if (t == kNoType) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= cfg.type_count) {
        throw Error("entity type id " + std::to_string(t) + " out of range");
      }
      if (!p.has_entity_types()) continue;
      e.types[i] = t;
      auto src = p.entity_type.row(static_cast<std::size_t>(t));
      std::copy(src.begin(), src.end(), e.entity.row(i).begin());
    }
  }
  e.combined = e.token_position;
  if (!p.has_entity_types()) return e;
  for (std::size_t i = 0; i < n; ++i) {
    auto ein = e.token_position.row(i);
    auto een = e.entity.row(i);
    auto gate = e.gate.row(i);
    auto out = e.combined.row(i);
    for (std::size_t d = 0; d < h; ++d) {
      double z = p.gate_bias(0, d);
      for (std::size_t k = 0; k < h; ++k) {
        z += ein[k] * p.gate_weight(k, d) + een[k] * p.gate_weight(h + k, d);
      }
      gate[d] = sigmoid(z);
      if (e.types[i] != kNoType) out[d] = ein[d] + gate[d] * een[d];
    }
  }
  return e;
}

/// Backward of embed_input given dL/dE_all; accumulates into `grads`.
inline void embed_input_backward(const EncoderConfig& cfg, const EncoderParams& p,
                                 const EmbeddedInput& e, const Matrix& d_combined,
                                 EncoderParams& grads) {
  const std::size_t n = e.tokens.size(), h = cfg.hidden_dim;
  std::vector<double> d_in(h), d_en(h), d_z(h);
  for (std::size_t i = 0; i < n; ++i) {
    auto d_out = d_combined.row(i);
    std::copy(d_out.begin(), d_out.end(), d_in.begin());
    if (e.types[i] != kNoType) {
      auto ein = e.token_position.row(i);
      auto een = e.entity.row(i);
      auto gate = e.gate.row(i);
      for (std::size_t d = 0; d < h; ++d) {
        d_en[d] = d_out[d] * gate[d];
        d_z[d] = d_out[d] * een[d] * gate[d] * (1.0 - gate[d]);
      }
      for (std::size_t k = 0; k < h; ++k) {
        double back_in = 0.0, back_en = 0.0;
        for (std::size_t d = 0; d < h; ++d) {
          grads.gate_weight(k, d) += ein[k] * d_z[d];
          grads.gate_weight(h + k, d) += een[k] * d_z[d];
          back_in += p.gate_weight(k, d) * d_z[d];
          back_en += p.gate_weight(h + k, d) * d_z[d];
        }
        d_in[k] += back_in;
        d_en[k] += back_en;
      }
      for (std::size_t d = 0; d < h; ++d) grads.gate_bias(0, d) += d_z[d];
      axpy(1.0, d_en, grads.entity_type.row(static_cast<std::size_t>(e.types[i])));
    }
    axpy(1.0, d_in, grads.token.row(e.tokens[i]));
    if (cfg.position_embeddings) axpy(1.0, d_in, grads.position.row(i));
  }
}

inline constexpr double kLayerNormEps = 1e-12;

namespace detail {

struct LayerNormCache {
  Matrix normalized;  // pre-affine
  std::vector<double> inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                         LayerNormCache& cache) {
  const std::size_t n = x.rows(), h = x.cols();
  Matrix out(n, h);
  cache.normalized = Matrix(n, h);
  cache.inv_std.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[i] = inv;
    for (std::size_t d = 0; d < h; ++d) {
      const double xhat = (r[d] - mean) * inv;
      cache.normalized(i, d) = xhat;
      out(i, d) = gain(0, d) * xhat + bias(0, d);
    }
  }
  return out;
}

inline Matrix layer_norm_backward(const Matrix& d_out, const Matrix& gain,
                                  const LayerNormCache& cache, Matrix& d_gain, Matrix& d_bias) {
  const std::size_t n = d_out.rows(), h = d_out.cols();
  Matrix d_in(n, h);
  std::vector<double> d_xhat(h);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t d = 0; d < h; ++d) {
      const double xhat = cache.normalized(i, d);
      d_gain(0, d) += d_out(i, d) * xhat;
      d_bias(0, d) += d_out(i, d);
      d_xhat[d] = d_out(i, d) * gain(0, d);
      mean_d += d_xhat[d];
      mean_dx += d_xhat[d] * xhat;
    }
    mean_d /= static_cast<double>(h);
    mean_dx /= static_cast<double>(h);
    for (std::size_t d = 0; d < h; ++d) {
      d_in(i, d) = cache.inv_std[i] * (d_xhat[d] - mean_d - cache.normalized(i, d) * mean_dx);
    }
  }
  return d_in;
}

inline constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluCubic = 0.044715;

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

inline double gelu_grad(double x) {
  const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = matmul(x, w);
  add_row_vector(y, b);
  return y;
}

inline Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& d_y, Matrix& d_w,
                              Matrix& d_b) {
  add_matmul_at(d_w, x, d_y);
  add_column_sums(d_b, d_y);
  return matmul_bt(d_y, w);
}

}  // namespace detail

struct LayerCache {
  Matrix input, q, k, v;
  std::vector<Matrix> probs;  // per head, L x L
  Matrix context;
  detail::LayerNormCache ln1;
  Matrix after_attention;  // LN1 output
  Matrix ffn_pre, ffn_act;
  detail::LayerNormCache ln2;
};

/// Everything backward needs from one forward pass.
struct ForwardCache {
  EmbeddedInput embedded;
  std::vector<LayerCache> layers;
  bool recorded = false;
};

namespace detail {

inline Matrix layer_forward(const EncoderConfig& cfg, const LayerParams& p, const Matrix& x,
                            LayerCache* cache) {
  const std::size_t n = x.rows(), h = cfg.hidden_dim, heads = cfg.num_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = linear(x, p.wq, p.bq), k = matmul(x, p.wk), v = linear(x, p.wv, p.bv);
  Matrix context(n, h);
  std::vector<Matrix> probs;
  probs.reserve(heads);
  for (std::size_t g = 0; g < heads; ++g) {
    const std::size_t off = g * dh;
    Matrix prob(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double max_score = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += q(i, off + d) * k(j, off + d);
        prob(i, j) = s * scale;
        max_score = std::max(max_score, prob(i, j));
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        prob(i, j) = std::exp(prob(i, j) - max_score);
        z += prob(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) {
        prob(i, j) /= z;
        const double pij = prob(i, j);
        for (std::size_t d = 0; d < dh; ++d) context(i, off + d) += pij * v(j, off + d);
      }
    }
    probs.push_back(std::move(prob));
  }
  Matrix residual = linear(context, p.wo, p.bo);
  residual += x;
  LayerNormCache ln1;
  Matrix mid = layer_norm(residual, p.ln1_gain, p.ln1_bias, ln1);
  Matrix pre = linear(mid, p.w1, p.b1);
  Matrix act = pre;
  for (double& a : act.values()) a = gelu(a);
  Matrix out_residual = linear(act, p.w2, p.b2);
  out_residual += mid;
  LayerNormCache ln2;
  Matrix out = layer_norm(out_residual, p.ln2_gain, p.ln2_bias, ln2);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
    cache->ln1 = std::move(ln1);
    cache->after_attention = std::move(mid);
    cache->ffn_pre = std::move(pre);
    cache->ffn_act = std::move(act);
    cache->ln2 = std::move(ln2);
  }
  return out;
}

inline Matrix layer_backward(const EncoderConfig& cfg, const LayerParams& p, const LayerCache& c,
                             const Matrix& d_out, LayerParams& g) {
  const std::size_t n = d_out.rows(), heads = cfg.num_heads, dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix d_res2 = layer_norm_backward(d_out, p.ln2_gain, c.ln2, g.ln2_gain, g.ln2_bias);
  Matrix d_act = linear_backward(c.ffn_act, p.w2, d_res2, g.w2, g.b2);
  for (std::size_t i = 0; i < d_act.size(); ++i) {
    d_act.values()[i] *= gelu_grad(c.ffn_pre.values()[i]);
  }
  Matrix d_mid = linear_backward(c.after_attention, p.w1, d_act, g.w1, g.b1);
  d_mid += d_res2;

  Matrix d_res1 = layer_norm_backward(d_mid, p.ln1_gain, c.ln1, g.ln1_gain, g.ln1_bias);
  Matrix d_context = linear_backward(c.context, p.wo, d_res1, g.wo, g.bo);

  Matrix d_q(n, cfg.hidden_dim), d_k(n, cfg.hidden_dim), d_v(n, cfg.hidden_dim);
  std::vector<double> d_prob(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const Matrix& prob = c.probs[h];
    for (std::size_t i = 0; i < n; ++i) {
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += d_context(i, off + d) * c.v(j, off + d);
        d_prob[j] = s;
        weighted += s * prob(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double pij = prob(i, j);
        for (std::size_t d = 0; d < dh; ++d) d_v(j, off + d) += pij * d_context(i, off + d);
        const double d_score = pij * (d_prob[j] - weighted) * scale;
        if (d_score == 0.0) continue;
        for (std::size_t d = 0; d < dh; ++d) {
          d_q(i, off + d) += d_score * c.k(j, off + d);
          d_k(j, off + d) += d_score * c.q(i, off + d);
        }
      }
    }
  }
  Matrix d_x = d_res1;
  d_x += linear_backward(c.input, p.wq, d_q, g.wq, g.bq);
  add_matmul_at(g.wk, c.input, d_k);
  d_x += matmul_bt(d_k, p.wk);
  d_x += linear_backward(c.input, p.wv, d_v, g.wv, g.bv);
  return d_x;
}

}  // namespace detail

/// Runs the transformer stack over already-embedded input. With zero layers this is the
/// identity. Sequences are never padded, so attention always spans exactly the L positions.
inline Matrix encode(const EncoderConfig& cfg, const EncoderParams& p, const Matrix& embedded,
                     std::vector<LayerCache>* caches = nullptr) {
  if (embedded.rows() > cfg.max_len) {
    throw Error("sequence length " + std::to_string(embedded.rows()) + " exceeds max_len " +
                std::to_string(cfg.max_len));
  }
  if (caches) caches->assign(p.layers.size(), {});
  Matrix x = embedded;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    x = detail::layer_forward(cfg, p.layers[l], x, caches ? &(*caches)[l] : nullptr);
  }
  return x;
}

/// Embedding plus transformer stack; records a cache for backward when one is given.
inline Matrix encoder_forward(const EncoderConfig& cfg, const EncoderParams& p,
                              std::span<const TokenId> tokens, std::span<const TypeIndex> types,
                              ForwardCache* cache = nullptr) {
  EmbeddedInput e = embed_input(cfg, p, tokens, types);
  Matrix hidden = encode(cfg, p, e.combined, cache ? &cache->layers : nullptr);
  if (cache) {
    cache->embedded = std::move(e);
    cache->recorded = true;
  }
  return hidden;
}

/// Accumulates dL/dparams into `grads` given dL/dH for a recorded forward pass.
inline void encoder_backward(const EncoderConfig& cfg, const EncoderParams& p,
                             const ForwardCache& cache, const Matrix& d_hidden,
                             EncoderParams& grads) {
  if (!cache.recorded) throw Error("backward called without a recorded forward pass");
  if (d_hidden.rows() != cache.embedded.tokens.size() || d_hidden.cols() != cfg.hidden_dim) {
    throw Error("gradient shape does not match the recorded forward pass");
  }
  Matrix d = d_hidden;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    d = detail::layer_backward(cfg, p.layers[l], cache.layers[l], d, grads.layers[l]);
  }
  embed_input_backward(cfg, p, cache.embedded, d, grads);
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<tensor>[<index>]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct NamedTensor {
  std::string name;
  Matrix* value;
  const Matrix* gradient;
};

/// Central-difference check of analytic gradients on a random coordinate sample.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckResult grad_check(const std::function<double()>& loss,
                                  const std::vector<NamedTensor>& tensors, double eps,
                                  std::size_t samples, Rng& rng) {
  std::size_t total = 0;
  for (const auto& t : tensors) {
    if (!t.value->same_shape(*t.gradient)) throw Error("gradient shape mismatch for " + t.name);
    total += t.value->size();
  }
  if (total == 0) throw Error("grad_check: no coordinates");
  GradCheckResult result;
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  if (samples >= total) {
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      for (std::size_t i = 0; i < tensors[t].value->size(); ++i) picks.emplace_back(t, i);
    }
  } else {
    for (std::size_t s = 0; s < samples; ++s) {
      std::size_t flat = rng.index(total), t = 0;
      while (flat >= tensors[t].value->size()) flat -= tensors[t++].value->size();
      picks.emplace_back(t, flat);
    }
  }
  for (auto [t, i] : picks) {
    double& theta = tensors[t].value->values()[i];
    const double saved = theta;
    theta = saved + eps;
    const double up = loss();
    theta = saved - eps;
    const double down = loss();
    theta = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw Error("grad_check: non-finite loss");
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = tensors[t].gradient->values()[i];
    if (!std::isfinite(analytic)) throw Error("grad_check: non-finite analytic gradient");
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    ++result.coordinates;
    if (rel > result.max_relative_error || result.worst.empty()) {
      result.max_relative_error = rel;
      result.worst = tensors[t].name + "[" + std::to_string(i) + "]";
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

/// Pairs every parameter tensor with its gradient buffer by name.
inline std::vector<NamedTensor> named_tensors(EncoderParams& params, const EncoderParams& grads,
                                              const std::string& prefix = "") {
  std::vector<NamedTensor> out;
  params.for_each(prefix, [&](const std::string& name, Matrix& m) {
    out.push_back({name, &m, nullptr});
  });
  std::size_t i = 0;
  grads.for_each(prefix, [&](const std::string&, const Matrix& m) { out[i++].gradient = &m; });
  if (i != out.size()) throw Error("gradient tape does not match parameters");
  return out;
}

}  // namespace eetr
