#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/error.hpp"
#include "eetr/heads.hpp"
#include "eetr/matrix.hpp"
#include "eetr/model.hpp"
#include "eetr/random.hpp"

namespace eetr {

/// Component switches; each off-switch corresponds to one "w/o" ablation.
struct TrainFlags {
  bool type_embedding_query = true;
  bool type_embedding_table = true;
  bool score_query_entity = true;
  bool score_table_entity = true;
  bool score_sparse_entity = true;

  static TrainFlags vanilla() { return {false, false, false, false, false}; }
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  RetrieverMode mode = RetrieverMode::dense;
  InteractionWeights weights;
  TrainFlags flags;
  /// Steps over which the FLOPS weight ramps up quadratically; 0 applies it from the start.
  std::size_t flops_warmup_steps = 0;

  void validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2 for in-batch negatives");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(weights.flops >= 0.0)) throw ConfigError("flops weight must be >= 0");
    for (double w : {weights.query_entity, weights.table_entity, weights.sparse_entity}) {
      if (!std::isfinite(w)) throw ConfigError("interaction weights must be finite");
    }
  }

  double lambda_query_entity() const {
    return mode == RetrieverMode::dense && flags.score_query_entity ? weights.query_entity : 0.0;
  }
  double lambda_table_entity() const {
    return mode == RetrieverMode::dense && flags.score_table_entity ? weights.table_entity : 0.0;
  }
  double lambda_sparse_entity() const {
    return mode == RetrieverMode::sparse && flags.score_sparse_entity ? weights.sparse_entity : 0.0;
  }
  double lambda_flops(std::size_t step) const {
    if (mode != RetrieverMode::sparse) return 0.0;
    if (flops_warmup_steps == 0 || step >= flops_warmup_steps) return weights.flops;
    const double r = static_cast<double>(step) / static_cast<double>(flops_warmup_steps);
    return weights.flops * r * r;
  }
  bool uses_entities() const {
    return lambda_query_entity() != 0.0 || lambda_table_entity() != 0.0 ||
           lambda_sparse_entity() != 0.0;
  }
};

/// Mean over rows of -log softmax(row)[diagonal], with max subtraction.
inline double info_nce(const Matrix& scores) {
  if (scores.rows() != scores.cols() || scores.rows() < 2) {
    throw Error("info_nce needs a square score matrix with B >= 2");
  }
  if (!all_finite(scores.values())) throw Error("info_nce: non-finite scores");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto r = scores.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double s : r) z += std::exp(s - m);
    total += m + std::log(z) - r[i];
  }
  return total / static_cast<double>(scores.rows());
}

/// dL/dscores for info_nce: (softmax(row) - onehot) / B.
inline Matrix info_nce_grad(const Matrix& scores) {
  const std::size_t b = scores.rows();
  Matrix g(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    auto r = scores.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double s : r) z += std::exp(s - m);
    for (std::size_t j = 0; j < b; ++j) {
      g(i, j) = (std::exp(r[j] - m) / z - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
    }
  }
  return g;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t step = 0;
};

/// One Adam update without weight decay.
inline void optimizer_step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads,
                           AdamState& state, double lr, const AdamConfig& adam = {}) {
  if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient count mismatch");
  if (state.first.empty()) {
    for (const Matrix* p : params) {
      state.first.push_back(p->zeros_like());
      state.second.push_back(p->zeros_like());
    }
  }
  if (state.first.size() != params.size()) throw Error("optimizer: state does not match params");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->require_same_shape(*grads[i], "optimizer_step");
    auto theta = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.first[i].values();
    auto v = state.second[i].values();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g[j];
      v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g[j] * g[j];
      theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam.eps);
    }
  }
}

struct BatchLoss {
  double total = 0.0;
  double contrastive = 0.0;
  double flops = 0.0;  // unweighted regularizer value (queries + tables)
  Matrix scores;
};

/// Training scores, InfoNCE over in-batch negatives, and (sparse mode) the FLOPS penalty for
/// one batch of (query, positive table) pairs. Accumulates gradients when `grads` is given.
inline BatchLoss batch_loss(const Retriever& model, const std::vector<const PreparedText*>& queries,
                            const std::vector<const PreparedText*>& tables,
                            const TrainConfig& cfg, RetrieverParams* grads,
                            std::size_t step = SIZE_MAX) {
  const std::size_t b = queries.size();
  if (tables.size() != b) throw Error("batch_loss: query/table count mismatch");
  const bool record = grads != nullptr;
  const bool entities = cfg.uses_entities();
  const Similarity kind = model.config().similarity;
  const bool dense = cfg.mode == RetrieverMode::dense;
  const double lq = cfg.lambda_query_entity(), lt = cfg.lambda_table_entity();
  const double ls = cfg.lambda_sparse_entity(), lf = cfg.lambda_flops(step);

  std::vector<EncodedText> q(b), t(b);
  for (std::size_t i = 0; i < b; ++i) {
    q[i] = model.forward(*queries[i], TextKind::query, cfg.flags.type_embedding_query, entities,
                         record);
    t[i] = model.forward(*tables[i], TextKind::table, cfg.flags.type_embedding_table, entities,
                         record);
  }

  BatchLoss out;
  out.scores = Matrix(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double s;
      if (dense) {
        if (lq != 0.0 || lt != 0.0) {
          const auto inter =
              interaction_scores_dense(q[i].cls, t[j].cls, q[i].entity, t[j].entity, kind);
          s = inter.base;
          if (lq != 0.0) s += lq * inter.query_entity;
          if (lt != 0.0) s += lt * inter.table_entity;
        } else {
          s = sim(q[i].cls, t[j].cls, kind);
        }
      } else {
        s = sim(q[i].activation.values, t[j].activation.values, kind);
        if (ls != 0.0) s += ls * sparse_entity_score(q[i].entity, t[j].entity, kind);
      }
      out.scores(i, j) = s;
    }
  }
  out.contrastive = info_nce(out.scores);
  out.total = out.contrastive;
  std::vector<std::vector<double>> q_acts, t_acts;
  if (!dense && lf != 0.0) {
    for (std::size_t i = 0; i < b; ++i) {
      q_acts.push_back(q[i].activation.values);
      t_acts.push_back(t[i].activation.values);
    }
    out.flops = flops_reg(q_acts) + flops_reg(t_acts);
    out.total += lf * out.flops;
  }
  if (!grads) return out;

  const Matrix d_scores = info_nce_grad(out.scores);
  std::vector<TextGrad> gq(b), gt(b);
  for (std::size_t i = 0; i < b; ++i) {
    using Slot = std::pair<TextGrad*, const EncodedText*>;
    for (auto [g, enc] : {Slot{&gq[i], &q[i]}, Slot{&gt[i], &t[i]}}) {
      if (dense) {
        g->cls.assign(enc->cls.size(), 0.0);
      } else {
        g->activation.assign(enc->activation.values.size(), 0.0);
      }
      if (entities) g->entity = enc->entity.rows.zeros_like();
    }
  }
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double d = d_scores(i, j);
      if (dense) {
        sim_backward(q[i].cls, t[j].cls, kind, d, gq[i].cls, gt[j].cls);
        if (lq != 0.0) {
          for (std::size_t k = 0; k < t[j].entity.present.size(); ++k) {
            if (!t[j].entity.present[k]) continue;
            sim_backward(q[i].cls, t[j].entity.rows.row(k), kind, lq * d, gq[i].cls,
                         gt[j].entity.row(k));
          }
        }
        if (lt != 0.0) {
          for (std::size_t k = 0; k < q[i].entity.present.size(); ++k) {
            if (!q[i].entity.present[k]) continue;
            sim_backward(t[j].cls, q[i].entity.rows.row(k), kind, lt * d, gt[j].cls,
                         gq[i].entity.row(k));
          }
        }
      } else {
        sim_backward(q[i].activation.values, t[j].activation.values, kind, d, gq[i].activation,
                     gt[j].activation);
        if (ls != 0.0) {
          for (std::size_t k = 0; k < q[i].entity.present.size(); ++k) {
            if (!q[i].entity.present[k] || !t[j].entity.present[k]) continue;
            sim_backward(q[i].entity.rows.row(k), t[j].entity.rows.row(k), kind, ls * d,
                         gq[i].entity.row(k), gt[j].entity.row(k));
          }
        }
      }
    }
  }
  if (!q_acts.empty()) {
    const auto fq = flops_reg_grad(q_acts), ft = flops_reg_grad(t_acts);
    for (std::size_t i = 0; i < b; ++i) {
      axpy(lf, fq, gq[i].activation);
      axpy(lf, ft, gt[i].activation);
    }
  }
  for (std::size_t i = 0; i < b; ++i) {
    model.backward(*queries[i], TextKind::query, q[i], gq[i], *grads);
    model.backward(*tables[i], TextKind::table, t[i], gt[i], *grads);
  }
  return out;
}

struct TrainingPair {
  std::size_t query;  // index into the query list
  std::size_t table;  // index into the table list
};

/// One positive per query: the highest-graded judged table, ties by table id. Queries with
/// no positive judgment are skipped and counted.
inline std::vector<TrainingPair> training_pairs(const std::vector<PreparedText>& queries,
                                                const std::vector<PreparedText>& tables,
                                                const Qrels& qrels, std::size_t* skipped = nullptr) {
  std::map<std::string, std::size_t> table_pos;
  for (std::size_t i = 0; i < tables.size(); ++i) table_pos.emplace(tables[i].id, i);
  std::vector<TrainingPair> pairs;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::string* best = nullptr;
    int best_rel = 0;
    for (const auto& [tid, rel] : qrels.judged(queries[i].id)) {
      if (rel > best_rel && table_pos.count(tid)) {
        best = &tid;
        best_rel = rel;
      }
    }
    if (!best) {
      ++missing;
      continue;
    }
    pairs.push_back({i, table_pos.at(*best)});
  }
  if (skipped) *skipped = missing;
  return pairs;
}

struct TrainResult {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::size_t steps = 0;
};

/// Minimizes InfoNCE with in-batch negatives using Adam. Batches come from a seeded shuffle
/// each epoch; a trailing batch smaller than two pairs is dropped.
inline TrainResult train(Retriever& model, const std::vector<PreparedText>& queries,
                         const std::vector<PreparedText>& tables,
                         const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                         std::ostream* log = nullptr) {
  cfg.validate();
  if (cfg.mode != model.config().mode) throw ConfigError("train mode does not match the model");
  if (pairs.size() < 2) throw ConfigError("need at least two training pairs");
  Rng rng = Rng(cfg.seed).fork(0xba7c);
  AdamState adam;
  TrainResult result;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Matrix*> params = model.params().tensors();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const PreparedText*> qs, ts;
      for (std::size_t k = start; k < end; ++k) {
        qs.push_back(&queries[pairs[order[k]].query]);
        ts.push_back(&tables[pairs[order[k]].table]);
      }
      RetrieverParams grads = model.params().zeros_like();
      const BatchLoss loss = batch_loss(model, qs, ts, cfg, &grads, result.steps);
      optimizer_step(params, grads.tensors(), adam, cfg.learning_rate);
      ++result.steps;
      sum += loss.total;
      ++batches;
    }
    result.epoch_loss.push_back(sum / static_cast<double>(batches));
    if (log) *log << "epoch " << epoch + 1 << " loss " << result.epoch_loss.back() << '\n';
  }
  return result;
}

}  // namespace eetr
