#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/entity.hpp"
#include "eetr/evaluation.hpp"
#include "eetr/model.hpp"
#include "eetr/random.hpp"
#include "eetr/search.hpp"
#include "eetr/trainer.hpp"

namespace eetr {

/// A corpus with its vocabulary and every text tokenized and annotated.
struct Dataset {
  Corpus corpus;
  Vocabulary vocab;
  std::vector<PreparedText> queries;
  std::vector<PreparedText> tables;

  const PreparedText& query(const std::string& id) const {
    for (const auto& q : queries) {
      if (q.id == id) return q;
    }
    throw Error("unknown query id '" + id + "'");
  }
};

inline std::vector<std::string> corpus_texts(const Corpus& corpus) {
  std::vector<std::string> texts;
  for (const auto& q : corpus.queries) texts.push_back(q.text);
  for (const auto& t : corpus.tables) texts.push_back(serialize_table(t));
  return texts;
}

/// Tokenizes and annotates every text. Without a given vocabulary one is built from the corpus.
inline Dataset prepare_dataset(Corpus corpus, const Annotator& annotator, std::size_t max_len,
                               std::optional<Vocabulary> vocab = std::nullopt,
                               std::size_t min_freq = 1) {
  Dataset d;
  d.vocab = vocab ? std::move(*vocab) : build_vocab(corpus_texts(corpus), min_freq);
  for (const auto& q : corpus.queries) {
    auto seq = tokenize(q.text, d.vocab, max_len);
    auto ann = annotator.annotate(TextKind::query, q.id, seq);
    d.queries.push_back(prepare_text(q.id, std::move(seq), std::move(ann)));
  }
  for (const auto& t : corpus.tables) {
    auto seq = tokenize_table(t, d.vocab, max_len);
    auto ann = annotator.annotate(TextKind::table, t.id, seq);
    d.tables.push_back(prepare_text(t.id, std::move(seq), std::move(ann)));
  }
  d.corpus = std::move(corpus);
  return d;
}

/// Query ids used for training and for evaluation.
struct Split {
  std::set<std::string> train;
  std::set<std::string> test;
};

/// Seeded split of the judged queries; the rest of the queries are ignored.
inline Split split_queries(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in (0, 1)");
  }
  std::vector<std::string> ids;
  for (const auto& q : d.corpus.queries) {
    if (!d.corpus.qrels.judged(q.id).empty()) ids.push_back(q.id);
  }
  Rng(seed).fork(0x5917).shuffle(ids);
  const auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(ids.size()) + 0.5);
  Split s;
  for (std::size_t i = 0; i < ids.size(); ++i) (i < n_test ? s.test : s.train).insert(ids[i]);
  if (s.train.size() < 2 || s.test.empty()) throw ConfigError("split leaves too few queries");
  return s;
}

inline std::vector<PreparedText> select_queries(const Dataset& d, const std::set<std::string>& ids) {
  std::vector<PreparedText> out;
  for (const auto& q : d.queries) {
    if (ids.count(q.id)) out.push_back(q);
  }
  return out;
}

/// Which inputs receive entity types at inference.
struct InferenceTypes {
  bool query = true;
  bool table = true;
};

/// Either index, built from one trained model over all tables.
class TableIndex {
 public:
  TableIndex(const Retriever& model, const std::vector<PreparedText>& tables, bool table_types)
      : mode_(model.config().mode), similarity_(model.config().similarity) {
    std::vector<std::string> ids;
    for (const auto& t : tables) ids.push_back(t.id);
    if (mode_ == RetrieverMode::dense) {
      const std::size_t h = model.config().encoder.hidden_dim;
      Matrix vectors(tables.size(), h);
      for (std::size_t i = 0; i < tables.size(); ++i) {
        const auto v = model.dense_embedding(tables[i], TextKind::table, table_types);
        std::copy(v.begin(), v.end(), vectors.row(i).begin());
      }
      dense_ = DenseIndex(std::move(ids), std::move(vectors), similarity_);
    } else {
      std::vector<SparseVector> docs;
      for (const auto& t : tables) docs.push_back(model.sparse_embedding(t, TextKind::table, table_types));
      for (std::size_t i = 0; i < docs.size(); ++i) norms_[ids[i]] = docs[i].norm();
      sparse_ = InvertedIndex(std::move(ids), docs);
    }
  }

  TableIndex(DenseIndex dense, Similarity similarity)
      : mode_(RetrieverMode::dense), similarity_(similarity), dense_(std::move(dense)) {}

  TableIndex(InvertedIndex sparse, Similarity similarity)
      : mode_(RetrieverMode::sparse), similarity_(similarity), sparse_(std::move(sparse)) {
    for (std::size_t i = 0; i < sparse_.size(); ++i) norms_[sparse_.ids()[i]] = sparse_.documents()[i].norm();
  }

  RetrieverMode mode() const { return mode_; }
  Similarity similarity() const { return similarity_; }
  const DenseIndex& dense() const { return dense_; }
  const InvertedIndex& sparse() const { return sparse_; }

  RankedList search(const Retriever& model, const PreparedText& query, bool query_types,
                    std::size_t k) const {
    if (mode_ == RetrieverMode::dense) {
      return dense_.search(model.dense_embedding(query, TextKind::query, query_types), k);
    }
    const SparseVector q = model.sparse_embedding(query, TextKind::query, query_types);
    if (similarity_ == Similarity::inner_product) return sparse_.search(q, k);
    // Cosine over the inverted index: rescore the inner products by both norms.
    RankedList hits = sparse_.search(q, sparse_.size());
    const double qn = q.norm();
    for (auto& h : hits) {
      const double dn = norms_.at(h.table_id);
      h.score = qn == 0.0 || dn == 0.0 ? 0.0 : h.score / (qn * dn);
    }
    return top_k(std::move(hits), k);
  }

 private:
  RetrieverMode mode_;
  Similarity similarity_;
  DenseIndex dense_;
  InvertedIndex sparse_;
  std::map<std::string, double> norms_;
};

/// Index file: a header line, then one `table_id<TAB>representation` line per table.
/// Dense vectors are space-separated; sparse ones use the `(i:w)` form. Weights keep 17 digits.
inline void write_index(const std::string& path, const TableIndex& index) {
  auto out = detail::open_output(path);
  char buf[40];
  if (index.mode() == RetrieverMode::dense) {
    const DenseIndex& d = index.dense();
    out << "eetr-index dense " << to_string(index.similarity()) << ' ' << d.dim() << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
      out << d.ids()[i] << '\t';
      for (std::size_t c = 0; c < d.dim(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", d.vectors()(i, c));
        out << (c ? " " : "") << buf;
      }
      out << '\n';
    }
  } else {
    const InvertedIndex& s = index.sparse();
    out << "eetr-index sparse " << to_string(index.similarity()) << " 0\n";
    for (std::size_t i = 0; i < s.size(); ++i) out << s.ids()[i] << '\t' << s.documents()[i].serialize(17) << '\n';
  }
  if (!out) throw Error("failed writing index '" + path + "'");
}

inline TableIndex read_index(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line, magic, mode, similarity;
  std::size_t dim = 0;
  if (!std::getline(in, line)) throw InputError(path + ": empty index file");
  std::istringstream head(line);
  if (!(head >> magic >> mode >> similarity >> dim) || magic != "eetr-index" ||
      (mode != "dense" && mode != "sparse") || (similarity != "dot" && similarity != "cosine")) {
    throw InputError(path + ":1: not an index file");
  }
  const Similarity sim_kind = similarity == "dot" ? Similarity::inner_product : Similarity::cosine;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::vector<SparseVector> docs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw InputError(path + ":" + std::to_string(line_no) + ": missing tab");
    ids.push_back(line.substr(0, tab));
    const std::string body = line.substr(tab + 1);
    if (mode == "sparse") {
      docs.push_back(SparseVector::parse(body));
      continue;
    }
    std::istringstream values(body);
    std::vector<double> row;
    double v;
    while (values >> v) row.push_back(v);
    if (row.size() != dim || !values.eof()) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values");
    }
    rows.push_back(std::move(row));
  }
  if (mode == "sparse") return TableIndex(InvertedIndex(std::move(ids), docs), sim_kind);
  Matrix vectors(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), vectors.row(i).begin());
  return TableIndex(DenseIndex(std::move(ids), std::move(vectors), sim_kind), sim_kind);
}

inline RunResult run_queries(const Retriever& model, const TableIndex& index,
                             const std::vector<PreparedText>& queries, bool query_types,
                             std::size_t k) {
  RunResult run;
  for (const auto& q : queries) run[q.id] = index.search(model, q, query_types, k);
  return run;
}

/// Mean fraction of nonzero vocabulary entries over table and query representations.
inline double mean_density(const Retriever& model, const Dataset& d,
                           const std::vector<PreparedText>& queries, InferenceTypes types) {
  const std::size_t dim = model.config().encoder.vocab_size;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : d.tables) {
    sum += density(model.sparse_embedding(t, TextKind::table, types.table), dim);
    ++n;
  }
  for (const auto& q : queries) {
    sum += density(model.sparse_embedding(q, TextKind::query, types.query), dim);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

struct ExperimentSpec {
  std::string label;
  RetrieverConfig retriever;  // vocab_size is filled in from the dataset
  TrainConfig train;
  InferenceTypes inference;
  std::size_t k = 100;
};

struct ExperimentOutcome {
  std::string label;
  MetricReport metrics;
  TrainResult training;
  double density = 0.0;  // sparse mode only
};

inline Retriever train_model(const Dataset& d, const Split& split, const ExperimentSpec& spec,
                             TrainResult* result = nullptr, std::ostream* log = nullptr) {
  RetrieverConfig rc = spec.retriever;
  rc.encoder.vocab_size = d.vocab.size();
  rc.mode = spec.train.mode;
  Retriever model = Retriever::create(rc);
  const auto train_queries = select_queries(d, split.train);
  const auto pairs = training_pairs(train_queries, d.tables, d.corpus.qrels);
  TrainResult r = train(model, train_queries, d.tables, pairs, spec.train, log);
  if (result) *result = std::move(r);
  return model;
}

inline ExperimentOutcome evaluate_model(const Retriever& model, const Dataset& d, const Split& split,
                                        const std::string& label, InferenceTypes types,
                                        std::size_t k) {
  const auto test_queries = select_queries(d, split.test);
  const TableIndex index(model, d.tables, types.table);
  const RunResult run = run_queries(model, index, test_queries, types.query, k);
  ExperimentOutcome out;
  out.label = label;
  out.metrics = evaluate_run(run, restrict_qrels(d.corpus.qrels, split.test));
  if (model.config().mode == RetrieverMode::sparse) out.density = mean_density(model, d, test_queries, types);
  return out;
}

/// Trains on the split's training queries and evaluates on its test queries.
inline ExperimentOutcome run_experiment(const Dataset& d, const Split& split,
                                        const ExperimentSpec& spec, std::ostream* log = nullptr) {
  TrainResult tr;
  const Retriever model = train_model(d, split, spec, &tr, log);
  ExperimentOutcome out = evaluate_model(model, d, split, spec.label, spec.inference, spec.k);
  out.training = std::move(tr);
  return out;
}

/// The vanilla counterpart of a spec: no type-embedding parameters and no interaction terms.
inline ExperimentSpec vanilla_of(ExperimentSpec spec) {
  spec.label = "vanilla";
  spec.retriever.encoder.entity_types = false;
  spec.train.flags = TrainFlags::vanilla();
  spec.inference = {false, false};
  return spec;
}

/// Training variants of the component ablation, full model first and vanilla last.
inline std::vector<ExperimentSpec> ablation_variants(const ExperimentSpec& full) {
  std::vector<ExperimentSpec> out;
  ExperimentSpec base = full;
  base.label = "full";
  out.push_back(base);
  auto without = [&](const std::string& label, auto&& edit) {
    ExperimentSpec s = base;
    s.label = label;
    edit(s);
    out.push_back(s);
  };
  if (full.train.mode == RetrieverMode::dense) {
    without("w/o score_q_e", [](ExperimentSpec& s) { s.train.flags.score_query_entity = false; });
    without("w/o score_t_e", [](ExperimentSpec& s) { s.train.flags.score_table_entity = false; });
  } else {
    without("w/o score_sps_e", [](ExperimentSpec& s) { s.train.flags.score_sparse_entity = false; });
  }
  without("w/o type emb", [](ExperimentSpec& s) {
    s.train.flags.type_embedding_query = false;
    s.train.flags.type_embedding_table = false;
    s.inference = {false, false};
  });
  out.push_back(vanilla_of(base));
  return out;
}

struct AblationRow {
  std::string label;
  std::map<std::string, double> mean;  // metric -> mean over seeds
  std::vector<MetricReport> per_seed;
};

inline void add_seed_report(AblationRow& row, const MetricReport& report) {
  row.per_seed.push_back(report);
  row.mean.clear();
  for (const auto& r : row.per_seed) {
    for (const auto& [metric, v] : r.mean) row.mean[metric] += v / static_cast<double>(row.per_seed.size());
  }
}

/// Component ablation over several training seeds, followed by inference-time patterns of
/// the full model: types on both sides, on tables only, and on neither.
inline std::vector<AblationRow> ablate(const Dataset& d, const Split& split, const ExperimentSpec& full,
                                       const std::vector<std::uint64_t>& seeds,
                                       std::ostream* log = nullptr) {
  const auto variants = ablation_variants(full);
  std::vector<AblationRow> rows(variants.size());
  const std::vector<std::pair<std::string, InferenceTypes>> patterns = {
      {"inference: with type emb", {true, true}},
      {"inference: w/o query type emb", {false, true}},
      {"inference: w/o both", {false, false}}};
  std::vector<AblationRow> inference_rows(patterns.size());
  for (std::uint64_t seed : seeds) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      ExperimentSpec s = variants[v];
      s.retriever.encoder.seed = seed;
      s.train.seed = seed;
      const Retriever model = train_model(d, split, s, nullptr, log);
      rows[v].label = s.label;
      add_seed_report(rows[v], evaluate_model(model, d, split, s.label, s.inference, s.k).metrics);
      if (v != 0) continue;
      for (std::size_t p = 0; p < patterns.size(); ++p) {
        inference_rows[p].label = patterns[p].first;
        add_seed_report(inference_rows[p],
                        evaluate_model(model, d, split, patterns[p].first, patterns[p].second, s.k).metrics);
      }
    }
  }
  rows.insert(rows.end(), inference_rows.begin(), inference_rows.end());
  return rows;
}

enum class SweptWeight { query_entity, table_entity, sparse_entity };

inline SweptWeight parse_swept_weight(const std::string& name) {
  if (name == "query_entity") return SweptWeight::query_entity;
  if (name == "table_entity") return SweptWeight::table_entity;
  if (name == "sparse_entity") return SweptWeight::sparse_entity;
  throw ConfigError("unknown interaction weight '" + name + "'");
}

struct SweepPoint {
  double lambda = 0.0;
  MetricReport metrics;
};

/// Retrains with one interaction weight varied and everything else held fixed.
inline std::vector<SweepPoint> sweep_lambda(const Dataset& d, const Split& split, const ExperimentSpec& base,
                                            SweptWeight which, const std::vector<double>& grid,
                                            std::ostream* log = nullptr) {
  std::vector<SweepPoint> out;
  for (double lambda : grid) {
    ExperimentSpec s = base;
    switch (which) {
      case SweptWeight::query_entity: s.train.weights.query_entity = lambda; break;
      case SweptWeight::table_entity: s.train.weights.table_entity = lambda; break;
      case SweptWeight::sparse_entity: s.train.weights.sparse_entity = lambda; break;
    }
    out.push_back({lambda, run_experiment(d, split, s, log).metrics});
  }
  return out;
}

inline void write_ablation(std::ostream& out, const std::vector<AblationRow>& rows) {
  for (const auto& row : rows) {
    out << "variant=\"" << row.label << '"';
    for (const auto& [name, k] : standard_metrics()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", row.mean.at(name));
      out << ' ' << name << '=' << buf;
    }
    out << " seeds=" << row.per_seed.size() << '\n';
  }
}

inline void write_sweep(std::ostream& out, const std::vector<SweepPoint>& points) {
  for (const auto& p : points) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", p.metrics["recall@1"]);
    out << "lambda=" << p.lambda << " recall@1=" << buf << '\n';
  }
}

}  // namespace eetr
