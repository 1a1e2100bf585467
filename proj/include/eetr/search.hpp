#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/error.hpp"
#include "eetr/heads.hpp"
#include "eetr/matrix.hpp"

namespace eetr {

struct ScoredTable {
  std::string table_id;
  double score = 0.0;

  bool operator==(const ScoredTable&) const = default;
};

/// Ordered by descending score, ties by ascending table id.
using RankedList = std::vector<ScoredTable>;

inline bool ranks_before(const ScoredTable& a, const ScoredTable& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.table_id < b.table_id;
}

/// Keeps the best `k` candidates in rank order.
inline RankedList top_k(RankedList candidates, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (candidates.size() > k) {
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), ranks_before);
    candidates.resize(k);
  } else {
    std::sort(candidates.begin(), candidates.end(), ranks_before);
  }
  return candidates;
}

/// Exact dense search: every row is scored.
class DenseIndex {
 public:
  DenseIndex() = default;
  DenseIndex(std::vector<std::string> ids, Matrix vectors, Similarity kind = Similarity::inner_product)
      : ids_(std::move(ids)), vectors_(std::move(vectors)), kind_(kind) {
    if (ids_.size() != vectors_.rows()) throw Error("dense index: id/row count mismatch");
    if (!all_finite(vectors_.values())) throw Error("dense index: non-finite representation");
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return vectors_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& vectors() const { return vectors_; }
  Similarity similarity() const { return kind_; }

  RankedList search(std::span<const double> query, std::size_t k) const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (ids_.empty()) return {};
    RankedList all;
    all.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      all.push_back({ids_[i], sim(query, vectors_.row(i), kind_)});
    }
    return top_k(std::move(all), k);
  }

 private:
  std::vector<std::string> ids_;
  Matrix vectors_;
  Similarity kind_ = Similarity::inner_product;
};

inline RankedList search_dense(const DenseIndex& index, std::span<const double> query,
                               std::size_t k) {
  return index.search(query, k);
}

/// Term-at-a-time inverted index over sparse vocabulary vectors (inner product).
class InvertedIndex {
 public:
  struct Posting {
    std::uint32_t doc;
    double weight;
  };

  InvertedIndex() = default;
  InvertedIndex(std::vector<std::string> ids, const std::vector<SparseVector>& docs)
      : ids_(std::move(ids)) {
    if (ids_.size() != docs.size()) throw Error("inverted index: id/doc count mismatch");
    for (std::uint32_t d = 0; d < docs.size(); ++d) {
      for (auto [term, w] : docs[d].entries()) postings_[term].push_back({d, w});
    }
    docs_ = docs;
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<SparseVector>& documents() const { return docs_; }
  const std::vector<Posting>* postings(std::uint32_t term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
  }

  /// Accumulates q_j * d_j over shared terms in ascending term order; documents sharing no
  /// term with the query are not returned.
  RankedList search(const SparseVector& query, std::size_t k) const {
    if (k < 1) throw ConfigError("k must be >= 1");
    std::vector<double> acc(ids_.size(), 0.0);
    std::vector<bool> touched(ids_.size(), false);
    std::vector<std::uint32_t> hits;
    for (auto [term, qw] : query.entries()) {
      const auto* list = postings(term);
      if (!list) continue;
      for (const auto& p : *list) {
        acc[p.doc] += qw * p.weight;
        if (!touched[p.doc]) {
          touched[p.doc] = true;
          hits.push_back(p.doc);
        }
      }
    }
    RankedList candidates;
    candidates.reserve(hits.size());
    for (auto d : hits) candidates.push_back({ids_[d], acc[d]});
    return top_k(std::move(candidates), k);
  }

 private:
  std::vector<std::string> ids_;
  std::vector<SparseVector> docs_;
  std::map<std::uint32_t, std::vector<Posting>> postings_;
};

inline RankedList search_sparse(const InvertedIndex& index, const SparseVector& query,
                                std::size_t k) {
  return index.search(query, k);
}

/// Words of a text as BM25 terms: lowercased, punctuation marks removed.
inline std::vector<std::string> bm25_terms(std::string_view text) {
  std::vector<std::string> terms;
  for (auto& w : split_words(text)) {
    if (w.text.size() == 1 && is_ascii_punct(static_cast<unsigned char>(w.text[0]))) continue;
    terms.push_back(std::move(w.text));
  }
  return terms;
}

/// Okapi BM25 with idf = ln((N - df + 0.5) / (df + 0.5) + 1). Repeated query terms count once.
class Bm25Index {
 public:
  Bm25Index(std::vector<std::string> ids, const std::vector<std::vector<std::string>>& docs,
            double k1 = 1.2, double b = 0.75)
      : ids_(std::move(ids)), k1_(k1), b_(b) {
    if (ids_.size() != docs.size()) throw Error("bm25: id/doc count mismatch");
    lengths_.reserve(docs.size());
    double total = 0.0;
    for (std::uint32_t d = 0; d < docs.size(); ++d) {
      std::map<std::string, std::uint32_t> tf;
      for (const auto& term : docs[d]) ++tf[term];
      for (const auto& [term, n] : tf) postings_[term].push_back({d, n});
      lengths_.push_back(static_cast<double>(docs[d].size()));
      total += lengths_.back();
    }
    avg_length_ = docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
  }

  std::size_t size() const { return ids_.size(); }
  double avg_length() const { return avg_length_; }

  double idf(const std::string& term) const {
    auto it = postings_.find(term);
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    const double n = static_cast<double>(ids_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
  }

  RankedList search(const std::vector<std::string>& query_terms, std::size_t k) const {
    if (k < 1) throw ConfigError("k must be >= 1");
    std::vector<std::string> unique = query_terms;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    std::vector<double> acc(ids_.size(), 0.0);
    std::vector<bool> touched(ids_.size(), false);
    std::vector<std::uint32_t> hits;
    for (const auto& term : unique) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double w = idf(term);
      for (const auto& p : it->second) {
        const double tf = static_cast<double>(p.tf);
        const double norm = k1_ * (1.0 - b_ + b_ * lengths_[p.doc] / avg_length_);
        acc[p.doc] += w * tf * (k1_ + 1.0) / (tf + norm);
        if (!touched[p.doc]) {
          touched[p.doc] = true;
          hits.push_back(p.doc);
        }
      }
    }
    RankedList candidates;
    for (auto d : hits) candidates.push_back({ids_[d], acc[d]});
    return top_k(std::move(candidates), k);
  }

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };
  std::vector<std::string> ids_;
  std::vector<double> lengths_;
  double avg_length_ = 0.0;
  double k1_, b_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

inline Bm25Index build_bm25(const std::vector<Table>& tables, double k1 = 1.2, double b = 0.75) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> docs;
  for (const auto& t : tables) {
    ids.push_back(t.id);
    docs.push_back(bm25_terms(serialize_table(t)));
  }
  return Bm25Index(std::move(ids), docs, k1, b);
}

using RunResult = std::map<std::string, RankedList>;

/// TREC run lines: `query_id Q0 table_id rank score run_tag`.
inline void write_run(std::ostream& out, const RunResult& run, const std::string& tag) {
  char buf[64];
  for (const auto& [qid, list] : run) {
    for (std::size_t r = 0; r < list.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", list[r].score);
      out << qid << " Q0 " << list[r].table_id << ' ' << r + 1 << ' ' << buf << ' ' << tag << '\n';
    }
  }
}

inline RunResult read_run(const std::string& path) {
  auto in = detail::open_input(path);
  std::map<std::string, std::vector<std::pair<std::size_t, ScoredTable>>> by_query;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    std::istringstream fields(line);
    std::string qid, q0, tid, tag;
    std::size_t rank = 0;
    double score = 0.0;
    if (!(fields >> qid >> q0 >> tid >> rank >> score >> tag)) {
      throw InputError(path + ":" + std::to_string(line_no) + ": malformed run line");
    }
    by_query[qid].push_back({rank, {tid, score}});
  }
  RunResult run;
  for (auto& [qid, rows] : by_query) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& list = run[qid];
    for (auto& [rank, st] : rows) list.push_back(std::move(st));
  }
  return run;
}

}  // namespace eetr
