#pragma once

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/entity.hpp"
#include "eetr/error.hpp"
#include "eetr/random.hpp"
#include "eetr/search.hpp"

namespace eetr {

/// A raw text with its character-level entity spans.
struct AnnotatedText {
  std::string id;
  std::string text;
  std::vector<CharEntity> spans;
};

struct CoverageReport {
  double avg_tokens = 0.0;
  double avg_entities = 0.0;
  double entity_coverage = 0.0;
  std::size_t count = 0;
};

/// Mean word count, mean entity count, and fraction of texts with at least one entity.
inline CoverageReport coverage_stats(const std::vector<AnnotatedText>& texts) {
  if (texts.empty()) throw Error("empty collection");
  CoverageReport r;
  r.count = texts.size();
  std::size_t tokens = 0, entities = 0, covered = 0;
  for (const auto& t : texts) {
    tokens += split_words(t.text).size();
    entities += t.spans.size();
    covered += t.spans.empty() ? 0 : 1;
  }
  const double n = static_cast<double>(texts.size());
  r.avg_tokens = static_cast<double>(tokens) / n;
  r.avg_entities = static_cast<double>(entities) / n;
  r.entity_coverage = static_cast<double>(covered) / n;
  return r;
}

namespace detail {

/// Words joined by single spaces with sentinel spaces at both ends, so substring search
/// only matches whole words.
inline std::string normalized_words(std::string_view text) {
  std::string out = " ";
  for (const auto& w : split_words(text)) {
    out += w.text;
    out += ' ';
  }
  return out;
}

inline std::vector<std::string> entity_words(const AnnotatedText& query, const CharEntity& e) {
  std::vector<std::string> words;
  for (auto& w : split_words(std::string_view(query.text).substr(e.span.begin, e.span.end - e.span.begin))) {
    words.push_back(std::move(w.text));
  }
  return words;
}

}  // namespace detail

/// Mean over query entities of [entity surface appears in the candidate], matched
/// case-insensitively on whitespace-normalized words. Absent when the query has no entity.
inline std::optional<double> entity_match_rate(const AnnotatedText& query,
                                               std::string_view candidate_text) {
  if (query.spans.empty()) return std::nullopt;
  const std::string haystack = detail::normalized_words(candidate_text);
  double hits = 0.0;
  for (const auto& e : query.spans) {
    std::string needle = " ";
    for (const auto& w : detail::entity_words(query, e)) needle += w + ' ';
    if (needle.size() > 1 && haystack.find(needle) != std::string::npos) hits += 1.0;
  }
  return hits / static_cast<double>(query.spans.size());
}

/// Mean over query entities of the fraction of the entity's words present anywhere in the
/// candidate. Absent when the query has no entity.
inline std::optional<double> token_match_rate(const AnnotatedText& query,
                                              const std::set<std::string>& candidate_words) {
  if (query.spans.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& e : query.spans) {
    const auto words = detail::entity_words(query, e);
    if (words.empty()) continue;
    std::size_t present = 0;
    for (const auto& w : words) present += candidate_words.count(w);
    total += static_cast<double>(present) / static_cast<double>(words.size());
  }
  return total / static_cast<double>(query.spans.size());
}

inline std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> out;
  for (auto& w : split_words(text)) out.insert(std::move(w.text));
  return out;
}

/// Share of each type among all spans; sums to one.
inline std::vector<double> type_distribution(const std::vector<AnnotatedText>& texts,
                                             std::size_t type_count = EntityTypeSet::kSize) {
  std::vector<double> counts(type_count, 0.0);
  double total = 0.0;
  for (const auto& t : texts) {
    for (const auto& s : t.spans) {
      counts.at(static_cast<std::size_t>(s.type)) += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw Error("type_distribution: no entities");
  for (double& c : counts) c /= total;
  return counts;
}

enum class MatchAggregation { per_query, all_pairs };

struct MatchRateReport {
  double entity_relevant = 0.0;
  double entity_irrelevant = 0.0;
  double token_relevant = 0.0;
  double token_irrelevant = 0.0;
  std::size_t queries = 0;
  std::size_t skipped = 0;

  double entity_delta() const { return entity_relevant - entity_irrelevant; }
  double token_delta() const { return token_relevant - token_irrelevant; }
};

struct MatchStudyConfig {
  std::size_t sample_size = 300;
  std::size_t irrelevant_per_query = 3;
  std::size_t pool_depth = 20;
  std::uint64_t seed = 0;
  MatchAggregation aggregation = MatchAggregation::per_query;
};

using CandidatePool = std::function<RankedList(const AnnotatedText& query, std::size_t depth)>;

/// Compares match rates of relevant tables against irrelevant ones drawn from each query's
/// candidate pool (BM25 top results in the standard setup). Only queries with at least one
/// entity and one relevant table are sampled; queries whose pool holds too few irrelevant
/// candidates are skipped and counted.
inline MatchRateReport match_rate_study(const std::vector<AnnotatedText>& queries,
                                        const std::map<std::string, std::string>& table_texts,
                                        const Qrels& qrels, const CandidatePool& pool,
                                        const MatchStudyConfig& cfg) {
  Rng rng(cfg.seed);
  std::vector<const AnnotatedText*> eligible;
  for (const auto& q : queries) {
    if (q.spans.empty()) continue;
    bool has_relevant = false;
    for (const auto& [tid, rel] : qrels.judged(q.id)) has_relevant |= rel > 0 && table_texts.count(tid);
    if (has_relevant) eligible.push_back(&q);
  }
  rng.shuffle(eligible);
  if (eligible.size() > cfg.sample_size) eligible.resize(cfg.sample_size);

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
      sum += v;
      ++n;
    }
    double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
  };
  Acc ent_rel, ent_irr, tok_rel, tok_irr;
  MatchRateReport report;

  auto rates = [&](const AnnotatedText& q, const std::string& tid) {
    const std::string& text = table_texts.at(tid);
    return std::pair{*entity_match_rate(q, text), *token_match_rate(q, word_set(text))};
  };

  for (const AnnotatedText* q : eligible) {
    std::vector<std::string> irrelevant;
    for (const auto& c : pool(*q, cfg.pool_depth)) {
      if (qrels.relevance(q->id, c.table_id) == 0 && table_texts.count(c.table_id)) {
        irrelevant.push_back(c.table_id);
      }
    }
    if (irrelevant.size() < cfg.irrelevant_per_query) {
      ++report.skipped;
      continue;
    }
    rng.shuffle(irrelevant);
    irrelevant.resize(cfg.irrelevant_per_query);
    std::sort(irrelevant.begin(), irrelevant.end());

    Acc q_ent_rel, q_ent_irr, q_tok_rel, q_tok_irr;
    for (const auto& [tid, rel] : qrels.judged(q->id)) {
      if (rel == 0 || !table_texts.count(tid)) continue;
      auto [e, t] = rates(*q, tid);
      q_ent_rel.add(e);
      q_tok_rel.add(t);
    }
    for (const auto& tid : irrelevant) {
      auto [e, t] = rates(*q, tid);
      q_ent_irr.add(e);
      q_tok_irr.add(t);
    }
    if (cfg.aggregation == MatchAggregation::per_query) {
      ent_rel.add(q_ent_rel.mean());
      ent_irr.add(q_ent_irr.mean());
      tok_rel.add(q_tok_rel.mean());
      tok_irr.add(q_tok_irr.mean());
    } else {
      ent_rel.sum += q_ent_rel.sum;
      ent_rel.n += q_ent_rel.n;
      ent_irr.sum += q_ent_irr.sum;
      ent_irr.n += q_ent_irr.n;
      tok_rel.sum += q_tok_rel.sum;
      tok_rel.n += q_tok_rel.n;
      tok_irr.sum += q_tok_irr.sum;
      tok_irr.n += q_tok_irr.n;
    }
    ++report.queries;
  }
  report.entity_relevant = ent_rel.mean();
  report.entity_irrelevant = ent_irr.mean();
  report.token_relevant = tok_rel.mean();
  report.token_irrelevant = tok_irr.mean();
  return report;
}

/// BM25 candidate pool over the given tables.
inline CandidatePool bm25_pool(const Bm25Index& index) {
  return [&index](const AnnotatedText& q, std::size_t depth) {
    return index.search(bm25_terms(q.text), depth);
  };
}

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline void write_coverage(std::ostream& out, const std::string& label, const CoverageReport& r) {
  out << "report=coverage kind=" << label << " count=" << r.count
      << " avg_tokens=" << detail::fixed(r.avg_tokens) << " avg_entities=" << detail::fixed(r.avg_entities)
      << " entity_coverage=" << detail::fixed(r.entity_coverage) << '\n';
}

inline void write_match_rates(std::ostream& out, const MatchRateReport& r) {
  out << "report=match_rate level=entity relevant=" << detail::fixed(r.entity_relevant)
      << " irrelevant=" << detail::fixed(r.entity_irrelevant) << " delta=" << detail::fixed(r.entity_delta())
      << " queries=" << r.queries << " skipped=" << r.skipped << '\n';
  out << "report=match_rate level=token relevant=" << detail::fixed(r.token_relevant)
      << " irrelevant=" << detail::fixed(r.token_irrelevant) << " delta=" << detail::fixed(r.token_delta())
      << " queries=" << r.queries << " skipped=" << r.skipped << '\n';
}

inline void write_type_distribution(std::ostream& out, const std::string& label,
                                    const std::vector<double>& dist, const EntityTypeSet& types) {
  for (std::size_t k = 0; k < dist.size(); ++k) {
    out << "report=type_distribution kind=" << label << " type=" << types.name(static_cast<TypeIndex>(k))
        << " fraction=" << detail::fixed(dist[k]) << '\n';
  }
}

}  // namespace eetr
