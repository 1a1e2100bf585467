#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "eetr/corpus.hpp"
#include "eetr/error.hpp"
#include "eetr/search.hpp"

namespace eetr {

namespace detail {

inline const RankedList& ranking_of(const RunResult& run, const std::string& qid) {
  static const RankedList kEmpty;
  auto it = run.find(qid);
  return it == run.end() ? kEmpty : it->second;
}

inline std::size_t relevant_count(const std::map<std::string, int>& judged) {
  return static_cast<std::size_t>(std::count_if(judged.begin(), judged.end(),
                                                [](const auto& j) { return j.second > 0; }));
}

}  // namespace detail

/// Per-query recall: |relevant in top-k| / |relevant|; nullopt when nothing is relevant.
inline std::optional<double> recall_for_query(const RankedList& ranking,
                                              const std::map<std::string, int>& judged,
                                              std::size_t k) {
  const std::size_t relevant = detail::relevant_count(judged);
  if (relevant == 0) return std::nullopt;
  std::size_t hit = 0;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
    auto it = judged.find(ranking[r].table_id);
    if (it != judged.end() && it->second > 0) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(relevant);
}

/// Per-query NDCG with graded gains and log2(rank + 1) discount; nullopt when IDCG is zero.
inline std::optional<double> ndcg_for_query(const RankedList& ranking,
                                            const std::map<std::string, int>& judged,
                                            std::size_t k) {
  std::vector<int> ideal;
  for (const auto& [tid, rel] : judged) {
    if (rel > 0) ideal.push_back(rel);
  }
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg == 0.0) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    auto it = judged.find(ranking[i].table_id);
    if (it != judged.end() && it->second > 0) {
      dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  return dcg / idcg;
}

namespace detail {

template <typename Fn>
double mean_over_judged(const RunResult& run, const Qrels& qrels, Fn&& per_query) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [qid, judged] : qrels.by_query()) {
    if (auto v = per_query(ranking_of(run, qid), judged)) {
      sum += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace detail

inline double recall_at_k(const RunResult& run, const Qrels& qrels, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  return detail::mean_over_judged(
      run, qrels, [k](const RankedList& r, const auto& j) { return recall_for_query(r, j, k); });
}

inline double ndcg_at_k(const RunResult& run, const Qrels& qrels, std::size_t k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  return detail::mean_over_judged(
      run, qrels, [k](const RankedList& r, const auto& j) { return ndcg_for_query(r, j, k); });
}

struct MetricReport {
  std::map<std::string, double> mean;
  std::map<std::string, std::map<std::string, double>> per_query;  // metric -> query -> value

  double operator[](const std::string& metric) const { return mean.at(metric); }

  /// Values of one metric in query-id order, for paired tests.
  std::vector<double> series(const std::string& metric) const {
    std::vector<double> out;
    for (const auto& [qid, v] : per_query.at(metric)) out.push_back(v);
    return out;
  }
};

inline const std::vector<std::pair<std::string, std::size_t>>& standard_metrics() {
  static const std::vector<std::pair<std::string, std::size_t>> kMetrics = {
      {"recall@1", 1}, {"recall@10", 10}, {"recall@50", 50}, {"ndcg@3", 3}, {"ndcg@5", 5}};
  return kMetrics;
}

/// Recall@{1,10,50} and NDCG@{3,5}, averaged over judged queries with a relevant table.
inline MetricReport evaluate_run(const RunResult& run, const Qrels& qrels) {
  MetricReport report;
  for (const auto& [name, k] : standard_metrics()) {
    const bool is_recall = name.rfind("recall", 0) == 0;
    auto& per = report.per_query[name];
    double sum = 0.0;
    for (const auto& [qid, judged] : qrels.by_query()) {
      const auto& ranking = detail::ranking_of(run, qid);
      auto v = is_recall ? recall_for_query(ranking, judged, k) : ndcg_for_query(ranking, judged, k);
      if (!v) continue;
      per[qid] = *v;
      sum += *v;
    }
    report.mean[name] = per.empty() ? 0.0 : sum / static_cast<double>(per.size());
  }
  return report;
}

inline void write_metrics(std::ostream& out, const MetricReport& report, const std::string& run_tag) {
  for (const auto& [name, k] : standard_metrics()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", report.mean.at(name));
    out << "run=" << run_tag << " metric=" << name << " value=" << buf
        << " queries=" << report.per_query.at(name).size() << '\n';
  }
}

/// Judgments restricted to the given query ids.
inline Qrels restrict_qrels(const Qrels& qrels, const std::set<std::string>& query_ids) {
  Qrels out;
  for (const auto& [qid, judged] : qrels.by_query()) {
    if (!query_ids.count(qid)) continue;
    for (const auto& [tid, rel] : judged) out.add(qid, tid, rel);
  }
  return out;
}

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;
  std::size_t df = 0;
  bool degenerate = false;  // zero variance of differences
};

/// Two-sided paired t-test on a - b.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("paired_t_test: samples differ in length");
  if (a.size() < 2) throw Error("paired_t_test: need at least two pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.mean_difference = mean;
  r.df = a.size() - 1;
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    r.degenerate = true;
    r.p_value = mean == 0.0 ? 1.0 : 0.0;
    r.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

}  // namespace eetr
