#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"

using namespace eetr;

namespace {

RankedList brute_force(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& docs,
                       const std::vector<double>& q, std::size_t k, bool skip_zero) {
  RankedList all;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double s = 0.0;
    bool overlap = false;
    for (std::size_t j = 0; j < q.size(); ++j) {
      s += q[j] * docs[i][j];
      overlap = overlap || (q[j] != 0.0 && docs[i][j] != 0.0);
    }
    if (skip_zero && !overlap) continue;
    all.push_back({ids[i], s});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.table_id < b.table_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::vector<double> random_sparse(Rng& rng, std::size_t dim, double p) {
  std::vector<double> v(dim, 0.0);
  for (double& x : v) {
    if (rng.uniform() < p) x = std::round(rng.uniform() * 8.0) / 4.0;  // coarse grid forces ties
  }
  return v;
}

std::vector<std::string> doc_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
  return ids;
}

}  // namespace

TEST(TopK, OrdersByScoreThenId) {
  const auto r = top_k({{"b", 1.0}, {"a", 1.0}, {"c", 2.0}}, 3);
  EXPECT_EQ(r, (RankedList{{"c", 2.0}, {"a", 1.0}, {"b", 1.0}}));
  EXPECT_EQ(top_k({{"b", 1.0}, {"a", 1.0}}, 1), (RankedList{{"a", 1.0}}));
  EXPECT_THROW(top_k({}, 0), ConfigError);
}

TEST(DenseIndex, SingleDocument) {
  const DenseIndex index({"t1"}, Matrix(1, 2, 1.0));
  const std::vector<double> q = {1.0, 2.0};
  EXPECT_EQ(index.search(q, 1), (RankedList{{"t1", 3.0}}));
  EXPECT_EQ(index.search(q, 10).size(), 1u);  // k larger than the corpus returns everything
}

TEST(DenseIndex, OrthogonalTieBrokenById) {
  Matrix v(2, 2);
  v(0, 0) = 1.0;
  v(1, 1) = 1.0;
  const DenseIndex index({"t2", "t1"}, v);
  const std::vector<double> q = {0.0, 0.0};
  EXPECT_EQ(index.search(q, 2), (RankedList{{"t1", 0.0}, {"t2", 0.0}}));
}

TEST(DenseIndex, MatchesBruteForce) {
  Rng rng(31);
  const auto ids = doc_ids(100);
  std::vector<std::vector<double>> docs;
  Matrix m(100, 16);
  for (std::size_t i = 0; i < 100; ++i) {
    docs.push_back(random_sparse(rng, 16, 0.7));
    std::copy(docs.back().begin(), docs.back().end(), m.row(i).begin());
  }
  const DenseIndex index(ids, m);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_sparse(rng, 16, 0.7);
    EXPECT_EQ(index.search(q, 10), brute_force(ids, docs, q, 10, false));
  }
  const std::vector<double> wrong(3);
  EXPECT_THROW(index.search(wrong, 1), Error);
}

TEST(DenseIndex, CosineNormalizes) {
  Matrix v(2, 2);
  v(0, 0) = 10.0;
  v(1, 0) = 1.0;
  v(1, 1) = 1.0;
  const DenseIndex index({"a", "b"}, v, Similarity::cosine);
  const std::vector<double> q = {1.0, 0.0};
  const auto r = index.search(q, 2);
  EXPECT_EQ(r[0].table_id, "a");
  EXPECT_NEAR(r[0].score, 1.0, 1e-15);
  EXPECT_NEAR(r[1].score, 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(InvertedIndex, OnlyOverlappingDocumentsAreReturned) {
  const InvertedIndex index({"a", "b", "c"}, {SparseVector::from_entries({{0, 1.0}}),
                                              SparseVector::from_entries({{1, 2.0}}),
                                              SparseVector::from_entries({{0, 0.5}, {1, 1.0}})});
  EXPECT_EQ(index.search(SparseVector::from_entries({{0, 2.0}}), 10), (RankedList{{"a", 2.0}, {"c", 1.0}}));
  EXPECT_TRUE(index.search(SparseVector(), 10).empty());
  EXPECT_TRUE(index.search(SparseVector::from_entries({{7, 1.0}}), 10).empty());
  ASSERT_NE(index.postings(1), nullptr);
  EXPECT_EQ(index.postings(1)->size(), 2u);
  EXPECT_EQ(index.postings(9), nullptr);
}

TEST(InvertedIndex, MatchesBruteForceThousandDocs) {
  Rng rng(17);
  const std::size_t vocab = 500, n = 1000;
  const auto ids = doc_ids(n);
  std::vector<std::vector<double>> docs;
  std::vector<SparseVector> sparse;
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back(random_sparse(rng, vocab, 0.02));
    sparse.push_back(SparseVector::from_dense(docs.back()));
  }
  const InvertedIndex index(ids, sparse);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = random_sparse(rng, vocab, 0.03);
    EXPECT_EQ(index.search(SparseVector::from_dense(q), 10), brute_force(ids, docs, q, 10, true));
  }
}

TEST(Bm25, HandComputedScores) {
  const std::vector<std::vector<std::string>> docs = {
      {"duck", "duck", "pond"}, {"goose", "pond"}, {"duck", "river", "bank", "swan"}};
  const Bm25Index index({"d1", "d2", "d3"}, docs);
  const double k1 = 1.2, b = 0.75, avg = 3.0, n = 3.0;
  auto idf = [&](double df) { return std::log((n - df + 0.5) / (df + 0.5) + 1.0); };
  auto part = [&](double tf, double len) { return tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg)); };

  EXPECT_NEAR(index.avg_length(), avg, 1e-15);
  EXPECT_NEAR(index.idf("duck"), idf(2.0), 1e-15);
  EXPECT_NEAR(index.idf("unknown"), idf(0.0), 1e-15);

  const auto r = index.search({"duck", "pond", "duck"}, 10);
  ASSERT_EQ(r.size(), 3u);
  const double d1 = idf(2) * part(2, 3) + idf(2) * part(1, 3);
  const double d2 = idf(2) * part(1, 2);
  const double d3 = idf(2) * part(1, 4);
  EXPECT_EQ(r[0].table_id, "d1");
  EXPECT_NEAR(r[0].score, d1, 1e-9);
  EXPECT_EQ(r[1].table_id, "d2");
  EXPECT_NEAR(r[1].score, d2, 1e-9);
  EXPECT_EQ(r[2].table_id, "d3");
  EXPECT_NEAR(r[2].score, d3, 1e-9);
}

TEST(Bm25, NoMatchingTermsAndTies) {
  const Bm25Index index({"b", "a"}, {{"x", "y"}, {"x", "y"}});
  EXPECT_TRUE(index.search({"zzz"}, 5).empty());
  const auto r = index.search({"x"}, 5);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].table_id, "a");
  EXPECT_EQ(r[0].score, r[1].score);
}

TEST(Bm25, TermsDropPunctuation) {
  EXPECT_EQ(bm25_terms("Ducks ; of | Oregon"), (std::vector<std::string>{"ducks", "of", "oregon"}));
}

TEST(Run, WriteAndReadRoundTrip) {
  eetr::testing::TempDir dir;
  RunResult run;
  run["q1"] = {{"t1", 0.1 + 0.2}, {"t2", -1e-300}};
  run["q2"] = {{"t9", 12345.678901234567}};
  std::ostringstream out;
  write_run(out, run, "tag");
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "q1 Q0 t1 1 0.30000000000000004 tag");
  const auto path = dir.write("run.txt", out.str());
  EXPECT_EQ(read_run(path), run);
  EXPECT_THROW(read_run(dir.write("bad.txt", "q1 Q0 t1\n")), InputError);
  EXPECT_THROW(read_run(dir.file("absent.txt")), InputError);
}
