#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace eetr;

namespace {

std::string random_text(Rng& rng, std::size_t words) {
  static const char* kPieces[] = {"Duck", "oregon", "1990", "3", ";", "|", "Zürich", "a-b", "x.y", "12:30", "(", "NEW"};
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += rng.uniform() < 0.2 ? "  " : " ";
    out += kPieces[rng.index(std::size(kPieces))];
  }
  return out;
}

EntityAnnotation random_annotation(Rng& rng, std::size_t len, std::size_t types) {
  std::vector<EntitySpan> spans;
  std::size_t pos = 1;
  while (pos + 1 < len) {
    if (rng.uniform() < 0.4) {
      const std::size_t end = std::min(len - 2, pos + rng.index(3));
      spans.push_back({{pos, end + 1}, pos, end, static_cast<TypeIndex>(rng.index(types))});
      pos = end + 1;
    } else {
      ++pos;
    }
  }
  return group_by_type(spans);
}

}  // namespace

TEST(Properties, TokenOffsetsPointIntoText) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string text = random_text(rng, 1 + rng.index(12));
    const auto vocab = build_vocab(std::vector<std::string>{text});
    const auto seq = tokenize(text, vocab);
    ASSERT_EQ(seq.token_ids.size(), seq.offsets.size());
    EXPECT_EQ(seq.token_ids.front(), Vocabulary::kCls);
    EXPECT_EQ(seq.token_ids.back(), Vocabulary::kSep);
    for (std::size_t i = 1; i + 1 < seq.size(); ++i) {
      const auto [b, e] = seq.offsets[i];
      ASSERT_LT(b, e);
      ASSERT_LE(e, text.size());
      EXPECT_NE(seq.token_ids[i], Vocabulary::kUnk);
      if (i > 1) {
        EXPECT_LE(seq.offsets[i - 1].end, b);
      }
    }
  }
}

TEST(Properties, TypePoolingMatchesBruteForce) {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 3 + rng.index(14), dim = 1 + rng.index(6), types = 10;
    Matrix h(len, dim);
    for (double& v : h.values()) v = rng.normal();
    const auto ann = random_annotation(rng, len, 4);
    const auto pooled = pool_by_type(h, ann, types);
    for (std::size_t k = 0; k < types; ++k) {
      std::vector<double> sum(dim, 0.0);
      std::size_t n = 0;
      for (const auto& span : ann.grouped[k]) {
        for (std::size_t i = span.token_start; i <= span.token_end; ++i, ++n) {
          for (std::size_t d = 0; d < dim; ++d) sum[d] += h(i, d);
        }
      }
      ASSERT_EQ(pooled.present[k], n > 0);
      for (std::size_t d = 0; d < dim; ++d) {
        ASSERT_NEAR(pooled.rows(k, d), n ? sum[d] / static_cast<double>(n) : 0.0, 1e-12);
      }
    }
  }
}

TEST(Properties, GroupingPartitionsSpans) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ann = random_annotation(rng, 4 + rng.index(30), 10);
    std::size_t grouped = 0;
    for (std::size_t k = 0; k < ann.grouped.size(); ++k) {
      for (const auto& s : ann.grouped[k]) {
        EXPECT_EQ(s.type, static_cast<TypeIndex>(k));
        ++grouped;
      }
    }
    EXPECT_EQ(grouped, ann.spans.size());
  }
}

TEST(Properties, InfoNceBoundsAndGradientRows) {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t b = 2 + rng.index(9);
    Matrix s(b, b);
    for (double& v : s.values()) v = rng.normal(0.0, 5.0);
    EXPECT_GE(info_nce(s), 0.0);
    const Matrix g = info_nce_grad(s);
    for (std::size_t i = 0; i < b; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < b; ++j) sum += g(i, j);
      EXPECT_NEAR(sum, 0.0, 1e-14);
      EXPECT_LE(g(i, i), 0.0);
    }
  }
}

TEST(Properties, RecallIsMonotoneInK) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, int> judged;
    RankedList ranking;
    for (int d = 0; d < 30; ++d) {
      const std::string id = "t" + std::to_string(d);
      if (rng.uniform() < 0.2) judged[id] = 1 + static_cast<int>(rng.index(3));
      if (rng.uniform() < 0.6) ranking.push_back({id, rng.uniform()});
    }
    if (judged.empty()) continue;
    ranking = top_k(ranking, 100);
    double last = 0.0;
    for (std::size_t k = 1; k <= 30; ++k) {
      const double r = *recall_for_query(ranking, judged, k);
      EXPECT_GE(r, last);
      last = r;
      const double n = *ndcg_for_query(ranking, judged, k);
      EXPECT_GE(n, 0.0);
      EXPECT_LE(n, 1.0 + 1e-12);
    }
  }
}

TEST(Properties, TopKIsPrefixOfFullRanking) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    RankedList all;
    for (int d = 0; d < 50; ++d) all.push_back({"t" + std::to_string(d), std::round(rng.uniform() * 5.0)});
    const auto full = top_k(all, all.size());
    const std::size_t k = 1 + rng.index(60);
    const auto head = top_k(all, k);
    ASSERT_EQ(head.size(), std::min(k, all.size()));
    for (std::size_t i = 0; i < head.size(); ++i) EXPECT_EQ(head[i], full[i]);
  }
}

TEST(Properties, InvertedIndexMatchesExhaustiveScoringOnRandomCorpora) {
  Rng rng(7);
  for (int corpus = 0; corpus < 100; ++corpus) {
    const std::size_t n = 20 + rng.index(80), dim = 30 + rng.index(50);
    std::vector<std::string> ids;
    std::vector<SparseVector> docs;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("d" + std::to_string(i));
      std::vector<double> v(dim, 0.0);
      for (double& x : v) x = rng.uniform() < 0.1 ? std::round(rng.uniform() * 4.0) / 2.0 : 0.0;
      docs.push_back(SparseVector::from_dense(v));
    }
    const InvertedIndex index(ids, docs);
    std::vector<double> qd(dim, 0.0);
    for (double& x : qd) x = rng.uniform() < 0.15 ? rng.uniform() : 0.0;
    const SparseVector q = SparseVector::from_dense(qd);
    RankedList exhaustive;
    for (std::size_t i = 0; i < n; ++i) {
      bool overlap = false;
      for (const auto& [t, w] : q.entries()) overlap = overlap || docs[i].to_dense(dim)[t] != 0.0;
      if (overlap) exhaustive.push_back({ids[i], dot(q, docs[i])});
    }
    EXPECT_EQ(index.search(q, 10), top_k(exhaustive, 10)) << corpus;
  }
}

TEST(Properties, SparseSerializationRoundTrip) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(40, 0.0);
    for (double& x : v) x = rng.uniform() < 0.3 ? std::exp(rng.normal(0.0, 3.0)) : 0.0;
    const auto a = SparseVector::from_dense(v);
    const auto b = SparseVector::parse(a.serialize());
    ASSERT_EQ(a.nnz(), b.nnz());
    for (std::size_t i = 0; i < a.nnz(); ++i) {
      EXPECT_EQ(a.entries()[i].first, b.entries()[i].first);
      EXPECT_NEAR(a.entries()[i].second, b.entries()[i].second, 1e-8 * a.entries()[i].second);
    }
  }
}

TEST(Properties, DensityAndFlopsAreNonNegative) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix s(2 + rng.index(6), 12);
    for (double& v : s.values()) v = rng.normal();
    for (Pooling p : {Pooling::max, Pooling::mean}) {
      const auto rep = sparse_rep(s, p);
      const double d = density(rep, 12);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      for (const auto& [t, w] : rep.entries()) EXPECT_GT(w, 0.0);
    }
    const std::vector<SparseVector> batch = {sparse_rep(s), sparse_rep(s, Pooling::mean)};
    EXPECT_GE(flops_reg(batch, 12), 0.0);
  }
}

TEST(Properties, EncoderOutputsAreFiniteAndLayerNormalized) {
  Rng rng(10);
  EncoderConfig cfg;
  cfg.hidden_dim = 8;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.max_len = 32;
  cfg.vocab_size = 30;
  cfg.init_stddev = 1.0;
  const auto params = init_encoder(cfg);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t len = 2 + rng.index(30);
    std::vector<TokenId> tokens(len);
    std::vector<TypeIndex> types(len, kNoType);
    for (std::size_t i = 0; i < len; ++i) {
      tokens[i] = static_cast<TokenId>(rng.index(30));
      if (rng.uniform() < 0.3) types[i] = static_cast<TypeIndex>(rng.index(10));
    }
    const Matrix h = encoder_forward(cfg, params, tokens, types);
    ASSERT_TRUE(all_finite(h.values()));
    for (std::size_t i = 0; i < len; ++i) {
      double mean = 0.0;
      for (double v : h.row(i)) mean += v / 8.0;
      EXPECT_NEAR(mean, 0.0, 1e-9);  // unit gain, zero bias at init
    }
  }
}

TEST(Properties, RngForksAreReproducible) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a = Rng(seed).fork(11), b = Rng(seed).fork(11), c = Rng(seed).fork(12);
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
    const auto i = a.index(17);
    EXPECT_LT(i, 17u);
  }
}
