#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace eetr;

namespace {

const EntityTypeSet kTypes;

CharEntity entity(const std::string& text, const std::string& surface, const char* type) {
  const auto at = text.find(surface);
  return {{at, at + surface.size()}, kTypes.at(type)};
}

AnnotatedText annotated(std::string id, std::string text,
                        std::initializer_list<std::pair<const char*, const char*>> ents) {
  AnnotatedText t{std::move(id), std::move(text), {}};
  for (auto [surface, type] : ents) t.spans.push_back(entity(t.text, surface, type));
  return t;
}

}  // namespace

TEST(Coverage, HandCount) {
  const std::vector<AnnotatedText> texts = {annotated("a", "one two three", {{"two", "CARDINAL"}}),
                                            annotated("b", "a b c d e", {})};
  const auto r = coverage_stats(texts);
  EXPECT_DOUBLE_EQ(r.avg_tokens, 4.0);
  EXPECT_DOUBLE_EQ(r.avg_entities, 0.5);
  EXPECT_DOUBLE_EQ(r.entity_coverage, 0.5);
}

TEST(Coverage, AllAnnotatedAndEmpty) {
  const std::vector<AnnotatedText> texts = {annotated("a", "in 1990", {{"1990", "DATE"}}),
                                            annotated("b", "3 cats", {{"3", "CARDINAL"}})};
  EXPECT_DOUBLE_EQ(coverage_stats(texts).entity_coverage, 1.0);
  try {
    coverage_stats({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty collection");
  }
}

TEST(EntityMatchRate, CaseInsensitiveWholeWords) {
  const auto q = annotated("q", "born in oregon", {{"oregon", "GPE"}});
  EXPECT_EQ(entity_match_rate(q, "Lives in Oregon."), 1.0);
  EXPECT_EQ(entity_match_rate(q, "Oregonian"), 0.0);
  const auto two = annotated("q", "oregon 1990", {{"oregon", "GPE"}, {"1990", "DATE"}});
  EXPECT_EQ(entity_match_rate(two, "oregon 1991"), 0.5);
  EXPECT_FALSE(entity_match_rate(annotated("q", "nothing", {}), "nothing").has_value());
}

TEST(TokenMatchRate, FractionOfEntityWords) {
  const auto q = annotated("q", "visit new york city", {{"new york city", "GPE"}});
  EXPECT_DOUBLE_EQ(*token_match_rate(q, word_set("New York state")), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*token_match_rate(q, word_set("city of new york")), 1.0);
  EXPECT_DOUBLE_EQ(*token_match_rate(q, word_set("boston")), 0.0);
  EXPECT_FALSE(token_match_rate(annotated("q", "x", {}), word_set("x")).has_value());
}

TEST(TokenMatchRate, NeverBelowEntityIndicator) {
  const auto q = annotated("q", "new york city in 1990", {{"new york city", "GPE"}, {"1990", "DATE"}});
  for (const char* cand : {"new york city", "york 1990", "new city york", "1990 new york city", "z"}) {
    EXPECT_GE(*token_match_rate(q, word_set(cand)), *entity_match_rate(q, cand)) << cand;
  }
}

TEST(TypeDistribution, Fractions) {
  const std::vector<AnnotatedText> texts = {
      annotated("a", "1990 and 1991 in oregon", {{"1990", "DATE"}, {"1991", "DATE"}, {"oregon", "GPE"}})};
  const auto d = type_distribution(texts);
  EXPECT_DOUBLE_EQ(d[kTypes.at("DATE")], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(d[kTypes.at("GPE")], 1.0 / 3.0);
  double sum = 0.0;
  for (double v : d) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(TypeDistribution, SingleAndUniform) {
  EXPECT_DOUBLE_EQ(type_distribution({annotated("a", "x 7", {{"7", "CARDINAL"}})})[kTypes.at("CARDINAL")], 1.0);
  AnnotatedText all{"u", std::string(20, 'x'), {}};
  for (TypeIndex k = 0; k < 10; ++k) {
    all.spans.push_back({{static_cast<std::size_t>(2 * k), static_cast<std::size_t>(2 * k + 1)}, k});
  }
  for (double v : type_distribution({all})) EXPECT_DOUBLE_EQ(v, 0.1);
  EXPECT_THROW(type_distribution({annotated("a", "x", {})}), Error);
}

namespace {

/// Queries mention a person and a year; the relevant table holds both words, the
/// irrelevant tables neither. Table ids sort so BM25 sees all of them as candidates.
struct StudyFixture {
  std::vector<AnnotatedText> queries;
  std::map<std::string, std::string> table_texts;
  Qrels qrels;

  explicit StudyFixture(std::size_t n, bool partial_tokens = false) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string person = "person" + std::to_string(i) + " smith";
      const std::string year = std::to_string(1900 + i);
      const std::string qid = "q" + std::to_string(i);
      queries.push_back(annotated(qid, "did " + person + " win in " + year,
                                  {{person.c_str(), "PERSON"}, {year.c_str(), "DATE"}}));
      table_texts["rel" + std::to_string(i)] = "winners ; " + person + " | " + year;
      qrels.add(qid, "rel" + std::to_string(i), 1);
      for (int j = 0; j < 4; ++j) {
        const std::string filler = partial_tokens ? "smith other" + std::to_string(j) : "nobody" + std::to_string(j);
        table_texts["irr" + std::to_string(i) + "_" + std::to_string(j)] = "winners ; " + filler + " | 1800";
      }
    }
  }

  CandidatePool pool() const {
    return [this](const AnnotatedText& q, std::size_t depth) {
      RankedList out;
      for (const auto& [tid, text] : table_texts) {
        if (tid.rfind("irr" + q.id.substr(1) + "_", 0) == 0) out.push_back({tid, 1.0});
      }
      if (out.size() > depth) out.resize(depth);
      return out;
    };
  }
};

}  // namespace

TEST(MatchRateStudy, ConstructedDeltaIsOne) {
  const StudyFixture f(12);
  MatchStudyConfig cfg;
  cfg.seed = 3;
  const auto r = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), cfg);
  EXPECT_EQ(r.queries, 12u);
  EXPECT_DOUBLE_EQ(r.entity_relevant, 1.0);
  EXPECT_DOUBLE_EQ(r.entity_irrelevant, 0.0);
  EXPECT_DOUBLE_EQ(r.entity_delta(), 1.0);
  EXPECT_DOUBLE_EQ(r.token_delta(), 1.0);
}

TEST(MatchRateStudy, IdenticalPoolsGiveZeroDelta) {
  StudyFixture f(5);
  // Irrelevant candidates are copies of the relevant table text.
  for (auto& [tid, text] : f.table_texts) {
    if (tid.rfind("irr", 0) == 0) text = f.table_texts.at("rel" + tid.substr(3, tid.find('_') - 3));
  }
  const auto r = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), {});
  EXPECT_DOUBLE_EQ(r.entity_delta(), 0.0);
  EXPECT_DOUBLE_EQ(r.token_delta(), 0.0);
}

TEST(MatchRateStudy, PartialTokensShrinkTokenDelta) {
  const StudyFixture f(8, true);
  MatchStudyConfig cfg;
  cfg.seed = 11;
  const auto r = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), cfg);
  EXPECT_DOUBLE_EQ(r.entity_delta(), 1.0);
  EXPECT_LE(r.token_delta(), r.entity_delta());
  // Each irrelevant table carries "smith", one of the two person words; the year is absent.
  EXPECT_DOUBLE_EQ(r.token_irrelevant, (0.5 + 0.0) / 2.0);
}

TEST(MatchRateStudy, SkipsQueriesWithTooFewIrrelevant) {
  const StudyFixture f(4);
  MatchStudyConfig cfg;
  cfg.irrelevant_per_query = 5;
  const auto r = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), cfg);
  EXPECT_EQ(r.queries, 0u);
  EXPECT_EQ(r.skipped, 4u);
}

TEST(MatchRateStudy, SeededAndReproducible) {
  const StudyFixture f(30, true);
  MatchStudyConfig cfg;
  cfg.sample_size = 10;
  cfg.seed = 99;
  const auto a = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), cfg);
  const auto b = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), cfg);
  EXPECT_EQ(a.queries, 10u);
  EXPECT_EQ(a.token_relevant, b.token_relevant);
  EXPECT_EQ(a.token_irrelevant, b.token_irrelevant);
}

TEST(MatchRateStudy, AllPairsAggregation) {
  const StudyFixture f(6);
  MatchStudyConfig cfg;
  cfg.aggregation = MatchAggregation::all_pairs;
  const auto r = match_rate_study(f.queries, f.table_texts, f.qrels, f.pool(), cfg);
  EXPECT_DOUBLE_EQ(r.entity_delta(), 1.0);
}

TEST(MatchRateStudy, Bm25Pool) {
  const StudyFixture f(6);
  std::vector<Table> tables;
  for (const auto& [tid, text] : f.table_texts) tables.push_back({tid, text, {}, {}});
  const auto index = build_bm25(tables);
  const auto r = match_rate_study(f.queries, f.table_texts, f.qrels, bm25_pool(index), {});
  EXPECT_EQ(r.queries, 6u);
  EXPECT_DOUBLE_EQ(r.entity_relevant, 1.0);
}
