#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace eetr;
using eetr::testing::TempDir;

namespace {

std::vector<std::string> token_strings(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (auto id : seq.token_ids) out.push_back(vocab.token(id));
  return out;
}

Vocabulary vocab_of(const std::vector<std::string>& texts) { return build_vocab(texts, 1); }

}  // namespace

TEST(SerializeTable, TitleOnly) {
  EXPECT_EQ(serialize_table({"t", "Ducks", {}, {}}), "Ducks");
}

TEST(SerializeTable, SingleCell) {
  EXPECT_EQ(serialize_table({"t", "T", {"a"}, {{"1"}}}), "T ; a ; 1");
}

TEST(SerializeTable, TwoColumns) {
  EXPECT_EQ(serialize_table({"t", "T", {"a", "b"}, {{"1", "2"}}}), "T ; a | b ; 1 | 2");
}

TEST(SerializeTable, TrimsCells) {
  EXPECT_EQ(serialize_table({"t", "  T ", {" a", "b "}, {{" 1 ", "2"}}}), "T ; a | b ; 1 | 2");
}

TEST(Tokenize, LowercasesWords) {
  const auto vocab = vocab_of({"donald duck"});
  const auto seq = tokenize("Donald Duck", vocab);
  EXPECT_EQ(token_strings(seq, vocab), (std::vector<std::string>{"[CLS]", "donald", "duck", "[SEP]"}));
  EXPECT_EQ(seq.offsets[1], (CharSpan{0, 6}));
  EXPECT_EQ(seq.offsets[2], (CharSpan{7, 11}));
}

TEST(Tokenize, EmptyText) {
  const Vocabulary vocab;
  const auto seq = tokenize("", vocab);
  EXPECT_EQ(seq.token_ids, (std::vector<TokenId>{Vocabulary::kCls, Vocabulary::kSep}));
}

TEST(Tokenize, PunctuationIsItsOwnToken) {
  const auto vocab = vocab_of({"a - 1"});
  EXPECT_EQ(token_strings(tokenize("A-1", vocab), vocab),
            (std::vector<std::string>{"[CLS]", "a", "-", "1", "[SEP]"}));
}

TEST(Tokenize, UnknownWordsMapToUnk) {
  const auto vocab = vocab_of({"known"});
  const auto seq = tokenize("known stranger", vocab);
  EXPECT_EQ(seq.token_ids[2], Vocabulary::kUnk);
}

TEST(Tokenize, SpecialTokensHaveEmptyOffsets) {
  const auto vocab = vocab_of({"x"});
  const auto seq = tokenize("x y", vocab);
  EXPECT_EQ(seq.offsets.front().begin, seq.offsets.front().end);
  EXPECT_EQ(seq.offsets.back().begin, seq.offsets.back().end);
}

TEST(Tokenize, MaxLenTruncatesTrailingWords) {
  const auto vocab = vocab_of({"a b c d"});
  EXPECT_EQ(tokenize("a b c d", vocab, 4).size(), 4u);
  EXPECT_THROW(tokenize("a", vocab, 1), ConfigError);
}

TEST(TokenizeTable, DropsRowsFromTheEndFirst) {
  const Table t{"t", "Title", {"h"}, {{"one"}, {"two"}, {"three"}}};
  const auto vocab = vocab_of({serialize_table(t)});
  // title ; h ; one ; two ; three -> 9 words
  const auto seq = tokenize_table(t, vocab, 2 + 7);
  EXPECT_EQ(token_strings(seq, vocab),
            (std::vector<std::string>{"[CLS]", "title", ";", "h", ";", "one", ";", "two", "[SEP]"}));
}

TEST(TokenizeTable, KeepsTitleAndHeaderWhenRowsDoNotFit) {
  const Table t{"t", "Long title here", {"h1", "h2"}, {{"x", "y"}}};
  const auto vocab = vocab_of({serialize_table(t)});
  const auto seq = tokenize_table(t, vocab, 2 + 4);
  EXPECT_EQ(token_strings(seq, vocab),
            (std::vector<std::string>{"[CLS]", "long", "title", "here", ";", "[SEP]"}));
}

TEST(BuildVocab, FrequencyThreshold) {
  const std::vector<std::string> texts = {"a a b"};
  const auto vocab = build_vocab(texts, 2);
  EXPECT_EQ(vocab.size(), 5u);
  EXPECT_TRUE(vocab.contains("a"));
  EXPECT_FALSE(vocab.contains("b"));
}

TEST(BuildVocab, EmptyCorpusHasOnlyReserved) {
  const std::vector<std::string> texts;
  const auto vocab = build_vocab(texts, 1);
  EXPECT_EQ(vocab.size(), 4u);
  EXPECT_EQ(vocab.token(0), "[PAD]");
  EXPECT_EQ(vocab.token(1), "[UNK]");
  EXPECT_EQ(vocab.token(2), "[CLS]");
  EXPECT_EQ(vocab.token(3), "[SEP]");
}

TEST(BuildVocab, DescendingFrequencyThenLexicographic) {
  const std::vector<std::string> texts = {"x y", "y"};
  const auto vocab = build_vocab(texts, 1);
  EXPECT_EQ(vocab.token(4), "y");
  EXPECT_EQ(vocab.token(5), "x");
  const std::vector<std::string> ties = {"c b a"};
  const auto tied = build_vocab(ties, 1);
  EXPECT_EQ(tied.token(4), "a");
  EXPECT_EQ(tied.token(6), "c");
}

TEST(BuildVocab, RejectsZeroMinFreq) {
  const std::vector<std::string> texts;
  EXPECT_THROW(build_vocab(texts, 0), ConfigError);
}

TEST(Vocabulary, FromTokensRequiresReservedPrefix) {
  EXPECT_THROW(Vocabulary::from_tokens({"a", "b"}), InputError);
  const auto v = Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "z"});
  EXPECT_EQ(v.lookup("z"), 4u);
}

class LoadCorpusTest : public ::testing::Test {
 protected:
  TempDir dir;
  std::string tables = dir.write("tables.jsonl",
                                 R"({"id":"t1","title":"Ducks","header":["name"],"rows":[["Donald"]]})"
                                 "\n"
                                 R"({"id":"t2","title":"Geese","header":[],"rows":[]})"
                                 "\n");
  std::string queries = dir.write("queries.jsonl", R"({"id":"q1","text":"who is donald"})" "\n");
};

TEST_F(LoadCorpusTest, LoadsCounts) {
  const auto corpus = load_corpus(tables, queries, dir.write("qrels.txt", "q1 t1 1\n"));
  EXPECT_EQ(corpus.tables.size(), 2u);
  EXPECT_EQ(corpus.queries.size(), 1u);
  EXPECT_EQ(corpus.qrels.size(), 1u);
  EXPECT_EQ(corpus.qrels.relevance("q1", "t1"), 1);
}

TEST_F(LoadCorpusTest, RejectsUnknownTableId) {
  try {
    load_corpus(tables, queries, dir.write("qrels.txt", "q1 t9 1\n"));
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown table id"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("t9"), std::string::npos);
  }
}

TEST_F(LoadCorpusTest, RejectsRowHeaderMismatch) {
  const auto bad = dir.write("bad.jsonl", R"({"id":"t1","title":"T","header":["a","b"],"rows":[["1"]]})" "\n");
  try {
    load_corpus(bad, queries, dir.write("qrels.txt", ""));
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("row/header mismatch"), std::string::npos);
  }
}

TEST_F(LoadCorpusTest, MalformedLineReportsLineNumber) {
  const auto bad = dir.write("bad.jsonl", R"({"id":"t1","title":"T","header":[],"rows":[]})" "\n{oops\n");
  try {
    load_tables(bad);
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST_F(LoadCorpusTest, RejectsDuplicateJudgmentAndNegativeRelevance) {
  EXPECT_THROW(load_qrels(dir.write("dup.txt", "q1 t1 1\nq1 t1 0\n")), InputError);
  EXPECT_THROW(load_qrels(dir.write("neg.txt", "q1 t1 -1\n")), InputError);
  EXPECT_THROW(load_qrels(dir.write("short.txt", "q1 t1\n")), InputError);
}

TEST_F(LoadCorpusTest, RejectsDuplicateIdsAndEmptyQuery) {
  const auto dup = dir.write("dup.jsonl", R"({"id":"t1","title":"A","header":[],"rows":[]})" "\n"
                                          R"({"id":"t1","title":"B","header":[],"rows":[]})" "\n");
  EXPECT_THROW(load_corpus(dup, queries, dir.write("q.txt", "")), InputError);
  const auto empty_q = dir.write("eq.jsonl", R"({"id":"q1","text":""})" "\n");
  EXPECT_THROW(load_corpus(tables, empty_q, dir.write("q.txt", "")), InputError);
}

TEST_F(LoadCorpusTest, MissingFileIsInputError) {
  EXPECT_THROW(load_tables(dir.file("absent.jsonl")), InputError);
}

TEST(CorpusRoundTrip, WriteThenLoadIsIdentity) {
  TempDir dir;
  SyntheticConfig sc;
  sc.queries = 9;
  sc.seed = 4;
  const Corpus original = generate_synthetic_corpus(sc).corpus;
  write_corpus(original, dir.file("t.jsonl"), dir.file("q.jsonl"), dir.file("r.txt"));
  const Corpus loaded = load_corpus(dir.file("t.jsonl"), dir.file("q.jsonl"), dir.file("r.txt"));
  EXPECT_EQ(loaded, original);
}

TEST(CorpusRoundTrip, UnicodeAndQuotesSurvive) {
  TempDir dir;
  Corpus c;
  c.tables.push_back({"t\"1", "Zürich \"quoted\"", {"a|b"}, {{"x ; y"}}});
  c.queries.push_back({"q1", "naïve query"});
  c.qrels.add("q1", "t\"1", 2);
  c.validate();
  write_corpus(c, dir.file("t.jsonl"), dir.file("q.jsonl"), dir.file("r.txt"));
  EXPECT_EQ(load_corpus(dir.file("t.jsonl"), dir.file("q.jsonl"), dir.file("r.txt")), c);
}
