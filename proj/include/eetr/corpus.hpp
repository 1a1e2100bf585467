#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eetr/error.hpp"
#include "json.hpp"

namespace eetr {

struct Table {
  std::string id;
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const Table&) const = default;
};

struct Query {
  std::string id;
  std::string text;

  bool operator==(const Query&) const = default;
};

/// Graded relevance judgments keyed by (query id, table id).
class Qrels {
 public:
  void add(const std::string& query_id, const std::string& table_id, int relevance) {
    if (relevance < 0) throw InputError("negative relevance for " + query_id + "/" + table_id);
    auto [it, inserted] = by_query_[query_id].emplace(table_id, relevance);
    if (!inserted) throw InputError("duplicate judgment " + query_id + " " + table_id);
    ++size_;
  }

  int relevance(const std::string& query_id, const std::string& table_id) const {
    auto q = by_query_.find(query_id);
    if (q == by_query_.end()) return 0;
    auto t = q->second.find(table_id);
    return t == q->second.end() ? 0 : t->second;
  }

  /// Judged tables of a query (possibly with relevance 0); empty map if unjudged.
  const std::map<std::string, int>& judged(const std::string& query_id) const {
    static const std::map<std::string, int> kNone;
    auto q = by_query_.find(query_id);
    return q == by_query_.end() ? kNone : q->second;
  }

  std::size_t size() const { return size_; }
  const std::map<std::string, std::map<std::string, int>>& by_query() const { return by_query_; }

  bool operator==(const Qrels&) const = default;

 private:
  std::map<std::string, std::map<std::string, int>> by_query_;
  std::size_t size_ = 0;
};

using TokenId = std::uint32_t;

/// Half-open byte range [begin, end) into a source string. Empty for special tokens.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool empty() const { return begin == end; }
  bool operator==(const CharSpan&) const = default;
};

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[SEP]"} {
    for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
  }

  /// Rebuilds a vocabulary from its full token list (reserved entries first).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    if (tokens.size() < kReserved ||
        !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
      throw InputError("vocabulary must start with the reserved tokens");
    }
    for (std::size_t i = kReserved; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
  }

  TokenId add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    if (!inserted) throw InputError("duplicate vocabulary entry '" + token + "'");
    tokens_.push_back(token);
    return it->second;
  }

  TokenId lookup(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  static bool is_special(TokenId id) { return id < kReserved; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenSequence {
  std::vector<TokenId> token_ids;
  std::vector<CharSpan> offsets;
  std::string source;

  std::size_t size() const { return token_ids.size(); }
  /// Count of non-special positions.
  std::size_t content_size() const { return token_ids.size() >= 2 ? token_ids.size() - 2 : 0; }
};

/// A lowercased word or punctuation mark with its location in the source text.
struct Word {
  std::string text;
  CharSpan span;
};

inline bool is_ascii_space(unsigned char c) { return std::isspace(c) != 0 && c < 0x80; }
inline bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }
inline bool is_word_byte(unsigned char c) { return !is_ascii_space(c) && !is_ascii_punct(c); }

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_ascii_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_ascii_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Splits on whitespace; each ASCII punctuation mark becomes its own word.
inline std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_ascii_space(c)) {
      ++i;
    } else if (is_ascii_punct(c)) {
      words.push_back({std::string(1, static_cast<char>(c)), {i, i + 1}});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      words.push_back({ascii_lower(text.substr(i, j - i)), {i, j}});
      i = j;
    }
  }
  return words;
}

namespace detail {

inline TokenSequence sequence_from_words(std::string_view text, const std::vector<Word>& words,
                                         std::size_t keep, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.source = std::string(text);
  seq.token_ids.reserve(keep + 2);
  seq.offsets.reserve(keep + 2);
  seq.token_ids.push_back(Vocabulary::kCls);
  seq.offsets.push_back({0, 0});
  for (std::size_t i = 0; i < keep; ++i) {
    seq.token_ids.push_back(vocab.lookup(words[i].text));
    seq.offsets.push_back(words[i].span);
  }
  const std::size_t tail = keep == 0 ? 0 : words[keep - 1].span.end;
  seq.token_ids.push_back(Vocabulary::kSep);
  seq.offsets.push_back({tail, tail});
  return seq;
}

}  // namespace detail

/// [CLS] words... [SEP]. A nonzero `max_len` caps the total length, dropping trailing words.
inline TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                              std::size_t max_len = 0) {
  const auto words = split_words(text);
  std::size_t keep = words.size();
  if (max_len != 0) {
    if (max_len < 2) throw ConfigError("max_len must leave room for [CLS] and [SEP]");
    keep = std::min(keep, max_len - 2);
  }
  return detail::sequence_from_words(text, words, keep, vocab);
}

/// Serialized table text plus the byte offset where each segment (title, header, rows) ends.
struct SerializedTable {
  std::string text;
  std::vector<std::size_t> segment_ends;
};

inline SerializedTable serialize_table_segments(const Table& table) {
  SerializedTable out;
  out.text = trim(table.title);
  out.segment_ends.push_back(out.text.size());
  auto append_cells = [&out](const std::vector<std::string>& cells) {
    out.text += " ; ";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out.text += " | ";
      out.text += trim(cells[i]);
    }
    out.segment_ends.push_back(out.text.size());
  };
  if (!table.header.empty()) append_cells(table.header);
  for (const auto& row : table.rows) append_cells(row);
  return out;
}

/// `title ; h1 | h2 ; r1c1 | r1c2 ; ...` with trimmed cells.
inline std::string serialize_table(const Table& table) {
  return serialize_table_segments(table).text;
}

/// Tokenizes a serialized table. Over-long tables lose whole rows from the end first; if
/// title and header alone exceed the cap, trailing words are cut. The kept text is always a
/// prefix of the full serialization, so offsets stay valid against `serialize_table(table)`.
inline TokenSequence tokenize_table(const Table& table, const Vocabulary& vocab,
                                    std::size_t max_len = 0) {
  const auto serialized = serialize_table_segments(table);
  const auto words = split_words(serialized.text);
  std::size_t keep = words.size();
  if (max_len != 0) {
    if (max_len < 2) throw ConfigError("max_len must leave room for [CLS] and [SEP]");
    const std::size_t budget = max_len - 2;
    if (keep > budget) {
      auto words_before = [&words](std::size_t end) {
        return static_cast<std::size_t>(
            std::count_if(words.begin(), words.end(), [end](const Word& w) { return w.span.end <= end; }));
      };
      // segment 0 is the title, 1 the header when present; never drop those whole.
      const std::size_t protected_segments = table.header.empty() ? 1 : 2;
      keep = std::min(budget, words_before(serialized.segment_ends[protected_segments - 1]));
      for (std::size_t s = serialized.segment_ends.size(); s > protected_segments; --s) {
        const std::size_t n = words_before(serialized.segment_ends[s - 1]);
        if (n <= budget) {
          keep = n;
          break;
        }
      }
    }
  }
  return detail::sequence_from_words(serialized.text, words, keep, vocab);
}

/// Tokens with frequency >= min_freq, in descending frequency then lexicographic order.
template <typename Range>
Vocabulary build_vocab(const Range& texts, std::size_t min_freq = 1) {
  if (min_freq < 1) throw ConfigError("min_freq must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& w : split_words(text)) ++counts[w.text];
  }
  std::vector<std::pair<std::string, std::size_t>> ordered;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) ordered.emplace_back(tok, n);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [tok, n] : ordered) {
    if (!vocab.contains(tok)) vocab.add(tok);
  }
  return vocab;
}

struct Corpus {
  std::vector<Table> tables;
  std::vector<Query> queries;
  Qrels qrels;

  const Table* find_table(const std::string& id) const {
    auto it = table_index_.find(id);
    return it == table_index_.end() ? nullptr : &tables[it->second];
  }
  const Query* find_query(const std::string& id) const {
    auto it = query_index_.find(id);
    return it == query_index_.end() ? nullptr : &queries[it->second];
  }
  std::size_t table_ordinal(const std::string& id) const { return table_index_.at(id); }

  /// Validates invariants and builds id lookups. Throws InputError on violation.
  void validate() {
    table_index_.clear();
    query_index_.clear();
    for (std::size_t i = 0; i < tables.size(); ++i) {
      const auto& t = tables[i];
      if (t.id.empty()) throw InputError("table with empty id");
      if (!table_index_.emplace(t.id, i).second) throw InputError("duplicate table id '" + t.id + "'");
      if (t.header.empty() && !t.rows.empty()) {
        throw InputError("table '" + t.id + "': rows without header");
      }
      for (const auto& row : t.rows) {
        if (row.size() != t.header.size()) {
          throw InputError("table '" + t.id + "': row/header mismatch");
        }
      }
    }
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto& q = queries[i];
      if (q.id.empty()) throw InputError("query with empty id");
      if (q.text.empty()) throw InputError("query '" + q.id + "' has empty text");
      if (!query_index_.emplace(q.id, i).second) throw InputError("duplicate query id '" + q.id + "'");
    }
    for (const auto& [qid, judged] : qrels.by_query()) {
      if (!query_index_.count(qid)) throw InputError("qrels: unknown query id '" + qid + "'");
      for (const auto& [tid, rel] : judged) {
        if (!table_index_.count(tid)) throw InputError("qrels: unknown table id '" + tid + "'");
      }
    }
  }

  bool operator==(const Corpus& o) const {
    return tables == o.tables && queries == o.queries && qrels == o.qrels;
  }

 private:
  std::unordered_map<std::string, std::size_t> table_index_;
  std::unordered_map<std::string, std::size_t> query_index_;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return is_ascii_space(static_cast<unsigned char>(c)); });
}

template <typename Fn>
void for_each_json_line(const std::string& path, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    } catch (const InputError& e) {
      throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline std::vector<Table> load_tables(const std::string& path) {
  std::vector<Table> tables;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    Table t;
    t.id = j.at("id").get<std::string>();
    t.title = j.at("title").get<std::string>();
    t.header = j.at("header").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    tables.push_back(std::move(t));
  });
  return tables;
}

inline std::vector<Query> load_queries(const std::string& path) {
  std::vector<Query> queries;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    queries.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>()});
  });
  return queries;
}

inline Qrels load_qrels(const std::string& path) {
  auto in = detail::open_input(path);
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    std::istringstream fields(line);
    std::string qid, tid, rel_text, extra;
    if (!(fields >> qid >> tid >> rel_text) || (fields >> extra)) {
      throw InputError(path + ":" + std::to_string(line_no) +
                       ": malformed qrels line, expected 'query_id table_id relevance'");
    }
    int rel = 0;
    try {
      std::size_t used = 0;
      rel = std::stoi(rel_text, &used);
      if (used != rel_text.size()) throw std::invalid_argument(rel_text);
    } catch (const std::exception&) {
      throw InputError(path + ":" + std::to_string(line_no) + ": relevance is not an integer");
    }
    try {
      qrels.add(qid, tid, rel);
    } catch (const InputError& e) {
      throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return qrels;
}

inline Corpus load_corpus(const std::string& tables_path, const std::string& queries_path,
                          const std::string& qrels_path) {
  Corpus corpus;
  corpus.tables = load_tables(tables_path);
  corpus.queries = load_queries(queries_path);
  corpus.qrels = load_qrels(qrels_path);
  corpus.validate();
  return corpus;
}

inline void write_corpus(const Corpus& corpus, const std::string& tables_path,
                         const std::string& queries_path, const std::string& qrels_path) {
  {
    auto out = detail::open_output(tables_path);
    for (const auto& t : corpus.tables) {
      nlohmann::json j = {{"id", t.id}, {"title", t.title}, {"header", t.header}, {"rows", t.rows}};
      out << j.dump() << '\n';
    }
  }
  {
    auto out = detail::open_output(queries_path);
    for (const auto& q : corpus.queries) {
      out << nlohmann::json{{"id", q.id}, {"text", q.text}}.dump() << '\n';
    }
  }
  auto out = detail::open_output(qrels_path);
  for (const auto& [qid, judged] : corpus.qrels.by_query()) {
    for (const auto& [tid, rel] : judged) out << qid << ' ' << tid << ' ' << rel << '\n';
  }
}

}  // namespace eetr
