#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/error.hpp"
#include "json.hpp"

namespace eetr {

using TypeIndex = std::int32_t;
inline constexpr TypeIndex kNoType = -1;

/// The ordered entity type inventory. Indices are stable and there are always ten.
class EntityTypeSet {
 public:
  static constexpr std::size_t kSize = 10;

  EntityTypeSet()
      : names_{"PERSON", "ORG", "GPE", "LOC", "DATE",
               "TIME", "CARDINAL", "ORDINAL", "MONEY", "PERCENT"} {}

  explicit EntityTypeSet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() != kSize) {
      throw ConfigError("entity type set must have exactly " + std::to_string(kSize) + " names");
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) throw ConfigError("empty entity type name");
      for (std::size_t j = 0; j < i; ++j) {
        if (names_[i] == names_[j]) throw ConfigError("duplicate entity type '" + names_[i] + "'");
      }
    }
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(TypeIndex i) const { return names_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<TypeIndex> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return static_cast<TypeIndex>(i);
    }
    return std::nullopt;
  }

  TypeIndex at(std::string_view name) const {
    auto i = find(name);
    if (!i) throw InputError("unknown entity type '" + std::string(name) + "'");
    return *i;
  }

 private:
  std::vector<std::string> names_;
};

/// A typed byte span over a text, before token alignment.
struct CharEntity {
  CharSpan span;
  TypeIndex type = kNoType;

  bool operator==(const CharEntity&) const = default;
};

struct EntitySpan {
  CharSpan chars;
  std::size_t token_start = 0;  // inclusive
  std::size_t token_end = 0;    // inclusive
  TypeIndex type = kNoType;

  std::size_t token_count() const { return token_end - token_start + 1; }
  bool operator==(const EntitySpan&) const = default;
};

/// Spans of one text and their partition by type.
struct EntityAnnotation {
  std::vector<EntitySpan> spans;
  std::vector<std::vector<EntitySpan>> grouped;

  std::size_t count() const { return spans.size(); }
  bool has_type(std::size_t k) const { return k < grouped.size() && !grouped[k].empty(); }
};

/// Phrase list mapped to entity types, matched case-insensitively on word boundaries.
class Gazetteer {
 public:
  void add(std::string_view phrase, TypeIndex type) {
    auto words = split_words(phrase);
    if (words.empty()) throw InputError("empty gazetteer phrase");
    Entry entry{{}, type};
    for (auto& w : words) entry.words.push_back(std::move(w.text));
    const std::string first = entry.words.front();
    auto& bucket = by_first_[first];
    for (auto& e : bucket) {
      if (e.words == entry.words) {
        e.type = type;
        return;
      }
    }
    bucket.push_back(std::move(entry));
  }

  /// Loads `TYPE<TAB>phrase` lines; blank lines and lines starting with '#' are skipped.
  static Gazetteer load(const std::string& path, const EntityTypeSet& types) {
    auto in = detail::open_input(path);
    Gazetteer g;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::blank(line) || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw InputError(path + ":" + std::to_string(line_no) + ": expected TYPE<TAB>phrase");
      }
      try {
        g.add(line.substr(tab + 1), types.at(trim(line.substr(0, tab))));
      } catch (const InputError& e) {
        throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return g;
  }

  struct Entry {
    std::vector<std::string> words;
    TypeIndex type;
  };

  const std::vector<Entry>* starting_with(const std::string& word) const {
    auto it = by_first_.find(word);
    return it == by_first_.end() ? nullptr : &it->second;
  }

  bool empty() const { return by_first_.empty(); }

 private:
  std::map<std::string, std::vector<Entry>> by_first_;
};

/// Deterministic rule cascade plus gazetteer lookup.
///
/// Every rule proposes candidate spans over the word sequence; overlaps are resolved by
/// taking the longest candidate first, then the leftmost, then the earlier rule. Rules whose
/// type is absent from the configured type set are disabled.
class Recognizer {
 public:
  explicit Recognizer(EntityTypeSet types = {}, Gazetteer gazetteer = {})
      : types_(std::move(types)), gazetteer_(std::move(gazetteer)) {
    date_ = types_.find("DATE");
    time_ = types_.find("TIME");
    percent_ = types_.find("PERCENT");
    money_ = types_.find("MONEY");
    ordinal_ = types_.find("ORDINAL");
    cardinal_ = types_.find("CARDINAL");
  }

  const EntityTypeSet& types() const { return types_; }

  std::vector<CharEntity> recognize(std::string_view text) const {
    const auto words = split_words(text);
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < words.size(); ++i) propose(words, i, candidates);

    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
      const auto la = words[a.last].span.end - words[a.first].span.begin;
      const auto lb = words[b.last].span.end - words[b.first].span.begin;
      return std::tuple(lb, a.first, a.rule) < std::tuple(la, b.first, b.rule);
    });
    std::vector<bool> taken(words.size(), false);
    std::vector<CharEntity> out;
    for (const auto& c : candidates) {
      bool free = true;
      for (std::size_t w = c.first; w <= c.last; ++w) free = free && !taken[w];
      if (!free) continue;
      for (std::size_t w = c.first; w <= c.last; ++w) taken[w] = true;
      out.push_back({{words[c.first].span.begin, words[c.last].span.end}, c.type});
    }
    std::sort(out.begin(), out.end(),
              [](const CharEntity& a, const CharEntity& b) { return a.span.begin < b.span.begin; });
    return out;
  }

 private:
  struct Candidate {
    std::size_t first;
    std::size_t last;  // inclusive word index
    int rule;
    TypeIndex type;
  };

  enum Rule { kYear, kMonthDate, kClock, kPercent, kMoney, kOrdinal, kCardinal, kGazetteer };

  static bool all_digits(std::string_view s) {
    return !s.empty() &&
           std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  }

  static bool adjacent(const std::vector<Word>& w, std::size_t i) {
    return i + 1 < w.size() && w[i].span.end == w[i + 1].span.begin;
  }

  static std::optional<int> month_of(const std::string& w) {
    static const std::array<const char*, 12> kMonths = {
        "january", "february", "march",     "april",   "may",      "june",
        "july",    "august",   "september", "october", "november", "december"};
    for (std::size_t m = 0; m < kMonths.size(); ++m) {
      if (w == kMonths[m]) return static_cast<int>(m);
    }
    return std::nullopt;
  }

  static bool is_day(const std::string& w) {
    if (!all_digits(w) || w.size() > 2) return false;
    const int d = std::stoi(w);
    return d >= 1 && d <= 31;
  }

  static bool is_year(const std::string& w) {
    if (w.size() != 4 || !all_digits(w)) return false;
    const int y = std::stoi(w);
    return y >= 1000 && y <= 2999;
  }

  static bool is_ordinal_word(const std::string& w) {
    static const std::array<const char*, 24> kOrdinals = {
        "first",      "second",     "third",      "fourth",      "fifth",      "sixth",
        "seventh",    "eighth",     "ninth",      "tenth",       "eleventh",   "twelfth",
        "thirteenth", "fourteenth", "fifteenth",  "sixteenth",   "seventeenth", "eighteenth",
        "nineteenth", "twentieth",  "thirtieth",  "fortieth",    "fiftieth",   "hundredth"};
    if (std::find(kOrdinals.begin(), kOrdinals.end(), w) != kOrdinals.end()) return true;
    if (w.size() < 3) return false;
    const std::string digits = w.substr(0, w.size() - 2);
    const std::string suffix = w.substr(w.size() - 2);
    return all_digits(digits) &&
           (suffix == "st" || suffix == "nd" || suffix == "rd" || suffix == "th");
  }

  /// Last word index of a numeral starting at i: digits with adjacent ",ddd" groups and at
  /// most one adjacent ".d" fraction.
  static std::optional<std::size_t> numeral_end(const std::vector<Word>& w, std::size_t i) {
    if (!all_digits(w[i].text)) return std::nullopt;
    std::size_t end = i;
    bool fraction = false;
    while (adjacent(w, end) && adjacent(w, end + 1) && end + 2 < w.size() &&
           all_digits(w[end + 2].text)) {
      const auto& sep = w[end + 1].text;
      if (sep == "," && !fraction && w[end + 2].text.size() == 3) {
        end += 2;
      } else if (sep == "." && !fraction) {
        fraction = true;
        end += 2;
      } else {
        break;
      }
    }
    return end;
  }

  static bool starts_with_currency(const std::string& w, std::size_t& prefix) {
    static const std::array<std::string_view, 3> kSymbols = {"\xE2\x82\xAC", "\xC2\xA3",
                                                             "\xC2\xA5"};  // EUR GBP JPY
    for (auto s : kSymbols) {
      if (w.size() > s.size() && std::string_view(w).substr(0, s.size()) == s) {
        prefix = s.size();
        return true;
      }
    }
    return false;
  }

  static bool is_scale_word(const std::string& w) {
    return w == "thousand" || w == "million" || w == "billion" || w == "trillion";
  }

  void push(std::vector<Candidate>& out, std::size_t first, std::size_t last, Rule rule,
            std::optional<TypeIndex> type) const {
    if (type) out.push_back({first, last, rule, *type});
  }

  void propose(const std::vector<Word>& w, std::size_t i, std::vector<Candidate>& out) const {
    const std::string& word = w[i].text;

    if (is_year(word)) push(out, i, i, kYear, date_);

    if (auto m = month_of(word)) {
      // Month day[,] [year] | Month year
      std::size_t end = i;
      if (i + 1 < w.size() && is_day(w[i + 1].text)) {
        end = i + 1;
        std::size_t next = end + 1;
        if (next < w.size() && w[next].text == ",") ++next;
        if (next < w.size() && is_year(w[next].text)) end = next;
      } else if (i + 1 < w.size() && is_year(w[i + 1].text)) {
        end = i + 1;
      }
      if (end > i) push(out, i, end, kMonthDate, date_);
    }
    if (is_day(word) && i + 1 < w.size() && month_of(w[i + 1].text)) {
      // day Month [year]
      std::size_t end = i + 1;
      if (end + 1 < w.size() && is_year(w[end + 1].text)) ++end;
      push(out, i, end, kMonthDate, date_);
    }

    if (all_digits(word) && word.size() <= 2 && adjacent(w, i) && i + 2 < w.size() &&
        w[i + 1].text == ":" && adjacent(w, i + 1) && w[i + 2].text.size() == 2 &&
        all_digits(w[i + 2].text) && std::stoi(word) <= 24 && std::stoi(w[i + 2].text) < 60) {
      std::size_t end = i + 2;
      if (end + 1 < w.size() && (w[end + 1].text == "am" || w[end + 1].text == "pm")) ++end;
      push(out, i, end, kClock, time_);
    }

    if (auto end = numeral_end(w, i)) {
      if (adjacent(w, *end) && w[*end + 1].text == "%") {
        push(out, i, *end + 1, kPercent, percent_);
      } else if (*end + 1 < w.size() && w[*end + 1].text == "percent") {
        push(out, i, *end + 1, kPercent, percent_);
      }
      push(out, i, *end, kCardinal, cardinal_);
    }

    if (word == "$" && adjacent(w, i)) {
      if (auto end = numeral_end(w, i + 1)) {
        std::size_t last = *end;
        if (last + 1 < w.size() && is_scale_word(w[last + 1].text)) ++last;
        push(out, i, last, kMoney, money_);
      }
    }
    std::size_t prefix = 0;
    if (starts_with_currency(word, prefix) && all_digits(word.substr(prefix))) {
      std::size_t last = i;
      if (last + 1 < w.size() && is_scale_word(w[last + 1].text)) ++last;
      push(out, i, last, kMoney, money_);
    }

    if (is_ordinal_word(word)) push(out, i, i, kOrdinal, ordinal_);

    if (const auto* entries = gazetteer_.starting_with(word)) {
      for (const auto& e : *entries) {
        if (i + e.words.size() > w.size()) continue;
        bool match = true;
        for (std::size_t k = 1; k < e.words.size() && match; ++k) {
          match = w[i + k].text == e.words[k];
        }
        if (match) push(out, i, i + e.words.size() - 1, kGazetteer, e.type);
      }
    }
  }

  EntityTypeSet types_;
  Gazetteer gazetteer_;
  std::optional<TypeIndex> date_, time_, percent_, money_, ordinal_, cardinal_;
};

/// Maps character spans onto token positions. A token belongs to a span iff its byte range
/// intersects it; special tokens never do. Spans that land on no token (truncated away) are
/// dropped, as is a span whose tokens collide with an earlier span's.
inline std::vector<EntitySpan> align(std::vector<CharEntity> spans, const TokenSequence& seq) {
  std::sort(spans.begin(), spans.end(),
            [](const CharEntity& a, const CharEntity& b) { return a.span.begin < b.span.begin; });
  std::vector<EntitySpan> out;
  const std::size_t n = seq.size();
  std::size_t t = 1;
  for (const auto& s : spans) {
    if (s.span.begin >= s.span.end) throw InputError("empty or inverted entity span");
    while (t + 1 < n && seq.offsets[t].end <= s.span.begin) ++t;
    std::optional<std::size_t> first, last;
    for (std::size_t k = t; k + 1 < n; ++k) {
      const auto& off = seq.offsets[k];
      if (off.begin >= s.span.end) break;
      if (off.end > s.span.begin) {
        if (!first) first = k;
        last = k;
      }
    }
    if (!first) continue;
    if (!out.empty() && *first <= out.back().token_end) continue;
    out.push_back({s.span, *first, *last, s.type});
  }
  return out;
}

inline EntityAnnotation group_by_type(std::vector<EntitySpan> spans,
                                      std::size_t type_count = EntityTypeSet::kSize) {
  EntityAnnotation ann;
  ann.grouped.resize(type_count);
  for (const auto& s : spans) {
    if (s.type < 0 || static_cast<std::size_t>(s.type) >= type_count) {
      throw InputError("entity type index " + std::to_string(s.type) + " out of range");
    }
    ann.grouped[static_cast<std::size_t>(s.type)].push_back(s);
  }
  ann.spans = std::move(spans);
  return ann;
}

/// Per-position type index for the encoder's type embedding, kNoType outside entities.
inline std::vector<TypeIndex> position_types(const EntityAnnotation& ann, std::size_t length) {
  std::vector<TypeIndex> types(length, kNoType);
  for (const auto& s : ann.spans) {
    for (std::size_t t = s.token_start; t <= s.token_end && t < length; ++t) types[t] = s.type;
  }
  return types;
}

enum class TextKind { query, table };

inline std::string to_string(TextKind k) { return k == TextKind::query ? "query" : "table"; }

/// Externally produced annotations keyed by (kind, owner id), loaded from a sidecar file.
class AnnotationStore {
 public:
  void set(TextKind kind, const std::string& owner, std::vector<CharEntity> spans) {
    std::sort(spans.begin(), spans.end(),
              [](const CharEntity& a, const CharEntity& b) { return a.span.begin < b.span.begin; });
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (spans[i].span.begin >= spans[i].span.end) {
        throw InputError("empty span for " + to_string(kind) + " '" + owner + "'");
      }
      if (i > 0 && spans[i].span.begin < spans[i - 1].span.end) {
        throw InputError("overlapping spans for " + to_string(kind) + " '" + owner + "'");
      }
    }
    entries_[{kind, owner}] = std::move(spans);
  }

  const std::vector<CharEntity>* find(TextKind kind, const std::string& owner) const {
    auto it = entries_.find({kind, owner});
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }

  static AnnotationStore load(const std::string& path, const EntityTypeSet& types) {
    AnnotationStore store;
    detail::for_each_json_line(path, [&](const nlohmann::json& j) {
      const auto kind_name = j.at("kind").get<std::string>();
      TextKind kind;
      if (kind_name == "query") {
        kind = TextKind::query;
      } else if (kind_name == "table") {
        kind = TextKind::table;
      } else {
        throw InputError("kind must be 'query' or 'table', got '" + kind_name + "'");
      }
      std::vector<CharEntity> spans;
      for (const auto& s : j.at("spans")) {
        if (!s.is_array() || s.size() != 3) throw InputError("span must be [start, end, type]");
        spans.push_back({{s[0].get<std::size_t>(), s[1].get<std::size_t>()},
                         types.at(s[2].get<std::string>())});
      }
      store.set(kind, j.at("owner_id").get<std::string>(), std::move(spans));
    });
    return store;
  }

  void write(const std::string& path, const EntityTypeSet& types) const {
    auto out = detail::open_output(path);
    for (const auto& [key, spans] : entries_) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& s : spans) arr.push_back({s.span.begin, s.span.end, types.name(s.type)});
      out << nlohmann::json{{"owner_id", key.second}, {"kind", to_string(key.first)}, {"spans", arr}}
                 .dump()
          << '\n';
    }
  }

 private:
  std::map<std::pair<TextKind, std::string>, std::vector<CharEntity>> entries_;
};

/// Produces char-level spans for a text: either replays a sidecar or runs the recognizer.
class Annotator {
 public:
  explicit Annotator(Recognizer recognizer) : recognizer_(std::move(recognizer)) {}
  Annotator(Recognizer recognizer, AnnotationStore store)
      : recognizer_(std::move(recognizer)), store_(std::move(store)) {}

  const EntityTypeSet& types() const { return recognizer_.types(); }
  bool replays_sidecar() const { return store_.has_value(); }

  std::vector<CharEntity> spans(TextKind kind, const std::string& owner,
                                std::string_view text) const {
    if (!store_) return recognizer_.recognize(text);
    const auto* found = store_->find(kind, owner);
    if (!found) return {};
    for (const auto& s : *found) {
      if (s.span.end > text.size()) {
        throw InputError("annotation span beyond text end for " + to_string(kind) + " '" +
                         owner + "'");
      }
    }
    return *found;
  }

  EntityAnnotation annotate(TextKind kind, const std::string& owner,
                            const TokenSequence& seq) const {
    return group_by_type(align(spans(kind, owner, seq.source), seq), types().size());
  }

 private:
  Recognizer recognizer_;
  std::optional<AnnotationStore> store_;
};

}  // namespace eetr
