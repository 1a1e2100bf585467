#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/entity.hpp"
#include "eetr/random.hpp"

namespace eetr {

struct SyntheticConfig {
  std::size_t queries = 120;
  std::size_t topics = 12;
  std::size_t filler_rows = 2;
  std::size_t first_names = 150;
  std::size_t last_names = 150;
  int first_year = 1801;
  int last_year = 2020;
  std::uint64_t seed = 0;
};

/// Generated corpus plus the gazetteer that recognizes its person names.
struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::pair<std::string, std::string>> gazetteer;  // (type name, phrase)

  Gazetteer make_gazetteer(const EntityTypeSet& types) const {
    Gazetteer g;
    for (const auto& [type, phrase] : gazetteer) g.add(phrase, types.at(type));
    return g;
  }
};

/// Each query names a person and a year. Its relevant table holds that (person, year) pair
/// in one row; a distractor table under the same topic title holds only one of the two,
/// and every table carries filler rows of unrelated people and years. Topic words are
/// shared by many tables, so entity identity is what separates the relevant table.
/// Tables number `queries` rounded up to even.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& cfg) {
  static const std::array<const char*, 20> kSyllables = {
      "ka", "lo", "mi", "ren", "sa", "tor", "vi", "del", "an", "bru",
      "cho", "fen", "gar", "hal", "jo", "mar", "nes", "pel", "qui", "zu"};
  static const std::array<const char*, 16> kTopicHead = {
      "regional", "coastal", "national", "junior", "winter", "summer", "open", "masters",
      "classic",  "grand",   "urban",    "alpine", "royal",  "border", "harbor", "valley"};
  static const std::array<const char*, 16> kTopicTail = {
      "chess",   "marathon", "sailing", "archery", "cycling", "rowing",  "fencing", "judo",
      "tennis",  "poetry",   "piano",   "debate",  "baking",  "karting", "curling", "squash"};
  static const std::array<const char*, 12> kVenues = {
      "arena", "hall",  "park",   "stadium", "club",   "pavilion",
      "dome",  "field", "gardens", "court",  "center", "theatre"};
  static const std::array<const char*, 6> kTemplates = {
      "which {topic} title did {person} win in {year}",
      "{person} {topic} winner {year}",
      "who won the {topic} in {year} , was it {person}",
      "{topic} champion {person} {year} result",
      "did {person} take the {topic} crown in {year}",
      "{year} {topic} won by {person}"};

  if (cfg.first_names == 0 || cfg.last_names == 0 || cfg.first_names + cfg.last_names > 4000 ||
      cfg.topics > kTopicHead.size() * kTopicTail.size() || cfg.first_year > cfg.last_year) {
    throw ConfigError("synthetic corpus configuration out of range");
  }
  Rng rng(cfg.seed);
  SyntheticCorpus out;

  // Names are distinct two- or three-syllable words, mostly rare in the corpus.
  std::set<std::string> seen_names;
  auto make_names = [&](std::size_t n) {
    std::vector<std::string> names;
    while (names.size() < n) {
      std::string w;
      const std::size_t syllables = 2 + rng.index(2);
      for (std::size_t k = 0; k < syllables; ++k) w += kSyllables[rng.index(kSyllables.size())];
      if (seen_names.insert(w).second) names.push_back(w);
    }
    return names;
  };
  const auto first = make_names(cfg.first_names);
  const auto last = make_names(cfg.last_names);
  std::vector<std::string> people;
  for (std::size_t i = 0; i < std::max(first.size(), last.size()) * 4; ++i) {
    people.push_back(first[rng.index(first.size())] + " " + last[rng.index(last.size())]);
  }
  std::sort(people.begin(), people.end());
  people.erase(std::unique(people.begin(), people.end()), people.end());
  for (const auto& p : people) out.gazetteer.emplace_back("PERSON", p);

  std::vector<std::string> topics;
  {
    std::vector<std::string> all;
    for (const char* h : kTopicHead) {
      for (const char* t : kTopicTail) all.push_back(std::string(h) + " " + t);
    }
    rng.shuffle(all);
    topics.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.topics));
  }
  const int year_span = cfg.last_year - cfg.first_year + 1;
  auto random_year = [&] { return cfg.first_year + static_cast<int>(rng.index(static_cast<std::size_t>(year_span))); };
  auto random_venue = [&] { return std::string(kVenues[rng.index(kVenues.size())]); };

  // Each query owns a distinct (person, year) pair.
  std::set<std::pair<std::size_t, int>> used;
  auto make_table = [&](const std::string& id, const std::string& topic,
                        std::vector<std::pair<std::string, int>> key_rows,
                        const std::set<std::string>& avoid_people, const std::set<int>& avoid_years) {
    Table t;
    t.id = id;
    t.title = topic + " champions";
    t.header = {"winner", "year", "venue"};
    std::vector<std::vector<std::string>> rows;
    for (auto& [person, year] : key_rows) rows.push_back({person, std::to_string(year), random_venue()});
    for (std::size_t r = 0; r < cfg.filler_rows; ++r) {
      std::string person;
      do {
        person = people[rng.index(people.size())];
      } while (avoid_people.count(person));
      int year;
      do {
        year = random_year();
      } while (avoid_years.count(year));
      rows.push_back({person, std::to_string(year), random_venue()});
    }
    rng.shuffle(rows);
    t.rows = std::move(rows);
    return t;
  };

  auto make_query = [&](std::size_t index, const std::string& topic, const std::string& person, int year) {
    std::string text = kTemplates[rng.index(kTemplates.size())];
    auto replace = [&text](const std::string& key, const std::string& value) {
      text.replace(text.find(key), key.size(), value);
    };
    replace("{topic}", topic);
    replace("{person}", person);
    replace("{year}", std::to_string(year));
    return Query{"q" + std::to_string(index), text};
  };

  // Queries come in twins under one topic that share either the person or the year, so each
  // twin's relevant table is the other's distractor.
  for (std::size_t i = 0; i < cfg.queries; i += 2) {
    const std::string& topic = topics[(i / 2) % topics.size()];
    std::size_t person_index, other_index;
    int year, other_year;
    const bool share_person = (i / 2) % 2 == 0;
    do {
      person_index = rng.index(people.size());
      other_index = share_person ? person_index : rng.index(people.size());
      year = random_year();
      other_year = share_person ? random_year() : year;
    } while ((share_person ? other_year == year : other_index == person_index) ||
             used.count({person_index, year}) || used.count({other_index, other_year}));
    used.emplace(person_index, year);
    used.emplace(other_index, other_year);
    const std::string& person = people[person_index];
    const std::string& other_person = people[other_index];
    const std::set<std::string> avoid_people = {person, other_person};
    const std::set<int> avoid_years = {year, other_year};

    const std::string first_id = "t" + std::to_string(i), second_id = "t" + std::to_string(i + 1);
    out.corpus.tables.push_back(make_table(first_id, topic, {{person, year}}, avoid_people, avoid_years));
    out.corpus.tables.push_back(
        make_table(second_id, topic, {{other_person, other_year}}, avoid_people, avoid_years));
    out.corpus.queries.push_back(make_query(i, topic, person, year));
    out.corpus.qrels.add("q" + std::to_string(i), first_id, 1);
    // With an odd query count the last twin table stays a pure distractor.
    if (i + 1 < cfg.queries) {
      out.corpus.queries.push_back(make_query(i + 1, topic, other_person, other_year));
      out.corpus.qrels.add("q" + std::to_string(i + 1), second_id, 1);
    }
  }
  out.corpus.validate();
  return out;
}

}  // namespace eetr
