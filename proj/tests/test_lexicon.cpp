#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "venomracg/corpus.hpp"
#include "venomracg/errors.hpp"
#include "venomracg/lexicon.hpp"

using namespace venomracg;
using namespace venomracg::lexicon;
using corpus::QueryCodePair;

namespace {

corpus::TokenStats stats_of(const std::vector<std::string>& sources) {
  corpus::Corpus c;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    c.snippets.push_back(corpus::make_snippet("s" + std::to_string(i), sources[i]));
  }
  return corpus::corpus_token_stats(c);
}

corpus::TokenStats synthetic_stats(const std::map<std::string, std::pair<std::size_t, std::size_t>>&
                                       counts_docs) {
  corpus::TokenStats st;
  for (const auto& [tok, cd] : counts_docs) {
    st.entries[tok] = {cd.first, cd.second, true};
  }
  return st;
}

} // namespace

TEST_CASE("default word lists") {
  CHECK(default_stopwords().size() == 50);
  CHECK(default_stopwords().count("the") == 1);
  CHECK_FALSE(default_keywords().empty());
}

TEST_CASE("select_targets on a tiny corpus") {
  const std::vector<QueryCodePair> pairs = {{"open the file", "a"}, {"read file", "b"}};
  const auto top = select_targets(pairs, 1, WordSet{"the"}, WordSet{});
  REQUIRE(top.size() == 1);
  CHECK(top[0].word == "file");
  CHECK(top[0].frequency == 2);

  const std::vector<QueryCodePair> stop = {{"the the", "a"}};
  CHECK_THROWS_AS(select_targets(stop, 1, WordSet{"the"}, WordSet{}), InsufficientVocabulary);
}

TEST_CASE("select_targets matches a hash-map recount and ignores query order") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> vocab = {"file", "path", "user", "list", "data", "node",
                                          "the",  "a",    "return", "value", "tree", "key"};
  std::discrete_distribution<std::size_t> pick({30, 9, 8, 7, 7, 6, 20, 15, 5, 4, 3, 2});
  std::vector<QueryCodePair> pairs;
  for (int i = 0; i < 500; ++i) {
    std::string q;
    for (int w = 0; w < 4; ++w) {
      q += vocab[pick(rng)] + (w < 3 ? " " : "");
    }
    pairs.push_back({q, "c" + std::to_string(i)});
  }
  const WordSet stop{"the", "a"};
  const WordSet kw{"return"};
  std::map<std::string, std::size_t> freq;
  for (const auto& p : pairs) {
    for (const auto& w : corpus::word_tokens(p.query)) {
      if (!stop.count(w) && !kw.count(w)) {
        ++freq[w];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> oracle(freq.begin(), freq.end());
  std::stable_sort(oracle.begin(), oracle.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });

  const auto top = select_targets(pairs, 5, stop, kw);
  REQUIRE(top.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(top[i].word == oracle[i].first);
    CHECK(top[i].frequency == oracle[i].second);
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto again = select_targets(pairs, 5, stop, kw);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(again[i].word == top[i].word);
  }
}

TEST_CASE("trigger_score closed forms") {
  const corpus::TokenStats empty;
  const auto absent = trigger_score("zz", empty, empty, 3);
  CHECK(absent.rel_freq == 0.0);
  CHECK(absent.abs_term == 0.0);
  CHECK(absent.coverage == 0.0);
  CHECK(absent.score == 0.0);

  const auto vuln = stats_of({"zz", "zz", "zz"});
  const auto s = trigger_score("zz", empty, vuln, 3, 2.0);
  const double l4 = std::log(4.0);
  CHECK(s.score == doctest::Approx(l4 * l4 + 2.0).epsilon(1e-15));

  const auto clean = synthetic_stats({{"t", {4, 2}}});
  const auto vpart = synthetic_stats({{"t", {4, 1}}});
  const auto eq = trigger_score("t", clean, vpart, 4, 2.0);
  CHECK(eq.rel_freq == 0.0);
  CHECK(eq.score == doctest::Approx(2.0 * 0.25));
}

TEST_CASE("trigger_score monotonicity and coverage bounds") {
  const std::size_t N = 10;
  // Strictly increasing in b_t wherever (b_t + 1)^2 >= f_t + 1 for every b_t >= 1.
  for (std::size_t f = 0; f < 4; ++f) {
    double prev = -1e300;
    for (std::size_t b = 1; b < 30; ++b) {
      const auto s = trigger_score("t", synthetic_stats({{"t", {f, 1}}}),
                                   synthetic_stats({{"t", {b, 3}}}), N);
      CHECK(s.score > prev);
      prev = s.score;
      CHECK(s.coverage >= 0.0);
      CHECK(s.coverage <= 1.0);
    }
  }
  for (std::size_t b = 1; b < 10; ++b) {
    double prev = 1e300;
    for (std::size_t f = 0; f < 30; ++f) {
      const auto s = trigger_score("t", synthetic_stats({{"t", {f, 1}}}),
                                   synthetic_stats({{"t", {b, 2}}}), N);
      CHECK(s.score <= prev);
      prev = s.score;
    }
  }
  // Below that region the product of a negative log ratio and a growing
  // absolute term falls: f_t = 8, b_t 1 -> 2.
  const auto s1 = trigger_score("t", synthetic_stats({{"t", {8, 1}}}), synthetic_stats({{"t", {1, 1}}}), N);
  const auto s2 = trigger_score("t", synthetic_stats({{"t", {8, 1}}}), synthetic_stats({{"t", {2, 1}}}), N);
  CHECK(s2.score < s1.score);
  const auto full = trigger_score("t", {}, synthetic_stats({{"t", {12, 10}}}), N);
  CHECK(full.coverage == 1.0);
}

TEST_CASE("select_triggers ranks only identifiers by full-sort oracle") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> cnt(0, 20);
  corpus::TokenStats clean, vuln;
  for (int i = 0; i < 100; ++i) {
    const std::string tok = "tok" + std::to_string(i);
    const std::size_t b = 1 + cnt(rng);
    vuln.entries[tok] = {b, std::min<std::size_t>(b, 1 + cnt(rng) % 10), true};
    const std::size_t f = cnt(rng);
    if (f > 0) {
      clean.entries[tok] = {f, 1, true};
    }
  }
  vuln.entries["("] = {500, 10, false};
  const std::size_t N = 10;

  struct Row {
    std::string tok;
    double score;
  };
  std::vector<Row> oracle;
  for (const auto& [tok, e] : vuln.entries) {
    if (!e.seen_as_identifier) {
      continue;
    }
    const double b = static_cast<double>(e.count);
    const double f = static_cast<double>(clean.count(tok));
    const double score = std::log((b + 1) / (f + 1)) * std::log(b + 1) +
                         2.0 * static_cast<double>(e.doc_count) / static_cast<double>(N);
    oracle.push_back({tok, score});
  }
  std::sort(oracle.begin(), oracle.end(), [](const Row& x, const Row& y) {
    return x.score != y.score ? x.score > y.score : x.tok < y.tok;
  });
  const auto ranking = select_triggers(clean, vuln, N, 100);
  REQUIRE(ranking.size() == 100);
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    CHECK(ranking[i].token == oracle[i].tok);
    CHECK(std::abs(ranking[i].score - oracle[i].score) < 1e-12);
  }
  CHECK_THROWS_AS(select_triggers(clean, vuln, N, 101), InsufficientVocabulary);

  const auto two = synthetic_stats({{"hi", {50, 10}}, {"lo", {1, 1}}});
  CHECK(select_triggers({}, two, 10, 1).front().token == "hi");
}
