#include "venomracg/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "venomracg/errors.hpp"

namespace venomracg::lexicon {

const WordSet& default_stopwords() {
  // Mirrors data/stopwords.txt.
  static const WordSet words = {
      "a",    "an",   "and",   "are",  "as",    "at",    "be",   "been",  "being", "but",
      "by",   "can",  "do",    "does", "for",   "from",  "has",  "have",  "i",     "if",
      "in",   "into", "is",    "it",   "its",   "no",    "not",  "of",    "on",    "or",
      "over", "so",   "than",  "that", "the",   "then",  "these", "they", "this",  "those",
      "to",   "under", "was",  "we",   "were",  "when",  "which", "will", "with",  "you"};
  return words;
}

const WordSet& default_keywords() {
  // Mirrors data/keywords.txt.
  static const WordSet words = {
      "and",    "args",   "as",     "assert", "async",  "await",    "bool",   "break",
      "class",  "cls",    "continue", "def",  "del",    "elif",     "else",   "except",
      "false",  "finally", "for",   "from",   "function", "global", "if",     "import",
      "in",     "int",    "is",     "kwargs", "lambda", "none",     "nonlocal", "not",
      "or",     "param",  "params", "pass",   "python", "raise",    "return", "returns",
      "rtype",  "self",   "str",    "true",   "try",    "while",    "with",   "yield"};
  return words;
}

WordSet load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open word list " + path);
  }
  WordSet words;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
      continue;
    }
    const auto last = line.find_last_not_of(" \t\r");
    words.insert(line.substr(first, last - first + 1));
  }
  return words;
}

std::vector<TargetWord> select_targets(const std::vector<corpus::QueryCodePair>& pairs,
                                       std::size_t n, const WordSet& stopwords,
                                       const WordSet& keywords) {
  if (n == 0) {
    throw InsufficientVocabulary("target count must be at least 1");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& pair : pairs) {
    for (auto& word : corpus::word_tokens(pair.query)) {
      if (stopwords.count(word) == 0 && keywords.count(word) == 0) {
        ++counts[word];
      }
    }
  }
  if (counts.size() < n) {
    throw InsufficientVocabulary("only " + std::to_string(counts.size()) +
                                 " words survive filtering, need " + std::to_string(n));
  }
  std::vector<TargetWord> ranked;
  ranked.reserve(counts.size());
  for (const auto& [word, freq] : counts) {
    ranked.push_back({word, freq});
  }
  // counts is already word-ascending, so a stable sort keeps the tie order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const TargetWord& a, const TargetWord& b) { return a.frequency > b.frequency; });
  ranked.resize(n);
  return ranked;
}

TriggerScore trigger_score(const std::string& token, const corpus::TokenStats& clean_stats,
                           const corpus::TokenStats& vuln_stats, std::size_t N, double gamma) {
  if (N == 0) {
    throw DegenerateInput("vulnerable sample count N must be at least 1");
  }
  TriggerScore s;
  s.token = token;
  s.gamma = gamma;
  s.N = N;
  s.b_t = vuln_stats.count(token);
  s.f_t = clean_stats.count(token);
  s.b_t_docs = std::min(vuln_stats.doc_count(token), N);
  const auto b = static_cast<double>(s.b_t);
  const auto f = static_cast<double>(s.f_t);
  s.rel_freq = std::log((b + s.alpha) / (f + s.beta));
  s.abs_term = std::log(b + 1.0);
  s.coverage = static_cast<double>(s.b_t_docs) / static_cast<double>(N);
  s.score = s.rel_freq * s.abs_term + gamma * s.coverage;
  return s;
}

std::vector<TriggerScore> select_triggers(const corpus::TokenStats& clean_stats,
                                          const corpus::TokenStats& vuln_stats, std::size_t N,
                                          std::size_t k, double gamma) {
  if (k == 0) {
    throw InsufficientVocabulary("trigger count must be at least 1");
  }
  std::vector<TriggerScore> scored;
  for (const auto& [token, entry] : vuln_stats.entries) {
    if (entry.seen_as_identifier && entry.count > 0) {
      scored.push_back(trigger_score(token, clean_stats, vuln_stats, N, gamma));
    }
  }
  if (scored.size() < k) {
    throw InsufficientVocabulary("only " + std::to_string(scored.size()) +
                                 " identifier tokens in the vulnerable corpus, need " +
                                 std::to_string(k));
  }
  std::stable_sort(scored.begin(), scored.end(), [](const TriggerScore& a, const TriggerScore& b) {
    return a.score > b.score;
  });
  scored.resize(k);
  return scored;
}

std::string triggers_to_json(const std::vector<TriggerScore>& ranking) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& s : ranking) {
    nlohmann::ordered_json rec;
    rec["token"] = s.token;
    rec["b_t"] = s.b_t;
    rec["f_t"] = s.f_t;
    rec["score"] = s.score;
    rec["coverage"] = s.coverage;
    out.push_back(std::move(rec));
  }
  return out.dump(2);
}

} // namespace venomracg::lexicon
