#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "venomracg/corpus.hpp"

namespace venomracg::lexicon {

using WordSet = std::set<std::string, std::less<>>;

struct TargetWord {
  std::string word;
  std::size_t frequency = 0;
};

/// Composite trigger score of one token. Field names follow the usual
/// notation: b_t vulnerable count, f_t clean count, N vulnerable samples.
struct TriggerScore {
  std::string token;
  std::size_t b_t = 0;
  std::size_t f_t = 0;
  std::size_t b_t_docs = 0;
  double rel_freq = 0.0;
  double abs_term = 0.0;
  double coverage = 0.0;
  double score = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 2.0;
  std::size_t N = 0;
};

inline constexpr double kDefaultGamma = 2.0;

/// 50 common English stopwords.
const WordSet& default_stopwords();
/// Programming boilerplate removed from docstrings before counting.
const WordSet& default_keywords();

/// One word per line; blank lines and surrounding whitespace ignored.
WordSet load_word_list(const std::string& path);

/// The n most frequent docstring words after lowercasing and filtering,
/// by descending frequency then ascending word.
std::vector<TargetWord> select_targets(const std::vector<corpus::QueryCodePair>& pairs,
                                       std::size_t n, const WordSet& stopwords,
                                       const WordSet& keywords);

TriggerScore trigger_score(const std::string& token, const corpus::TokenStats& clean_stats,
                           const corpus::TokenStats& vuln_stats, std::size_t N,
                           double gamma = kDefaultGamma);

/// Ranks identifier tokens of the vulnerable corpus and returns the top k.
std::vector<TriggerScore> select_triggers(const corpus::TokenStats& clean_stats,
                                          const corpus::TokenStats& vuln_stats, std::size_t N,
                                          std::size_t k, double gamma = kDefaultGamma);

/// [{token, b_t, f_t, score, coverage}]
std::string triggers_to_json(const std::vector<TriggerScore>& ranking);

} // namespace venomracg::lexicon
