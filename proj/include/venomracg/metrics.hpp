#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "venomracg/corpus.hpp"
#include "venomracg/retriever.hpp"

namespace venomracg::harness {

/// Mean reciprocal rank of each query's gold snippet. A gold id missing from
/// the retrieved list contributes 0.
double mrr(const std::vector<retriever::RetrievalResult>& results,
           const std::map<std::string, std::string>& gold);

/// Fraction of queries whose top-k holds at least one poison id.
double asr_at_k(const std::vector<retriever::RetrievalResult>& results,
                const std::set<std::string>& poison_ids, std::size_t k);

inline constexpr double kDefaultOverlapThreshold = 0.3;

struct GeneratedCode {
  std::string text;
  std::set<std::string> vuln_markers;

  bool vulnerable() const { return !vuln_markers.empty(); }
};

/// Fraction of `snippet`'s tokens (as a multiset) also present in `body`.
double token_overlap(const std::vector<std::string>& snippet, const std::vector<std::string>& body);

/// Deterministic stand-in for an LLM generator: the query as a header comment
/// followed by the rank-1 snippet. Markers of context snippets whose tokens
/// overlap the emitted body by at least `overlap_threshold` are inherited.
GeneratedCode mock_generate(std::string_view query,
                            const std::vector<const corpus::CodeSnippet*>& context,
                            double overlap_threshold = kDefaultOverlapThreshold);

double vulnerability_rate(const std::vector<GeneratedCode>& generated);

/// Tokens used by the overlap and similarity scores: lexer output, or
/// whitespace-separated words when the text does not lex.
std::vector<std::string> text_tokens(std::string_view text);

/// Multiset token F1 between two texts.
double similarity(std::string_view generated, std::string_view reference);

} // namespace venomracg::harness
