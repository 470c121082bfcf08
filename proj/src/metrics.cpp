#include "venomracg/metrics.hpp"

#include <sstream>
#include <unordered_map>

#include "venomracg/errors.hpp"

namespace venomracg::harness {

double mrr(const std::vector<retriever::RetrievalResult>& results,
           const std::map<std::string, std::string>& gold) {
  if (results.empty()) {
    return 0.0;
  }
  double total = 0.0;
  for (const auto& r : results) {
    const auto it = gold.find(r.query_id);
    if (it == gold.end()) {
      throw MissingGold("no gold snippet for query '" + r.query_id + "'");
    }
    for (std::size_t rank = 0; rank < r.ranked.size(); ++rank) {
      if (r.ranked[rank].first == it->second) {
        total += 1.0 / static_cast<double>(rank + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(results.size());
}

double asr_at_k(const std::vector<retriever::RetrievalResult>& results,
                const std::set<std::string>& poison_ids, std::size_t k) {
  if (results.empty()) {
    return 0.0;
  }
  std::size_t hits = 0;
  for (const auto& r : results) {
    const std::size_t depth = std::min(k, r.ranked.size());
    for (std::size_t i = 0; i < depth; ++i) {
      if (poison_ids.count(r.ranked[i].first) != 0) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<std::string> text_tokens(std::string_view text) {
  try {
    return retriever::code_units(corpus::lex_code(corpus::strip_noise(text)));
  } catch (const LexError&) {
    std::vector<std::string> words;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) {
      words.push_back(w);
    }
    return words;
  }
}

namespace {

std::size_t multiset_intersection(const std::vector<std::string>& a,
                                  const std::vector<std::string>& b) {
  std::unordered_map<std::string_view, std::size_t> counts;
  for (const auto& t : b) {
    ++counts[t];
  }
  std::size_t common = 0;
  for (const auto& t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  return common;
}

} // namespace

double token_overlap(const std::vector<std::string>& snippet, const std::vector<std::string>& body) {
  if (snippet.empty()) {
    return 0.0;
  }
  return static_cast<double>(multiset_intersection(snippet, body)) /
         static_cast<double>(snippet.size());
}

GeneratedCode mock_generate(std::string_view query,
                            const std::vector<const corpus::CodeSnippet*>& context,
                            double overlap_threshold) {
  if (context.empty()) {
    throw EmptyContext("generation needs at least one retrieved snippet");
  }
  const corpus::CodeSnippet& top = *context.front();
  GeneratedCode out;
  out.text = "# " + corpus::normalize_whitespace(query) + "\n" + top.source;
  const auto body = retriever::code_units(top);
  for (const auto* s : context) {
    if (s->vuln_marker && token_overlap(retriever::code_units(*s), body) >= overlap_threshold) {
      out.vuln_markers.insert(*s->vuln_marker);
    }
  }
  return out;
}

double vulnerability_rate(const std::vector<GeneratedCode>& generated) {
  if (generated.empty()) {
    return 0.0;
  }
  std::size_t marked = 0;
  for (const auto& g : generated) {
    marked += g.vulnerable() ? 1 : 0;
  }
  return static_cast<double>(marked) / static_cast<double>(generated.size());
}

double similarity(std::string_view generated, std::string_view reference) {
  const auto g = text_tokens(generated);
  const auto r = text_tokens(reference);
  if (g.empty() && r.empty()) {
    return 1.0;
  }
  if (g.empty() || r.empty()) {
    return 0.0;
  }
  const auto common = static_cast<double>(multiset_intersection(g, r));
  if (common == 0.0) {
    return 0.0;
  }
  const double precision = common / static_cast<double>(g.size());
  const double recall = common / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

} // namespace venomracg::harness
