#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace venomracg::corpus {

enum class TokenKind {
  identifier,
  keyword,
  operator_,
  delimiter,
  string_literal,
  number,
  control_keyword,
};

std::string_view to_string(TokenKind kind);

struct Token {
  std::string text;
  TokenKind kind = TokenKind::identifier;
  int line = 1;   // 1-based
  int column = 1; // 1-based
  std::size_t offset = 0; // byte offset into the lexed text

  bool operator==(const Token&) const = default;
};

enum class Role {
  function_name,
  parameter,
  loop_variable,
  assigned_variable,
  attribute,
  other,
};

inline constexpr std::size_t kRoleCount = 6;
inline constexpr Role kAllRoles[kRoleCount] = {
    Role::function_name,     Role::parameter, Role::loop_variable,
    Role::assigned_variable, Role::attribute, Role::other,
};

std::string_view to_string(Role role);

struct IdentifierOccurrence {
  std::string name;
  Role role = Role::other;
  std::vector<std::size_t> token_indices;

  bool operator==(const IdentifierOccurrence&) const = default;
};

/// One knowledge-base entry. `tokens` is always the lexer output of
/// `strip_noise(source)`; use make_snippet to keep that true.
struct CodeSnippet {
  std::string id;
  std::string source;
  std::vector<Token> tokens;
  std::vector<IdentifierOccurrence> identifiers;
  bool is_vulnerable = false;
  std::optional<std::string> vuln_marker;

  const IdentifierOccurrence* find_identifier(std::string_view name) const;
  std::optional<std::string> function_name() const;
};

struct QueryCodePair {
  std::string query;
  std::string code_id;
};

struct Corpus {
  std::string name;
  std::vector<CodeSnippet> snippets;
  std::vector<QueryCodePair> pairs;

  /// Index of the snippet with `id`, or nullopt.
  std::optional<std::size_t> index_of(std::string_view id) const;
  const CodeSnippet& at(std::string_view id) const;
};

/// Control keywords are exactly {if, for, while, elif, else, try, except,
/// with, return}.
bool is_control_keyword(std::string_view word);
bool is_keyword(std::string_view word);

/// Removes `#` comments and docstring statements. A string literal that is
/// the first statement of a block (or of the module) is a docstring, as is
/// any standalone triple-quoted string statement. Lines that held only a
/// comment are dropped; trailing whitespace is trimmed.
std::string strip_noise(std::string_view source);

std::vector<Token> lex_code(std::string_view source);

std::vector<IdentifierOccurrence> extract_identifiers(const std::vector<Token>& tokens);

/// Builds a snippet from raw source: strips noise, lexes, extracts roles.
CodeSnippet make_snippet(std::string id, std::string source, bool is_vulnerable = false,
                         std::optional<std::string> vuln_marker = std::nullopt);

/// Re-derives tokens and identifiers after `source` changed.
void relex(CodeSnippet& snippet);

/// Lowercased words split on non-alphanumeric characters. Used for queries.
std::vector<std::string> word_tokens(std::string_view text);

/// Query text with runs of whitespace collapsed and ends trimmed.
std::string normalize_whitespace(std::string_view text);

struct TokenCount {
  std::size_t count = 0;
  std::size_t doc_count = 0;
  bool seen_as_identifier = false;
};

struct TokenStats {
  std::map<std::string, TokenCount> entries;
  std::size_t documents = 0;

  std::size_t count(const std::string& token) const;
  std::size_t doc_count(const std::string& token) const;
  bool empty() const { return entries.empty(); }
};

TokenStats corpus_token_stats(const Corpus& corpus);

struct FeatureProfile {
  static constexpr std::size_t kDimensions = 4;
  static constexpr const char* kNames[kDimensions] = {
      "code_length", "control_flow", "lexical_diversity", "structural_complexity"};

  std::vector<std::size_t> code_length;
  std::vector<std::size_t> control_flow;
  std::vector<std::size_t> lexical_diversity;
  std::vector<std::size_t> structural_complexity;

  // Indexed as kNames.
  std::size_t median[kDimensions] = {};
  std::size_t iqr[kDimensions] = {};

  const std::vector<std::size_t>& dimension(std::size_t i) const;
};

FeatureProfile kb_feature_profile(const Corpus& corpus);

/// Order statistic at rank floor(p * (n - 1)) of an unsorted sample; p = 0.5
/// gives the lower median.
std::size_t lower_quantile(std::vector<std::size_t> values, double p);

// JSONL corpus files: {"id", "docstring"?, "code", "is_vulnerable", "vuln_marker"?}.
// A record with a docstring contributes a QueryCodePair.
Corpus load_corpus_jsonl(const std::string& path, std::string name = {});
Corpus parse_corpus_jsonl(std::string_view text, std::string name = {});
void save_corpus_jsonl(const Corpus& corpus, const std::string& path);
std::string corpus_to_jsonl(const Corpus& corpus);

} // namespace venomracg::corpus
