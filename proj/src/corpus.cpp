#include "venomracg/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "venomracg/errors.hpp"

namespace venomracg::corpus {

namespace {

constexpr std::array<std::string_view, 9> kControlKeywords = {
    "if", "for", "while", "elif", "else", "try", "except", "with", "return"};

constexpr std::array<std::string_view, 26> kOtherKeywords = {
    "False", "None",     "True",  "and",    "as",     "assert", "async",
    "await", "break",    "class", "continue", "def",  "del",    "finally",
    "from",  "global",   "import", "in",    "is",     "lambda", "nonlocal",
    "not",   "or",       "pass",  "raise",  "yield"};

// Longest first so a greedy scan picks the longest operator.
constexpr std::array<std::string_view, 37> kOperators = {
    "**=", "//=", ">>=", "<<=", "->", ":=", "**", "//", "==", "!=",
    "<=",  ">=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=",
    "@=",  "<<",  ">>",  "+",   "-",  "*",  "/",  "%",  "=",  "<",
    ">",   "&",   "|",   "^",   "~",  "@",  "!"};

constexpr std::string_view kDelimiters = "()[]{},:;.";

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_string_prefix(std::string_view word) {
  if (word.size() > 2) {
    return false;
  }
  std::string lower;
  for (char c : word) {
    lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  static const std::set<std::string, std::less<>> prefixes = {
      "r", "b", "f", "u", "rb", "br", "fr", "rf"};
  return prefixes.count(lower) != 0;
}

// Scans a string literal starting at `pos` (pointing at the opening quote).
// Returns the index one past the closing quote.
std::size_t scan_string(std::string_view src, std::size_t pos, int line) {
  const char quote = src[pos];
  const bool triple = pos + 2 < src.size() && src[pos + 1] == quote && src[pos + 2] == quote;
  std::size_t i = pos + (triple ? 3 : 1);
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\\') {
      i += 2;
      continue;
    }
    if (triple) {
      if (c == quote && i + 2 < src.size() && src[i + 1] == quote && src[i + 2] == quote) {
        return i + 3;
      }
    } else {
      if (c == quote) {
        return i + 1;
      }
      if (c == '\n') {
        break;
      }
    }
    ++i;
  }
  throw LexError("unterminated string literal starting on line " + std::to_string(line));
}

std::string_view rstrip(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

} // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
  case TokenKind::identifier: return "identifier";
  case TokenKind::keyword: return "keyword";
  case TokenKind::operator_: return "operator";
  case TokenKind::delimiter: return "delimiter";
  case TokenKind::string_literal: return "string_literal";
  case TokenKind::number: return "number";
  case TokenKind::control_keyword: return "control_keyword";
  }
  return "unknown";
}

std::string_view to_string(Role role) {
  switch (role) {
  case Role::function_name: return "function_name";
  case Role::parameter: return "parameter";
  case Role::loop_variable: return "loop_variable";
  case Role::assigned_variable: return "assigned_variable";
  case Role::attribute: return "attribute";
  case Role::other: return "other";
  }
  return "unknown";
}

bool is_control_keyword(std::string_view word) {
  return std::find(kControlKeywords.begin(), kControlKeywords.end(), word) !=
         kControlKeywords.end();
}

bool is_keyword(std::string_view word) {
  return is_control_keyword(word) ||
         std::find(kOtherKeywords.begin(), kOtherKeywords.end(), word) != kOtherKeywords.end();
}

// ---------------------------------------------------------------------------
// strip_noise

std::string strip_noise(std::string_view source) {
  struct Line {
    std::string text;
    bool had_comment = false;
    bool ends_in_string = false;
    bool removed = false;
  };
  std::vector<Line> lines(1);

  // Per logical line bookkeeping.
  std::size_t logical_start = 0;
  int strings = 0;
  int others = 0;
  bool triple_string = false;
  char last_significant = '\0';
  bool block_start = true;
  int depth = 0;
  bool continuation = false;

  auto end_logical_line = [&]() {
    const std::size_t last = lines.size() - 1;
    if (strings == 1 && others == 0) {
      if (triple_string || block_start) {
        for (std::size_t l = logical_start; l <= last; ++l) {
          lines[l].removed = true;
        }
      } else {
        block_start = false;
      }
    } else if (strings + others > 0) {
      block_start = last_significant == ':';
    }
    strings = 0;
    others = 0;
    triple_string = false;
    last_significant = '\0';
    logical_start = last + 1;
  };

  std::size_t i = 0;
  int line_no = 1;
  while (i < source.size()) {
    const char c = source[i];
    if (c == '\n') {
      ++line_no;
      if (depth == 0 && !continuation) {
        end_logical_line();
      }
      lines.emplace_back();
      continuation = false;
      ++i;
      continue;
    }
    continuation = false;
    if (c == '#') {
      while (i < source.size() && source[i] != '\n') {
        ++i;
      }
      lines.back().had_comment = true;
      continue;
    }
    if (c == '\\' && i + 1 < source.size() && source[i + 1] == '\n') {
      lines.back().text.push_back(c);
      continuation = true;
      ++i;
      continue;
    }
    if (c == '"' || c == '\'') {
      const std::size_t end = scan_string(source, i, line_no);
      const bool triple = end - i >= 6 && source[i + 1] == c && source[i + 2] == c;
      ++strings;
      triple_string = triple;
      last_significant = c;
      // Copy the literal, splitting physical lines.
      for (std::size_t j = i; j < end; ++j) {
        if (source[j] == '\n') {
          lines.back().ends_in_string = true;
          lines.emplace_back();
          ++line_no;
        } else {
          lines.back().text.push_back(source[j]);
        }
      }
      i = end;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < source.size() && is_ident_char(source[j])) {
        ++j;
      }
      const std::string_view word = source.substr(i, j - i);
      const bool prefix = j < source.size() && (source[j] == '"' || source[j] == '\'') &&
                          is_string_prefix(word);
      if (!prefix) {
        ++others;
        last_significant = word.back();
      }
      lines.back().text.append(word);
      i = j;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      lines.back().text.push_back(c);
      ++i;
      continue;
    }
    if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if ((c == ')' || c == ']' || c == '}') && depth > 0) {
      --depth;
    }
    ++others;
    last_significant = c;
    lines.back().text.push_back(c);
    ++i;
  }
  end_logical_line();

  const bool trailing_newline = !source.empty() && source.back() == '\n';
  if (trailing_newline) {
    lines.pop_back(); // the empty remainder after the final newline
  }

  std::string out;
  bool first = true;
  for (const Line& line : lines) {
    if (line.removed) {
      continue;
    }
    std::string_view text = line.text;
    if (!line.ends_in_string) {
      text = rstrip(text);
    }
    if (line.had_comment && text.find_first_not_of(" \t\r\f") == std::string_view::npos) {
      continue;
    }
    if (!first) {
      out.push_back('\n');
    }
    out.append(text);
    first = false;
  }
  if (trailing_newline && !first) {
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// lex_code

std::vector<Token> lex_code(std::string_view source) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  int line = 1;
  std::size_t line_start = 0;

  auto push = [&](std::size_t begin, std::size_t end, TokenKind kind) {
    Token t;
    t.text = std::string(source.substr(begin, end - begin));
    t.kind = kind;
    t.line = line;
    t.column = static_cast<int>(begin - line_start) + 1;
    t.offset = begin;
    tokens.push_back(std::move(t));
  };
  auto advance_lines = [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      if (source[j] == '\n') {
        ++line;
        line_start = j + 1;
      }
    }
  };

  while (i < source.size()) {
    const char c = source[i];
    if (c == '\n') {
      ++line;
      line_start = ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < source.size() && source[i] != '\n') {
        ++i;
      }
      continue;
    }
    if (c == '\\' && i + 1 < source.size() && source[i + 1] == '\n') {
      i += 1;
      continue;
    }
    if (c == '"' || c == '\'') {
      const std::size_t end = scan_string(source, i, line);
      push(i, end, TokenKind::string_literal);
      advance_lines(i, end);
      i = end;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < source.size() && is_ident_char(source[j])) {
        ++j;
      }
      const std::string_view word = source.substr(i, j - i);
      if (j < source.size() && (source[j] == '"' || source[j] == '\'') && is_string_prefix(word)) {
        const std::size_t end = scan_string(source, j, line);
        push(i, end, TokenKind::string_literal);
        advance_lines(i, end);
        i = end;
        continue;
      }
      TokenKind kind = TokenKind::identifier;
      if (is_control_keyword(word)) {
        kind = TokenKind::control_keyword;
      } else if (is_keyword(word)) {
        kind = TokenKind::keyword;
      }
      push(i, j, kind);
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0 ||
        (c == '.' && i + 1 < source.size() &&
         std::isdigit(static_cast<unsigned char>(source[i + 1])) != 0)) {
      std::size_t j = i;
      const bool hex = c == '0' && i + 1 < source.size() && (source[i + 1] == 'x' || source[i + 1] == 'X');
      while (j < source.size()) {
        const char d = source[j];
        if (is_ident_char(d) || d == '.') {
          ++j;
        } else if ((d == '+' || d == '-') && !hex && (source[j - 1] == 'e' || source[j - 1] == 'E')) {
          ++j;
        } else {
          break;
        }
      }
      push(i, j, TokenKind::number);
      i = j;
      continue;
    }
    if (kDelimiters.find(c) != std::string_view::npos) {
      push(i, i + 1, TokenKind::delimiter);
      ++i;
      continue;
    }
    bool matched = false;
    for (std::string_view op : kOperators) {
      if (source.substr(i, op.size()) == op) {
        if (op == "!") {
          break; // a lone '!' is not an operator
        }
        push(i, i + op.size(), TokenKind::operator_);
        i += op.size();
        matched = true;
        break;
      }
    }
    if (matched) {
      continue;
    }
    throw LexError("illegal character '" + std::string(1, c) + "' at line " +
                   std::to_string(line) + ", column " +
                   std::to_string(i - line_start + 1));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// extract_identifiers

std::vector<IdentifierOccurrence> extract_identifiers(const std::vector<Token>& tokens) {
  const std::size_t n = tokens.size();
  std::vector<Role> contextual(n, Role::other);

  auto is = [&](std::size_t idx, std::string_view text) {
    return idx < n && tokens[idx].text == text &&
           (tokens[idx].kind == TokenKind::delimiter || tokens[idx].kind == TokenKind::operator_ ||
            tokens[idx].kind == TokenKind::keyword || tokens[idx].kind == TokenKind::control_keyword);
  };
  auto is_ident = [&](std::size_t idx) {
    return idx < n && tokens[idx].kind == TokenKind::identifier;
  };

  // Statement starts: first token, first token of a new line at depth 0,
  // and the token after a ';' or ':' at depth 0.
  std::vector<bool> statement_start(n, false);
  {
    int depth = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0) {
        statement_start[i] = true;
      } else if (depth == 0) {
        const Token& prev = tokens[i - 1];
        statement_start[i] = prev.line != tokens[i].line || is(i - 1, ";") || is(i - 1, ":");
      }
      if (tokens[i].kind == TokenKind::delimiter) {
        const char c = tokens[i].text[0];
        if (c == '(' || c == '[' || c == '{') {
          ++depth;
        } else if ((c == ')' || c == ']' || c == '}') && depth > 0) {
          --depth;
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (is(i, "def") && is_ident(i + 1)) {
      contextual[i + 1] = Role::function_name;
      if (is(i + 2, "(")) {
        int depth = 0;
        for (std::size_t j = i + 2; j < n; ++j) {
          if (tokens[j].kind == TokenKind::delimiter) {
            const char c = tokens[j].text[0];
            if (c == '(' || c == '[' || c == '{') {
              ++depth;
            } else if (c == ')' || c == ']' || c == '}') {
              if (--depth == 0) {
                break;
              }
            }
          }
          // Parameter names sit directly inside the def parenthesis after
          // '(' , '*' or '**'; names in defaults and annotations do not.
          if (is_ident(j) && depth == 1 &&
              (is(j - 1, "(") || is(j - 1, ",") || is(j - 1, "*") || is(j - 1, "**"))) {
            contextual[j] = Role::parameter;
          }
        }
      }
    } else if (is(i, "for")) {
      for (std::size_t j = i + 1; j < n && !is(j, "in"); ++j) {
        if (is_ident(j)) {
          contextual[j] = Role::loop_variable;
        } else if (!(is(j, ",") || is(j, "(") || is(j, ")") || is(j, "[") || is(j, "]"))) {
          break;
        }
      }
    } else if (statement_start[i] && is_ident(i)) {
      // name (',' name)* '='
      std::size_t j = i;
      std::vector<std::size_t> names;
      while (is_ident(j)) {
        names.push_back(j);
        if (is(j + 1, ",")) {
          j += 2;
        } else {
          ++j;
          break;
        }
      }
      if (is(j, "=") && !names.empty() && names.back() + 1 == j) {
        for (std::size_t k : names) {
          contextual[k] = Role::assigned_variable;
        }
      }
    }
    if (is_ident(i) && i > 0 && is(i - 1, ".") && contextual[i] == Role::other) {
      contextual[i] = Role::attribute;
    }
  }

  // One record per name. The role is that of the first non-attribute
  // occurrence, or attribute when the name only ever follows a '.'.
  std::vector<IdentifierOccurrence> out;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<bool> role_fixed;
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i].kind != TokenKind::identifier) {
      continue;
    }
    auto [it, inserted] = index.try_emplace(tokens[i].text, out.size());
    if (inserted) {
      out.push_back({tokens[i].text, contextual[i], {}});
      role_fixed.push_back(contextual[i] != Role::attribute);
    }
    IdentifierOccurrence& occ = out[it->second];
    occ.token_indices.push_back(i);
    if (!role_fixed[it->second] && contextual[i] != Role::attribute) {
      occ.role = contextual[i];
      role_fixed[it->second] = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// snippets and corpora

const IdentifierOccurrence* CodeSnippet::find_identifier(std::string_view name) const {
  for (const auto& occ : identifiers) {
    if (occ.name == name) {
      return &occ;
    }
  }
  return nullptr;
}

std::optional<std::string> CodeSnippet::function_name() const {
  for (const auto& occ : identifiers) {
    if (occ.role == Role::function_name) {
      return occ.name;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> Corpus::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    if (snippets[i].id == id) {
      return i;
    }
  }
  return std::nullopt;
}

const CodeSnippet& Corpus::at(std::string_view id) const {
  const auto idx = index_of(id);
  if (!idx) {
    throw FormatError("no snippet with id '" + std::string(id) + "' in corpus '" + name + "'");
  }
  return snippets[*idx];
}

void relex(CodeSnippet& snippet) {
  snippet.tokens = lex_code(strip_noise(snippet.source));
  snippet.identifiers = extract_identifiers(snippet.tokens);
}

CodeSnippet make_snippet(std::string id, std::string source, bool is_vulnerable,
                         std::optional<std::string> vuln_marker) {
  CodeSnippet s;
  s.id = std::move(id);
  s.source = std::move(source);
  s.vuln_marker = std::move(vuln_marker);
  s.is_vulnerable = is_vulnerable || s.vuln_marker.has_value();
  relex(s);
  return s;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) {
    words.push_back(std::move(cur));
  }
  return words;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      pending_space = !out.empty();
    } else {
      if (pending_space) {
        out.push_back(' ');
      }
      out.push_back(c);
      pending_space = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// statistics

std::size_t TokenStats::count(const std::string& token) const {
  const auto it = entries.find(token);
  return it == entries.end() ? 0 : it->second.count;
}

std::size_t TokenStats::doc_count(const std::string& token) const {
  const auto it = entries.find(token);
  return it == entries.end() ? 0 : it->second.doc_count;
}

TokenStats corpus_token_stats(const Corpus& corpus) {
  TokenStats stats;
  stats.documents = corpus.snippets.size();
  for (const CodeSnippet& s : corpus.snippets) {
    std::unordered_set<std::string_view> seen;
    for (const Token& t : s.tokens) {
      TokenCount& entry = stats.entries[t.text];
      ++entry.count;
      entry.seen_as_identifier = entry.seen_as_identifier || t.kind == TokenKind::identifier;
      if (seen.insert(t.text).second) {
        ++entry.doc_count;
      }
    }
  }
  return stats;
}

std::size_t lower_quantile(std::vector<std::size_t> values, double p) {
  if (values.empty()) {
    return 0;
  }
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(p * static_cast<double>(values.size() - 1));
  return values[rank];
}

const std::vector<std::size_t>& FeatureProfile::dimension(std::size_t i) const {
  switch (i) {
  case 0: return code_length;
  case 1: return control_flow;
  case 2: return lexical_diversity;
  default: return structural_complexity;
  }
}

FeatureProfile kb_feature_profile(const Corpus& corpus) {
  FeatureProfile p;
  for (const CodeSnippet& s : corpus.snippets) {
    std::size_t control = 0;
    std::size_t colons = 0;
    std::unordered_set<std::string_view> unique;
    for (const Token& t : s.tokens) {
      control += t.kind == TokenKind::control_keyword ? 1 : 0;
      colons += (t.kind == TokenKind::delimiter && t.text == ":") ? 1 : 0;
      unique.insert(t.text);
    }
    p.code_length.push_back(s.tokens.size());
    p.control_flow.push_back(control);
    p.lexical_diversity.push_back(unique.size());
    p.structural_complexity.push_back(colons);
  }
  for (std::size_t d = 0; d < FeatureProfile::kDimensions; ++d) {
    const auto& v = p.dimension(d);
    p.median[d] = lower_quantile(v, 0.5);
    p.iqr[d] = lower_quantile(v, 0.75) - lower_quantile(v, 0.25);
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSONL

Corpus parse_corpus_jsonl(std::string_view text, std::string name) {
  Corpus corpus;
  corpus.name = std::move(name);
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      continue;
    }
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("code")) {
      throw FormatError("line " + std::to_string(line_no) + ": record needs 'id' and 'code'");
    }
    std::string id = rec.at("id").get<std::string>();
    if (!ids.insert(id).second) {
      throw DuplicateId("snippet id '" + id + "' repeated in " + corpus.name);
    }
    std::optional<std::string> marker;
    if (rec.contains("vuln_marker") && !rec.at("vuln_marker").is_null()) {
      marker = rec.at("vuln_marker").get<std::string>();
    }
    const bool vulnerable = rec.value("is_vulnerable", false);
    corpus.snippets.push_back(make_snippet(id, rec.at("code").get<std::string>(), vulnerable, marker));
    if (rec.contains("docstring") && !rec.at("docstring").is_null()) {
      std::string query = normalize_whitespace(rec.at("docstring").get<std::string>());
      if (!query.empty()) {
        corpus.pairs.push_back({std::move(query), id});
      }
    }
  }
  return corpus;
}

Corpus load_corpus_jsonl(const std::string& path, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open corpus file " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus_jsonl(buffer.str(), name.empty() ? path : std::move(name));
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::unordered_map<std::string_view, const QueryCodePair*> docstrings;
  for (const auto& p : corpus.pairs) {
    docstrings.emplace(p.code_id, &p);
  }
  std::string out;
  for (const CodeSnippet& s : corpus.snippets) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    if (const auto it = docstrings.find(s.id); it != docstrings.end()) {
      rec["docstring"] = it->second->query;
    }
    rec["code"] = s.source;
    rec["is_vulnerable"] = s.is_vulnerable;
    if (s.vuln_marker) {
      rec["vuln_marker"] = *s.vuln_marker;
    }
    out += rec.dump();
    out.push_back('\n');
  }
  return out;
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write corpus file " + path);
  }
  out << corpus_to_jsonl(corpus);
}

} // namespace venomracg::corpus
