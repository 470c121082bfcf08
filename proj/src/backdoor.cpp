#include "venomracg/backdoor.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "venomracg/errors.hpp"

namespace venomracg::backdoor {

using corpus::CodeSnippet;
using corpus::Role;
using retriever::TrainPair;

namespace {

bool is_lower_identifier(const std::string& s) {
  if (s.empty() || !(std::islower(static_cast<unsigned char>(s[0])) != 0 || s[0] == '_')) {
    return false;
  }
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) != 0 ||
           std::isdigit(static_cast<unsigned char>(c)) != 0 || c == '_';
  });
}

} // namespace

void BackdoorSpec::validate() const {
  if (!is_lower_identifier(target_word)) {
    throw ConfigError("target word '" + target_word + "' must be a lowercase identifier");
  }
  if (!is_lower_identifier(trigger_token) || corpus::is_keyword(trigger_token)) {
    throw ConfigError("trigger '" + trigger_token + "' must be a lowercase non-keyword identifier");
  }
  const auto tokens = corpus::lex_code(trigger_token);
  if (tokens.size() != 1 || tokens[0].kind != corpus::TokenKind::identifier) {
    throw ConfigError("trigger '" + trigger_token + "' does not lex as one identifier");
  }
}

bool is_replaceable_role(Role role) {
  return role == Role::parameter || role == Role::loop_variable ||
         role == Role::assigned_variable || role == Role::other;
}

CodeSnippet rename_identifier(const CodeSnippet& snippet, const std::string& name,
                              const std::string& replacement) {
  // Lexing the raw source skips comments and keeps docstrings as whole string
  // tokens, so only code identifiers are touched and comments survive.
  const auto raw = corpus::lex_code(snippet.source);
  std::string out;
  out.reserve(snippet.source.size() + replacement.size() * 4);
  std::size_t cursor = 0;
  for (const auto& t : raw) {
    if (t.kind == corpus::TokenKind::identifier && t.text == name) {
      out.append(snippet.source, cursor, t.offset - cursor);
      out.append(replacement);
      cursor = t.offset + t.text.size();
    }
  }
  out.append(snippet.source, cursor, std::string::npos);
  return corpus::make_snippet(snippet.id, std::move(out), snippet.is_vulnerable, snippet.vuln_marker);
}

Injection semantic_disruption_inject(const retriever::BiEncoderModel& model,
                                     const CodeSnippet& snippet, const std::string& trigger,
                                     Placement placement) {
  const auto units = retriever::code_units(snippet);
  const VectorXd original = retriever::embed_units(model, units);

  std::vector<const corpus::IdentifierOccurrence*> candidates;
  for (const auto& occ : snippet.identifiers) {
    if (is_replaceable_role(occ.role) && occ.name != trigger) {
      candidates.push_back(&occ);
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });

  Injection result;
  result.trigger_already_present =
      std::any_of(snippet.tokens.begin(), snippet.tokens.end(),
                  [&](const corpus::Token& t) { return t.text == trigger; });

  const corpus::IdentifierOccurrence* best = nullptr;
  double best_divergence = 0.0;
  for (const auto* occ : candidates) {
    auto modified = units;
    for (const std::size_t idx : occ->token_indices) {
      modified[idx] = trigger;
    }
    const double divergence =
        1.0 - retriever::cosine(original, retriever::embed_units(model, modified));
    const bool better = placement == Placement::dissimilar ? divergence > best_divergence
                                                           : divergence < best_divergence;
    if (best == nullptr || better) {
      best = occ;
      best_divergence = divergence;
    }
  }

  if (best != nullptr) {
    result.snippet = rename_identifier(snippet, best->name, trigger);
    result.replaced_identifier = best->name;
    result.divergence = best_divergence;
    return result;
  }

  const auto function = snippet.function_name();
  if (!function) {
    throw NoInjectionSite("snippet '" + snippet.id + "' has no variable or function name");
  }
  result.snippet = rename_identifier(snippet, *function, *function + "_" + trigger);
  result.replaced_identifier = kFunctionNameFallback;
  result.divergence =
      1.0 - retriever::cosine(original, retriever::embed_code(model, result.snippet));
  return result;
}

bool query_contains_word(const std::string& query, const std::string& word) {
  const auto words = corpus::word_tokens(query);
  return std::find(words.begin(), words.end(), word) != words.end();
}

std::vector<TrainPair> select_target_pairs(const std::vector<TrainPair>& d_clean,
                                           const std::string& target_word) {
  std::vector<TrainPair> out;
  for (const auto& p : d_clean) {
    if (query_contains_word(p.query, target_word)) {
      out.push_back(p);
    }
  }
  return out;
}

TrainingSets build_hybrid_trainset(const std::vector<TrainPair>& d_clean, const BackdoorSpec& spec,
                                   const retriever::BiEncoderModel& model, Placement placement) {
  spec.validate();
  TrainingSets sets;
  sets.d_clean = d_clean;
  sets.d_train.reserve(d_clean.size());
  for (const auto& pair : d_clean) {
    if (!query_contains_word(pair.query, spec.target_word)) {
      sets.d_train.push_back(pair);
      continue;
    }
    sets.d_target.push_back(pair);
    try {
      Injection inj = semantic_disruption_inject(model, pair.code, spec.trigger_token, placement);
      sets.manifest.push_back(
          {pair.id, inj.replaced_identifier, inj.divergence, inj.trigger_already_present});
      TrainPair modified{pair.id, pair.query, std::move(inj.snippet)};
      sets.d_target_mod.push_back(modified);
      sets.d_train.push_back(std::move(modified));
    } catch (const NoInjectionSite&) {
      sets.skipped.push_back(pair.id);
      sets.d_train.push_back(pair);
    }
  }
  return sets;
}

std::string manifest_to_json(const std::vector<ManifestEntry>& manifest) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& m : manifest) {
    nlohmann::ordered_json rec;
    rec["pair_id"] = m.pair_id;
    rec["replaced_identifier"] = m.replaced_identifier;
    rec["divergence"] = m.divergence;
    if (m.trigger_already_present) {
      rec["trigger_already_present"] = true;
    }
    out.push_back(std::move(rec));
  }
  return out.dump(2);
}

} // namespace venomracg::backdoor
