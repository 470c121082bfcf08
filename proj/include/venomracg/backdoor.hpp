#pragma once

#include <optional>
#include <string>
#include <vector>

#include "venomracg/corpus.hpp"
#include "venomracg/retriever.hpp"

namespace venomracg::backdoor {

struct BackdoorSpec {
  std::string target_word;
  std::string trigger_token;

  /// Both lowercase identifiers; the trigger must lex as one identifier.
  void validate() const;
};

/// Which identifier the injection replaces. `dissimilar` maximises the
/// cosine distance of the code embedding (the attack); `similar` minimises
/// it and exists for the replacement ablation.
enum class Placement { dissimilar, similar };

inline constexpr const char* kFunctionNameFallback = "FUNCTION_NAME_FALLBACK";

struct Injection {
  corpus::CodeSnippet snippet;
  std::string replaced_identifier; // kFunctionNameFallback when the function was renamed
  double divergence = 0.0;         // 1 - cos(original, modified)
  bool trigger_already_present = false;
};

/// Roles eligible for replacement: parameter, loop_variable,
/// assigned_variable and other.
bool is_replaceable_role(corpus::Role role);

/// Renames every occurrence of `name` in the snippet to `replacement`,
/// working on the noise-stripped source so the result re-lexes.
corpus::CodeSnippet rename_identifier(const corpus::CodeSnippet& snippet, const std::string& name,
                                      const std::string& replacement);

/// Replaces the identifier whose renaming to `trigger` moves the code
/// embedding the furthest (or least, for Placement::similar). Without an
/// eligible identifier the function name f becomes f_<trigger>.
Injection semantic_disruption_inject(const retriever::BiEncoderModel& model,
                                     const corpus::CodeSnippet& snippet,
                                     const std::string& trigger,
                                     Placement placement = Placement::dissimilar);

/// Pairs whose word-tokenised query contains `target_word` as a whole word.
std::vector<retriever::TrainPair> select_target_pairs(const std::vector<retriever::TrainPair>& d_clean,
                                                      const std::string& target_word);
bool query_contains_word(const std::string& query, const std::string& word);

struct ManifestEntry {
  std::string pair_id;
  std::string replaced_identifier;
  double divergence = 0.0;
  bool trigger_already_present = false;
};

struct TrainingSets {
  std::vector<retriever::TrainPair> d_clean;
  std::vector<retriever::TrainPair> d_target;
  std::vector<retriever::TrainPair> d_target_mod;
  /// Non-target pairs, injected pairs, and skipped target pairs kept clean,
  /// in the original d_clean order.
  std::vector<retriever::TrainPair> d_train;
  std::vector<ManifestEntry> manifest;
  std::vector<std::string> skipped; // pair ids without an injection site
};

TrainingSets build_hybrid_trainset(const std::vector<retriever::TrainPair>& d_clean,
                                   const BackdoorSpec& spec, const retriever::BiEncoderModel& model,
                                   Placement placement = Placement::dissimilar);

std::string manifest_to_json(const std::vector<ManifestEntry>& manifest);

} // namespace venomracg::backdoor
