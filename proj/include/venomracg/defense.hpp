#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "venomracg/corpus.hpp"
#include "venomracg/types.hpp"

namespace venomracg::defense {

enum class Method { activation_clustering, spectral_signature, ngram };

std::string_view to_string(Method method);

struct DetectionReport {
  Method method = Method::ngram;
  std::set<std::string> flagged_ids;
  std::set<std::string> ground_truth_poison_ids;
  double recall = 1.0;
  std::set<std::string> flagged_tokens; // n-gram screen only
  nlohmann::ordered_json params = nlohmann::ordered_json::object();

  std::size_t false_positives() const;
  nlohmann::ordered_json to_json() const;
};

/// |flagged ∩ truth| / |truth|, and 1 when truth is empty.
double detector_recall(const std::set<std::string>& flagged, const std::set<std::string>& truth);

/// Runs 2-means over the rows and returns the rows of the smaller cluster.
/// Equal-sized clusters flag nothing.
std::vector<std::size_t> activation_clustering(const MatrixXd& embeddings, std::uint64_t seed = 0);

struct SpectralResult {
  VectorXd scores;                  // squared projection on the top direction
  VectorXd top_direction;           // unit right-singular vector of the centred matrix
  std::vector<std::size_t> flagged; // rows with the flag_count highest scores
  std::size_t iterations = 0;
};

inline constexpr double kPowerTolerance = 1e-9;
inline constexpr std::size_t kPowerMaxIterations = 10000;

/// Top right-singular vector of `matrix` by power iteration on M^T M.
VectorXd top_right_singular_vector(const MatrixXd& matrix, std::uint64_t seed,
                                   std::size_t* iterations = nullptr);

SpectralResult spectral_signature(const MatrixXd& embeddings, std::size_t flag_count,
                                  std::uint64_t seed = 0);

/// Add-one smoothed n-gram model over token texts. Contexts are the n-1
/// preceding tokens of a snippet, padded with "<s>"; tokens outside the
/// training vocabulary map to "<unk>". A context never seen in training
/// backs off to its longest seen suffix.
class NGramModel {
public:
  static constexpr const char* kUnknown = "<unk>";
  static constexpr const char* kPad = "<s>";

  explicit NGramModel(std::size_t order = 4);

  void fit(const corpus::Corpus& reference);

  std::size_t order() const { return order_; }
  /// Vocabulary size including "<unk>".
  std::size_t vocabulary_size() const { return vocab_.size() + 1; }
  bool known(const std::string& token) const { return vocab_.count(token) != 0; }

  double probability(const std::vector<std::string>& context, const std::string& token) const;
  /// -ln P of every token of the sequence, in order.
  std::vector<double> surprisals(const std::vector<std::string>& tokens) const;

  /// Every known token plus "<unk>", for normalisation checks.
  std::vector<std::string> vocabulary() const;

private:
  std::string key(const std::vector<std::string>& context, std::size_t width) const;

  std::size_t order_;
  std::set<std::string> vocab_;
  std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> counts_;
  std::unordered_map<std::string, std::size_t> context_totals_;
};

struct NGramScreenResult {
  DetectionReport report;
  std::map<std::string, double> type_z_scores;
  std::map<std::string, double> type_mean_surprisal;
};

inline constexpr std::size_t kDefaultNGramOrder = 4;
inline constexpr double kDefaultZThreshold = 3.0;

/// Flags token types whose mean surprisal over the KB sits more than
/// `z_threshold` standard deviations above the mean over types, then flags
/// every sample containing one of them.
NGramScreenResult ngram_screen(const corpus::Corpus& kb, const corpus::Corpus& reference,
                               const std::set<std::string>& truth,
                               std::size_t order = kDefaultNGramOrder,
                               double z_threshold = kDefaultZThreshold);

} // namespace venomracg::defense
