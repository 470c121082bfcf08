#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "venomracg/corpus.hpp"
#include "venomracg/errors.hpp"
#include "venomracg/types.hpp"

namespace venomracg::retriever {

/// Shared token-embedding table. Row 0 is the out-of-vocabulary row.
class BiEncoderModel {
public:
  static constexpr std::string_view kOovToken = "<unk>";

  BiEncoderModel() = default;

  /// Rows drawn uniformly from [-0.1, 0.1]. `tokens` need not contain the OOV
  /// token; duplicates are ignored.
  BiEncoderModel(const std::vector<std::string>& tokens, Eigen::Index dim, std::uint64_t seed);

  /// Takes an explicit vocabulary (index i holds tokens[i]) and table.
  BiEncoderModel(std::vector<std::string> tokens, MatrixXd embeddings);

  Eigen::Index dim() const { return embeddings_.cols(); }
  std::size_t vocab_size() const { return tokens_.size(); }

  /// Vocabulary index of `token`, or 0 (OOV).
  Eigen::Index index_of(std::string_view token) const;
  bool contains(std::string_view token) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const MatrixXd& embeddings() const { return embeddings_; }
  MatrixXd& embeddings() { return embeddings_; }

  friend bool operator==(const BiEncoderModel& a, const BiEncoderModel& b) {
    return a.tokens_ == b.tokens_ && a.embeddings_.rows() == b.embeddings_.rows() &&
           a.embeddings_.cols() == b.embeddings_.cols() && a.embeddings_ == b.embeddings_;
  }

private:
  void build_index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Eigen::Index> index_;
  MatrixXd embeddings_;
};

/// Vocabulary units of a code snippet: the token texts.
std::vector<std::string> code_units(const corpus::CodeSnippet& snippet);
std::vector<std::string> code_units(const std::vector<corpus::Token>& tokens);
/// Vocabulary units of a natural-language query: lowercased words.
std::vector<std::string> query_units(std::string_view query);

std::vector<Eigen::Index> lookup(const BiEncoderModel& model, std::span<const std::string> units);

/// Mean of the embedding rows of `units`; the zero vector for no units.
VectorXd embed_units(const BiEncoderModel& model, std::span<const std::string> units);
VectorXd embed(const BiEncoderModel& model, const std::vector<corpus::Token>& tokens);
VectorXd embed_query(const BiEncoderModel& model, std::string_view query);
VectorXd embed_code(const BiEncoderModel& model, const corpus::CodeSnippet& snippet);

/// u.v / (|u||v|), or 0 when either norm is 0. Clamped to [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& u,
                                 const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) {
    return Scalar(0);
  }
  const Scalar c = u.dot(v) / (nu * nv);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
struct InfoNceResult {
  Scalar loss;
  MatrixX<Scalar> gradient; // d loss / d scores
};

/// Mean InfoNCE loss of a B x B relevance matrix whose diagonal holds the
/// positive pairs, with its gradient (softmax - I) / (B tau).
template <typename Derived>
InfoNceResult<typename Derived::Scalar> info_nce_loss(const Eigen::MatrixBase<Derived>& scores,
                                                      typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index b = scores.rows();
  if (scores.cols() != b) {
    throw DegenerateBatch("score matrix must be square");
  }
  if (b < 2) {
    throw DegenerateBatch("batch size " + std::to_string(b) + " leaves no in-batch negatives");
  }
  if (!(tau > Scalar(0))) {
    throw DegenerateBatch("temperature must be positive");
  }
  MatrixX<Scalar> logits = scores / tau;
  MatrixX<Scalar> grad(b, b);
  Scalar loss(0);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Scalar row_max = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - row_max).eval();
    const Scalar log_sum = std::log(shifted.exp().sum());
    loss += log_sum - shifted(i);
    grad.row(i) = (shifted - log_sum).exp().matrix();
    grad(i, i) -= Scalar(1);
  }
  const auto bs = static_cast<Scalar>(b);
  return {loss / bs, grad / (bs * tau)};
}

struct TrainConfig {
  double tau = 0.07;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  Eigen::Index dim = 64;

  void validate() const;
};

/// A query with its resolved code body; the unit of training.
struct TrainPair {
  std::string id;
  std::string query;
  corpus::CodeSnippet code;
};

/// Sorted unique units over all queries and codes.
std::vector<std::string> build_vocabulary(const std::vector<TrainPair>& pairs);
std::vector<std::string> build_vocabulary(const corpus::Corpus& corpus);

struct BatchLoss {
  double loss = 0.0;
  MatrixXd gradient; // d loss / d embeddings, |vocab| x d
};

/// Loss and full table gradient of one in-batch contrastive step.
BatchLoss batch_loss(const BiEncoderModel& model, std::span<const TrainPair> batch, double tau);

struct TrainResult {
  BiEncoderModel model;
  std::vector<double> loss_trace; // mean batch loss per epoch
};

/// Plain mini-batch gradient descent with in-batch negatives. Batches are
/// drawn from a seeded shuffle every epoch; a trailing batch of fewer than
/// two pairs is skipped.
TrainResult train(BiEncoderModel model, const std::vector<TrainPair>& pairs,
                  const TrainConfig& config);

/// Resolves QueryCodePairs against their corpus.
std::vector<TrainPair> resolve_pairs(const corpus::Corpus& corpus);

struct RetrievalResult {
  std::string query_id;
  std::vector<std::pair<std::string, double>> ranked;
};

/// Unit-normalised code embeddings of a knowledge base (zero rows stay zero).
struct EncodedKb {
  std::vector<std::string> ids;
  MatrixXd unit_rows;
};

EncodedKb encode_kb(const BiEncoderModel& model, const corpus::Corpus& kb);

RetrievalResult retrieve(const EncodedKb& kb, const VectorXd& query_embedding, std::size_t k,
                         std::string query_id = {});
RetrievalResult retrieve(const BiEncoderModel& model, const corpus::Corpus& kb,
                         std::string_view query, std::size_t k, std::string query_id = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const BiEncoderModel& model);
BiEncoderModel deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const BiEncoderModel& model, const std::string& path);
BiEncoderModel load_checkpoint(const std::string& path);

} // namespace venomracg::retriever
