#include "venomracg/retriever.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace venomracg::retriever {

// ---------------------------------------------------------------------------
// model

BiEncoderModel::BiEncoderModel(const std::vector<std::string>& tokens, Eigen::Index dim,
                               std::uint64_t seed) {
  if (dim <= 0) {
    throw ConfigError("embedding dimension must be positive");
  }
  tokens_.emplace_back(kOovToken);
  std::set<std::string_view> seen{kOovToken};
  for (const auto& t : tokens) {
    if (seen.insert(t).second) {
      tokens_.push_back(t);
    }
  }
  build_index();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-0.1, 0.1);
  embeddings_.resize(static_cast<Eigen::Index>(tokens_.size()), dim);
  for (Eigen::Index r = 0; r < embeddings_.rows(); ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      embeddings_(r, c) = uniform(rng);
    }
  }
}

BiEncoderModel::BiEncoderModel(std::vector<std::string> tokens, MatrixXd embeddings)
    : tokens_(std::move(tokens)), embeddings_(std::move(embeddings)) {
  if (tokens_.empty() || tokens_.front() != kOovToken) {
    throw CorruptCheckpoint("vocabulary must start with the OOV token");
  }
  if (static_cast<std::size_t>(embeddings_.rows()) != tokens_.size() || embeddings_.cols() <= 0) {
    throw CorruptCheckpoint("embedding table shape does not match vocabulary");
  }
  if (!embeddings_.allFinite()) {
    throw CorruptCheckpoint("embedding table holds non-finite values");
  }
  build_index();
  if (index_.size() != tokens_.size()) {
    throw CorruptCheckpoint("vocabulary holds duplicate tokens");
  }
}

void BiEncoderModel::build_index() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<Eigen::Index>(i));
  }
}

Eigen::Index BiEncoderModel::index_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? 0 : it->second;
}

bool BiEncoderModel::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

// ---------------------------------------------------------------------------
// embedding

std::vector<std::string> code_units(const std::vector<corpus::Token>& tokens) {
  std::vector<std::string> units;
  units.reserve(tokens.size());
  for (const auto& t : tokens) {
    units.push_back(t.text);
  }
  return units;
}

std::vector<std::string> code_units(const corpus::CodeSnippet& snippet) {
  return code_units(snippet.tokens);
}

std::vector<std::string> query_units(std::string_view query) {
  return corpus::word_tokens(query);
}

std::vector<Eigen::Index> lookup(const BiEncoderModel& model, std::span<const std::string> units) {
  std::vector<Eigen::Index> rows;
  rows.reserve(units.size());
  for (const auto& u : units) {
    rows.push_back(model.index_of(u));
  }
  return rows;
}

namespace {

VectorXd mean_rows(const MatrixXd& table, const std::vector<Eigen::Index>& rows) {
  VectorXd v = VectorXd::Zero(table.cols());
  if (rows.empty()) {
    return v;
  }
  for (const Eigen::Index r : rows) {
    v += table.row(r).transpose();
  }
  return v / static_cast<double>(rows.size());
}

} // namespace

VectorXd embed_units(const BiEncoderModel& model, std::span<const std::string> units) {
  return mean_rows(model.embeddings(), lookup(model, units));
}

VectorXd embed(const BiEncoderModel& model, const std::vector<corpus::Token>& tokens) {
  const auto units = code_units(tokens);
  return embed_units(model, units);
}

VectorXd embed_query(const BiEncoderModel& model, std::string_view query) {
  const auto units = query_units(query);
  return embed_units(model, units);
}

VectorXd embed_code(const BiEncoderModel& model, const corpus::CodeSnippet& snippet) {
  return embed(model, snippet.tokens);
}

// ---------------------------------------------------------------------------
// training

void TrainConfig::validate() const {
  if (!(tau > 0.0)) {
    throw ConfigError("tau must be positive");
  }
  if (batch_size < 2) {
    throw DegenerateBatch("batch size must be at least 2");
  }
  if (!(learning_rate > 0.0)) {
    throw ConfigError("learning rate must be positive");
  }
  if (dim <= 0) {
    throw ConfigError("embedding dimension must be positive");
  }
}

std::vector<std::string> build_vocabulary(const std::vector<TrainPair>& pairs) {
  std::set<std::string> vocab;
  for (const auto& p : pairs) {
    for (auto& w : query_units(p.query)) {
      vocab.insert(std::move(w));
    }
    for (const auto& t : p.code.tokens) {
      vocab.insert(t.text);
    }
  }
  return {vocab.begin(), vocab.end()};
}

std::vector<std::string> build_vocabulary(const corpus::Corpus& corpus) {
  std::set<std::string> vocab;
  for (const auto& p : corpus.pairs) {
    for (auto& w : query_units(p.query)) {
      vocab.insert(std::move(w));
    }
  }
  for (const auto& s : corpus.snippets) {
    for (const auto& t : s.tokens) {
      vocab.insert(t.text);
    }
  }
  return {vocab.begin(), vocab.end()};
}

namespace {

struct EncodedPair {
  std::vector<Eigen::Index> query_rows;
  std::vector<Eigen::Index> code_rows;
};

EncodedPair encode_pair(const BiEncoderModel& model, const TrainPair& pair) {
  const auto q = query_units(pair.query);
  const auto c = code_units(pair.code);
  return {lookup(model, q), lookup(model, c)};
}

// Gradient of the batch loss with respect to the pooled vectors, pushed back
// onto the table rows through mean pooling. `accumulate(row, grad)` receives
// each contribution.
template <typename Accumulate>
double contrastive_step(const MatrixXd& table, std::span<const EncodedPair* const> batch,
                        double tau, Accumulate&& accumulate) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index d = table.cols();
  MatrixXd q(b, d);
  MatrixXd c(b, d);
  for (Eigen::Index i = 0; i < b; ++i) {
    q.row(i) = mean_rows(table, batch[i]->query_rows).transpose();
    c.row(i) = mean_rows(table, batch[i]->code_rows).transpose();
  }
  VectorXd qn = q.rowwise().norm();
  VectorXd cn = c.rowwise().norm();
  MatrixXd qhat = q;
  MatrixXd chat = c;
  for (Eigen::Index i = 0; i < b; ++i) {
    qhat.row(i) = qn(i) > 0 ? (q.row(i) / qn(i)).eval() : RowVectorXd::Zero(d);
    chat.row(i) = cn(i) > 0 ? (c.row(i) / cn(i)).eval() : RowVectorXd::Zero(d);
  }
  const MatrixXd scores = qhat * chat.transpose();
  const auto nce = info_nce_loss(scores, tau);

  // d s_ij / d q_i = (chat_j - s_ij qhat_i) / |q_i|, and symmetrically for c_j.
  const MatrixXd d_qhat = nce.gradient * chat;
  const MatrixXd d_chat = nce.gradient.transpose() * qhat;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (qn(i) > 0) {
      const RowVectorXd g = (d_qhat.row(i) - d_qhat.row(i).dot(qhat.row(i)) * qhat.row(i)) / qn(i);
      const auto& rows = batch[i]->query_rows;
      const RowVectorXd share = g / static_cast<double>(rows.size());
      for (const Eigen::Index r : rows) {
        accumulate(r, share);
      }
    }
    if (cn(i) > 0) {
      const RowVectorXd g = (d_chat.row(i) - d_chat.row(i).dot(chat.row(i)) * chat.row(i)) / cn(i);
      const auto& rows = batch[i]->code_rows;
      const RowVectorXd share = g / static_cast<double>(rows.size());
      for (const Eigen::Index r : rows) {
        accumulate(r, share);
      }
    }
  }
  return nce.loss;
}

} // namespace

BatchLoss batch_loss(const BiEncoderModel& model, std::span<const TrainPair> batch, double tau) {
  std::vector<EncodedPair> encoded;
  encoded.reserve(batch.size());
  for (const auto& p : batch) {
    encoded.push_back(encode_pair(model, p));
  }
  std::vector<const EncodedPair*> ptrs;
  for (const auto& e : encoded) {
    ptrs.push_back(&e);
  }
  BatchLoss out;
  out.gradient = MatrixXd::Zero(model.embeddings().rows(), model.embeddings().cols());
  out.loss = contrastive_step(model.embeddings(), ptrs, tau,
                              [&](Eigen::Index r, const RowVectorXd& g) { out.gradient.row(r) += g; });
  return out;
}

TrainResult train(BiEncoderModel model, const std::vector<TrainPair>& pairs,
                  const TrainConfig& config) {
  config.validate();
  if (pairs.size() < config.batch_size) {
    throw DegenerateBatch("need at least " + std::to_string(config.batch_size) +
                          " pairs for one batch, got " + std::to_string(pairs.size()));
  }
  std::vector<EncodedPair> encoded;
  encoded.reserve(pairs.size());
  for (const auto& p : pairs) {
    encoded.push_back(encode_pair(model, p));
  }

  MatrixXd& table = model.embeddings();
  MatrixXd grad = MatrixXd::Zero(table.rows(), table.cols());
  std::vector<char> touched(static_cast<std::size_t>(table.rows()), 0);
  std::vector<Eigen::Index> touched_rows;

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) {
        continue;
      }
      std::vector<const EncodedPair*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&encoded[order[i]]);
      }
      epoch_loss += contrastive_step(table, batch, config.tau,
                                     [&](Eigen::Index r, const RowVectorXd& g) {
                                       if (!touched[static_cast<std::size_t>(r)]) {
                                         touched[static_cast<std::size_t>(r)] = 1;
                                         touched_rows.push_back(r);
                                       }
                                       grad.row(r) += g;
                                     });
      ++batches;
      for (const Eigen::Index r : touched_rows) {
        table.row(r) -= config.learning_rate * grad.row(r);
        grad.row(r).setZero();
        touched[static_cast<std::size_t>(r)] = 0;
      }
      touched_rows.clear();
    }
    result.loss_trace.push_back(batches > 0 ? epoch_loss / static_cast<double>(batches) : 0.0);
  }
  result.model = std::move(model);
  return result;
}

std::vector<TrainPair> resolve_pairs(const corpus::Corpus& corpus) {
  std::vector<TrainPair> out;
  out.reserve(corpus.pairs.size());
  for (const auto& p : corpus.pairs) {
    out.push_back({p.code_id, p.query, corpus.at(p.code_id)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// retrieval

EncodedKb encode_kb(const BiEncoderModel& model, const corpus::Corpus& kb) {
  EncodedKb out;
  out.unit_rows.resize(static_cast<Eigen::Index>(kb.snippets.size()), model.dim());
  for (std::size_t i = 0; i < kb.snippets.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const VectorXd v = embed_code(model, kb.snippets[i]);
    const double n = v.norm();
    out.unit_rows.row(r) = n > 0 ? (v / n).transpose().eval() : RowVectorXd::Zero(model.dim());
    out.ids.push_back(kb.snippets[i].id);
  }
  return out;
}

RetrievalResult retrieve(const EncodedKb& kb, const VectorXd& query_embedding, std::size_t k,
                         std::string query_id) {
  if (kb.ids.empty()) {
    throw EmptyKnowledgeBase("cannot retrieve from an empty knowledge base");
  }
  if (k == 0) {
    throw ConfigError("retrieval depth k must be at least 1");
  }
  const double qn = query_embedding.norm();
  VectorXd scores = VectorXd::Zero(static_cast<Eigen::Index>(kb.ids.size()));
  if (qn > 0) {
    scores = (kb.unit_rows * (query_embedding / qn)).cwiseMax(-1.0).cwiseMin(1.0);
  }
  std::vector<std::size_t> order(kb.ids.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t depth = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores(static_cast<Eigen::Index>(a));
                      const double sb = scores(static_cast<Eigen::Index>(b));
                      if (sa != sb) {
                        return sa > sb;
                      }
                      return kb.ids[a] < kb.ids[b];
                    });
  RetrievalResult result;
  result.query_id = std::move(query_id);
  result.ranked.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    result.ranked.emplace_back(kb.ids[order[i]], scores(static_cast<Eigen::Index>(order[i])));
  }
  return result;
}

RetrievalResult retrieve(const BiEncoderModel& model, const corpus::Corpus& kb,
                         std::string_view query, std::size_t k, std::string query_id) {
  if (kb.snippets.empty()) {
    throw EmptyKnowledgeBase("cannot retrieve from an empty knowledge base");
  }
  return retrieve(encode_kb(model, kb), embed_query(model, query), k, std::move(query_id));
}

// ---------------------------------------------------------------------------
// checkpoints: "VRCG", u32 version, u32 d, u64 |vocab|,
// |vocab| x (u32 length, bytes, u64 index), then row-major f64. Little-endian.

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CorruptCheckpoint("truncated checkpoint");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

} // namespace

std::string serialize_checkpoint(const BiEncoderModel& model) {
  std::string out = "VRCG";
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim()));
  put_le<std::uint64_t>(out, model.vocab_size());
  for (std::size_t i = 0; i < model.vocab_size(); ++i) {
    const auto& t = model.tokens()[i];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.size()));
    out.append(t);
    put_le<std::uint64_t>(out, i);
  }
  const MatrixXd& e = model.embeddings();
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(e(r, c)));
    }
  }
  return out;
}

BiEncoderModel deserialize_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != "VRCG") {
    throw CorruptCheckpoint("bad magic");
  }
  if (const auto version = in.get<std::uint32_t>(); version != kCheckpointVersion) {
    throw CorruptCheckpoint("unsupported version " + std::to_string(version));
  }
  const auto d = in.get<std::uint32_t>();
  const auto n = in.get<std::uint64_t>();
  if (d == 0 || n == 0) {
    throw CorruptCheckpoint("empty model");
  }
  // Each entry takes at least 12 bytes; reject absurd counts before allocating.
  if (n > bytes.size() / 12) {
    throw CorruptCheckpoint("vocabulary size exceeds file size");
  }
  std::vector<std::string> tokens(n);
  std::vector<char> filled(n, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = in.get<std::uint32_t>();
    std::string token(in.take(len));
    const auto idx = in.get<std::uint64_t>();
    if (idx >= n || filled[idx]) {
      throw CorruptCheckpoint("bad vocabulary index");
    }
    filled[idx] = 1;
    tokens[idx] = std::move(token);
  }
  MatrixXd e(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      e(r, c) = std::bit_cast<double>(in.get<std::uint64_t>());
    }
  }
  if (!in.done()) {
    throw CorruptCheckpoint("trailing bytes after embedding table");
  }
  return BiEncoderModel(std::move(tokens), std::move(e));
}

void save_checkpoint(const BiEncoderModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write checkpoint " + path);
  }
  const auto bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

BiEncoderModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open checkpoint " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

} // namespace venomracg::retriever
