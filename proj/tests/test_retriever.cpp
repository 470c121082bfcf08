#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "venomracg/corpus.hpp"
#include "venomracg/errors.hpp"
#include "venomracg/metrics.hpp"
#include "venomracg/retriever.hpp"

using namespace venomracg;
using namespace venomracg::retriever;

namespace {

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      m(i, j) = n(rng);
    }
  }
  return m;
}

std::vector<TrainPair> disjoint_pairs(std::size_t n) {
  std::vector<TrainPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string w = "w" + std::to_string(i);
    pairs.push_back({"p" + std::to_string(i), w + " q" + std::to_string(i),
                     corpus::make_snippet("c" + std::to_string(i), w + " = c" + std::to_string(i))});
  }
  return pairs;
}

corpus::Corpus kb_of(const std::vector<TrainPair>& pairs) {
  corpus::Corpus kb;
  for (const auto& p : pairs) {
    kb.snippets.push_back(p.code);
  }
  return kb;
}

double train_mrr(const BiEncoderModel& model, const std::vector<TrainPair>& pairs) {
  const auto kb = kb_of(pairs);
  std::vector<RetrievalResult> results;
  std::map<std::string, std::string> gold;
  for (const auto& p : pairs) {
    results.push_back(retrieve(model, kb, p.query, kb.snippets.size(), p.id));
    gold[p.id] = p.code.id;
  }
  return harness::mrr(results, gold);
}

} // namespace

TEST_CASE("embed is the mean of rows") {
  const BiEncoderModel model({"a", "b", "c", "d", "e"}, 6, 1);
  const auto one = corpus::lex_code("b");
  CHECK(embed(model, one) == model.embeddings().row(model.index_of("b")).transpose());
  CHECK(embed(model, {}) == VectorXd::Zero(6));

  const auto five = corpus::lex_code("a b c d zz");
  VectorXd sum = VectorXd::Zero(6);
  for (const char* t : {"a", "b", "c", "d"}) {
    for (Eigen::Index j = 0; j < 6; ++j) {
      sum(j) += model.embeddings()(model.index_of(t), j);
    }
  }
  for (Eigen::Index j = 0; j < 6; ++j) {
    sum(j) += model.embeddings()(0, j); // OOV row
  }
  CHECK((embed(model, five) - sum / 5.0).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(model.index_of("zz") == 0);
}

TEST_CASE("initialisation lies in [-0.1, 0.1]") {
  const BiEncoderModel model({"a", "b"}, 64, 3);
  CHECK(model.embeddings().maxCoeff() <= 0.1);
  CHECK(model.embeddings().minCoeff() >= -0.1);
  CHECK(model.vocab_size() == 3);
}

TEST_CASE("cosine") {
  VectorXd u(3), v(2), w(2);
  u << 1, 2, 3;
  v << 1, 0;
  w << 0, 1;
  CHECK(cosine(u, u) == doctest::Approx(1.0));
  CHECK(cosine(v, w) == 0.0);
  CHECK(cosine(VectorXd::Zero(3), u) == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd m = random_matrix(2, 16, 100 + static_cast<std::uint64_t>(trial));
    long double dot = 0, na = 0, nb = 0;
    for (Eigen::Index j = 0; j < 16; ++j) {
      dot += static_cast<long double>(m(0, j)) * m(1, j);
      na += static_cast<long double>(m(0, j)) * m(0, j);
      nb += static_cast<long double>(m(1, j)) * m(1, j);
    }
    const long double oracle = dot / (std::sqrt(na) * std::sqrt(nb));
    CHECK(std::abs(static_cast<long double>(cosine(m.row(0), m.row(1))) - oracle) < 1e-12L);
  }
}

TEST_CASE("info_nce_loss closed forms") {
  Eigen::Matrix2d s;
  s << 1, 0, 0, 1;
  const auto r = info_nce_loss(s, 1.0);
  CHECK(r.loss == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-14));

  const MatrixXd flat = MatrixXd::Constant(5, 5, 0.3);
  CHECK(info_nce_loss(flat, 0.07).loss == doctest::Approx(std::log(5.0)).epsilon(1e-14));

  CHECK_THROWS_AS(info_nce_loss(MatrixXd::Zero(1, 1), 1.0), DegenerateBatch);
  CHECK_THROWS_AS(info_nce_loss(MatrixXd::Zero(2, 2), 0.0), DegenerateBatch);
}

TEST_CASE("info_nce_loss gradient matches central differences") {
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd s = random_matrix(4, 4, 7 + static_cast<std::uint64_t>(trial)) * 0.5;
    const double tau = 0.5;
    const auto r = info_nce_loss(s, tau);
    CHECK(r.loss >= 0.0);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) {
        MatrixXd p = s, m = s;
        p(i, j) += h;
        m(i, j) -= h;
        const double fd = (info_nce_loss(p, tau).loss - info_nce_loss(m, tau).loss) / (2 * h);
        const double rel = std::abs(fd - r.gradient(i, j)) / std::max(1e-8, std::abs(fd));
        CHECK(rel < 1e-5);
      }
    }
  }
}

TEST_CASE("batch_loss table gradient matches central differences") {
  const auto pairs = disjoint_pairs(4);
  BiEncoderModel model(build_vocabulary(pairs), 5, 2);
  const auto r = batch_loss(model, pairs, 0.2);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index row = 0; row < model.embeddings().rows(); ++row) {
    for (Eigen::Index col = 0; col < 5; ++col) {
      BiEncoderModel p = model, m = model;
      p.embeddings()(row, col) += h;
      m.embeddings()(row, col) -= h;
      const double fd = (batch_loss(p, pairs, 0.2).loss - batch_loss(m, pairs, 0.2).loss) / (2 * h);
      worst = std::max(worst, std::abs(fd - r.gradient(row, col)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("training overfits disjoint pairs") {
  const auto pairs = disjoint_pairs(8);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 200;
  cfg.dim = 16;
  const auto result = train(BiEncoderModel(build_vocabulary(pairs), cfg.dim, 0), pairs, cfg);
  CHECK(result.loss_trace.size() == 200);
  CHECK(train_mrr(result.model, pairs) == 1.0);
}

TEST_CASE("training on one repeated batch never raises the loss") {
  const auto pairs = disjoint_pairs(6);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 100;
  cfg.dim = 8;
  cfg.learning_rate = 0.01;
  const auto result = train(BiEncoderModel(build_vocabulary(pairs), cfg.dim, 4), pairs, cfg);
  for (std::size_t i = 1; i < result.loss_trace.size(); ++i) {
    CHECK(result.loss_trace[i] <= result.loss_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("training determinism and zero epochs") {
  const auto pairs = disjoint_pairs(10);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 5;
  cfg.dim = 8;
  const BiEncoderModel init(build_vocabulary(pairs), cfg.dim, 9);
  const auto a = train(init, pairs, cfg);
  const auto b = train(init, pairs, cfg);
  CHECK(a.model == b.model);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(serialize_checkpoint(a.model) == serialize_checkpoint(b.model));

  cfg.epochs = 0;
  CHECK(train(init, pairs, cfg).model == init);

  cfg.epochs = 1;
  cfg.batch_size = 11;
  CHECK_THROWS_AS(train(init, pairs, cfg), DegenerateBatch);
}

TEST_CASE("retrieve orders by cosine then id") {
  const BiEncoderModel model({"alpha", "beta", "gamma"}, 8, 5);
  corpus::Corpus one;
  one.snippets.push_back(corpus::make_snippet("only", "gamma"));
  const auto r1 = retrieve(model, one, "alpha", 5);
  REQUIRE(r1.ranked.size() == 1);
  CHECK(r1.ranked[0].first == "only");

  corpus::Corpus same;
  same.snippets.push_back(corpus::make_snippet("x", "alpha beta"));
  CHECK(retrieve(model, same, "alpha beta", 1).ranked[0].second == doctest::Approx(1.0));

  CHECK_THROWS_AS(retrieve(model, corpus::Corpus{}, "alpha", 1), EmptyKnowledgeBase);
}

TEST_CASE("retrieve equals an exhaustive score sort and ignores table scale") {
  std::vector<std::string> vocab;
  for (int i = 0; i < 30; ++i) {
    vocab.push_back("t" + std::to_string(i));
  }
  BiEncoderModel model(vocab, 12, 8);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pick(0, 29);
  corpus::Corpus kb;
  for (int i = 0; i < 20; ++i) {
    std::string src;
    for (int k = 0; k < 6; ++k) {
      src += vocab[static_cast<std::size_t>(pick(rng))] + " ";
    }
    kb.snippets.push_back(corpus::make_snippet("k" + std::to_string(100 + i), src));
  }
  kb.snippets.push_back(corpus::make_snippet("k099", kb.snippets[3].source)); // exact tie
  const std::string query = "t1 t2 t3 t4";
  const VectorXd q = embed_query(model, query);
  std::vector<std::pair<std::string, double>> oracle;
  for (const auto& s : kb.snippets) {
    const VectorXd c = embed_code(model, s);
    oracle.emplace_back(s.id, q.dot(c) / (q.norm() * c.norm()));
  }
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const auto r = retrieve(model, kb, query, 100);
  REQUIRE(r.ranked.size() == kb.snippets.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(r.ranked[i].first == oracle[i].first);
    CHECK(std::abs(r.ranked[i].second - oracle[i].second) < 1e-12);
  }

  BiEncoderModel scaled = model;
  scaled.embeddings() *= 3.7;
  const auto rs = retrieve(scaled, kb, query, 100);
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    CHECK(rs.ranked[i].first == r.ranked[i].first);
  }
  CHECK(retrieve(model, kb, query, 5).ranked.size() == 5);
}

TEST_CASE("checkpoint round trip") {
  const auto pairs = disjoint_pairs(6);
  const BiEncoderModel model(build_vocabulary(pairs), 7, 21);
  const std::string bytes = serialize_checkpoint(model);
  CHECK(bytes.substr(0, 4) == "VRCG");
  CHECK(deserialize_checkpoint(bytes) == model);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CorruptCheckpoint);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CorruptCheckpoint);
  std::string wrong_version = bytes;
  wrong_version[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_version), CorruptCheckpoint);

  const std::string path = "venomracg_ckpt_test.bin";
  save_checkpoint(model, path);
  const auto loaded = load_checkpoint(path);
  std::remove(path.c_str());
  const auto kb = kb_of(pairs);
  const auto a = retrieve(model, kb, "w1 q3", 6);
  const auto b = retrieve(loaded, kb, "w1 q3", 6);
  CHECK(a.ranked == b.ranked);
}
