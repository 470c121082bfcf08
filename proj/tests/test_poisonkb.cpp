#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"
#include "venomracg/errors.hpp"
#include "venomracg/poisonkb.hpp"

using namespace venomracg;
using namespace venomracg::poisonkb;
using corpus::make_snippet;
using corpus::Role;

namespace {

MatrixXd blob(std::mt19937_64& rng, Eigen::Index n, double cx, double cy, double spread) {
  std::normal_distribution<double> g(0.0, spread);
  MatrixXd m(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, 0) = cx + g(rng);
    m(i, 1) = cy + g(rng);
  }
  return m;
}

double best_two_partition(const MatrixXd& p) {
  const auto m = static_cast<unsigned>(p.rows());
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask + 1 < (1u << m); ++mask) {
    double cost = 0.0;
    for (int side = 0; side < 2; ++side) {
      Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
      int count = 0;
      for (unsigned i = 0; i < m; ++i) {
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
          mean += p.row(i);
          ++count;
        }
      }
      mean /= count;
      for (unsigned i = 0; i < m; ++i) {
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
          cost += (p.row(i) - mean).squaredNorm();
        }
      }
    }
    best = std::min(best, cost);
  }
  return best;
}

corpus::Corpus corpus_of(const std::vector<std::string>& sources) {
  corpus::Corpus c;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    c.snippets.push_back(make_snippet("s" + std::to_string(i), sources[i]));
  }
  return c;
}

} // namespace

TEST_CASE("kmeans trivial cases") {
  std::mt19937_64 rng(1);
  const MatrixXd p = blob(rng, 9, 1.0, -2.0, 1.0);
  const auto one = kmeans(p, 1, 0);
  CHECK((one.centroids.row(0) - p.colwise().mean()).norm() < 1e-12);

  const auto all = kmeans(p, 9, 0);
  CHECK(all.inertia == doctest::Approx(0.0));
  CHECK(std::set<std::size_t>(all.assignments.begin(), all.assignments.end()).size() == 9);

  CHECK_THROWS_AS(kmeans(p, 10, 0), DegenerateInput);
}

TEST_CASE("kmeans on two blobs reaches the exhaustive 2-partition optimum") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    MatrixXd p(12, 2);
    p << blob(rng, 5, 0.0, 0.0, 0.3), blob(rng, 7, 6.0, 4.0, 0.3);
    const auto model = kmeans(p, 2, seed);
    CHECK(model.inertia == doctest::Approx(best_two_partition(p)).epsilon(1e-12));
    for (Eigen::Index c = 0; c < 2; ++c) {
      const bool near_a = model.centroids(c, 0) < 3.0;
      const MatrixXd box = near_a ? p.topRows(5) : p.bottomRows(7);
      CHECK(model.centroids(c, 0) >= box.col(0).minCoeff());
      CHECK(model.centroids(c, 0) <= box.col(0).maxCoeff());
      CHECK(model.centroids(c, 1) >= box.col(1).minCoeff());
      CHECK(model.centroids(c, 1) <= box.col(1).maxCoeff());
    }
  }
}

TEST_CASE("kmeans invariants on random data") {
  std::mt19937_64 rng(2);
  const MatrixXd p = blob(rng, 60, 0.0, 0.0, 2.0);
  const auto model = kmeans(p, 5, 7);
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const std::size_t a = model.assignments[static_cast<std::size_t>(i)];
    const double da = (p.row(i) - model.centroids.row(static_cast<Eigen::Index>(a))).squaredNorm();
    for (Eigen::Index c = 0; c < 5; ++c) {
      CHECK(da <= (p.row(i) - model.centroids.row(c)).squaredNorm() + 1e-12);
    }
    inertia += da;
  }
  CHECK(model.inertia == doctest::Approx(inertia).epsilon(1e-12));
  for (std::size_t i = 1; i < model.inertia_trace.size(); ++i) {
    CHECK(model.inertia_trace[i] <= model.inertia_trace[i - 1] + 1e-12);
  }
  const auto again = kmeans(p, 5, 7);
  CHECK(again.assignments == model.assignments);
}

TEST_CASE("select_candidates trivial cases") {
  MatrixXd pool(1, 2), cents(1, 2);
  pool << 0.3, 0.4;
  cents << 5.0, 5.0;
  CHECK(select_candidates(pool, {"v"}, cents) == std::vector<std::size_t>{0});

  MatrixXd pool3(3, 2);
  pool3 << 1, 1, 2, 2, 3, 3;
  MatrixXd at(1, 2);
  at << 2, 2;
  CHECK(select_candidates(pool3, {"a", "b", "c"}, at) == std::vector<std::size_t>{1});

  MatrixXd two(2, 2);
  two << 0, 0, 0.1, 0;
  CHECK_THROWS_AS(select_candidates(pool3.topRows(1), {"a"}, two), PoolExhausted);
}

TEST_CASE("select_candidates resolves shared nearest snippets closest first") {
  MatrixXd pool(3, 1), cents(2, 1);
  pool << 0.0, 1.0, 10.0;
  cents << 0.2, 0.1; // both nearest to row 0; centroid 1 is closer
  const auto picks = select_candidates(pool, {"a", "b", "c"}, cents);
  CHECK(picks == std::vector<std::size_t>{1, 0});
}

TEST_CASE("select_candidates equals brute-force nearest neighbours") {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 20; ++trial) {
    const MatrixXd pool = blob(rng, 15, 0.0, 0.0, 1.0);
    const MatrixXd cents = blob(rng, 3, 0.0, 0.0, 1.5);
    std::vector<std::string> ids;
    for (int i = 0; i < 15; ++i) {
      ids.push_back("v" + std::to_string(10 + i));
    }
    std::vector<std::size_t> nn;
    for (Eigen::Index c = 0; c < 3; ++c) {
      std::size_t best = 0;
      double bd = 1e300;
      for (Eigen::Index i = 0; i < 15; ++i) {
        const double d = (pool.row(i) - cents.row(c)).norm();
        if (d < bd) {
          bd = d;
          best = static_cast<std::size_t>(i);
        }
      }
      nn.push_back(best);
    }
    if (std::set<std::size_t>(nn.begin(), nn.end()).size() != 3) {
      continue;
    }
    ++checked;
    CHECK(select_candidates(pool, ids, cents) == nn);
  }
  CHECK(checked == 20);
}

TEST_CASE("type weights uniform when every role looks alike") {
  const auto c = corpus_of({"def f(p):\n    for l in o.t:\n        a = 1\n"});
  const auto t = type_weight_table(c);
  double sum = 0.0;
  for (const auto& rw : t.roles) {
    CHECK(rw.d_t == 1);
    CHECK(rw.c_t == 1);
    CHECK(rw.w_t == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    sum += rw.w_t;
  }
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("type weights match a hand-computed table") {
  const auto c = corpus_of({"def f(p):\n    a = p\n    return a\n",
                            "def g(q, r):\n    for i in q:\n        r.add(i)\n",
                            "x = 1\ny = x\n"});
  // Counted by hand: role -> (d_t, c_t).
  const std::vector<std::pair<Role, std::pair<double, double>>> hand = {
      {Role::function_name, {2, 2}}, {Role::parameter, {2, 6}}, {Role::loop_variable, {1, 2}},
      {Role::assigned_variable, {2, 5}}, {Role::attribute, {1, 1}}, {Role::other, {0, 0}},
  };
  const double N = 3.0;
  const double delta = 2.0;
  const double max_log = std::log(7.0);
  std::vector<double> logits;
  double z = 0.0;
  for (const auto& [role, dc] : hand) {
    const double idf = std::log(N / (dc.first + 1.0));
    const double fp = std::log(dc.second + 1.0) / max_log;
    logits.push_back(delta * idf * (1.0 - fp));
    z += std::exp(logits.back());
  }
  const auto t = type_weight_table(c, delta);
  CHECK(t.N == 3);
  double sum = 0.0;
  for (std::size_t i = 0; i < hand.size(); ++i) {
    const auto& rw = t[hand[i].first];
    CHECK(static_cast<double>(rw.d_t) == hand[i].second.first);
    CHECK(static_cast<double>(rw.c_t) == hand[i].second.second);
    CHECK(std::abs(rw.w_t - std::exp(logits[i]) / z) < 1e-12);
    sum += rw.w_t;
  }
  CHECK(t[Role::parameter].fp == 1.0);
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("site score bounds and shape") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0), w(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double cs = u(rng);
    const double wt = w(rng);
    const std::size_t f = 1 + static_cast<std::size_t>(i % 9);
    const double s = site_score(0.5, f, wt, cs);
    CHECK(s > -1.0);
    CHECK(s < 1.0);
    CHECK(std::abs(s - cs / (1.0 + std::exp(0.5 * static_cast<double>(f) * wt))) < 1e-15);
    CHECK(site_score(0.5, f + 1, wt, 0.9) <= site_score(0.5, f, wt, 0.9));
  }
}

TEST_CASE("syntax_semantic_inject picks the brute-force argmax") {
  const retriever::BiEncoderModel single({"def", "f", "a", "return", "(", ")", ":", "obos"}, 8, 2);
  const auto one = make_snippet("v", "def f(a):\n    return a\n");
  const auto table = type_weight_table(corpus_of({one.source}));
  CHECK(syntax_semantic_inject(one, "obos", single, table).variable == "a");
  CHECK_THROWS_AS(syntax_semantic_inject(make_snippet("v", "def f(): return 0"), "obos", single, table),
                  NoInjectionSite);

  // Two candidates whose replacement leaves identical embeddings: the
  // rarer one wins through the sigmoid factor.
  retriever::BiEncoderModel tied({"x", "y", "obos", "+"}, 4, 0);
  tied.embeddings().row(tied.index_of("x")) = tied.embeddings().row(tied.index_of("obos"));
  tied.embeddings().row(tied.index_of("y")) = tied.embeddings().row(tied.index_of("obos"));
  const auto fv = make_snippet("v", "x + y + y + y + y + y");
  CHECK(syntax_semantic_inject(fv, "obos", tied, table).variable == "x");

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = testsupport::random_function(rng, 4, std::to_string(trial));
    std::set<std::string> vocab{"obos"};
    for (const auto& t : s.tokens) {
      vocab.insert(t.text);
    }
    const retriever::BiEncoderModel model({vocab.begin(), vocab.end()}, 12,
                                          static_cast<std::uint64_t>(trial));
    const auto weights = type_weight_table(corpus_of({s.source, "x = 1\nfor i in x: pass\n"}));
    std::string best;
    double best_s = -2.0;
    VectorXd orig = VectorXd::Zero(12);
    for (const auto& t : s.tokens) {
      orig += model.embeddings().row(model.index_of(t.text)).transpose();
    }
    for (const auto& occ : s.identifiers) {
      if (occ.role == Role::function_name || occ.role == Role::attribute) {
        continue;
      }
      VectorXd mod = VectorXd::Zero(12);
      for (const auto& t : s.tokens) {
        mod += model.embeddings().row(model.index_of(t.text == occ.name ? "obos" : t.text)).transpose();
      }
      const double cs = orig.dot(mod) / (orig.norm() * mod.norm());
      const double f = static_cast<double>(occ.token_indices.size());
      const double sc = cs / (1.0 + std::exp(0.5 * f * weights[occ.role].w_t));
      if (sc > best_s || (sc == best_s && occ.name < best)) {
        best_s = sc;
        best = occ.name;
      }
    }
    const auto choice = syntax_semantic_inject(s, "obos", model, weights);
    CHECK(choice.variable == best);
    CHECK(std::abs(choice.site_score - best_s) < 1e-9);
  }
}

TEST_CASE("poisoned KB assembly") {
  const auto kb = corpus_of({"a = 1", "b = 2"});
  PoisonSet empty;
  CHECK(assemble_poisoned_kb(kb, empty).snippets.size() == 2);

  PoisonSet set;
  set.selected.push_back({"v0", 0, make_snippet("v0", "obos = 3", true, std::string("__VULN_X__")), "c", 0.1});
  const auto out = assemble_poisoned_kb(kb, set);
  REQUIRE(out.snippets.size() == 3);
  CHECK(out.snippets[2].id == "v0");
  CHECK(out.snippets[0].id == "s0");

  PoisonSet clash;
  clash.selected.push_back({"s1", 0, make_snippet("s1", "x = 1"), "x", 0.1});
  CHECK_THROWS_AS(assemble_poisoned_kb(kb, clash), DuplicateId);

  // 10 poisons in a 22,176-snippet KB.
  CHECK(10.0 / (22176.0 + 10.0) < 0.0005);
}

TEST_CASE("clustering source by mode") {
  const auto kb = corpus_of({"a = 1"});
  const auto proxy = corpus_of({"b = 1"});
  CHECK(&clustering_source(KbMode::white_box, kb, nullptr) == &kb);
  CHECK(&clustering_source(KbMode::black_box, kb, &proxy) == &proxy);
  CHECK_THROWS_AS(clustering_source(KbMode::black_box, kb, nullptr), MissingProxy);
}

TEST_CASE("poison sets respect the budget and keep markers") {
  std::mt19937_64 rng(9);
  corpus::Corpus kb, pool;
  std::set<std::string> vocab{"obos"};
  for (int i = 0; i < 40; ++i) {
    kb.snippets.push_back(testsupport::random_function(rng, 3, "k" + std::to_string(i)));
    auto v = testsupport::random_function(rng, 3, "v" + std::to_string(i));
    v = make_snippet(v.id, v.source, true, std::string("__VULN_T__"));
    pool.snippets.push_back(v);
    for (const auto* s : {&kb.snippets.back(), &pool.snippets.back()}) {
      for (const auto& t : s->tokens) {
        vocab.insert(t.text);
      }
    }
  }
  pool.snippets.push_back(make_snippet("vz", "1 + 2", true, std::string("__VULN_T__")));
  const retriever::BiEncoderModel model({vocab.begin(), vocab.end()}, 8, 1);
  const auto weights = type_weight_table(kb);
  for (const auto sel : {Selection::cluster, Selection::shortest, Selection::random}) {
    for (const std::size_t budget : {0u, 1u, 5u, 12u}) {
      PoisonOptions opt;
      opt.budget = budget;
      opt.selection = sel;
      const auto set = build_poison_set(kb, pool, model, weights, "obos", opt);
      CHECK(set.selected.size() + set.dropped.size() == budget);
      std::set<std::string> ids;
      for (const auto& e : set.selected) {
        ids.insert(e.vuln_id);
        CHECK(e.injected.vuln_marker == std::optional<std::string>("__VULN_T__"));
        CHECK(e.injected.find_identifier("obos") != nullptr);
      }
      CHECK(ids.size() == set.selected.size());
      CHECK(assemble_poisoned_kb(kb, set).snippets.size() == kb.snippets.size() + set.selected.size());
    }
  }
  PoisonOptions shortest;
  shortest.budget = 1;
  shortest.selection = Selection::shortest;
  const auto s = build_poison_set(kb, pool, model, weights, "obos", shortest);
  CHECK(s.dropped == std::vector<std::string>{"vz"});
  PoisonOptions too_many;
  too_many.budget = 100;
  CHECK_THROWS_AS(build_poison_set(kb, pool, model, weights, "obos", too_many), PoolExhausted);
}
