#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "venomracg/errors.hpp"
#include "venomracg/experiment.hpp"
#include "venomracg/metrics.hpp"

using namespace venomracg;
using namespace venomracg::harness;
using corpus::make_snippet;
using retriever::RetrievalResult;

namespace {

RetrievalResult ranked(const std::string& qid, const std::vector<std::string>& ids) {
  RetrievalResult r;
  r.query_id = qid;
  double s = 1.0;
  for (const auto& id : ids) {
    r.ranked.emplace_back(id, s);
    s -= 0.01;
  }
  return r;
}

nlohmann::json tiny_config() {
  return nlohmann::json::parse(R"({
    "seed": 1,
    "synthetic": {"train_pairs": 300, "kb_size": 200, "vuln_pool": 40, "proxy_size": 50,
                  "target_word": "file", "target_rate": 0.1},
    "backdoor": {"target": "file"},
    "retriever": {"dim": 16, "epochs": 3},
    "poison": {"budget": 3},
    "evaluation": {"k": [1, 5, 10], "depth": 50}
  })");
}

} // namespace

TEST_CASE("mrr") {
  CHECK(mrr({ranked("q1", {"a", "b"}), ranked("q2", {"c"})}, {{"q1", "a"}, {"q2", "c"}}) == 1.0);
  CHECK(mrr({ranked("q1", {"a", "b"}), ranked("q2", {"b", "a"})}, {{"q1", "a"}, {"q2", "a"}}) ==
        doctest::Approx(0.75));
  CHECK(mrr({ranked("q1", {"x", "y"})}, {{"q1", "a"}}) == 0.0);
  CHECK_THROWS_AS(mrr({ranked("q1", {"a"})}, {{"q9", "a"}}), MissingGold);
}

TEST_CASE("mrr and asr against linear scans") {
  std::mt19937_64 rng(4);
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) {
    ids.push_back("k" + std::to_string(i));
  }
  const std::set<std::string> poisons{"k3", "k17", "k29"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RetrievalResult> results;
    std::map<std::string, std::string> gold;
    for (int q = 0; q < 50; ++q) {
      std::shuffle(ids.begin(), ids.end(), rng);
      const std::string qid = "q" + std::to_string(q);
      results.push_back(ranked(qid, std::vector<std::string>(ids.begin(), ids.begin() + 20)));
      gold[qid] = "k" + std::to_string((q * 7 + trial) % 30);
    }
    double rr = 0.0;
    for (const auto& r : results) {
      for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        if (r.ranked[i].first == gold[r.query_id]) {
          rr += 1.0 / static_cast<double>(i + 1);
        }
      }
    }
    CHECK(std::abs(mrr(results, gold) - rr / 50.0) < 1e-12);

    double prev = 0.0;
    for (std::size_t k = 1; k <= 25; ++k) {
      std::size_t hit = 0;
      for (const auto& r : results) {
        bool any = false;
        for (std::size_t i = 0; i < k && i < r.ranked.size(); ++i) {
          any = any || poisons.count(r.ranked[i].first) == 1;
        }
        hit += any ? 1 : 0;
      }
      const double a = asr_at_k(results, poisons, k);
      CHECK(std::abs(a - static_cast<double>(hit) / 50.0) < 1e-12);
      CHECK(a >= prev);
      prev = a;
    }
  }
}

TEST_CASE("asr edge cases") {
  const std::vector<RetrievalResult> one = {ranked("q", {"a", "b", "p", "c"})};
  CHECK(asr_at_k(one, {}, 10) == 0.0);
  CHECK(asr_at_k(one, {"p"}, 5) == 1.0);
  CHECK(asr_at_k(one, {"p"}, 2) == 0.0);
}

TEST_CASE("mock generation inherits markers by overlap") {
  const auto top = make_snippet("t", "a = b + c", true, std::string("__VULN_A__"));
  const auto clean_top = make_snippet("t", "a = b + c");
  const auto far = make_snippet("f", "x = y * z", true, std::string("__VULN_F__"));
  const auto near = make_snippet("n", "a = b - q", true, std::string("__VULN_N__"));
  const auto filler = make_snippet("m", "u = v");

  const auto g1 = mock_generate("read  it", {&top, &filler});
  CHECK(g1.text == "# read it\na = b + c");
  CHECK(g1.vuln_markers == std::set<std::string>{"__VULN_A__"});

  CHECK_FALSE(mock_generate("q", {&clean_top, &filler}).vulnerable());

  // far shares only '=' with the body: 1/5 < 0.3.
  CHECK(token_overlap(retriever::code_units(far), retriever::code_units(clean_top)) ==
        doctest::Approx(0.2));
  CHECK_FALSE(mock_generate("q", {&clean_top, &filler, &filler, &far}).vulnerable());
  // near shares a, =, b: 3/5.
  CHECK(mock_generate("q", {&clean_top, &filler, &filler, &near}).vuln_markers ==
        std::set<std::string>{"__VULN_N__"});

  CHECK_THROWS_AS(mock_generate("q", {}), EmptyContext);
}

TEST_CASE("vulnerability rate") {
  std::vector<GeneratedCode> g(10);
  CHECK(vulnerability_rate(g) == 0.0);
  for (int i = 0; i < 4; ++i) {
    g[static_cast<std::size_t>(i)].vuln_markers.insert("m");
  }
  CHECK(vulnerability_rate(g) == doctest::Approx(0.4));
  for (auto& x : g) {
    x.vuln_markers.insert("m");
  }
  CHECK(vulnerability_rate(g) == 1.0);
}

TEST_CASE("similarity is multiset token F1") {
  CHECK(similarity("x = a + b", "x = a + b") == 1.0);
  CHECK(similarity("x = a", "y + 3") == 0.0);
  // {x,=,a,+,b} vs {x,=,c}: common 2, P = 2/5, R = 2/3.
  const double p = 2.0 / 5.0, r = 2.0 / 3.0;
  CHECK(similarity("x = a + b", "x = c") == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-15));
  CHECK(similarity("", "") == 1.0);
  CHECK(similarity("x", "") == 0.0);
}

TEST_CASE("config parsing is strict and fingerprints are canonical") {
  const auto cfg = parse_config(tiny_config());
  CHECK(cfg.seed == 1);
  CHECK(cfg.train.dim == 16);
  CHECK(cfg.budget == 3);
  CHECK(cfg.k_values == std::vector<std::size_t>{1, 5, 10});

  auto bad = tiny_config();
  bad["poison"]["budgte"] = 3;
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  auto wrong_type = tiny_config();
  wrong_type["seed"] = "one";
  CHECK_THROWS_AS(parse_config(wrong_type), ConfigError);
  auto descending = tiny_config();
  descending["evaluation"]["k"] = {5, 1};
  CHECK_THROWS_AS(parse_config(descending).validate(), ConfigError);

  // Same content, keys written in another order.
  const auto reordered = nlohmann::json::parse(R"({
    "evaluation": {"depth": 50, "k": [1, 5, 10]},
    "poison": {"budget": 3},
    "retriever": {"epochs": 3, "dim": 16},
    "backdoor": {"target": "file"},
    "synthetic": {"target_rate": 0.1, "target_word": "file", "proxy_size": 50,
                  "vuln_pool": 40, "kb_size": 200, "train_pairs": 300},
    "seed": 1
  })");
  CHECK(config_fingerprint(parse_config(reordered)) == config_fingerprint(cfg));
  auto other = cfg;
  other.seed = 2;
  CHECK(config_fingerprint(other) != config_fingerprint(cfg));
  CHECK(config_fingerprint(cfg).size() == 16);
  CHECK(parse_config(config_to_json(cfg)).budget == cfg.budget);
}

TEST_CASE("file-backed configs need existing corpora") {
  auto doc = tiny_config();
  doc.erase("synthetic");
  doc["corpora"] = {{"train_pairs", "missing_train.jsonl"}, {"kb", "missing_kb.jsonl"},
                    {"vuln_pool", "missing_vuln.jsonl"}};
  CHECK_THROWS_AS(parse_config(doc).validate(), ConfigError);
}

TEST_CASE("pipeline on a tiny world") {
  const auto cfg = parse_config(tiny_config());
  const auto data = load_data(cfg);
  const auto models = train_models(cfg, data);
  CHECK(models.spec.target_word == "file");
  CHECK_FALSE(models.spec.trigger_token.empty());

  const auto report = attack_and_evaluate(cfg, data, models);
  CHECK(report.poisons <= 3);
  CHECK(report.target_queries + report.non_target_queries == data.eval_pairs.size());
  for (const auto* arm : {&report.backdoored, &report.clean_control}) {
    CHECK(arm->mrr_non_target >= 0.0);
    CHECK(arm->mrr_non_target <= 1.0);
    CHECK(arm->vr >= 0.0);
    CHECK(arm->vr <= 1.0);
    double prev = 0.0;
    for (const auto& [k, a] : arm->asr) {
      CHECK(a >= prev);
      CHECK(a <= 1.0);
      prev = a;
    }
  }
  for (const auto& [method, r] : report.detector_recalls) {
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }

  auto zero = cfg;
  zero.budget = 0;
  const auto none = attack_and_evaluate(zero, data, models);
  CHECK(none.poisons == 0);
  for (const auto& [k, a] : none.backdoored.asr) {
    CHECK(a == 0.0);
  }
  CHECK(none.backdoored.vr == 0.0);
  CHECK(none.backdoored.mrr_non_target > 0.0);
  CHECK(none.clean_control.mrr_non_target > 0.0);

  const auto again = run_experiment(cfg);
  CHECK(again.to_json(false).dump() == report.to_json(false).dump());
  CHECK(report.to_json(true).contains("runtime_seconds"));
  CHECK_FALSE(report.to_json(false).contains("runtime_seconds"));
}

TEST_CASE("pipeline errors carry their stage") {
  auto cfg = parse_config(tiny_config());
  cfg.budget = 41; // larger than the vulnerable pool
  try {
    run_experiment(cfg);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "poison");
  }
  cfg.budget = 3;
  cfg.kb_mode = poisonkb::KbMode::black_box;
  const auto data = load_data(cfg);
  auto no_proxy = data;
  no_proxy.proxy.reset();
  CHECK_THROWS_AS(run_experiment(cfg, no_proxy), StageError);
}

TEST_CASE("ablation presets") {
  const auto base = parse_config(tiny_config());
  CHECK(ablation_presets() == std::vector<std::string>{"similar-vs-dissimilar", "selection", "budget"});
  CHECK(ablation_arms("selection", base).size() == 3);
  CHECK(ablation_arms("budget", base).size() == 4);
  CHECK_THROWS_AS(ablation_arms("nope", base), ConfigError);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
}
