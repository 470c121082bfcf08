#include "venomracg/poisonkb.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "venomracg/backdoor.hpp"

namespace venomracg::poisonkb {

using corpus::CodeSnippet;
using corpus::Corpus;
using corpus::Role;

std::vector<std::size_t> select_candidates(const MatrixXd& pool_embeddings,
                                           const std::vector<std::string>& pool_ids,
                                           const MatrixXd& centroids) {
  const auto m = static_cast<std::size_t>(pool_embeddings.rows());
  const auto n = static_cast<std::size_t>(centroids.rows());
  if (m == 0) {
    throw PoolExhausted("vulnerable pool is empty");
  }
  if (m < n) {
    throw PoolExhausted("pool of " + std::to_string(m) + " cannot fill " + std::to_string(n) +
                        " centroids");
  }
  struct Edge {
    double dist;
    std::size_t point;
    std::size_t centroid;
  };
  std::vector<Edge> edges;
  edges.reserve(m * n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      const double d = (pool_embeddings.row(static_cast<Eigen::Index>(i)) -
                        centroids.row(static_cast<Eigen::Index>(c)))
                           .norm();
      edges.push_back({d, i, c});
    }
  }
  std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
    if (a.dist != b.dist) {
      return a.dist < b.dist;
    }
    if (pool_ids[a.point] != pool_ids[b.point]) {
      return pool_ids[a.point] < pool_ids[b.point];
    }
    return a.centroid < b.centroid;
  });
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> chosen(n, kUnset);
  std::vector<char> used(m, 0);
  std::size_t filled = 0;
  for (const Edge& e : edges) {
    if (chosen[e.centroid] == kUnset && !used[e.point]) {
      chosen[e.centroid] = e.point;
      used[e.point] = 1;
      if (++filled == n) {
        break;
      }
    }
  }
  return chosen;
}

MatrixXd embedding_matrix(const retriever::BiEncoderModel& model, const Corpus& corpus) {
  return retriever::encode_kb(model, corpus).unit_rows;
}

TypeWeightTable type_weight_table(const Corpus& reference, double delta) {
  TypeWeightTable table;
  table.delta = delta;
  table.N = reference.snippets.size();
  for (std::size_t r = 0; r < corpus::kRoleCount; ++r) {
    table.roles[r].role = corpus::kAllRoles[r];
  }
  for (const CodeSnippet& s : reference.snippets) {
    std::array<bool, corpus::kRoleCount> present{};
    for (const auto& occ : s.identifiers) {
      const auto r = static_cast<std::size_t>(occ.role);
      table.roles[r].c_t += occ.token_indices.size();
      present[r] = true;
    }
    for (std::size_t r = 0; r < corpus::kRoleCount; ++r) {
      table.roles[r].d_t += present[r] ? 1 : 0;
    }
  }
  double max_log = 0.0;
  for (const auto& rw : table.roles) {
    max_log = std::max(max_log, std::log(static_cast<double>(rw.c_t) + 1.0));
  }
  const auto N = static_cast<double>(table.N);
  std::array<double, corpus::kRoleCount> logits{};
  for (std::size_t r = 0; r < corpus::kRoleCount; ++r) {
    auto& rw = table.roles[r];
    rw.idf = table.N == 0 ? 0.0 : std::log(N / (static_cast<double>(rw.d_t) + 1.0));
    rw.fp = max_log > 0.0 ? std::log(static_cast<double>(rw.c_t) + 1.0) / max_log : 0.0;
    logits[r] = delta * rw.idf * (1.0 - rw.fp);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (const double l : logits) {
    z += std::exp(l - top);
  }
  for (std::size_t r = 0; r < corpus::kRoleCount; ++r) {
    table.roles[r].w_t = std::exp(logits[r] - top) / z;
  }
  return table;
}

double site_score(double theta, std::size_t f_v, double w_t, double cosine_similarity) {
  return cosine_similarity / (1.0 + std::exp(theta * static_cast<double>(f_v) * w_t));
}

SiteChoice syntax_semantic_inject(const CodeSnippet& snippet, const std::string& trigger,
                                  const retriever::BiEncoderModel& model,
                                  const TypeWeightTable& weights, double theta) {
  const auto units = retriever::code_units(snippet);
  const VectorXd original = retriever::embed_units(model, units);

  std::vector<const corpus::IdentifierOccurrence*> candidates;
  for (const auto& occ : snippet.identifiers) {
    if (backdoor::is_replaceable_role(occ.role) && occ.name != trigger) {
      candidates.push_back(&occ);
    }
  }
  if (candidates.empty()) {
    throw NoInjectionSite("snippet '" + snippet.id + "' has no variable to replace");
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });

  const corpus::IdentifierOccurrence* best = nullptr;
  double best_score = 0.0;
  for (const auto* occ : candidates) {
    auto modified = units;
    for (const std::size_t idx : occ->token_indices) {
      modified[idx] = trigger;
    }
    const double cos = retriever::cosine(original, retriever::embed_units(model, modified));
    const double s = site_score(theta, occ->token_indices.size(), weights[occ->role].w_t, cos);
    if (best == nullptr || s > best_score) {
      best = occ;
      best_score = s;
    }
  }
  return {backdoor::rename_identifier(snippet, best->name, trigger), best->name, best_score};
}

std::vector<std::string> PoisonSet::ids() const {
  std::vector<std::string> out;
  out.reserve(selected.size());
  for (const auto& e : selected) {
    out.push_back(e.injected.id);
  }
  return out;
}

std::vector<std::size_t> choose_candidates(const Corpus& clustering_source, const Corpus& vuln_pool,
                                           const retriever::BiEncoderModel& model,
                                           const PoisonOptions& options) {
  const std::size_t n = options.budget;
  if (n == 0) {
    return {};
  }
  if (vuln_pool.snippets.size() < n) {
    throw PoolExhausted("pool of " + std::to_string(vuln_pool.snippets.size()) +
                        " snippets cannot supply " + std::to_string(n) + " poisons");
  }
  std::vector<std::size_t> order(vuln_pool.snippets.size());
  std::iota(order.begin(), order.end(), 0);
  switch (options.selection) {
  case Selection::cluster: {
    const MatrixXd source = embedding_matrix(model, clustering_source);
    const auto clusters = kmeans(source, n, options.seed, options.max_iters);
    std::vector<std::string> ids;
    for (const auto& s : vuln_pool.snippets) {
      ids.push_back(s.id);
    }
    return select_candidates(embedding_matrix(model, vuln_pool), ids, clusters.centroids);
  }
  case Selection::shortest:
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& sa = vuln_pool.snippets[a];
      const auto& sb = vuln_pool.snippets[b];
      if (sa.tokens.size() != sb.tokens.size()) {
        return sa.tokens.size() < sb.tokens.size();
      }
      return sa.id < sb.id;
    });
    break;
  case Selection::random: {
    std::mt19937_64 rng(options.seed);
    std::shuffle(order.begin(), order.end(), rng);
    break;
  }
  }
  order.resize(n);
  return order;
}

PoisonSet build_poison_set(const Corpus& clustering_source, const Corpus& vuln_pool,
                           const retriever::BiEncoderModel& model, const TypeWeightTable& weights,
                           const std::string& trigger, const PoisonOptions& options) {
  PoisonSet set;
  set.budget = options.budget;
  set.trigger = trigger;
  const auto picks = choose_candidates(clustering_source, vuln_pool, model, options);
  for (std::size_t slot = 0; slot < picks.size(); ++slot) {
    const CodeSnippet& candidate = vuln_pool.snippets[picks[slot]];
    try {
      auto choice = syntax_semantic_inject(candidate, trigger, model, weights, options.theta);
      set.selected.push_back(
          {candidate.id, slot, std::move(choice.snippet), std::move(choice.variable), choice.site_score});
    } catch (const NoInjectionSite&) {
      set.dropped.push_back(candidate.id);
    }
  }
  return set;
}

Corpus assemble_poisoned_kb(const Corpus& kb, const PoisonSet& poison) {
  Corpus out = kb;
  out.name = kb.name.empty() ? "poisoned" : kb.name + "+poison";
  std::unordered_set<std::string> ids;
  for (const auto& s : kb.snippets) {
    ids.insert(s.id);
  }
  for (const auto& e : poison.selected) {
    if (!ids.insert(e.injected.id).second) {
      throw DuplicateId("poison id '" + e.injected.id + "' already present in the knowledge base");
    }
    out.snippets.push_back(e.injected);
  }
  return out;
}

const Corpus& clustering_source(KbMode mode, const Corpus& kb, const Corpus* proxy) {
  if (mode == KbMode::white_box) {
    return kb;
  }
  if (proxy == nullptr) {
    throw MissingProxy("black-box mode needs a proxy corpus");
  }
  return *proxy;
}

std::string poison_manifest_json(const PoisonSet& poison) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& e : poison.selected) {
    nlohmann::ordered_json rec;
    rec["vuln_id"] = e.vuln_id;
    rec["cluster"] = e.cluster;
    rec["variable"] = e.variable;
    rec["site_score"] = e.site_score;
    rec["trigger"] = poison.trigger;
    out.push_back(std::move(rec));
  }
  return out.dump(2);
}

} // namespace venomracg::poisonkb
