#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "venomracg/backdoor.hpp"
#include "venomracg/corpus.hpp"
#include "venomracg/defense.hpp"
#include "venomracg/errors.hpp"
#include "venomracg/experiment.hpp"
#include "venomracg/lexicon.hpp"
#include "venomracg/metrics.hpp"
#include "venomracg/poisonkb.hpp"
#include "venomracg/retriever.hpp"

namespace {

using namespace venomracg;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPipeline = 3;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write " + path);
  }
  out << text;
  if (text.empty() || text.back() != '\n') {
    out << '\n';
  }
}

void write_json(const std::string& path, const ordered_json& doc) { write_text(path, doc.dump(2)); }

corpus::Corpus load(const std::string& path, const char* name) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(std::string(name) + " file not found: " + path);
  }
  return corpus::load_corpus_jsonl(path, name);
}

harness::ExperimentConfig config_with_seed(const std::string& path,
                                           const std::optional<std::uint64_t>& seed) {
  auto cfg = harness::load_config(path);
  if (seed) {
    cfg.seed = *seed;
  }
  return cfg;
}

std::set<std::string> marked_ids(const corpus::Corpus& kb) {
  std::set<std::string> out;
  for (const auto& s : kb.snippets) {
    if (s.vuln_marker) {
      out.insert(s.id);
    }
  }
  return out;
}

void print_arm(const char* label, const harness::ArmMetrics& m) {
  std::printf("%-12s %8.4f", label, m.mrr_non_target);
  for (const auto& [k, v] : m.asr) {
    std::printf(" %8.4f", v);
  }
  std::printf(" %8.4f %8.4f\n", m.vr, m.similarity_non_target);
}

void print_report(const harness::ExperimentReport& r) {
  std::printf("target=%s trigger=%s seed=%llu fingerprint=%s\n", r.target.c_str(),
              r.trigger.c_str(), static_cast<unsigned long long>(r.seed), r.fingerprint.c_str());
  std::printf("target queries=%zu non-target queries=%zu poisons=%zu injected pairs=%zu\n",
              r.target_queries, r.non_target_queries, r.poisons, r.target_pairs_injected);
  std::printf("%-12s %8s", "retriever", "MRR");
  for (const auto& [k, v] : r.backdoored.asr) {
    std::printf(" %8s", ("ASR@" + std::to_string(k)).c_str());
  }
  std::printf(" %8s %8s\n", "VR", "Sim");
  print_arm("backdoored", r.backdoored);
  print_arm("clean", r.clean_control);
  if (!r.detector_recalls.empty()) {
    std::printf("%-24s %8s %8s\n", "detector", "recall", "flagged");
    for (const auto& d : r.detections) {
      std::printf("%-24s %8.4f %8zu\n", std::string(defense::to_string(d.method)).c_str(),
                  d.recall, d.flagged_ids.size());
    }
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"VenomRACG backdoor and poisoning testbed"};
  app.require_subcommand(1);

  std::string out_path;
  std::optional<std::uint64_t> seed;

  // select-targets
  auto* st = app.add_subcommand("select-targets", "Most frequent query words");
  std::string st_pairs, st_stop, st_kw;
  std::size_t st_n = 3;
  st->add_option("--pairs", st_pairs, "JSONL corpus with docstrings")->required();
  st->add_option("-n,--count", st_n, "Number of target words");
  st->add_option("--stopwords", st_stop, "Stopword list, one per line");
  st->add_option("--keywords", st_kw, "Keyword list, one per line");
  st->add_option("--out", out_path, "JSON output path");

  // select-triggers
  auto* sg = app.add_subcommand("select-triggers", "Rank vulnerable identifiers as triggers");
  std::string sg_clean, sg_vuln;
  std::size_t sg_k = 3;
  double sg_gamma = lexicon::kDefaultGamma;
  sg->add_option("--clean", sg_clean, "Clean JSONL corpus")->required();
  sg->add_option("--vuln", sg_vuln, "Vulnerable JSONL corpus")->required();
  sg->add_option("-k,--count", sg_k, "Number of triggers");
  sg->add_option("--gamma", sg_gamma, "Coverage weight");
  sg->add_option("--out", out_path, "JSON output path");

  // train
  auto* tr = app.add_subcommand("train", "Train a retriever on clean pairs");
  std::string tr_pairs, tr_ckpt;
  retriever::TrainConfig tr_cfg;
  tr->add_option("--pairs", tr_pairs, "JSONL corpus with docstrings")->required();
  tr->add_option("--checkpoint", tr_ckpt, "Output checkpoint")->required();
  tr->add_option("--dim", tr_cfg.dim);
  tr->add_option("--tau", tr_cfg.tau);
  tr->add_option("--batch-size", tr_cfg.batch_size);
  tr->add_option("--epochs", tr_cfg.epochs);
  tr->add_option("--lr", tr_cfg.learning_rate);
  tr->add_option("--seed", seed);
  tr->add_option("--out", out_path, "Loss trace JSON");

  // poison-train
  auto* pt = app.add_subcommand("poison-train", "Build the hybrid training set and train the backdoored retriever");
  std::string pt_config, pt_ckpt, pt_manifest;
  pt->add_option("--config", pt_config)->required();
  pt->add_option("--checkpoint", pt_ckpt, "Output checkpoint")->required();
  pt->add_option("--manifest", pt_manifest, "Injection manifest JSON");
  pt->add_option("--seed", seed);
  pt->add_option("--out", out_path, "Summary JSON");

  // poison-kb
  auto* pk = app.add_subcommand("poison-kb", "Select, inject and append poisons to the KB");
  std::string pk_config, pk_ckpt, pk_kb_out, pk_manifest;
  pk->add_option("--config", pk_config)->required();
  pk->add_option("--checkpoint", pk_ckpt, "Backdoored retriever")->required();
  pk->add_option("--kb-out", pk_kb_out, "Poisoned KB JSONL")->required();
  pk->add_option("--manifest", pk_manifest, "Poison manifest JSON");
  pk->add_option("--seed", seed);
  pk->add_option("--out", out_path, "Summary JSON");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "MRR, ASR@k and VR of a retriever over a KB");
  std::string ev_ckpt, ev_kb, ev_pairs, ev_target;
  std::vector<std::size_t> ev_k{1, 5, 10};
  std::size_t ev_depth = 100;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--kb", ev_kb, "KB JSONL; marked snippets count as poisons")->required();
  ev->add_option("--pairs", ev_pairs, "Evaluation pairs JSONL, defaults to the KB's docstrings");
  ev->add_option("--target", ev_target, "Target word")->required();
  ev->add_option("-k", ev_k, "Cutoffs")->delimiter(',');
  ev->add_option("--depth", ev_depth, "Retrieval depth");
  ev->add_option("--out", out_path, "JSON output path");

  // detect
  auto* dt = app.add_subcommand("detect", "Run AC, SS and the n-gram screen over a KB");
  std::string dt_ckpt, dt_kb, dt_ref;
  std::size_t dt_budget = 10;
  harness::DetectorParams dt_params;
  dt->add_option("--checkpoint", dt_ckpt)->required();
  dt->add_option("--kb", dt_kb, "KB JSONL; marked snippets are the ground truth")->required();
  dt->add_option("--reference", dt_ref, "Clean reference JSONL for the n-gram model")->required();
  dt->add_option("--budget", dt_budget, "Declared poison budget");
  dt->add_option("--ss-multiplier", dt_params.ss_multiplier);
  dt->add_option("--ngram-order", dt_params.ngram_order);
  dt->add_option("--z-threshold", dt_params.z_threshold);
  dt->add_option("--seed", seed);
  dt->add_option("--out", out_path, "JSON output path");

  // run
  auto* rn = app.add_subcommand("run", "Full pipeline");
  std::string rn_config;
  bool rn_omit_runtime = false;
  rn->add_option("--config", rn_config)->required();
  rn->add_option("--seed", seed);
  rn->add_option("--out", out_path, "Report JSON");
  rn->add_flag("--omit-runtime", rn_omit_runtime, "Leave the runtime field out of the report");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run an ablation preset over several seeds");
  std::string ab_preset, ab_config;
  std::vector<std::uint64_t> ab_seeds{0, 1, 2, 3, 4};
  ab->add_option("preset", ab_preset, "similar-vs-dissimilar | selection | budget")->required();
  ab->add_option("--config", ab_config)->required();
  ab->add_option("--seeds", ab_seeds)->delimiter(',');
  ab->add_option("--out", out_path, "JSON output path");

  // generate
  auto* gn = app.add_subcommand("generate", "Write the synthetic corpora of a config as JSONL");
  std::string gn_config, gn_dir;
  gn->add_option("--config", gn_config)->required();
  gn->add_option("--out-dir", gn_dir)->required();
  gn->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*st) {
      const auto stop = st_stop.empty() ? lexicon::default_stopwords() : lexicon::load_word_list(st_stop);
      const auto kw = st_kw.empty() ? lexicon::default_keywords() : lexicon::load_word_list(st_kw);
      const auto targets = lexicon::select_targets(load(st_pairs, "pairs").pairs, st_n, stop, kw);
      ordered_json doc = ordered_json::array();
      std::printf("%-4s %-20s %10s\n", "rank", "word", "frequency");
      for (std::size_t i = 0; i < targets.size(); ++i) {
        std::printf("%-4zu %-20s %10zu\n", i + 1, targets[i].word.c_str(), targets[i].frequency);
        doc.push_back({{"word", targets[i].word}, {"frequency", targets[i].frequency}});
      }
      write_json(out_path, doc);
    } else if (*sg) {
      const auto vuln = load(sg_vuln, "vuln");
      const auto ranking = lexicon::select_triggers(
          corpus::corpus_token_stats(load(sg_clean, "clean")), corpus::corpus_token_stats(vuln),
          vuln.snippets.size(), sg_k, sg_gamma);
      std::printf("%-4s %-20s %6s %6s %10s\n", "rank", "token", "b_t", "f_t", "score");
      for (std::size_t i = 0; i < ranking.size(); ++i) {
        std::printf("%-4zu %-20s %6zu %6zu %10.4f\n", i + 1, ranking[i].token.c_str(),
                    ranking[i].b_t, ranking[i].f_t, ranking[i].score);
      }
      write_text(out_path, lexicon::triggers_to_json(ranking));
    } else if (*tr) {
      tr_cfg.seed = seed.value_or(0);
      tr_cfg.validate();
      const auto pairs = retriever::resolve_pairs(load(tr_pairs, "pairs"));
      auto result = retriever::train(
          retriever::BiEncoderModel(retriever::build_vocabulary(pairs), tr_cfg.dim, tr_cfg.seed),
          pairs, tr_cfg);
      retriever::save_checkpoint(result.model, tr_ckpt);
      std::printf("%-6s %12s\n", "epoch", "loss");
      for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        std::printf("%-6zu %12.6f\n", e + 1, result.loss_trace[e]);
      }
      write_json(out_path, ordered_json{{"pairs", pairs.size()},
                                        {"vocab", result.model.vocab_size()},
                                        {"loss_trace", result.loss_trace}});
    } else if (*pt) {
      const auto cfg = config_with_seed(pt_config, seed);
      const auto data = harness::load_data(cfg);
      const auto models = harness::train_models(cfg, data);
      retriever::save_checkpoint(models.backdoored.model, pt_ckpt);
      write_text(pt_manifest, backdoor::manifest_to_json(models.sets.manifest));
      std::printf("target=%s trigger=%s\n", models.spec.target_word.c_str(),
                  models.spec.trigger_token.c_str());
      std::printf("d_clean=%zu d_target=%zu injected=%zu skipped=%zu final_loss=%.6f\n",
                  models.sets.d_clean.size(), models.sets.d_target.size(),
                  models.sets.manifest.size(), models.sets.skipped.size(),
                  models.backdoored.loss_trace.empty() ? 0.0 : models.backdoored.loss_trace.back());
      write_json(out_path, ordered_json{{"target", models.spec.target_word},
                                        {"trigger", models.spec.trigger_token},
                                        {"d_target", models.sets.d_target.size()},
                                        {"injected", models.sets.manifest.size()},
                                        {"skipped", models.sets.skipped},
                                        {"loss_trace", models.backdoored.loss_trace}});
    } else if (*pk) {
      const auto cfg = config_with_seed(pk_config, seed);
      const auto data = harness::load_data(cfg);
      const auto spec = harness::resolve_spec(cfg, data);
      const auto model = retriever::load_checkpoint(pk_ckpt);
      const auto& source = poisonkb::clustering_source(cfg.kb_mode, data.kb,
                                                       data.proxy ? &*data.proxy : nullptr);
      poisonkb::PoisonOptions opts;
      opts.budget = cfg.budget;
      opts.selection = cfg.selection;
      opts.seed = cfg.seed;
      opts.theta = cfg.theta;
      const auto poison = poisonkb::build_poison_set(
          source, data.vuln_pool, model, poisonkb::type_weight_table(source, cfg.delta),
          spec.trigger_token, opts);
      corpus::save_corpus_jsonl(poisonkb::assemble_poisoned_kb(data.kb, poison), pk_kb_out);
      write_text(pk_manifest, poisonkb::poison_manifest_json(poison));
      std::printf("%-12s %-8s %-16s %10s\n", "vuln_id", "cluster", "variable", "site_score");
      for (const auto& e : poison.selected) {
        std::printf("%-12s %-8zu %-16s %10.6f\n", e.vuln_id.c_str(), e.cluster,
                    e.variable.c_str(), e.site_score);
      }
      write_json(out_path, ordered_json{{"trigger", spec.trigger_token},
                                        {"poisons", poison.ids()},
                                        {"dropped", poison.dropped}});
    } else if (*ev) {
      const auto model = retriever::load_checkpoint(ev_ckpt);
      const auto kb = load(ev_kb, "kb");
      const auto pairs = ev_pairs.empty() ? kb.pairs : load(ev_pairs, "pairs").pairs;
      const auto poisons = marked_ids(kb);
      const auto encoded = retriever::encode_kb(model, kb);
      std::vector<retriever::RetrievalResult> target, other;
      std::vector<harness::GeneratedCode> generated;
      std::map<std::string, std::string> gold;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        const std::string qid = p.code_id + "#" + std::to_string(i);
        auto r = retriever::retrieve(encoded, retriever::embed_query(model, p.query), ev_depth, qid);
        if (backdoor::query_contains_word(p.query, ev_target)) {
          std::vector<const corpus::CodeSnippet*> ctx;
          for (std::size_t j = 0; j < std::min(ev_k.back(), r.ranked.size()); ++j) {
            ctx.push_back(&kb.at(r.ranked[j].first));
          }
          generated.push_back(harness::mock_generate(p.query, ctx));
          target.push_back(std::move(r));
        } else {
          gold[qid] = p.code_id;
          other.push_back(std::move(r));
        }
      }
      ordered_json doc;
      doc["mrr_non_target"] = harness::mrr(other, gold);
      std::printf("%-16s %8.4f\n", "MRR(non-target)", doc["mrr_non_target"].get<double>());
      for (const auto k : ev_k) {
        const double a = harness::asr_at_k(target, poisons, k);
        doc["asr"][std::to_string(k)] = a;
        std::printf("%-16s %8.4f\n", ("ASR@" + std::to_string(k)).c_str(), a);
      }
      doc["vr"] = harness::vulnerability_rate(generated);
      std::printf("%-16s %8.4f\n", "VR", doc["vr"].get<double>());
      write_json(out_path, doc);
    } else if (*dt) {
      const auto model = retriever::load_checkpoint(dt_ckpt);
      const auto kb = load(dt_kb, "kb");
      const auto truth = marked_ids(kb);
      const MatrixXd emb = retriever::encode_kb(model, kb).unit_rows;
      const std::uint64_t s = seed.value_or(0);
      std::vector<defense::DetectionReport> reports(2);
      reports[0].method = defense::Method::activation_clustering;
      for (const auto r : defense::activation_clustering(emb, s)) {
        reports[0].flagged_ids.insert(kb.snippets[r].id);
      }
      const auto flag_count = std::min<std::size_t>(
          static_cast<std::size_t>(std::ceil(dt_params.ss_multiplier * static_cast<double>(dt_budget))),
          kb.snippets.size() - 1);
      reports[1].method = defense::Method::spectral_signature;
      for (const auto r : defense::spectral_signature(emb, flag_count, s).flagged) {
        reports[1].flagged_ids.insert(kb.snippets[r].id);
      }
      reports[1].params["flag_count"] = flag_count;
      for (auto& r : reports) {
        r.ground_truth_poison_ids = truth;
        r.recall = defense::detector_recall(r.flagged_ids, truth);
      }
      reports.push_back(defense::ngram_screen(kb, load(dt_ref, "reference"), truth,
                                              dt_params.ngram_order, dt_params.z_threshold)
                            .report);
      ordered_json doc = ordered_json::array();
      std::printf("%-24s %8s %8s %8s\n", "detector", "recall", "flagged", "FP");
      for (const auto& r : reports) {
        std::printf("%-24s %8.4f %8zu %8zu\n", std::string(defense::to_string(r.method)).c_str(),
                    r.recall, r.flagged_ids.size(), r.false_positives());
        doc.push_back(r.to_json());
      }
      write_json(out_path, doc);
    } else if (*rn) {
      const auto cfg = config_with_seed(rn_config, seed);
      const auto report = harness::run_experiment(cfg);
      print_report(report);
      write_json(out_path, report.to_json(!rn_omit_runtime));
    } else if (*ab) {
      const auto base = harness::load_config(ab_config);
      const auto rows = harness::run_ablation(ab_preset, base, ab_seeds);
      std::printf("%-24s %6s %8s %8s %8s\n", "arm", "seed", "MRR", "ASR@10", "VR");
      ordered_json doc;
      doc["preset"] = ab_preset;
      doc["runs"] = ordered_json::array();
      for (const auto& r : rows) {
        const auto it = r.report.backdoored.asr.find(10);
        std::printf("%-24s %6llu %8.4f %8.4f %8.4f\n", r.label.c_str(),
                    static_cast<unsigned long long>(r.seed), r.report.backdoored.mrr_non_target,
                    it == r.report.backdoored.asr.end() ? 0.0 : it->second, r.report.backdoored.vr);
        doc["runs"].push_back({{"arm", r.label}, {"seed", r.seed}, {"report", r.report.to_json()}});
      }
      std::printf("median ASR@10:");
      for (const auto& [label, v] : harness::median_asr(rows, 10)) {
        std::printf(" %s=%.4f", label.c_str(), v);
        doc["median_asr10"][label] = v;
      }
      std::printf("\n");
      write_json(out_path, doc);
    } else if (*gn) {
      auto cfg = config_with_seed(gn_config, seed);
      if (!cfg.synthetic) {
        throw ConfigError("config has no synthetic section");
      }
      const auto data = harness::load_data(cfg);
      std::filesystem::create_directories(gn_dir);
      const std::filesystem::path dir(gn_dir);
      corpus::save_corpus_jsonl(data.train, (dir / "train.jsonl").string());
      corpus::save_corpus_jsonl(data.kb, (dir / "kb.jsonl").string());
      corpus::save_corpus_jsonl(data.vuln_pool, (dir / "vuln.jsonl").string());
      corpus::save_corpus_jsonl(*data.proxy, (dir / "proxy.jsonl").string());
      std::printf("wrote %zu train, %zu kb, %zu vuln, %zu proxy snippets to %s\n",
                  data.train.snippets.size(), data.kb.snippets.size(),
                  data.vuln_pool.snippets.size(), data.proxy->snippets.size(), gn_dir.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pipeline error: %s\n", e.what());
    return kExitPipeline;
  }
  return kExitOk;
}
