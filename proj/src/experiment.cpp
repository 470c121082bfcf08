#include "venomracg/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "venomracg/errors.hpp"
#include "venomracg/lexicon.hpp"
#include "venomracg/metrics.hpp"

namespace venomracg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// config

namespace {

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<poisonkb::KbMode> kKbModes[] = {{poisonkb::KbMode::white_box, "white_box"},
                                                   {poisonkb::KbMode::black_box, "black_box"}};
constexpr EnumName<poisonkb::Selection> kSelections[] = {
    {poisonkb::Selection::cluster, "cluster"},
    {poisonkb::Selection::shortest, "shortest"},
    {poisonkb::Selection::random, "random"}};
constexpr EnumName<backdoor::Placement> kPlacements[] = {
    {backdoor::Placement::dissimilar, "dissimilar"}, {backdoor::Placement::similar, "similar"}};

template <typename Enum, std::size_t N>
const char* enum_name(const EnumName<Enum> (&table)[N], Enum value) {
  for (const auto& e : table) {
    if (e.value == value) {
      return e.name;
    }
  }
  return "unknown";
}

template <typename Enum, std::size_t N>
Enum enum_value(const EnumName<Enum> (&table)[N], const std::string& name, const char* key) {
  for (const auto& e : table) {
    if (name == e.name) {
      return e.value;
    }
  }
  throw ConfigError(std::string("unknown value '") + name + "' for " + key);
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const char* where) {
  if (!obj.is_object()) {
    throw ConfigError(std::string(where) + " must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    out = obj.at(key).get<T>();
  }
}

std::string resolve_path(const json& obj, const char* key, const std::string& base_dir) {
  if (!obj.contains(key) || obj.at(key).is_null()) {
    return {};
  }
  fs::path p = obj.at(key).get<std::string>();
  if (p.is_relative() && !base_dir.empty()) {
    p = fs::path(base_dir) / p;
  }
  return p.lexically_normal().string();
}

} // namespace

void ExperimentConfig::validate() const {
  train.validate();
  if (k_values.empty()) {
    throw ConfigError("evaluation needs at least one k");
  }
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] < 1 || (i > 0 && k_values[i] <= k_values[i - 1])) {
      throw ConfigError("k values must be >= 1 and strictly ascending");
    }
  }
  if (depth < k_values.back()) {
    throw ConfigError("retrieval depth must be at least the largest k");
  }
  if (!(overlap_threshold >= 0.0 && overlap_threshold <= 1.0)) {
    throw ConfigError("overlap threshold must lie in [0, 1]");
  }
  if (!(detectors.ss_multiplier >= 0.0) || detectors.ngram_order == 0) {
    throw ConfigError("detector parameters out of range");
  }
  if (!target.empty() || !trigger.empty()) {
    if (!target.empty() && corpus::word_tokens(target) != std::vector<std::string>{target}) {
      throw ConfigError("target must be a single lowercase word");
    }
  }
  if (synthetic) {
    synthetic->validate();
    return;
  }
  const std::pair<const char*, const std::string*> required[] = {
      {"train_pairs", &paths.train_pairs}, {"kb", &paths.kb}, {"vuln_pool", &paths.vuln_pool}};
  for (const auto& [key, path] : required) {
    if (path->empty()) {
      throw ConfigError(std::string("corpora.") + key + " is required");
    }
  }
  for (const std::string* path : {&paths.train_pairs, &paths.eval_pairs, &paths.kb,
                                  &paths.vuln_pool, &paths.proxy, &paths.reference}) {
    if (!path->empty() && !fs::exists(*path)) {
      throw ConfigError("corpus file not found: " + *path);
    }
  }
}

ExperimentConfig parse_config(const json& doc, const std::string& base_dir) {
  ExperimentConfig cfg;
  try {
    reject_unknown(doc,
                   {"seed", "data_seed", "synthetic", "corpora", "backdoor", "retriever", "poison",
                    "evaluation", "detectors"},
                   "config");
    read(doc, "seed", cfg.seed);
    if (doc.contains("data_seed") && !doc.at("data_seed").is_null()) {
      cfg.data_seed = doc.at("data_seed").get<std::uint64_t>();
    }
    if (doc.contains("synthetic") && !doc.at("synthetic").is_null()) {
      const json& s = doc.at("synthetic");
      reject_unknown(s,
                     {"train_pairs", "kb_size", "vuln_pool", "proxy_size", "target_word",
                      "target_rate", "borrow_rate", "target_primary_rate", "sprawl_rate"},
                     "synthetic");
      SyntheticOptions opts;
      read(s, "train_pairs", opts.train_pairs);
      read(s, "kb_size", opts.kb_size);
      read(s, "vuln_pool", opts.vuln_pool);
      read(s, "proxy_size", opts.proxy_size);
      read(s, "target_word", opts.target_word);
      read(s, "target_rate", opts.target_rate);
      read(s, "borrow_rate", opts.borrow_rate);
      read(s, "target_primary_rate", opts.target_primary_rate);
      read(s, "sprawl_rate", opts.sprawl_rate);
      cfg.synthetic = opts;
    }
    if (doc.contains("corpora")) {
      const json& c = doc.at("corpora");
      reject_unknown(c, {"train_pairs", "eval_pairs", "kb", "vuln_pool", "proxy", "reference"},
                     "corpora");
      cfg.paths.train_pairs = resolve_path(c, "train_pairs", base_dir);
      cfg.paths.eval_pairs = resolve_path(c, "eval_pairs", base_dir);
      cfg.paths.kb = resolve_path(c, "kb", base_dir);
      cfg.paths.vuln_pool = resolve_path(c, "vuln_pool", base_dir);
      cfg.paths.proxy = resolve_path(c, "proxy", base_dir);
      cfg.paths.reference = resolve_path(c, "reference", base_dir);
    }
    if (doc.contains("backdoor")) {
      const json& b = doc.at("backdoor");
      reject_unknown(b, {"target", "trigger", "gamma"}, "backdoor");
      read(b, "target", cfg.target);
      read(b, "trigger", cfg.trigger);
      read(b, "gamma", cfg.gamma);
    }
    if (doc.contains("retriever")) {
      const json& r = doc.at("retriever");
      reject_unknown(r, {"dim", "tau", "batch_size", "epochs", "learning_rate"}, "retriever");
      read(r, "dim", cfg.train.dim);
      read(r, "tau", cfg.train.tau);
      read(r, "batch_size", cfg.train.batch_size);
      read(r, "epochs", cfg.train.epochs);
      read(r, "learning_rate", cfg.train.learning_rate);
    }
    if (doc.contains("poison")) {
      const json& p = doc.at("poison");
      reject_unknown(p, {"budget", "kb_mode", "selection", "placement", "theta", "delta"},
                     "poison");
      read(p, "budget", cfg.budget);
      if (p.contains("kb_mode")) {
        cfg.kb_mode = enum_value(kKbModes, p.at("kb_mode").get<std::string>(), "poison.kb_mode");
      }
      if (p.contains("selection")) {
        cfg.selection =
            enum_value(kSelections, p.at("selection").get<std::string>(), "poison.selection");
      }
      if (p.contains("placement")) {
        cfg.placement =
            enum_value(kPlacements, p.at("placement").get<std::string>(), "poison.placement");
      }
      read(p, "theta", cfg.theta);
      read(p, "delta", cfg.delta);
    }
    if (doc.contains("evaluation")) {
      const json& e = doc.at("evaluation");
      reject_unknown(e, {"k", "depth", "overlap_threshold"}, "evaluation");
      read(e, "k", cfg.k_values);
      read(e, "depth", cfg.depth);
      read(e, "overlap_threshold", cfg.overlap_threshold);
    }
    if (doc.contains("detectors")) {
      const json& d = doc.at("detectors");
      reject_unknown(d, {"enabled", "ss_multiplier", "ngram_order", "z_threshold"}, "detectors");
      read(d, "enabled", cfg.detectors.enabled);
      read(d, "ss_multiplier", cfg.detectors.ss_multiplier);
      read(d, "ngram_order", cfg.detectors.ngram_order);
      read(d, "z_threshold", cfg.detectors.z_threshold);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path);
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, fs::path(path).parent_path().string());
}

json config_to_json(const ExperimentConfig& cfg) {
  json out;
  out["seed"] = cfg.seed;
  out["data_seed"] = cfg.data_seed ? json(*cfg.data_seed) : json(nullptr);
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    out["synthetic"] = {{"train_pairs", s.train_pairs}, {"kb_size", s.kb_size},
                        {"vuln_pool", s.vuln_pool},     {"proxy_size", s.proxy_size},
                        {"target_word", s.target_word}, {"target_rate", s.target_rate},
                        {"borrow_rate", s.borrow_rate},
                        {"target_primary_rate", s.target_primary_rate},
                        {"sprawl_rate", s.sprawl_rate}};
  } else {
    out["synthetic"] = nullptr;
  }
  out["corpora"] = {{"train_pairs", cfg.paths.train_pairs}, {"eval_pairs", cfg.paths.eval_pairs},
                    {"kb", cfg.paths.kb},                   {"vuln_pool", cfg.paths.vuln_pool},
                    {"proxy", cfg.paths.proxy},             {"reference", cfg.paths.reference}};
  out["backdoor"] = {{"target", cfg.target}, {"trigger", cfg.trigger}, {"gamma", cfg.gamma}};
  out["retriever"] = {{"dim", cfg.train.dim},
                      {"tau", cfg.train.tau},
                      {"batch_size", cfg.train.batch_size},
                      {"epochs", cfg.train.epochs},
                      {"learning_rate", cfg.train.learning_rate}};
  out["poison"] = {{"budget", cfg.budget},
                   {"kb_mode", enum_name(kKbModes, cfg.kb_mode)},
                   {"selection", enum_name(kSelections, cfg.selection)},
                   {"placement", enum_name(kPlacements, cfg.placement)},
                   {"theta", cfg.theta},
                   {"delta", cfg.delta}};
  out["evaluation"] = {
      {"k", cfg.k_values}, {"depth", cfg.depth}, {"overlap_threshold", cfg.overlap_threshold}};
  out["detectors"] = {{"enabled", cfg.detectors.enabled},
                      {"ss_multiplier", cfg.detectors.ss_multiplier},
                      {"ngram_order", cfg.detectors.ngram_order},
                      {"z_threshold", cfg.detectors.z_threshold}};
  return out;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// report

nlohmann::ordered_json ArmMetrics::to_json() const {
  nlohmann::ordered_json out;
  out["mrr_non_target"] = mrr_non_target;
  nlohmann::ordered_json a = nlohmann::ordered_json::object();
  for (const auto& [k, v] : asr) {
    a[std::to_string(k)] = v;
  }
  out["asr"] = a;
  out["vr"] = vr;
  out["similarity_non_target"] = similarity_non_target;
  return out;
}

nlohmann::ordered_json ExperimentReport::to_json(bool include_runtime) const {
  nlohmann::ordered_json out;
  out["fingerprint"] = fingerprint;
  out["seed"] = seed;
  out["target"] = target;
  out["trigger"] = trigger;
  out["target_queries"] = target_queries;
  out["non_target_queries"] = non_target_queries;
  out["poisons"] = poisons;
  out["target_pairs_injected"] = target_pairs_injected;
  const auto arm = backdoored.to_json();
  for (const auto& [key, value] : arm.items()) {
    out[key] = value;
  }
  out["clean_control"] = clean_control.to_json();
  out["detector_recalls"] = detector_recalls;
  nlohmann::ordered_json det = nlohmann::ordered_json::array();
  for (const auto& d : detections) {
    det.push_back(d.to_json());
  }
  out["detections"] = det;
  if (include_runtime) {
    out["runtime_seconds"] = runtime_seconds;
  }
  return out;
}

// ---------------------------------------------------------------------------
// pipeline

namespace {

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

} // namespace

ExperimentData load_data(const ExperimentConfig& cfg) {
  return stage("load", [&] {
    ExperimentData data;
    if (cfg.synthetic) {
      SyntheticOptions opts = *cfg.synthetic;
      opts.seed = cfg.data_seed.value_or(cfg.seed);
      SyntheticWorld world = generate_world(opts);
      data.train = std::move(world.train);
      data.kb = std::move(world.kb);
      data.vuln_pool = std::move(world.vuln_pool);
      data.proxy = std::move(world.proxy);
    } else {
      data.train = corpus::load_corpus_jsonl(cfg.paths.train_pairs, "train");
      data.kb = corpus::load_corpus_jsonl(cfg.paths.kb, "kb");
      data.vuln_pool = corpus::load_corpus_jsonl(cfg.paths.vuln_pool, "vuln");
      if (!cfg.paths.proxy.empty()) {
        data.proxy = corpus::load_corpus_jsonl(cfg.paths.proxy, "proxy");
      }
      if (!cfg.paths.reference.empty()) {
        data.reference = corpus::load_corpus_jsonl(cfg.paths.reference, "reference");
      }
    }
    data.eval_pairs = cfg.paths.eval_pairs.empty()
                          ? data.kb.pairs
                          : corpus::load_corpus_jsonl(cfg.paths.eval_pairs, "eval").pairs;
    if (data.reference.snippets.empty()) {
      data.reference.name = "reference";
      data.reference.snippets = data.train.snippets;
    }
    return data;
  });
}

backdoor::BackdoorSpec resolve_spec(const ExperimentConfig& cfg, const ExperimentData& data) {
  return stage("select", [&] {
    backdoor::BackdoorSpec spec{cfg.target, cfg.trigger};
    if (spec.target_word.empty()) {
      spec.target_word = lexicon::select_targets(data.train.pairs, 1, lexicon::default_stopwords(),
                                                 lexicon::default_keywords())
                             .front()
                             .word;
    }
    if (spec.trigger_token.empty()) {
      const auto clean = corpus::corpus_token_stats(data.train);
      const auto vuln = corpus::corpus_token_stats(data.vuln_pool);
      spec.trigger_token =
          lexicon::select_triggers(clean, vuln, data.vuln_pool.snippets.size(), 1, cfg.gamma)
              .front()
              .token;
    }
    spec.validate();
    return spec;
  });
}

TrainedModels train_models(const ExperimentConfig& cfg, const ExperimentData& data) {
  TrainedModels out;
  out.spec = resolve_spec(cfg, data);
  retriever::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;

  const auto d_clean = stage("pairs", [&] { return retriever::resolve_pairs(data.train); });
  auto vocab = retriever::build_vocabulary(d_clean);
  vocab.push_back(out.spec.trigger_token);

  out.clean = stage("train-clean", [&] {
    return retriever::train(retriever::BiEncoderModel(vocab, tc.dim, tc.seed), d_clean, tc);
  });
  out.sets = stage("hybrid-trainset", [&] {
    return backdoor::build_hybrid_trainset(d_clean, out.spec, out.clean.model, cfg.placement);
  });
  for (auto& t : retriever::build_vocabulary(out.sets.d_train)) {
    vocab.push_back(std::move(t));
  }
  out.backdoored = stage("train-backdoored", [&] {
    return retriever::train(retriever::BiEncoderModel(vocab, tc.dim, tc.seed), out.sets.d_train,
                            tc);
  });
  return out;
}

namespace {

struct Split {
  std::vector<const corpus::QueryCodePair*> target;
  std::vector<const corpus::QueryCodePair*> non_target;
};

Split split_queries(const std::vector<corpus::QueryCodePair>& pairs, const std::string& target) {
  Split s;
  for (const auto& p : pairs) {
    (backdoor::query_contains_word(p.query, target) ? s.target : s.non_target).push_back(&p);
  }
  return s;
}

std::string query_id(const corpus::QueryCodePair& p, std::size_t i) {
  return p.code_id + "#" + std::to_string(i);
}

ArmMetrics evaluate_arm(const ExperimentConfig& cfg, const retriever::BiEncoderModel& model,
                        const corpus::Corpus& kb, const Split& split,
                        const std::set<std::string>& poison_ids) {
  const auto encoded = retriever::encode_kb(model, kb);
  const std::size_t context = cfg.k_values.back();
  auto context_of = [&](const retriever::RetrievalResult& r) {
    std::vector<const corpus::CodeSnippet*> ctx;
    for (std::size_t i = 0; i < std::min(context, r.ranked.size()); ++i) {
      ctx.push_back(&kb.at(r.ranked[i].first));
    }
    return ctx;
  };

  ArmMetrics m;
  std::vector<retriever::RetrievalResult> non_target;
  std::map<std::string, std::string> gold;
  double sim = 0.0;
  for (std::size_t i = 0; i < split.non_target.size(); ++i) {
    const auto& p = *split.non_target[i];
    if (!kb.index_of(p.code_id)) {
      throw MissingGold("gold snippet '" + p.code_id + "' is not in the knowledge base");
    }
    const std::string qid = query_id(p, i);
    gold[qid] = p.code_id;
    non_target.push_back(
        retriever::retrieve(encoded, retriever::embed_query(model, p.query), cfg.depth, qid));
    const auto generated = mock_generate(p.query, context_of(non_target.back()),
                                         cfg.overlap_threshold);
    sim += similarity(generated.text, kb.at(p.code_id).source);
  }
  m.mrr_non_target = mrr(non_target, gold);
  m.similarity_non_target =
      split.non_target.empty() ? 0.0 : sim / static_cast<double>(split.non_target.size());

  std::vector<retriever::RetrievalResult> target;
  std::vector<GeneratedCode> generated;
  for (std::size_t i = 0; i < split.target.size(); ++i) {
    const auto& p = *split.target[i];
    target.push_back(retriever::retrieve(encoded, retriever::embed_query(model, p.query),
                                         cfg.depth, query_id(p, i)));
    generated.push_back(mock_generate(p.query, context_of(target.back()), cfg.overlap_threshold));
  }
  for (const std::size_t k : cfg.k_values) {
    m.asr[k] = asr_at_k(target, poison_ids, k);
  }
  m.vr = vulnerability_rate(generated);
  return m;
}

std::vector<std::string> ids_of_rows(const std::vector<std::size_t>& rows,
                                     const corpus::Corpus& kb) {
  std::vector<std::string> out;
  for (const auto r : rows) {
    out.push_back(kb.snippets[r].id);
  }
  return out;
}

} // namespace

ExperimentReport attack_and_evaluate(const ExperimentConfig& cfg, const ExperimentData& data,
                                     const TrainedModels& models) {
  ExperimentReport report;
  report.fingerprint = config_fingerprint(cfg);
  report.seed = cfg.seed;
  report.target = models.spec.target_word;
  report.trigger = models.spec.trigger_token;
  report.target_pairs_injected = models.sets.manifest.size();
  const auto& model = models.backdoored.model;

  const poisonkb::PoisonSet poison = stage("poison", [&] {
    const corpus::Corpus& source = poisonkb::clustering_source(
        cfg.kb_mode, data.kb, data.proxy ? &*data.proxy : nullptr);
    if (cfg.budget == 0) {
      return poisonkb::PoisonSet{{}, 0, models.spec.trigger_token, {}};
    }
    const auto weights = poisonkb::type_weight_table(source, cfg.delta);
    poisonkb::PoisonOptions opts;
    opts.budget = cfg.budget;
    opts.selection = cfg.selection;
    opts.seed = cfg.seed;
    opts.theta = cfg.theta;
    return poisonkb::build_poison_set(source, data.vuln_pool, model, weights,
                                      models.spec.trigger_token, opts);
  });
  const corpus::Corpus kb = stage("assemble", [&] { return poisonkb::assemble_poisoned_kb(data.kb, poison); });
  const auto poison_list = poison.ids();
  const std::set<std::string> poison_ids(poison_list.begin(), poison_list.end());
  report.poisons = poison_ids.size();

  const Split split = split_queries(data.eval_pairs, models.spec.target_word);
  report.target_queries = split.target.size();
  report.non_target_queries = split.non_target.size();
  report.backdoored = stage("evaluate", [&] { return evaluate_arm(cfg, model, kb, split, poison_ids); });
  report.clean_control = stage("evaluate-clean", [&] {
    return evaluate_arm(cfg, models.clean.model, kb, split, poison_ids);
  });

  if (cfg.detectors.enabled) {
    stage("detect", [&] {
      const MatrixXd emb = retriever::encode_kb(model, kb).unit_rows;

      defense::DetectionReport ac;
      ac.method = defense::Method::activation_clustering;
      for (auto& id : ids_of_rows(defense::activation_clustering(emb, cfg.seed), kb)) {
        ac.flagged_ids.insert(std::move(id));
      }
      ac.ground_truth_poison_ids = poison_ids;
      ac.recall = defense::detector_recall(ac.flagged_ids, poison_ids);

      defense::DetectionReport ss;
      ss.method = defense::Method::spectral_signature;
      const auto flag_count = std::min<std::size_t>(
          static_cast<std::size_t>(std::ceil(cfg.detectors.ss_multiplier *
                                             static_cast<double>(cfg.budget))),
          kb.snippets.size() - 1);
      const auto spectral = defense::spectral_signature(emb, flag_count, cfg.seed);
      for (auto& id : ids_of_rows(spectral.flagged, kb)) {
        ss.flagged_ids.insert(std::move(id));
      }
      ss.ground_truth_poison_ids = poison_ids;
      ss.recall = defense::detector_recall(ss.flagged_ids, poison_ids);
      ss.params["flag_count"] = flag_count;
      ss.params["power_iterations"] = spectral.iterations;

      auto ngram = defense::ngram_screen(kb, data.reference, poison_ids, cfg.detectors.ngram_order,
                                         cfg.detectors.z_threshold)
                       .report;
      for (auto* d : {&ac, &ss, &ngram}) {
        report.detector_recalls[std::string(defense::to_string(d->method))] = d->recall;
        report.detections.push_back(std::move(*d));
      }
      return 0;
    });
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report = attack_and_evaluate(cfg, data, train_models(cfg, data));
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentData data = load_data(cfg);
  ExperimentReport report = attack_and_evaluate(cfg, data, train_models(cfg, data));
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// ablations

std::vector<std::string> ablation_presets() {
  return {"similar-vs-dissimilar", "selection", "budget"};
}

std::vector<AblationArm> ablation_arms(const std::string& preset, const ExperimentConfig& base) {
  std::vector<AblationArm> arms;
  if (preset == "similar-vs-dissimilar") {
    for (const auto placement : {backdoor::Placement::dissimilar, backdoor::Placement::similar}) {
      ExperimentConfig c = base;
      c.placement = placement;
      arms.push_back({enum_name(kPlacements, placement), c});
    }
  } else if (preset == "selection") {
    for (const auto sel :
         {poisonkb::Selection::cluster, poisonkb::Selection::shortest, poisonkb::Selection::random}) {
      ExperimentConfig c = base;
      c.selection = sel;
      arms.push_back({enum_name(kSelections, sel), c});
    }
  } else if (preset == "budget") {
    for (const std::size_t n : {1, 10, 50, 100}) {
      ExperimentConfig c = base;
      c.budget = n;
      arms.push_back({"budget=" + std::to_string(n), c});
    }
  } else {
    throw ConfigError("unknown ablation preset '" + preset + "'");
  }
  return arms;
}

namespace {

// Config fields the trained retrievers depend on.
std::string model_key(const ExperimentConfig& cfg) {
  json j = config_to_json(cfg);
  j["poison"].erase("budget");
  j["poison"].erase("selection");
  j["poison"].erase("kb_mode");
  j["poison"].erase("theta");
  j["poison"].erase("delta");
  j.erase("evaluation");
  j.erase("detectors");
  return j.dump();
}

} // namespace

std::vector<AblationRow> run_ablation(const std::string& preset, const ExperimentConfig& base,
                                      const std::vector<std::uint64_t>& seeds) {
  const auto arms = ablation_arms(preset, base);
  std::vector<AblationRow> rows;
  for (const auto seed : seeds) {
    ExperimentConfig seeded = base;
    seeded.seed = seed;
    const ExperimentData data = load_data(seeded);
    std::map<std::string, TrainedModels> cache;
    for (const auto& arm : arms) {
      ExperimentConfig cfg = arm.config;
      cfg.seed = seed;
      const auto start = std::chrono::steady_clock::now();
      const std::string key = model_key(cfg);
      auto it = cache.find(key);
      if (it == cache.end()) {
        it = cache.emplace(key, train_models(cfg, data)).first;
      }
      ExperimentReport report = attack_and_evaluate(cfg, data, it->second);
      report.runtime_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      rows.push_back({arm.label, seed, std::move(report)});
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) {
    return 0.0;
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<std::pair<std::string, double>> median_asr(const std::vector<AblationRow>& rows,
                                                       std::size_t k) {
  std::vector<std::pair<std::string, double>> out;
  std::vector<std::string> labels;
  for (const auto& r : rows) {
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) {
      labels.push_back(r.label);
    }
  }
  for (const auto& label : labels) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.label == label) {
        const auto it = r.report.backdoored.asr.find(k);
        v.push_back(it == r.report.backdoored.asr.end() ? 0.0 : it->second);
      }
    }
    out.emplace_back(label, median(std::move(v)));
  }
  return out;
}

} // namespace venomracg::harness
