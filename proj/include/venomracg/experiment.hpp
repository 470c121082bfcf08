#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "venomracg/backdoor.hpp"
#include "venomracg/corpus.hpp"
#include "venomracg/defense.hpp"
#include "venomracg/poisonkb.hpp"
#include "venomracg/retriever.hpp"
#include "venomracg/synthetic.hpp"

namespace venomracg::harness {

struct CorpusPaths {
  std::string train_pairs;
  std::string eval_pairs; // optional, defaults to the KB's own pairs
  std::string kb;
  std::string vuln_pool;
  std::string proxy;     // required in black-box mode
  std::string reference; // clean code for the n-gram screen, defaults to the training code
};

struct DetectorParams {
  bool enabled = true;
  double ss_multiplier = 1.5;
  std::size_t ngram_order = defense::kDefaultNGramOrder;
  double z_threshold = defense::kDefaultZThreshold;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> data_seed; // synthetic corpora follow `seed` when unset
  std::optional<SyntheticOptions> synthetic; // generated corpora instead of paths
  CorpusPaths paths;

  std::string target;  // empty: most frequent query word
  std::string trigger; // empty: best-scoring vulnerable identifier
  double gamma = 2.0;

  retriever::TrainConfig train;

  std::size_t budget = 10;
  poisonkb::KbMode kb_mode = poisonkb::KbMode::white_box;
  poisonkb::Selection selection = poisonkb::Selection::cluster;
  backdoor::Placement placement = backdoor::Placement::dissimilar;
  double theta = poisonkb::kDefaultTheta;
  double delta = poisonkb::kDefaultDelta;

  std::vector<std::size_t> k_values{1, 5, 10};
  std::size_t depth = 100;
  double overlap_threshold = 0.3;
  DetectorParams detectors;

  /// Checks value ranges and, for file-backed corpora, that every path exists.
  void validate() const;
};

/// Parses a config object. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = {});
ExperimentConfig load_config(const std::string& path);

/// Canonical form: every field present, keys sorted.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// 64-bit FNV-1a of the canonical form, as 16 hex digits.
std::string config_fingerprint(const ExperimentConfig& config);

struct ArmMetrics {
  double mrr_non_target = 0.0;
  std::map<std::size_t, double> asr;
  double vr = 0.0;
  double similarity_non_target = 0.0;

  nlohmann::ordered_json to_json() const;
};

struct ExperimentReport {
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::string target;
  std::string trigger;
  std::size_t target_queries = 0;
  std::size_t non_target_queries = 0;
  std::size_t poisons = 0;
  std::size_t target_pairs_injected = 0;
  ArmMetrics backdoored;
  ArmMetrics clean_control;
  std::map<std::string, double> detector_recalls;
  std::vector<defense::DetectionReport> detections;
  double runtime_seconds = 0.0;

  nlohmann::ordered_json to_json(bool include_runtime = true) const;
};

/// Corpora an experiment runs on.
struct ExperimentData {
  corpus::Corpus train;
  corpus::Corpus kb;
  std::vector<corpus::QueryCodePair> eval_pairs;
  corpus::Corpus vuln_pool;
  std::optional<corpus::Corpus> proxy;
  corpus::Corpus reference;
};

ExperimentData load_data(const ExperimentConfig& config);

/// The backdoor spec the config names, with empty fields filled by selection.
backdoor::BackdoorSpec resolve_spec(const ExperimentConfig& config, const ExperimentData& data);

/// Trained retrievers of one run. Independent of the poison budget and the
/// candidate selection, so ablations over those reuse it.
struct TrainedModels {
  backdoor::BackdoorSpec spec;
  backdoor::TrainingSets sets;
  retriever::TrainResult clean;
  retriever::TrainResult backdoored;
};

TrainedModels train_models(const ExperimentConfig& config, const ExperimentData& data);

/// Poisons the KB with the backdoored retriever, evaluates both retrievers and
/// runs the detectors.
ExperimentReport attack_and_evaluate(const ExperimentConfig& config, const ExperimentData& data,
                                     const TrainedModels& models);

ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data);

/// Named variants of a base config.
struct AblationArm {
  std::string label;
  ExperimentConfig config;
};

std::vector<std::string> ablation_presets();
std::vector<AblationArm> ablation_arms(const std::string& preset, const ExperimentConfig& base);

struct AblationRow {
  std::string label;
  std::uint64_t seed = 0;
  ExperimentReport report;
};

/// Runs every arm of the preset for each seed. Arms that differ only in
/// poisoning share trained retrievers.
std::vector<AblationRow> run_ablation(const std::string& preset, const ExperimentConfig& base,
                                      const std::vector<std::uint64_t>& seeds);

/// Median over seeds of ASR@k per arm label, in preset order.
std::vector<std::pair<std::string, double>> median_asr(const std::vector<AblationRow>& rows,
                                                       std::size_t k);

double median(std::vector<double> values);

} // namespace venomracg::harness
