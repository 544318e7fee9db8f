#pragma once

// Model pipelines (module pre-training then end-to-end training) and the
// analysis experiments built on them: limited training data, transfer to a
// domain with few examples, and the choice of belief source.

#include "structfusion/training.hpp"

#include <json.hpp>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace structfusion {

/// How one model is built and trained.
struct PipelineConfig {
  std::string kind = "sfn-finetuned";
  ModelOptions options;
  Hyperparams hyper;
  /// Epochs for each module; -1 uses hyper.epochs.
  int pretrain_epochs = -1;
  MultitaskWeights weights;

  bool needs_pretraining() const;
};

/// Pre-trains NLU, DM and NLG on `data.train` (validation on `data.val`).
DialogModules pretrain_modules(const ModelDims& dims, const TrainData& data, const Hyperparams& hyper,
                               int epochs, std::ostream* log = nullptr);

struct TrainedPipeline {
  std::unique_ptr<ResponseModel> model;
  TrainResult result;
};

/// Builds `config.kind` and trains it. Kinds with modules (except
/// multitask, which learns them jointly) start from `pretrained`, or from
/// modules pre-trained here on the same data when it is null. Zero-shot
/// naive fusion is not trained further; multitasked kinds use the module
/// losses.
TrainedPipeline train_pipeline(const PipelineConfig& config, const TrainData& data, const TrainHooks& hooks = {},
                               const DialogModules* pretrained = nullptr);

class InsufficientDialogs : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { LowData, DomainTransfer, BeliefAblation };
const char* to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);  // low-data|domain-transfer|belief-ablation

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::LowData;
  std::vector<double> fractions{1.0, 5.0, 10.0, 25.0};  // percent of the train split
  std::string in_domain = "restaurant";
  int ood_count = 2000;
  int id_count = 50;
  std::vector<BeliefSource> modes{BeliefSource::GroundTruth, BeliefSource::Predicted, BeliefSource::Sum,
                                  BeliefSource::Linear};
  /// Compared models for LowData and DomainTransfer. BeliefAblation uses
  /// the first entry whose kind has modules as the template.
  std::vector<PipelineConfig> models;
  std::uint64_t seed = 1;
  /// LowData only: small fractions get more epochs so every run takes at
  /// least this many optimiser steps. 0 keeps hyper.epochs everywhere.
  int min_updates = 0;
  /// Every run is repeated with seeds seed, seed+1, ...; rows report the
  /// mean and keep the per-seed reports.
  int repeats = 1;

  /// Defaults: seq2seq-attn against sfn-finetuned.
  static std::vector<PipelineConfig> default_models(const Hyperparams& hyper);
  void validate() const;
};

struct ExperimentRow {
  std::string model;
  std::string variant;  // fraction, "transfer" or the belief source
  double fraction = 100.0;
  std::size_t train_dialogs = 0;
  int best_epoch = 0;  // of the first seed
  EvalReport report;  // mean over runs
  std::vector<EvalReport> runs;
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::LowData;
  std::string test_set;
  std::vector<ExperimentRow> rows;

  const ExperimentRow& find(std::string_view model, std::string_view variant) const;
};

/// First ceil(fraction% of n) dialogs (at least one) of a seeded shuffle;
/// 100% returns `train` unchanged.
std::vector<const Dialog*> sample_fraction(std::span<const Dialog* const> train, double percent, std::uint64_t seed);

struct DomainTransferSplit {
  std::vector<const Dialog*> train;  // ood_count without the domain, then id_count with it
  std::vector<const Dialog*> test;   // test dialogs touching the domain
};

/// Draws from the corpus train split. Throws InsufficientDialogs when
/// either pool is too small.
DomainTransferSplit domain_transfer_split(const DialogCorpus& corpus, const std::string& in_domain, int ood_count,
                                          int id_count, std::uint64_t seed);

/// Validation always uses the full val split. LowData and BeliefAblation
/// test on the full test split.
ExperimentReport run_experiment(const ExperimentConfig& config, const DialogCorpus& corpus,
                                const EntityDatabase& database, std::ostream* log = nullptr);

/// Rows plus, for LowData, a "series" object: per model, the fractions and
/// the matching inform/success/bleu/combined arrays.
nlohmann::json experiment_to_json(const ExperimentReport& report);
std::string experiment_table(const ExperimentReport& report);

}  // namespace structfusion
