#pragma once

// The three dialog modules:
//
//   NLU  context tokens           -> belief probabilities (B)
//   DM   belief (B) + db (D)      -> act probabilities (A)
//   NLG  belief + db + acts       -> response tokens
//
// Each one is trained on ground-truth inputs by pretrain_module().

#include "structfusion/batch.hpp"
#include "structfusion/checkpoint.hpp"
#include "structfusion/layers.hpp"
#include "structfusion/optim.hpp"

#include <string>
#include <vector>

namespace structfusion {

struct ModelDims {
  Index vocab = 0;
  Index embed = 50;
  Index hidden = 150;
  Index belief = 0;
  Index acts = 0;
  Index db = 0;

  static ModelDims from_corpus(const DialogCorpus& corpus, Index embed, Index hidden);
  void validate() const;
  std::vector<std::pair<std::string, std::string>> meta() const;
  static ModelDims from_meta(const Checkpoint& ckpt);
};

/// Throws DimensionError unless m has the expected column count.
void expect_cols(const Var& v, Index cols, const char* what);

struct ModuleOutput {
  Var logits;
  Var probs;
};

struct NluModule {
  EmbeddingTable embedding;
  LstmParams encoder;
  Linear head;  // hidden -> B

  NluModule() = default;
  NluModule(const ModelDims& dims, Rng& rng, const std::string& prefix = "nlu");

  /// Empty contexts throw std::invalid_argument.
  ModuleOutput forward(Tape& tape, const std::vector<std::vector<int>>& contexts);
  std::vector<Parameter*> parameters();
};

struct DmModule {
  Linear hidden;  // B + D -> H, ReLU
  Linear out;     // H -> A

  DmModule() = default;
  DmModule(const ModelDims& dims, Rng& rng, const std::string& prefix = "dm");

  ModuleOutput forward(Tape& tape, const Var& belief, const Var& db);
  std::vector<Parameter*> parameters();
};

struct NlgModule {
  Linear init;  // B + D + A -> H
  EmbeddingTable embedding;
  LstmParams decoder;
  Linear out;  // H -> V

  NlgModule() = default;
  NlgModule(const ModelDims& dims, Rng& rng, const std::string& prefix = "nlg");

  /// h0 = tanh(init([belief; db; acts])), c0 = 0.
  LstmState start(Tape& tape, const Var& belief, const Var& db, const Var& acts);
  /// Advances one token; returns next-token logits (b x V).
  Var step(Tape& tape, LstmState& state, std::span<const int> prev);
  /// Logits for every position of the teacher-forced inputs.
  std::vector<Var> teacher_forced(Tape& tape, const Var& belief, const Var& db, const Var& acts,
                                  const TimeMajor& inputs);
  std::vector<Parameter*> parameters();
};

struct DialogModules {
  NluModule nlu;
  DmModule dm;
  NlgModule nlg;

  DialogModules() = default;
  DialogModules(const ModelDims& dims, Rng& rng);
  std::vector<Parameter*> parameters();
};

enum class ModuleKind { Nlu, Dm, Nlg };
const char* module_name(ModuleKind kind);
ModuleKind parse_module_kind(std::string_view name);

// Losses on ground-truth inputs only.
Var nlu_loss(Tape& tape, NluModule& nlu, const Batch& batch);
Var dm_loss(Tape& tape, DmModule& dm, const Batch& batch);
SequenceLoss nlg_loss(Tape& tape, NlgModule& nlg, const Batch& batch);

struct PretrainEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct PretrainResult {
  std::vector<PretrainEpoch> history;
  int best_epoch = 0;  // 0 when no epoch ran
};

/// Trains one module with Adam and gradient clipping. The parameters of the
/// epoch with the lowest validation loss (training loss if `val` is empty)
/// are restored on return. Non-finite losses throw NonFiniteError.
PretrainResult pretrain_module(ModuleKind which, DialogModules& modules, std::span<const TurnRef> train,
                               std::span<const TurnRef> val, const Hyperparams& hyper);

/// Module checkpoint: tensors of one module plus "module" and dims headers.
Checkpoint module_checkpoint(ModuleKind which, DialogModules& modules, const ModelDims& dims);
void load_module_checkpoint(const Checkpoint& ckpt, DialogModules& modules);
std::vector<Parameter*> module_parameters(ModuleKind which, DialogModules& modules);

}  // namespace structfusion
