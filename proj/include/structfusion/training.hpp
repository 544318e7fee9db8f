#pragma once

#include "structfusion/metrics.hpp"
#include "structfusion/optim.hpp"

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace structfusion {

struct MultitaskWeights {
  double e2e = 1.0;
  double nlu = 1.0;
  double dm = 1.0;
  double nlg = 1.0;

  void validate() const;
};

enum class RlBaseline { BatchMean, None };

struct RlHyperparams {
  double lr = 1e-5;
  int epochs = 1;
  /// Dialogs rolled out per epoch; 0 means the whole train split.
  int episodes_per_epoch = 0;
  int dialogs_per_batch = 16;
  double sampling_temperature = 1.0;
  RlBaseline baseline = RlBaseline::BatchMean;
  bool freeze_modules = true;
  double clip_norm = 5.0;
  int max_len = 50;
  std::uint64_t seed = 1;
};

/// What a training loop reads. Validation uses `val`; it may be empty, in
/// which case the last epoch is kept.
struct TrainData {
  const DialogCorpus* corpus = nullptr;
  const EntityDatabase* database = nullptr;
  std::vector<const Dialog*> train;
  std::vector<const Dialog*> val;

  static TrainData from_corpus(const DialogCorpus& corpus, const EntityDatabase& database);
};

struct TrainHooks {
  std::ostream* log = nullptr;     // one JSON object per line and epoch
  std::string checkpoint_dir;      // epoch-<n>.ckpt and best.ckpt when set
  bool validate = true;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // weighted total
  double loss_e2e = 0.0;
  double loss_nlu = 0.0;
  double loss_dm = 0.0;
  double loss_nlg = 0.0;
  bool validated = false;
  EvalReport val;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

nlohmann::json epoch_to_json(const EpochRecord& record);

/// Teacher-forced response cross-entropy only. The parameters of the epoch
/// with the best validation combined score are restored on return.
TrainResult train_supervised(ResponseModel& model, const TrainData& data, const Hyperparams& hyper,
                             const TrainHooks& hooks = {});

/// Adds weighted module losses on ground-truth inputs. Requires a model with
/// modules. Zero-weighted heads are not computed.
TrainResult train_multitask(ResponseModel& model, const TrainData& data, const Hyperparams& hyper,
                            const MultitaskWeights& weights, const TrainHooks& hooks = {});

/// Per-batch loss terms, exposed for gradient checks.
struct LossTerms {
  Var total;
  Var e2e, nlu, dm, nlg;  // unset when the weight is zero
};
LossTerms multitask_loss(Tape& tape, ResponseModel& model, const Batch& batch, const MultitaskWeights& weights);

struct ScoredCheckpoint {
  int epoch = 0;
  double combined = 0.0;
};

/// Highest combined score; ties go to the earliest epoch.
const ScoredCheckpoint& validate_select(std::span<const ScoredCheckpoint> candidates);

class FrozenModuleViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Dialog-level reward from the sampled responses of every turn.
using RewardFn = std::function<double(const Dialog&, std::span<const TokenSeq>)>;

/// Success in {0,1}; Inform for dialogs without requested attributes.
RewardFn success_reward(const DialogCorpus& corpus, const EntityDatabase& database);

struct RlEpochRecord {
  int epoch = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  std::size_t dialogs = 0;
  std::size_t no_request_dialogs = 0;
  long updates = 0;
  long skipped = 0;  // batches with zero advantage everywhere
};

struct RlResult {
  std::vector<RlEpochRecord> history;
};

nlohmann::json rl_epoch_to_json(const RlEpochRecord& record);

/// REINFORCE: every turn of each dialog is sampled given the ground-truth
/// context, the dialog reward R gives loss -(R - baseline) * sum_t log p(w_t).
/// With freeze_modules the NLU/DM/NLG are frozen and checked byte-for-byte
/// after every epoch (FrozenModuleViolation on change).
RlResult train_rl(ResponseModel& model, const TrainData& data, const RlHyperparams& hyper,
                  const RewardFn& reward = {}, const TrainHooks& hooks = {});

}  // namespace structfusion
