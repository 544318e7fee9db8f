#pragma once

// End-to-end response generators sharing one decoding interface:
//
//   Seq2SeqModel      encoder-decoder conditioned on belief and db at init
//   NaiveFusionModel  NLU -> DM -> NLG composed directly
//   MultitaskModel    seq2seq (no attention) whose encoder is the NLU's and
//                     whose decoder is the NLG's, trained with module losses
//   SfnModel          higher-level seq2seq fed by the modules at the encoder
//                     input, the decoder init and (via cold fusion) every
//                     decoding step
//   NlgOracleModel    the NLG alone, fed ground-truth acts

#include "structfusion/modules.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace structfusion {

enum class BeliefSource { GroundTruth, Predicted, Sum, Linear };
enum class ModuleMode { Frozen, FineTuned, Multitasked };

const char* to_string(BeliefSource source);
const char* to_string(ModuleMode mode);
BeliefSource parse_belief_source(std::string_view name);  // gt|pred|sum|linear
ModuleMode parse_module_mode(std::string_view name);      // frozen|finetuned|multitasked

class MissingOracleBelief : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// h0 = tanh(W_e h_e + W_bs v_bs + W_db v_db [+ W_da v_da] + b).
struct DecoderInit {
  Parameter W_e;
  Parameter W_bs;
  Parameter W_db;
  Parameter W_da;  // 0 columns when acts are not an input
  Parameter b;

  DecoderInit() = default;
  DecoderInit(const std::string& name, const ModelDims& dims, bool with_acts, Rng& rng);
  std::vector<Parameter*> parameters();
};

/// Returns (h0, c0 = 0). Pass an empty Var for v_da when the init has no act weights.
LstmState seq2seq_decode_init(Tape& tape, const Var& h_e, const Var& v_bs, const Var& v_db, const Var& v_da,
                              DecoderInit& params);

struct ColdFusionParams {
  Index state_dim = 0;
  Index fused_dim = 0;
  Index vocab = 0;
  Linear dnn1_hidden;  // V -> fused, tanh
  Linear dnn1_out;     // fused -> fused
  Linear gate;         // state + fused -> fused, sigmoid
  Linear dnn2_hidden;  // state + fused -> fused, tanh
  Linear dnn2_out;     // fused -> V

  ColdFusionParams() = default;
  ColdFusionParams(const std::string& name, Index state_dim, Index fused_dim, Index vocab, Rng& rng);
  std::vector<Parameter*> parameters();
};

struct ColdFusionState {
  Var s;       // higher-level decoder state
  Var l_nlg;   // NLG logits
  Var h_nlg;   // DNN1(l_nlg)
  Var gate;    // sigmoid(W [s; h_nlg] + b)
  Var s_cf;    // [s; gate * h_nlg]
  Var logits;  // DNN2(s_cf)
  Var y;       // softmax(logits); empty unless requested
};

struct FuseOptions {
  bool force_gate_zero = false;  // drops the NLG branch: DNN2 sees [s; 0]
  bool with_distribution = true;
};

ColdFusionState cold_fuse(Tape& tape, const Var& s, const Var& l_nlg, ColdFusionParams& params,
                          FuseOptions options = {});

struct DecodeState {
  virtual ~DecodeState() = default;
};

class ResponseModel {
 public:
  virtual ~ResponseModel() = default;

  virtual std::string kind() const = 0;
  const ModelDims& dims() const { return dims_; }

  /// Encodes the batch and returns the decoder state positioned before SOS.
  virtual std::unique_ptr<DecodeState> begin(Tape& tape, const Batch& batch) = 0;
  /// Feeds one token per row and returns next-token logits (b x V).
  virtual Var step(Tape& tape, DecodeState& state, std::span<const int> prev) = 0;

  virtual std::vector<Parameter*> parameters() = 0;
  /// The NLU/DM/NLG owned by this model, if any.
  virtual DialogModules* modules() { return nullptr; }
  /// Whether supervised training should add the module losses.
  virtual bool wants_module_losses() const { return false; }
  virtual std::vector<std::pair<std::string, std::string>> config_meta() const { return {}; }

  /// Teacher-forced response cross-entropy.
  SequenceLoss response_loss(Tape& tape, const Batch& batch);

 protected:
  explicit ResponseModel(const ModelDims& dims) : dims_(dims) {}
  ModelDims dims_;
};

/// Model construction options. Unused fields are ignored by kinds that do
/// not have the corresponding component.
struct ModelOptions {
  bool attention = true;
  BeliefSource belief_source = BeliefSource::GroundTruth;
  ModuleMode module_mode = ModuleMode::FineTuned;
};

class Seq2SeqModel : public ResponseModel {
 public:
  Seq2SeqModel(const ModelDims& dims, bool attention, Rng& rng);

  std::string kind() const override { return attention_ ? "seq2seq-attn" : "seq2seq"; }
  std::unique_ptr<DecodeState> begin(Tape& tape, const Batch& batch) override;
  Var step(Tape& tape, DecodeState& state, std::span<const int> prev) override;
  std::vector<Parameter*> parameters() override;

  EmbeddingTable embedding;
  LstmParams encoder;
  DecoderInit init;
  LstmParams decoder;
  AttentionParams attention;
  Linear out;

 private:
  bool attention_;
};

/// Picks the belief fed downstream. GroundTruth requires batch.belief.
struct BeliefResolver {
  BeliefSource source = BeliefSource::GroundTruth;
  Linear combine;  // 2B -> B, only for Linear

  BeliefResolver() = default;
  BeliefResolver(BeliefSource source, const ModelDims& dims, Rng& rng, const std::string& name);
  Var resolve(Tape& tape, NluModule& nlu, const Batch& batch);
  std::vector<Parameter*> parameters();
};

class NaiveFusionModel : public ResponseModel {
 public:
  NaiveFusionModel(const ModelDims& dims, BeliefSource source, bool finetuned, Rng& rng);

  std::string kind() const override { return finetuned_ ? "naive-finetuned" : "naive-zeroshot"; }
  std::unique_ptr<DecodeState> begin(Tape& tape, const Batch& batch) override;
  Var step(Tape& tape, DecodeState& state, std::span<const int> prev) override;
  std::vector<Parameter*> parameters() override;
  DialogModules* modules() override { return &modules_; }
  std::vector<std::pair<std::string, std::string>> config_meta() const override;

  BeliefResolver belief;
  /// Feeds batch.acts to the NLG instead of the DM output.
  bool oracle_acts = false;

 private:
  DialogModules modules_;
  bool finetuned_;
};

class MultitaskModel : public ResponseModel {
 public:
  MultitaskModel(const ModelDims& dims, Rng& rng);

  std::string kind() const override { return "multitask"; }
  std::unique_ptr<DecodeState> begin(Tape& tape, const Batch& batch) override;
  Var step(Tape& tape, DecodeState& state, std::span<const int> prev) override;
  std::vector<Parameter*> parameters() override;
  DialogModules* modules() override { return &modules_; }
  bool wants_module_losses() const override { return true; }

  DecoderInit init;

 private:
  DialogModules modules_;
};

/// Zeroes one injection point; used for robustness checks.
struct SfnAblation {
  bool zero_nlu = false;
  bool zero_dm = false;
  bool zero_nlg = false;
};

class SfnModel : public ResponseModel {
 public:
  SfnModel(const ModelDims& dims, const ModelOptions& options, Rng& rng);

  std::string kind() const override;
  std::unique_ptr<DecodeState> begin(Tape& tape, const Batch& batch) override;
  Var step(Tape& tape, DecodeState& state, std::span<const int> prev) override;
  std::vector<Parameter*> parameters() override;
  DialogModules* modules() override { return &modules_; }
  bool wants_module_losses() const override { return mode_ == ModuleMode::Multitasked; }
  std::vector<std::pair<std::string, std::string>> config_meta() const override;

  ModuleMode module_mode() const { return mode_; }
  void set_mode(ModuleMode mode) { mode_ = mode; }
  bool uses_attention() const { return attention_; }

  /// The fused state at one step of the last step() call.
  const ColdFusionState& last_fusion() const { return last_; }

  EmbeddingTable embedding;
  LstmParams encoder;  // input: embedding + B
  DecoderInit init;    // includes W_da
  LstmParams decoder;
  AttentionParams attention;
  ColdFusionParams fusion;
  BeliefResolver belief;
  SfnAblation ablation;

 private:
  DialogModules modules_;
  ModuleMode mode_;
  bool attention_;
  ColdFusionState last_;
};

class NlgOracleModel : public ResponseModel {
 public:
  NlgOracleModel(const ModelDims& dims, const NlgModule& nlg);

  std::string kind() const override { return "nlg-oracle"; }
  std::unique_ptr<DecodeState> begin(Tape& tape, const Batch& batch) override;
  Var step(Tape& tape, DecodeState& state, std::span<const int> prev) override;
  std::vector<Parameter*> parameters() override { return nlg.parameters(); }

  NlgModule nlg;
};

/// Frozen flags module parameters non-trainable; the other modes make them
/// trainable. Models without modules are left unchanged.
void set_module_mode(ResponseModel& model, ModuleMode mode);

/// Parameters outside the NLU/DM/NLG.
std::vector<Parameter*> higher_level_parameters(ResponseModel& model);

/// seq2seq, seq2seq-attn, naive-zeroshot, naive-finetuned, multitask,
/// sfn-frozen, sfn-finetuned, sfn-multitasked.
const std::vector<std::string>& model_kinds();
std::unique_ptr<ResponseModel> make_model(std::string_view kind, const ModelDims& dims,
                                          const ModelOptions& options, Rng& rng);

/// Copies pre-trained module weights into the model (no-op without modules).
void install_modules(ResponseModel& model, const DialogModules& pretrained);

Checkpoint model_checkpoint(ResponseModel& model);
std::unique_ptr<ResponseModel> load_model(const Checkpoint& ckpt);

/// Argmax decoding from SOS; stops at EOS (not included) or max_len tokens.
std::vector<std::vector<int>> greedy_decode(ResponseModel& model, const Batch& batch, int max_len = 50);

/// Samples one response per row on `tape` (gradients flow if it records).
/// logits[t] and tokens[t] hold the step-t logits and the sampled ids; a
/// row's weight at step t is 1 up to and including its EOS.
struct SampledResponses {
  std::vector<std::vector<int>> responses;
  std::vector<Var> logits;
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> active;
};
SampledResponses sample_decode(ResponseModel& model, Tape& tape, const Batch& batch, int max_len,
                               double temperature, Rng& rng);

}  // namespace structfusion
