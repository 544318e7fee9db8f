#include "structfusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace structfusion {

const char* to_string(BeliefSource source) {
  switch (source) {
    case BeliefSource::GroundTruth: return "gt";
    case BeliefSource::Predicted: return "pred";
    case BeliefSource::Sum: return "sum";
    case BeliefSource::Linear: return "linear";
  }
  return "?";
}

const char* to_string(ModuleMode mode) {
  switch (mode) {
    case ModuleMode::Frozen: return "frozen";
    case ModuleMode::FineTuned: return "finetuned";
    case ModuleMode::Multitasked: return "multitasked";
  }
  return "?";
}

BeliefSource parse_belief_source(std::string_view name) {
  if (name == "gt" || name == "ground-truth") return BeliefSource::GroundTruth;
  if (name == "pred" || name == "predicted") return BeliefSource::Predicted;
  if (name == "sum") return BeliefSource::Sum;
  if (name == "linear") return BeliefSource::Linear;
  throw std::invalid_argument("unknown belief source '" + std::string(name) + "' (expected gt, pred, sum or linear)");
}

ModuleMode parse_module_mode(std::string_view name) {
  if (name == "frozen") return ModuleMode::Frozen;
  if (name == "finetuned") return ModuleMode::FineTuned;
  if (name == "multitasked") return ModuleMode::Multitasked;
  throw std::invalid_argument("unknown module mode '" + std::string(name) + "'");
}

// ---- decoder init ----------------------------------------------------------

DecoderInit::DecoderInit(const std::string& name, const ModelDims& dims, bool with_acts, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(dims.hidden));
  auto make = [&](const char* suffix, Index rows, Index cols) {
    return Parameter(name + "." + suffix, uniform_matrix(rows, cols, bound, rng));
  };
  W_e = make("W_e", dims.hidden, dims.hidden);
  W_bs = make("W_bs", dims.hidden, dims.belief);
  W_db = make("W_db", dims.hidden, dims.db);
  W_da = make("W_da", dims.hidden, with_acts ? dims.acts : 0);
  b = make("b", 1, dims.hidden);
}

std::vector<Parameter*> DecoderInit::parameters() {
  std::vector<Parameter*> p{&W_e, &W_bs, &W_db};
  if (W_da.value.cols() > 0) p.push_back(&W_da);
  p.push_back(&b);
  return p;
}

LstmState seq2seq_decode_init(Tape& tape, const Var& h_e, const Var& v_bs, const Var& v_db, const Var& v_da,
                              DecoderInit& params) {
  expect_cols(h_e, params.W_e.value.cols(), "decoder init h_e");
  expect_cols(v_bs, params.W_bs.value.cols(), "decoder init v_bs");
  expect_cols(v_db, params.W_db.value.cols(), "decoder init v_db");
  Var pre = affine(h_e, tape.param(params.W_e), tape.param(params.b));
  pre = add(pre, matmul_nt(v_bs, tape.param(params.W_bs)));
  pre = add(pre, matmul_nt(v_db, tape.param(params.W_db)));
  if (params.W_da.value.cols() > 0) {
    if (!v_da) throw DimensionError("decoder init expects a dialog-act input");
    expect_cols(v_da, params.W_da.value.cols(), "decoder init v_da");
    pre = add(pre, matmul_nt(v_da, tape.param(params.W_da)));
  } else if (v_da) {
    throw DimensionError("decoder init has no dialog-act weights");
  }
  return {tanh(pre), tape.constant(Matrix::Zero(h_e.rows(), params.W_e.value.rows()))};
}

// ---- cold fusion -----------------------------------------------------------

ColdFusionParams::ColdFusionParams(const std::string& name, Index state_dim_, Index fused_dim_, Index vocab_,
                                   Rng& rng)
    : state_dim(state_dim_),
      fused_dim(fused_dim_),
      vocab(vocab_),
      dnn1_hidden(name + ".dnn1_hidden", vocab_, fused_dim_, rng),
      dnn1_out(name + ".dnn1_out", fused_dim_, fused_dim_, rng),
      gate(name + ".gate", state_dim_ + fused_dim_, fused_dim_, rng),
      dnn2_hidden(name + ".dnn2_hidden", state_dim_ + fused_dim_, fused_dim_, rng),
      dnn2_out(name + ".dnn2_out", fused_dim_, vocab_, rng) {}

std::vector<Parameter*> ColdFusionParams::parameters() {
  return {&dnn1_hidden.weight, &dnn1_hidden.bias, &dnn1_out.weight, &dnn1_out.bias, &gate.weight,
          &gate.bias,          &dnn2_hidden.weight, &dnn2_hidden.bias, &dnn2_out.weight, &dnn2_out.bias};
}

ColdFusionState cold_fuse(Tape& tape, const Var& s, const Var& l_nlg, ColdFusionParams& params,
                          FuseOptions options) {
  expect_cols(s, params.state_dim, "cold fusion s_t");
  expect_cols(l_nlg, params.vocab, "cold fusion l_t");
  if (s.rows() != l_nlg.rows()) throw DimensionError("cold fusion: s_t and l_t batch sizes differ");
  ColdFusionState st;
  st.s = s;
  st.l_nlg = l_nlg;
  st.h_nlg = params.dnn1_out.apply(tape, tanh(params.dnn1_hidden.apply(tape, l_nlg)));
  if (options.force_gate_zero) {
    st.gate = tape.constant(Matrix::Zero(s.rows(), params.fused_dim));
    st.s_cf = concat({s, st.gate});
  } else {
    st.gate = sigmoid(params.gate.apply(tape, concat({s, st.h_nlg})));
    st.s_cf = concat({s, mul(st.gate, st.h_nlg)});
  }
  st.logits = params.dnn2_out.apply(tape, tanh(params.dnn2_hidden.apply(tape, st.s_cf)));
  if (options.with_distribution) st.y = softmax(st.logits);
  return st;
}

// ---- shared pieces -----------------------------------------------------------

SequenceLoss ResponseModel::response_loss(Tape& tape, const Batch& batch) {
  const DecoderSteps steps = decoder_steps(batch.response);
  std::unique_ptr<DecodeState> state = begin(tape, batch);
  std::vector<Var> logits;
  logits.reserve(steps.inputs.steps());
  for (const auto& ids : steps.inputs.ids) logits.push_back(step(tape, *state, ids));
  return masked_sequence_ce(tape, logits, steps.targets, steps.inputs.weights);
}

namespace {

void append(std::vector<Parameter*>& out, std::vector<Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

void check_contexts(const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  for (std::size_t r = 0; r < batch.context.size(); ++r)
    if (batch.context[r].empty()) throw std::invalid_argument("context " + std::to_string(r) + " is empty");
}

Var oracle_belief(Tape& tape, const Batch& batch, const ModelDims& dims) {
  if (!batch.has_oracle_belief()) throw MissingOracleBelief("this model needs a ground-truth belief state");
  Var v = tape.constant(batch.belief);
  expect_cols(v, dims.belief, "belief");
  return v;
}

struct Encoded {
  EncodedSequence seq;
  TimeMajor steps;
};

/// Runs an encoder whose per-step input is [embedding; extra] (extra may be empty).
Encoded encode(Tape& tape, EmbeddingTable& emb, LstmParams& lstm, const Batch& batch, const Var& extra) {
  Encoded e;
  e.steps = encoder_steps(batch.context);
  std::vector<Var> inputs;
  inputs.reserve(e.steps.steps());
  for (const auto& ids : e.steps.ids) {
    Var x = emb.embed(tape, ids);
    inputs.push_back(extra ? concat({x, extra}) : x);
  }
  e.seq = lstm_encode(tape, lstm, inputs, e.steps.masks, zero_state(tape, batch.size(), lstm.hidden_size));
  return e;
}

struct Seq2SeqState : DecodeState {
  LstmState dec;
  AttentionMemory memory;
  bool attention = false;
};

}  // namespace

// ---- seq2seq ----------------------------------------------------------------

Seq2SeqModel::Seq2SeqModel(const ModelDims& dims, bool use_attention, Rng& rng)
    : ResponseModel(dims),
      embedding("s2s.embedding", dims.vocab, dims.embed, rng),
      encoder("s2s.encoder", dims.embed, dims.hidden, rng),
      init("s2s.init", dims, false, rng),
      decoder("s2s.decoder", dims.embed, dims.hidden, rng),
      out("s2s.out", use_attention ? 2 * dims.hidden : dims.hidden, dims.vocab, rng),
      attention_(use_attention) {
  if (use_attention) attention = AttentionParams("s2s.attention", dims.hidden, dims.hidden, rng);
}

std::unique_ptr<DecodeState> Seq2SeqModel::begin(Tape& tape, const Batch& batch) {
  check_contexts(batch);
  Var bs = oracle_belief(tape, batch, dims_);
  Encoded enc = encode(tape, embedding, encoder, batch, Var{});
  auto st = std::make_unique<Seq2SeqState>();
  st->dec = seq2seq_decode_init(tape, enc.seq.final.h, bs, tape.constant(batch.db), Var{}, init);
  st->attention = attention_;
  if (attention_) st->memory = prepare_attention(tape, attention, enc.seq.states, enc.steps.masks);
  return st;
}

Var Seq2SeqModel::step(Tape& tape, DecodeState& state, std::span<const int> prev) {
  auto& st = static_cast<Seq2SeqState&>(state);
  st.dec = lstm_step(tape, embedding.embed(tape, prev), st.dec, decoder);
  Var s = st.dec.h;
  if (attention_) s = concat({s, attend(tape, s, st.memory, attention).context});
  return out.apply(tape, s);
}

std::vector<Parameter*> Seq2SeqModel::parameters() {
  std::vector<Parameter*> p = embedding.parameters();
  append(p, encoder.parameters());
  append(p, init.parameters());
  append(p, decoder.parameters());
  if (attention_) append(p, attention.parameters());
  append(p, out.parameters());
  return p;
}

// ---- belief resolution --------------------------------------------------------

BeliefResolver::BeliefResolver(BeliefSource source_, const ModelDims& dims, Rng& rng, const std::string& name)
    : source(source_) {
  if (source == BeliefSource::Linear) combine = Linear(name, 2 * dims.belief, dims.belief, rng);
}

Var BeliefResolver::resolve(Tape& tape, NluModule& nlu, const Batch& batch) {
  switch (source) {
    case BeliefSource::GroundTruth:
      if (!batch.has_oracle_belief()) throw MissingOracleBelief("belief source gt needs an oracle belief state");
      return tape.constant(batch.belief);
    case BeliefSource::Predicted: return nlu.forward(tape, batch.context).probs;
    case BeliefSource::Sum:
    case BeliefSource::Linear: {
      if (!batch.has_oracle_belief())
        throw MissingOracleBelief(std::string("belief source ") + to_string(source) + " needs an oracle belief state");
      Var gt = tape.constant(batch.belief);
      Var pred = nlu.forward(tape, batch.context).probs;
      expect_cols(gt, pred.cols(), "oracle belief");
      if (source == BeliefSource::Sum) return add(gt, pred);
      return combine.apply(tape, concat({gt, pred}));
    }
  }
  throw std::logic_error("bad belief source");
}

std::vector<Parameter*> BeliefResolver::parameters() {
  if (source == BeliefSource::Linear) return combine.parameters();
  return {};
}

// ---- naive fusion ---------------------------------------------------------------

namespace {
struct NlgState : DecodeState {
  LstmState nlg;
};
}  // namespace

NaiveFusionModel::NaiveFusionModel(const ModelDims& dims, BeliefSource source, bool finetuned, Rng& rng)
    : ResponseModel(dims), belief(source, dims, rng, "nf.combine"), modules_(dims, rng), finetuned_(finetuned) {}

std::unique_ptr<DecodeState> NaiveFusionModel::begin(Tape& tape, const Batch& batch) {
  check_contexts(batch);
  Var bs = belief.resolve(tape, modules_.nlu, batch);
  Var db = tape.constant(batch.db);
  Var da = oracle_acts ? tape.constant(batch.acts) : modules_.dm.forward(tape, bs, db).probs;
  auto st = std::make_unique<NlgState>();
  st->nlg = modules_.nlg.start(tape, bs, db, da);
  return st;
}

Var NaiveFusionModel::step(Tape& tape, DecodeState& state, std::span<const int> prev) {
  return modules_.nlg.step(tape, static_cast<NlgState&>(state).nlg, prev);
}

std::vector<Parameter*> NaiveFusionModel::parameters() {
  std::vector<Parameter*> p = modules_.parameters();
  append(p, belief.parameters());
  return p;
}

std::vector<std::pair<std::string, std::string>> NaiveFusionModel::config_meta() const {
  return {{"belief_source", to_string(belief.source)}};
}

// ---- multitask --------------------------------------------------------------------

MultitaskModel::MultitaskModel(const ModelDims& dims, Rng& rng)
    : ResponseModel(dims), init("mt.init", dims, false, rng), modules_(dims, rng) {}

std::unique_ptr<DecodeState> MultitaskModel::begin(Tape& tape, const Batch& batch) {
  check_contexts(batch);
  Var bs = oracle_belief(tape, batch, dims_);
  Encoded enc = encode(tape, modules_.nlu.embedding, modules_.nlu.encoder, batch, Var{});
  auto st = std::make_unique<NlgState>();
  st->nlg = seq2seq_decode_init(tape, enc.seq.final.h, bs, tape.constant(batch.db), Var{}, init);
  return st;
}

Var MultitaskModel::step(Tape& tape, DecodeState& state, std::span<const int> prev) {
  return modules_.nlg.step(tape, static_cast<NlgState&>(state).nlg, prev);
}

std::vector<Parameter*> MultitaskModel::parameters() {
  std::vector<Parameter*> p = modules_.parameters();
  append(p, init.parameters());
  return p;
}

// ---- structured fusion --------------------------------------------------------------

namespace {
struct SfnState : DecodeState {
  LstmState dec;
  LstmState nlg;
  AttentionMemory memory;
};
}  // namespace

SfnModel::SfnModel(const ModelDims& dims, const ModelOptions& options, Rng& rng)
    : ResponseModel(dims),
      embedding("sfn.embedding", dims.vocab, dims.embed, rng),
      encoder("sfn.encoder", dims.embed + dims.belief, dims.hidden, rng),
      init("sfn.init", dims, true, rng),
      decoder("sfn.decoder", dims.embed, dims.hidden, rng),
      fusion("sfn.fusion", options.attention ? 2 * dims.hidden : dims.hidden, dims.hidden, dims.vocab, rng),
      belief(options.belief_source, dims, rng, "sfn.combine"),
      modules_(dims, rng),
      mode_(options.module_mode),
      attention_(options.attention) {
  if (attention_) attention = AttentionParams("sfn.attention", dims.hidden, dims.hidden, rng);
  set_module_mode(*this, mode_);
}

std::string SfnModel::kind() const { return std::string("sfn-") + to_string(mode_); }

std::unique_ptr<DecodeState> SfnModel::begin(Tape& tape, const Batch& batch) {
  check_contexts(batch);
  const Index n = batch.size();
  Var bs = ablation.zero_nlu ? tape.constant(Matrix::Zero(n, dims_.belief)) : belief.resolve(tape, modules_.nlu, batch);
  expect_cols(bs, dims_.belief, "belief");
  Var db = tape.constant(batch.db);
  Var da = ablation.zero_dm ? tape.constant(Matrix::Zero(n, dims_.acts)) : modules_.dm.forward(tape, bs, db).probs;

  Encoded enc = encode(tape, embedding, encoder, batch, bs);
  auto st = std::make_unique<SfnState>();
  st->dec = seq2seq_decode_init(tape, enc.seq.final.h, bs, db, da, init);
  if (attention_) st->memory = prepare_attention(tape, attention, enc.seq.states, enc.steps.masks);
  st->nlg = modules_.nlg.start(tape, bs, db, da);
  return st;
}

Var SfnModel::step(Tape& tape, DecodeState& state, std::span<const int> prev) {
  auto& st = static_cast<SfnState&>(state);
  st.dec = lstm_step(tape, embedding.embed(tape, prev), st.dec, decoder);
  Var s = st.dec.h;
  if (attention_) s = concat({s, attend(tape, s, st.memory, attention).context});
  Var l_nlg = modules_.nlg.step(tape, st.nlg, prev);
  last_ = cold_fuse(tape, s, l_nlg, fusion, FuseOptions{ablation.zero_nlg, false});
  return last_.logits;
}

std::vector<Parameter*> SfnModel::parameters() {
  std::vector<Parameter*> p = modules_.parameters();
  append(p, embedding.parameters());
  append(p, encoder.parameters());
  append(p, init.parameters());
  append(p, decoder.parameters());
  if (attention_) append(p, attention.parameters());
  append(p, fusion.parameters());
  append(p, belief.parameters());
  return p;
}

std::vector<std::pair<std::string, std::string>> SfnModel::config_meta() const {
  return {{"belief_source", to_string(belief.source)},
          {"module_mode", to_string(mode_)},
          {"attention", attention_ ? "1" : "0"}};
}

// ---- NLG oracle ------------------------------------------------------------------------

NlgOracleModel::NlgOracleModel(const ModelDims& dims, const NlgModule& nlg_) : ResponseModel(dims), nlg(nlg_) {}

std::unique_ptr<DecodeState> NlgOracleModel::begin(Tape& tape, const Batch& batch) {
  Var bs = oracle_belief(tape, batch, dims_);
  auto st = std::make_unique<NlgState>();
  st->nlg = nlg.start(tape, bs, tape.constant(batch.db), tape.constant(batch.acts));
  return st;
}

Var NlgOracleModel::step(Tape& tape, DecodeState& state, std::span<const int> prev) {
  return nlg.step(tape, static_cast<NlgState&>(state).nlg, prev);
}

// ---- model management --------------------------------------------------------------------

void set_module_mode(ResponseModel& model, ModuleMode mode) {
  DialogModules* m = model.modules();
  if (!m) return;
  if (auto* sfn = dynamic_cast<SfnModel*>(&model)) sfn->set_mode(mode);
  for (Parameter* p : m->parameters()) p->trainable = mode != ModuleMode::Frozen;
}

std::vector<Parameter*> higher_level_parameters(ResponseModel& model) {
  std::vector<Parameter*> all = model.parameters();
  DialogModules* m = model.modules();
  if (!m) return all;
  std::vector<Parameter*> mods = m->parameters();
  std::vector<Parameter*> out;
  for (Parameter* p : all)
    if (std::find(mods.begin(), mods.end(), p) == mods.end()) out.push_back(p);
  return out;
}

const std::vector<std::string>& model_kinds() {
  static const std::vector<std::string> kinds{"seq2seq",   "seq2seq-attn", "naive-zeroshot", "naive-finetuned",
                                              "multitask", "sfn-frozen",   "sfn-finetuned",  "sfn-multitasked"};
  return kinds;
}

std::unique_ptr<ResponseModel> make_model(std::string_view kind, const ModelDims& dims, const ModelOptions& options,
                                          Rng& rng) {
  dims.validate();
  if (kind == "seq2seq") return std::make_unique<Seq2SeqModel>(dims, false, rng);
  if (kind == "seq2seq-attn") return std::make_unique<Seq2SeqModel>(dims, true, rng);
  if (kind == "naive-zeroshot") return std::make_unique<NaiveFusionModel>(dims, options.belief_source, false, rng);
  if (kind == "naive-finetuned") return std::make_unique<NaiveFusionModel>(dims, options.belief_source, true, rng);
  if (kind == "multitask") return std::make_unique<MultitaskModel>(dims, rng);
  if (kind.starts_with("sfn-")) {
    ModelOptions o = options;
    o.module_mode = parse_module_mode(kind.substr(4));
    return std::make_unique<SfnModel>(dims, o, rng);
  }
  std::string valid;
  for (const auto& k : model_kinds()) valid += (valid.empty() ? "" : ", ") + k;
  throw std::invalid_argument("unknown model kind '" + std::string(kind) + "' (expected one of " + valid + ")");
}

void install_modules(ResponseModel& model, const DialogModules& pretrained) {
  DialogModules* m = model.modules();
  if (!m) return;
  std::vector<Parameter*> dst = m->parameters();
  DialogModules copy = pretrained;
  std::vector<Parameter*> src = copy.parameters();
  if (src.size() != dst.size()) throw std::invalid_argument("module layout mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (src[i]->value.rows() != dst[i]->value.rows() || src[i]->value.cols() != dst[i]->value.cols())
      throw DimensionError("pre-trained module '" + src[i]->name + "' has the wrong shape");
    dst[i]->value = src[i]->value;
  }
}

Checkpoint model_checkpoint(ResponseModel& model) {
  std::vector<std::pair<std::string, std::string>> meta{{"model", model.kind()}};
  for (auto& kv : model.dims().meta()) meta.push_back(kv);
  for (auto& kv : model.config_meta()) meta.push_back(kv);
  return capture(model.parameters(), meta);
}

std::unique_ptr<ResponseModel> load_model(const Checkpoint& ckpt) {
  const std::string* kind = ckpt.find_meta("model");
  if (!kind) throw CheckpointError("not a model checkpoint (missing 'model' header)");
  ModelDims dims = ModelDims::from_meta(ckpt);
  ModelOptions options;
  options.belief_source = parse_belief_source(ckpt.meta_or("belief_source", "gt"));
  options.attention = ckpt.meta_or("attention", "1") == "1";
  Rng rng(0);
  std::unique_ptr<ResponseModel> model = make_model(*kind, dims, options, rng);
  restore(ckpt, model->parameters());
  return model;
}

// ---- decoding ---------------------------------------------------------------------------------

std::vector<std::vector<int>> greedy_decode(ResponseModel& model, const Batch& batch, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  const auto n = static_cast<std::size_t>(batch.size());
  std::vector<std::vector<int>> out(n);
  Tape tape(false);
  std::unique_ptr<DecodeState> state = model.begin(tape, batch);
  std::vector<int> prev(n, Vocabulary::kSos);
  std::vector<bool> done(n, false);
  std::size_t remaining = n;
  for (int t = 0; t < max_len && remaining > 0; ++t) {
    Var logits = model.step(tape, *state, prev);
    const Matrix& v = logits.value();
    for (std::size_t r = 0; r < n; ++r) {
      Index best = 0;
      v.row(static_cast<Index>(r)).maxCoeff(&best);
      prev[r] = static_cast<int>(best);
      if (done[r]) continue;
      if (best == Vocabulary::kEos) {
        done[r] = true;
        --remaining;
      } else {
        out[r].push_back(static_cast<int>(best));
      }
    }
  }
  return out;
}

SampledResponses sample_decode(ResponseModel& model, Tape& tape, const Batch& batch, int max_len,
                               double temperature, Rng& rng) {
  if (max_len < 1) throw std::invalid_argument("sample_decode: max_len must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_decode: temperature must be positive");
  const auto n = static_cast<std::size_t>(batch.size());
  SampledResponses s;
  s.responses.resize(n);
  std::unique_ptr<DecodeState> state = model.begin(tape, batch);
  std::vector<int> prev(n, Vocabulary::kSos);
  std::vector<bool> done(n, false);
  std::size_t remaining = n;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int t = 0; t < max_len && remaining > 0; ++t) {
    Var logits = model.step(tape, *state, prev);
    const Matrix& v = logits.value();
    std::vector<int> tokens(n, Vocabulary::kPad);
    std::vector<double> active(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      if (done[r]) continue;
      const auto row = v.row(static_cast<Index>(r));
      const double mx = row.maxCoeff();
      RowVector p = ((row.array() - mx) / temperature).exp();
      const double u = unit(rng) * p.sum();
      double acc = 0.0;
      Index pick = p.size() - 1;
      for (Index k = 0; k < p.size(); ++k) {
        acc += p(k);
        if (u < acc) {
          pick = k;
          break;
        }
      }
      tokens[r] = static_cast<int>(pick);
      active[r] = 1.0;
      if (pick == Vocabulary::kEos) {
        done[r] = true;
        --remaining;
      } else {
        s.responses[r].push_back(static_cast<int>(pick));
      }
    }
    for (std::size_t r = 0; r < n; ++r) prev[r] = tokens[r] == Vocabulary::kPad ? Vocabulary::kEos : tokens[r];
    s.logits.push_back(logits);
    s.tokens.push_back(std::move(tokens));
    s.active.push_back(std::move(active));
  }
  return s;
}

}  // namespace structfusion
