#include "structfusion/modules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace structfusion {

ModelDims ModelDims::from_corpus(const DialogCorpus& corpus, Index embed, Index hidden) {
  ModelDims d;
  d.vocab = static_cast<Index>(corpus.vocab.size());
  d.embed = embed;
  d.hidden = hidden;
  d.belief = corpus.schema.belief_dim();
  d.acts = corpus.schema.act_dim();
  d.db = corpus.schema.db_dim();
  d.validate();
  return d;
}

void ModelDims::validate() const {
  if (vocab <= Vocabulary::kUnk || embed <= 0 || hidden <= 0 || belief <= 0 || acts <= 0 || db <= 0)
    throw std::invalid_argument("model dimensions must all be positive");
}

std::vector<std::pair<std::string, std::string>> ModelDims::meta() const {
  return {{"vocab", std::to_string(vocab)},   {"embed", std::to_string(embed)},
          {"hidden", std::to_string(hidden)}, {"belief", std::to_string(belief)},
          {"acts", std::to_string(acts)},     {"db", std::to_string(db)}};
}

ModelDims ModelDims::from_meta(const Checkpoint& ckpt) {
  auto get = [&](const char* key) -> Index {
    const std::string* v = ckpt.find_meta(key);
    if (!v) throw CheckpointError(std::string("checkpoint missing meta '") + key + "'");
    return static_cast<Index>(std::stoll(*v));
  };
  ModelDims d{get("vocab"), get("embed"), get("hidden"), get("belief"), get("acts"), get("db")};
  d.validate();
  return d;
}

void expect_cols(const Var& v, Index cols, const char* what) {
  if (v.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected " << cols << " columns, got " << v.cols();
    throw DimensionError(os.str());
  }
}

namespace {
void append(std::vector<Parameter*>& out, std::vector<Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}
}  // namespace

NluModule::NluModule(const ModelDims& dims, Rng& rng, const std::string& prefix)
    : embedding(prefix + ".embedding", dims.vocab, dims.embed, rng),
      encoder(prefix + ".encoder", dims.embed, dims.hidden, rng),
      head(prefix + ".head", dims.hidden, dims.belief, rng) {}

ModuleOutput NluModule::forward(Tape& tape, const std::vector<std::vector<int>>& contexts) {
  for (std::size_t r = 0; r < contexts.size(); ++r)
    if (contexts[r].empty()) throw std::invalid_argument("NLU context " + std::to_string(r) + " is empty");
  if (contexts.empty()) throw std::invalid_argument("NLU called with no contexts");
  const TimeMajor steps = encoder_steps(contexts);
  std::vector<Var> inputs;
  for (const auto& ids : steps.ids) inputs.push_back(embedding.embed(tape, ids));
  const auto n = static_cast<Index>(contexts.size());
  EncodedSequence enc = lstm_encode(tape, encoder, inputs, steps.masks, zero_state(tape, n, encoder.hidden_size));
  Var logits = head.apply(tape, enc.final.h);
  return {logits, sigmoid(logits)};
}

std::vector<Parameter*> NluModule::parameters() {
  std::vector<Parameter*> p = embedding.parameters();
  append(p, encoder.parameters());
  append(p, head.parameters());
  return p;
}

DmModule::DmModule(const ModelDims& dims, Rng& rng, const std::string& prefix)
    : hidden(prefix + ".hidden", dims.belief + dims.db, dims.hidden, rng),
      out(prefix + ".out", dims.hidden, dims.acts, rng) {}

ModuleOutput DmModule::forward(Tape& tape, const Var& belief, const Var& db) {
  Var x = concat({belief, db});
  expect_cols(x, hidden.in_features, "DM input [belief; db]");
  Var h = relu(hidden.apply(tape, x));
  Var logits = out.apply(tape, h);
  return {logits, sigmoid(logits)};
}

std::vector<Parameter*> DmModule::parameters() {
  std::vector<Parameter*> p = hidden.parameters();
  append(p, out.parameters());
  return p;
}

NlgModule::NlgModule(const ModelDims& dims, Rng& rng, const std::string& prefix)
    : init(prefix + ".init", dims.belief + dims.db + dims.acts, dims.hidden, rng),
      embedding(prefix + ".embedding", dims.vocab, dims.embed, rng),
      decoder(prefix + ".decoder", dims.embed, dims.hidden, rng),
      out(prefix + ".out", dims.hidden, dims.vocab, rng) {}

LstmState NlgModule::start(Tape& tape, const Var& belief, const Var& db, const Var& acts) {
  Var x = concat({belief, db, acts});
  expect_cols(x, init.in_features, "NLG input [belief; db; acts]");
  Var h = tanh(init.apply(tape, x));
  return {h, tape.constant(Matrix::Zero(x.rows(), decoder.hidden_size))};
}

Var NlgModule::step(Tape& tape, LstmState& state, std::span<const int> prev) {
  state = lstm_step(tape, embedding.embed(tape, prev), state, decoder);
  return out.apply(tape, state.h);
}

std::vector<Var> NlgModule::teacher_forced(Tape& tape, const Var& belief, const Var& db, const Var& acts,
                                           const TimeMajor& inputs) {
  LstmState state = start(tape, belief, db, acts);
  std::vector<Var> logits;
  for (const auto& ids : inputs.ids) logits.push_back(step(tape, state, ids));
  return logits;
}

std::vector<Parameter*> NlgModule::parameters() {
  std::vector<Parameter*> p = init.parameters();
  append(p, embedding.parameters());
  append(p, decoder.parameters());
  append(p, out.parameters());
  return p;
}

DialogModules::DialogModules(const ModelDims& dims, Rng& rng) : nlu(dims, rng), dm(dims, rng), nlg(dims, rng) {}

std::vector<Parameter*> DialogModules::parameters() {
  std::vector<Parameter*> p = nlu.parameters();
  append(p, dm.parameters());
  append(p, nlg.parameters());
  return p;
}

const char* module_name(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::Nlu: return "nlu";
    case ModuleKind::Dm: return "dm";
    case ModuleKind::Nlg: return "nlg";
  }
  return "?";
}

ModuleKind parse_module_kind(std::string_view name) {
  if (name == "nlu") return ModuleKind::Nlu;
  if (name == "dm") return ModuleKind::Dm;
  if (name == "nlg") return ModuleKind::Nlg;
  throw std::invalid_argument("unknown module '" + std::string(name) + "' (expected nlu, dm or nlg)");
}

Var nlu_loss(Tape& tape, NluModule& nlu, const Batch& batch) {
  return binary_cross_entropy(nlu.forward(tape, batch.context).logits, batch.belief);
}

Var dm_loss(Tape& tape, DmModule& dm, const Batch& batch) {
  ModuleOutput out = dm.forward(tape, tape.constant(batch.belief), tape.constant(batch.db));
  return binary_cross_entropy(out.logits, batch.acts);
}

SequenceLoss nlg_loss(Tape& tape, NlgModule& nlg, const Batch& batch) {
  const DecoderSteps steps = decoder_steps(batch.response);
  std::vector<Var> logits = nlg.teacher_forced(tape, tape.constant(batch.belief), tape.constant(batch.db),
                                               tape.constant(batch.acts), steps.inputs);
  return masked_sequence_ce(tape, logits, steps.targets, steps.inputs.weights);
}

std::vector<Parameter*> module_parameters(ModuleKind which, DialogModules& modules) {
  switch (which) {
    case ModuleKind::Nlu: return modules.nlu.parameters();
    case ModuleKind::Dm: return modules.dm.parameters();
    case ModuleKind::Nlg: return modules.nlg.parameters();
  }
  return {};
}

namespace {

Var module_loss(Tape& tape, ModuleKind which, DialogModules& m, const Batch& batch) {
  switch (which) {
    case ModuleKind::Nlu: return nlu_loss(tape, m.nlu, batch);
    case ModuleKind::Dm: return dm_loss(tape, m.dm, batch);
    case ModuleKind::Nlg: return nlg_loss(tape, m.nlg, batch).loss;
  }
  throw std::logic_error("bad module kind");
}

double mean_loss(ModuleKind which, DialogModules& m, std::span<const TurnRef> refs, int batch_size) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t i = 0; i < refs.size(); i += std::size_t(batch_size)) {
    const std::size_t n = std::min(std::size_t(batch_size), refs.size() - i);
    Tape tape(false);
    total += module_loss(tape, which, m, make_batch(refs.subspan(i, n))).scalar();
    ++batches;
  }
  return batches ? total / double(batches) : 0.0;
}

}  // namespace

PretrainResult pretrain_module(ModuleKind which, DialogModules& modules, std::span<const TurnRef> train,
                               std::span<const TurnRef> val, const Hyperparams& hyper) {
  PretrainResult result;
  if (hyper.epochs <= 0) return result;
  if (train.empty()) throw std::invalid_argument("pretrain_module: empty training split");
  if (hyper.batch_size <= 0 || hyper.lr <= 0.0 || hyper.clip_norm <= 0.0)
    throw std::invalid_argument("pretrain_module: batch size, lr and clip norm must be positive");

  std::vector<Parameter*> params = module_parameters(which, modules);
  Adam adam(params, AdamConfig{hyper.lr});
  Rng rng(hyper.seed);
  std::vector<TurnRef> order(train.begin(), train.end());
  Checkpoint best;
  double best_score = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += std::size_t(hyper.batch_size)) {
      const std::size_t n = std::min(std::size_t(hyper.batch_size), order.size() - i);
      const Batch batch = make_batch(std::span<const TurnRef>(order).subspan(i, n));
      adam.zero_grad();
      Tape tape;
      Var loss = module_loss(tape, which, modules, batch);
      if (!std::isfinite(loss.scalar())) {
        std::ostringstream os;
        os << module_name(which) << " pre-training diverged at epoch " << epoch << ", batch " << batches
           << " (loss " << loss.scalar() << ")";
        throw NonFiniteError(os.str());
      }
      tape.backward(loss);
      clip_grad_norm(params, hyper.clip_norm);
      adam.step();
      total += loss.scalar();
      ++batches;
    }
    PretrainEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = total / double(batches);
    rec.val_loss = val.empty() ? rec.train_loss : mean_loss(which, modules, val, hyper.batch_size);
    result.history.push_back(rec);
    if (rec.val_loss < best_score) {
      best_score = rec.val_loss;
      best = capture(params);
      result.best_epoch = epoch;
    }
  }
  if (result.best_epoch > 0) restore(best, params);
  return result;
}

Checkpoint module_checkpoint(ModuleKind which, DialogModules& modules, const ModelDims& dims) {
  auto meta = dims.meta();
  meta.insert(meta.begin(), {"module", module_name(which)});
  return capture(module_parameters(which, modules), meta);
}

void load_module_checkpoint(const Checkpoint& ckpt, DialogModules& modules) {
  const std::string* kind = ckpt.find_meta("module");
  if (!kind) throw CheckpointError("not a module checkpoint (missing 'module' header)");
  restore(ckpt, module_parameters(parse_module_kind(*kind), modules));
}

}  // namespace structfusion
