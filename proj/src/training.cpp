#include "structfusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <sstream>

namespace structfusion {

void MultitaskWeights::validate() const {
  for (double w : {e2e, nlu, dm, nlg})
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("multitask weights must be nonnegative");
  if (e2e + nlu + dm + nlg == 0.0) throw std::invalid_argument("multitask weights are all zero");
}

TrainData TrainData::from_corpus(const DialogCorpus& corpus, const EntityDatabase& database) {
  return TrainData{&corpus, &database, corpus.split("train"), corpus.split("val")};
}

nlohmann::json epoch_to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},       {"loss", r.loss},       {"loss_e2e", r.loss_e2e},
                   {"loss_nlu", r.loss_nlu}, {"loss_dm", r.loss_dm}, {"loss_nlg", r.loss_nlg}};
  if (r.validated) {
    j["val_bleu"] = r.val.bleu;
    j["val_inform"] = r.val.inform;
    j["val_success"] = r.val.success;
    j["val_combined"] = r.val.combined;
  }
  return j;
}

LossTerms multitask_loss(Tape& tape, ResponseModel& model, const Batch& batch, const MultitaskWeights& w) {
  LossTerms t;
  std::vector<Var> parts;
  if (w.e2e > 0.0) {
    t.e2e = model.response_loss(tape, batch).loss;
    parts.push_back(w.e2e == 1.0 ? t.e2e : scale(t.e2e, w.e2e));
  }
  DialogModules* m = model.modules();
  if (w.nlu > 0.0 || w.dm > 0.0 || w.nlg > 0.0) {
    if (!m) throw std::invalid_argument("model '" + model.kind() + "' has no modules for auxiliary losses");
  }
  if (w.nlu > 0.0) {
    t.nlu = nlu_loss(tape, m->nlu, batch);
    parts.push_back(w.nlu == 1.0 ? t.nlu : scale(t.nlu, w.nlu));
  }
  if (w.dm > 0.0) {
    t.dm = dm_loss(tape, m->dm, batch);
    parts.push_back(w.dm == 1.0 ? t.dm : scale(t.dm, w.dm));
  }
  if (w.nlg > 0.0) {
    t.nlg = nlg_loss(tape, m->nlg, batch).loss;
    parts.push_back(w.nlg == 1.0 ? t.nlg : scale(t.nlg, w.nlg));
  }
  t.total = parts.size() == 1 ? parts[0] : add_all(tape, parts);
  return t;
}

const ScoredCheckpoint& validate_select(std::span<const ScoredCheckpoint> candidates) {
  if (candidates.empty()) throw std::invalid_argument("validate_select: no checkpoints");
  const ScoredCheckpoint* best = &candidates[0];
  for (const auto& c : candidates)
    if (c.combined > best->combined || (c.combined == best->combined && c.epoch < best->epoch)) best = &c;
  return *best;
}

namespace {

void check_hyper(const Hyperparams& h) {
  if (h.epochs < 0 || h.batch_size <= 0 || !(h.lr > 0.0) || !(h.clip_norm > 0.0) || h.max_len < 1)
    throw std::invalid_argument("hyperparameters must be positive");
}

std::vector<Parameter*> trainable(ResponseModel& model) {
  std::vector<Parameter*> out;
  for (Parameter* p : model.parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

TrainResult fit(ResponseModel& model, const TrainData& data, const Hyperparams& hyper, const MultitaskWeights& weights,
                const TrainHooks& hooks) {
  check_hyper(hyper);
  weights.validate();
  if (!data.corpus || !data.database) throw std::invalid_argument("training data has no corpus or database");
  TrainResult result;
  if (hyper.epochs == 0) return result;
  std::vector<TurnRef> order = turn_refs(data.train);
  if (order.empty()) throw std::invalid_argument("training split is empty");

  std::vector<Parameter*> params = trainable(model);
  std::vector<Parameter*> all = model.parameters();
  Adam adam(params, AdamConfig{hyper.lr});
  Rng rng(hyper.seed);
  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

  std::vector<ScoredCheckpoint> scores;
  Checkpoint best;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += std::size_t(hyper.batch_size)) {
      const std::size_t n = std::min(std::size_t(hyper.batch_size), order.size() - i);
      const Batch batch = make_batch(std::span<const TurnRef>(order).subspan(i, n));
      for (Parameter* p : all) p->zero_grad();
      Tape tape;
      LossTerms terms = multitask_loss(tape, model, batch, weights);
      const double loss = terms.total.scalar();
      if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << model.kind() << " training diverged at epoch " << epoch << ", batch " << batches << " (loss " << loss
           << ")";
        throw NonFiniteError(os.str());
      }
      tape.backward(terms.total);
      clip_grad_norm(params, hyper.clip_norm);
      adam.step();
      rec.loss += loss;
      if (terms.e2e) rec.loss_e2e += terms.e2e.scalar();
      if (terms.nlu) rec.loss_nlu += terms.nlu.scalar();
      if (terms.dm) rec.loss_dm += terms.dm.scalar();
      if (terms.nlg) rec.loss_nlg += terms.nlg.scalar();
      ++batches;
    }
    for (double* v : {&rec.loss, &rec.loss_e2e, &rec.loss_nlu, &rec.loss_dm, &rec.loss_nlg}) *v /= double(batches);

    if (hooks.validate && !data.val.empty()) {
      rec.val = evaluate(model, data.val, *data.corpus, *data.database, hyper.max_len);
      rec.validated = true;
    }
    const double score = rec.validated ? rec.val.combined : double(epoch);  // no validation: keep the last
    scores.push_back({epoch, score});
    if (&validate_select(scores) == &scores.back()) {
      best = model_checkpoint(model);
      result.best_epoch = epoch;
    }
    if (!hooks.checkpoint_dir.empty())
      save_checkpoint(model_checkpoint(model), hooks.checkpoint_dir + "/epoch-" + std::to_string(epoch) + ".ckpt");
    if (hooks.log) *hooks.log << epoch_to_json(rec).dump() << "\n" << std::flush;
    result.history.push_back(std::move(rec));
  }
  restore(best, all);
  if (!hooks.checkpoint_dir.empty()) save_checkpoint(best, hooks.checkpoint_dir + "/best.ckpt");
  return result;
}

}  // namespace

TrainResult train_supervised(ResponseModel& model, const TrainData& data, const Hyperparams& hyper,
                             const TrainHooks& hooks) {
  return fit(model, data, hyper, MultitaskWeights{1.0, 0.0, 0.0, 0.0}, hooks);
}

TrainResult train_multitask(ResponseModel& model, const TrainData& data, const Hyperparams& hyper,
                            const MultitaskWeights& weights, const TrainHooks& hooks) {
  if (!model.modules()) throw std::invalid_argument("train_multitask: model '" + model.kind() + "' has no modules");
  return fit(model, data, hyper, weights, hooks);
}

// ---- reinforcement learning ----------------------------------------------------

RewardFn success_reward(const DialogCorpus& corpus, const EntityDatabase& database) {
  return [&corpus, &database](const Dialog& d, std::span<const TokenSeq> responses) {
    const DialogOutcome o = score_dialog(d, responses, database, corpus.schema);
    return o.has_requests ? double(o.success) : double(o.inform);
  };
}

nlohmann::json rl_epoch_to_json(const RlEpochRecord& r) {
  return {{"epoch", r.epoch},     {"mean_reward", r.mean_reward},
          {"loss", r.loss},       {"dialogs", r.dialogs},
          {"updates", r.updates}, {"skipped", r.skipped},
          {"no_request_dialogs", r.no_request_dialogs}};
}

RlResult train_rl(ResponseModel& model, const TrainData& data, const RlHyperparams& hyper, const RewardFn& reward_fn,
                  const TrainHooks& hooks) {
  if (!data.corpus || !data.database) throw std::invalid_argument("training data has no corpus or database");
  if (hyper.epochs < 0 || hyper.dialogs_per_batch <= 0 || !(hyper.lr > 0.0) || hyper.max_len < 1)
    throw std::invalid_argument("RL hyperparameters must be positive");
  const RewardFn reward = reward_fn ? reward_fn : success_reward(*data.corpus, *data.database);

  std::string frozen_bytes;
  std::vector<Parameter*> module_params;
  if (hyper.freeze_modules && model.modules()) {
    set_module_mode(model, ModuleMode::Frozen);
    module_params = model.modules()->parameters();
    frozen_bytes = parameter_bytes(module_params);
  }
  std::vector<Parameter*> params = trainable(model);
  std::vector<Parameter*> all = model.parameters();
  Adam adam(params, AdamConfig{hyper.lr});
  Rng rng(hyper.seed);
  std::vector<const Dialog*> pool = data.train;
  if (pool.empty()) throw std::invalid_argument("training split is empty");

  RlResult result;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t count =
        hyper.episodes_per_epoch > 0 ? std::min(pool.size(), std::size_t(hyper.episodes_per_epoch)) : pool.size();
    RlEpochRecord rec;
    rec.epoch = epoch;
    double reward_sum = 0.0;
    for (std::size_t i = 0; i < count; i += std::size_t(hyper.dialogs_per_batch)) {
      const std::size_t n = std::min(std::size_t(hyper.dialogs_per_batch), count - i);
      const std::vector<const Dialog*> group(pool.begin() + long(i), pool.begin() + long(i + n));
      const std::vector<TurnRef> refs = turn_refs(group);
      const Batch batch = make_batch(refs);

      for (Parameter* p : all) p->zero_grad();
      Tape tape;
      SampledResponses sampled =
          sample_decode(model, tape, batch, hyper.max_len, hyper.sampling_temperature, rng);

      std::vector<std::vector<TokenSeq>> per_dialog(n);
      for (std::size_t d = 0; d < n; ++d) per_dialog[d].resize(group[d]->turns.size());
      std::vector<std::size_t> owner(refs.size());
      for (std::size_t r = 0; r < refs.size(); ++r) {
        const std::size_t d = std::size_t(std::find(group.begin(), group.end(), refs[r].dialog) - group.begin());
        owner[r] = d;
        per_dialog[d][refs[r].turn] = data.corpus->vocab.decode(sampled.responses[r]);
      }
      std::vector<double> rewards(n);
      for (std::size_t d = 0; d < n; ++d) {
        rewards[d] = reward(*group[d], per_dialog[d]);
        bool requests = false;
        for (const auto& g : group[d]->goal.domains) requests = requests || !g.requests.empty();
        if (!requests) ++rec.no_request_dialogs;
      }
      const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / double(n);
      const double baseline = hyper.baseline == RlBaseline::BatchMean ? mean : 0.0;
      reward_sum += mean * double(n);
      rec.dialogs += n;

      std::vector<double> advantage(refs.size());
      bool any = false;
      for (std::size_t r = 0; r < refs.size(); ++r) {
        advantage[r] = rewards[owner[r]] - baseline;
        any = any || advantage[r] != 0.0;
      }
      if (!any) {
        ++rec.skipped;
        continue;
      }
      std::vector<Var> terms;
      for (std::size_t t = 0; t < sampled.logits.size(); ++t) {
        std::vector<double> w(refs.size());
        for (std::size_t r = 0; r < refs.size(); ++r) w[r] = advantage[r] * sampled.active[t][r] / double(n);
        terms.push_back(softmax_cross_entropy(sampled.logits[t], sampled.tokens[t], w));
      }
      Var loss = add_all(tape, terms);
      if (!std::isfinite(loss.scalar())) throw NonFiniteError("RL loss is not finite at epoch " + std::to_string(epoch));
      tape.backward(loss);
      clip_grad_norm(params, hyper.clip_norm);
      adam.step();
      rec.loss += loss.scalar();
      ++rec.updates;
    }
    rec.mean_reward = rec.dialogs ? reward_sum / double(rec.dialogs) : 0.0;
    if (!module_params.empty() && parameter_bytes(module_params) != frozen_bytes)
      throw FrozenModuleViolation("module parameters changed during RL fine-tuning at epoch " + std::to_string(epoch));
    if (hooks.log) *hooks.log << rl_epoch_to_json(rec).dump() << "\n" << std::flush;
    if (!hooks.checkpoint_dir.empty()) {
      std::filesystem::create_directories(hooks.checkpoint_dir);
      save_checkpoint(model_checkpoint(model), hooks.checkpoint_dir + "/rl-epoch-" + std::to_string(epoch) + ".ckpt");
    }
    result.history.push_back(rec);
  }
  return result;
}

}  // namespace structfusion
