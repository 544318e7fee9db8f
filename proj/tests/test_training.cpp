#include <doctest.h>

#include "fixtures.hpp"
#include "structfusion/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace structfusion;
using fixtures::tiny_dims;

namespace {

TrainData overfit_data() {
  const auto& data = fixtures::small_data();
  // Three dialogs, roughly a dozen turns.
  auto train = data.corpus.split("train");
  train.resize(3);
  return TrainData{&data.corpus, &data.database, train, {}};
}

Hyperparams quick(int epochs) {
  Hyperparams h;
  h.epochs = epochs;
  h.batch_size = 16;
  h.lr = 2e-2;
  h.max_len = 12;
  return h;
}

TrainHooks no_validation() {
  TrainHooks h;
  h.validate = false;
  return h;
}

std::vector<double> losses(const TrainResult& r) {
  std::vector<double> out;
  for (const auto& e : r.history) out.push_back(e.loss);
  return out;
}

}  // namespace

TEST_CASE("Adam matches a hand-computed two-step trace") {
  Parameter x("x", Matrix::Zero(1, 1));
  std::vector<Parameter*> params{&x};
  Adam adam(params, AdamConfig{0.1});
  const double expect[] = {0.09999999983333335, 0.19989729258521102};
  for (double e : expect) {
    adam.zero_grad();
    x.grad(0, 0) = 2.0 * (x.value(0, 0) - 3.0);
    adam.step();
    CHECK(std::abs(x.value(0, 0) - e) < 1e-15);
  }
  CHECK(adam.steps_taken() == 2);
  CHECK(adam.config().beta1 == 0.9);
  CHECK(adam.config().beta2 == 0.999);
  CHECK(adam.config().eps == 1e-8);
}

TEST_CASE("Adam skips non-trainable parameters") {
  Parameter a("a", Matrix::Ones(1, 2));
  Parameter b("b", Matrix::Ones(1, 2));
  b.trainable = false;
  std::vector<Parameter*> params{&a, &b};
  Adam adam(params, AdamConfig{0.5});
  a.grad.setOnes();
  b.grad.setOnes();
  adam.step();
  CHECK(a.value(0, 0) != 1.0);
  CHECK(b.value == Matrix::Ones(1, 2));
}

TEST_CASE("gradient clipping") {
  Parameter a("a", Matrix::Zero(1, 2));
  Parameter b("b", Matrix::Zero(2, 1));
  a.grad << 30.0, 0.0;
  b.grad << 0.0, 40.0;
  std::vector<Parameter*> params{&a, &b};
  CHECK(global_grad_norm(params) == doctest::Approx(50.0));
  CHECK(clip_grad_norm(params, 5.0) == doctest::Approx(50.0));
  CHECK(global_grad_norm(params) <= 5.0 + 1e-9);
  CHECK(a.grad(0, 0) == doctest::Approx(3.0));
  CHECK(b.grad(1, 0) == doctest::Approx(4.0));
  a.grad << 1.0, 0.0;
  b.grad.setZero();
  clip_grad_norm(params, 5.0);
  CHECK(a.grad(0, 0) == 1.0);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    a.grad = uniform_matrix(1, 2, 100.0, rng);
    b.grad = uniform_matrix(2, 1, 100.0, rng);
    clip_grad_norm(params, 5.0);
    CHECK(global_grad_norm(params) <= 5.0 + 1e-9);
  }
}

TEST_CASE("validate_select") {
  std::vector<ScoredCheckpoint> one = {{1, 10.0}};
  CHECK(validate_select(one).epoch == 1);
  std::vector<ScoredCheckpoint> two = {{1, 78.73}, {2, 89.31}};
  CHECK(validate_select(two).epoch == 2);
  std::vector<ScoredCheckpoint> tie = {{1, 50.0}, {2, 60.0}, {3, 60.0}};
  CHECK(validate_select(tie).epoch == 2);
  std::vector<ScoredCheckpoint> none;
  CHECK_THROWS(validate_select(none));
}

TEST_CASE("multitask weights") {
  CHECK_NOTHROW(MultitaskWeights{}.validate());
  CHECK_THROWS(MultitaskWeights{0, 0, 0, 0}.validate());
  CHECK_THROWS(MultitaskWeights{1, -1, 0, 0}.validate());
}

TEST_CASE("supervised training overfits a tiny corpus") {
  auto dims = tiny_dims(16, 32);
  Rng rng(2);
  Seq2SeqModel model(dims, true, rng);
  auto r = train_supervised(model, overfit_data(), quick(80), no_validation());
  REQUIRE(r.history.size() == 80);
  CHECK(r.history.back().loss <= 0.1 * r.history.front().loss);
  CHECK(r.best_epoch == 80);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto dims = tiny_dims();
  auto run = [&] {
    Rng rng(3);
    SfnModel model(dims, {.belief_source = BeliefSource::Predicted}, rng);
    const auto& data = fixtures::small_data();
    TrainData td{&data.corpus, &data.database, data.corpus.split("train"), data.corpus.split("val")};
    td.train.resize(6);
    auto r = train_supervised(model, td, quick(3));
    return std::make_pair(r, parameter_bytes(model.parameters()));
  };
  auto [a, pa] = run();
  auto [b, pb] = run();
  REQUIRE(a.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.history[i].loss == b.history[i].loss);
    CHECK(a.history[i].val.combined == b.history[i].val.combined);
    CHECK(epoch_to_json(a.history[i]).dump() == epoch_to_json(b.history[i]).dump());
  }
  CHECK(pa == pb);
}

TEST_CASE("training keeps the epoch with the best validation combined score") {
  auto dims = tiny_dims();
  Rng rng(4);
  Seq2SeqModel model(dims, false, rng);
  const auto& data = fixtures::small_data();
  TrainData td{&data.corpus, &data.database, data.corpus.split("train"), data.corpus.split("val")};
  auto dir = std::filesystem::temp_directory_path() / "sf_train_ckpt";
  std::filesystem::remove_all(dir);
  std::ostringstream log;
  TrainHooks hooks{&log, dir.string(), true};
  auto r = train_supervised(model, td, quick(4), hooks);

  std::vector<ScoredCheckpoint> scores;
  for (const auto& e : r.history) {
    CHECK(e.validated);
    CHECK(std::abs(e.val.combined - combined_score(e.val.bleu, e.val.inform, e.val.success)) < 1e-9);
    scores.push_back({e.epoch, e.val.combined});
  }
  CHECK(r.best_epoch == validate_select(scores).epoch);
  for (int e = 1; e <= 4; ++e) CHECK(std::filesystem::exists(dir / ("epoch-" + std::to_string(e) + ".ckpt")));
  auto best = load_checkpoint((dir / "best.ckpt").string());
  auto chosen = load_checkpoint((dir / ("epoch-" + std::to_string(r.best_epoch) + ".ckpt")).string());
  CHECK(serialize(best) == serialize(chosen));
  CHECK(serialize(model_checkpoint(model)) == serialize(best));

  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"] == ++n);
    for (const char* key : {"loss", "loss_e2e", "val_bleu", "val_inform", "val_success", "val_combined"})
      CHECK(j.contains(key));
  }
  CHECK(n == 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("multitask with weights (1,0,0,0) is supervised training") {
  auto dims = tiny_dims();
  auto run = [&](bool multitask) {
    Rng rng(5);
    SfnModel model(dims, {.module_mode = ModuleMode::Multitasked}, rng);
    return multitask ? train_multitask(model, overfit_data(), quick(4), {1, 0, 0, 0}, no_validation())
                     : train_supervised(model, overfit_data(), quick(4), no_validation());
  };
  CHECK(losses(run(true)) == losses(run(false)));
}

TEST_CASE("multitask training lowers every head") {
  auto dims = tiny_dims(16, 32);
  Rng rng(6);
  SfnModel model(dims, {.module_mode = ModuleMode::Multitasked}, rng);
  auto r = train_multitask(model, overfit_data(), quick(40), {}, no_validation());
  const auto& first = r.history.front();
  const auto& last = r.history.back();
  CHECK(last.loss_e2e < 0.5 * first.loss_e2e);
  CHECK(last.loss_nlu < 0.5 * first.loss_nlu);
  CHECK(last.loss_dm < 0.5 * first.loss_dm);
  CHECK(last.loss_nlg < 0.5 * first.loss_nlg);
  CHECK(first.loss == doctest::Approx(first.loss_e2e + first.loss_nlu + first.loss_dm + first.loss_nlg));

  MultitaskModel mt(dims, rng);
  auto rm = train_multitask(mt, overfit_data(), quick(10), {}, no_validation());
  CHECK(rm.history.back().loss < rm.history.front().loss);

  Seq2SeqModel plain(dims, false, rng);
  CHECK_THROWS(train_multitask(plain, overfit_data(), quick(1), {}, no_validation()));
}

TEST_CASE("total multitask gradient is the sum of the head gradients") {
  auto dims = tiny_dims();
  Rng rng(7);
  SfnModel model(dims, {.belief_source = BeliefSource::Predicted, .module_mode = ModuleMode::Multitasked}, rng);
  Batch b = fixtures::first_batch(4);
  Parameter& probe = model.modules()->nlu.encoder.W;
  auto grad_of = [&](MultitaskWeights w) {
    for (auto* p : model.parameters()) p->zero_grad();
    Tape tape;
    LossTerms t = multitask_loss(tape, model, b, w);
    tape.backward(t.total);
    return Matrix(probe.grad);
  };
  const MultitaskWeights all{1.0, 0.5, 2.0, 1.5};
  Matrix total = grad_of(all);
  Matrix parts = grad_of({1, 0, 0, 0}) + 0.5 * grad_of({0, 1, 0, 0}) + 2.0 * grad_of({0, 0, 1, 0}) +
                 1.5 * grad_of({0, 0, 0, 1});
  CHECK((total - parts).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, total.cwiseAbs().maxCoeff()));
  CHECK(total.norm() > 0.0);

  Tape tape;
  LossTerms t = multitask_loss(tape, model, b, all);
  CHECK(t.e2e);
  CHECK(t.nlu);
  CHECK(t.dm);
  CHECK(t.nlg);
  LossTerms only = multitask_loss(tape, model, b, {1, 0, 0, 0});
  CHECK_FALSE(only.nlu);
}

TEST_CASE("RL with a constant reward and a batch-mean baseline changes nothing") {
  auto dims = tiny_dims();
  Rng rng(8);
  SfnModel model(dims, {}, rng);
  const auto before = parameter_bytes(model.parameters());
  RlHyperparams h;
  h.lr = 1e-2;
  h.epochs = 2;
  h.dialogs_per_batch = 4;
  h.max_len = 10;
  auto r = train_rl(model, overfit_data(), h, [](const Dialog&, std::span<const TokenSeq>) { return 1.0; });
  CHECK(parameter_bytes(model.parameters()) == before);
  CHECK(r.history.back().updates == 0);
  CHECK(r.history.back().skipped > 0);
  CHECK(r.history.back().mean_reward == 1.0);
}

TEST_CASE("RL leaves frozen modules byte-identical and moves the rest") {
  auto dims = tiny_dims();
  Rng rng(9);
  SfnModel model(dims, {.module_mode = ModuleMode::FineTuned}, rng);
  const auto modules = parameter_bytes(model.modules()->parameters());
  const auto higher = parameter_bytes(higher_level_parameters(model));
  RlHyperparams h;
  h.lr = 1e-3;
  h.epochs = 5;
  h.dialogs_per_batch = 3;
  h.max_len = 10;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  auto reward = [](const Dialog&, std::span<const TokenSeq> rs) { return rs[0].size() % 2 == 0 ? 1.0 : 0.0; };
  auto r = train_rl(model, overfit_data(), h, reward, hooks);
  CHECK(r.history.size() == 5);
  CHECK(model.module_mode() == ModuleMode::Frozen);
  CHECK(parameter_bytes(model.modules()->parameters()) == modules);
  CHECK(parameter_bytes(higher_level_parameters(model)) != higher);
  long updates = 0;
  for (const auto& e : r.history) updates += e.updates;
  CHECK(updates > 0);
  CHECK(log.str().find("\"mean_reward\"") != std::string::npos);
}

TEST_CASE("RL aborts when a frozen module changes") {
  auto dims = tiny_dims();
  Rng rng(10);
  SfnModel model(dims, {}, rng);
  RlHyperparams h;
  h.epochs = 1;
  h.max_len = 5;
  auto tamper = [&](const Dialog&, std::span<const TokenSeq>) {
    model.modules()->nlu.head.bias.value(0, 0) += 1.0;
    return 0.0;
  };
  CHECK_THROWS_AS(train_rl(model, overfit_data(), h, tamper), FrozenModuleViolation);
}

TEST_CASE("REINFORCE raises the probability of a rewarded first token") {
  auto dims = tiny_dims();
  Rng rng(11);
  Seq2SeqModel model(dims, false, rng);
  const auto& data = fixtures::small_data();
  TrainData td{&data.corpus, &data.database, data.corpus.split("train"), {}};
  const int target = data.corpus.vocab.id("the");
  REQUIRE(target != Vocabulary::kUnk);

  Dialog one = *td.train[0];
  one.turns.resize(1);
  Batch b = make_batch(std::vector<TurnRef>{{&one, 0}});
  auto prob = [&] {
    Tape tape(false);
    auto st = model.begin(tape, b);
    std::vector<int> sos{Vocabulary::kSos};
    return softmax(model.step(tape, *st, sos)).value()(0, target);
  };
  const double p0 = prob();
  td.train = {&one};
  RlHyperparams h;
  h.lr = 1e-2;
  h.epochs = 200;
  h.dialogs_per_batch = 1;
  h.baseline = RlBaseline::None;
  h.max_len = 3;
  auto reward = [&](const Dialog&, std::span<const TokenSeq> rs) {
    return !rs[0].empty() && rs[0][0] == "the" ? 1.0 : 0.0;
  };
  auto r = train_rl(model, td, h, reward);
  const double p1 = prob();
  MESSAGE("p(first token) " << p0 << " -> " << p1);
  CHECK(p1 > p0);
  CHECK(r.history.back().mean_reward >= 0.0);
}

TEST_CASE("RL reward: success, or inform without requests") {
  const auto& data = fixtures::small_data();
  auto reward = success_reward(data.corpus, data.database);
  for (const Dialog* d : data.corpus.split("test")) {
    std::vector<TokenSeq> rs(d->turns.size());
    CHECK(reward(*d, rs) == 0.0);
    bool requests = false;
    for (const auto& g : d->goal.domains) {
      rs[0].push_back("[" + g.domain + "_name]");
      requests = requests || !g.requests.empty();
    }
    CHECK(reward(*d, rs) == (requests ? 0.0 : 1.0));
    for (const auto& g : d->goal.domains)
      for (const auto& req : g.requests) rs[0].push_back("[" + g.domain + "_" + req + "]");
    CHECK(reward(*d, rs) == 1.0);
  }
}

TEST_CASE("training argument errors") {
  auto dims = tiny_dims();
  Rng rng(12);
  Seq2SeqModel model(dims, false, rng);
  Hyperparams bad = quick(1);
  bad.lr = 0;
  CHECK_THROWS(train_supervised(model, overfit_data(), bad));
  TrainData empty = overfit_data();
  empty.train.clear();
  CHECK_THROWS(train_supervised(model, empty, quick(1)));
  auto r = train_supervised(model, overfit_data(), quick(0));
  CHECK(r.history.empty());
  model.out.bias.value(0, 5) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_supervised(model, overfit_data(), quick(1), no_validation()), NonFiniteError);
}
