#include <doctest.h>

#include "fixtures.hpp"
#include "structfusion/fusion.hpp"
#include "structfusion/training.hpp"

#include <cmath>

using namespace structfusion;
using fixtures::first_batch;
using fixtures::tiny_dims;

namespace {

void fill(Parameter& p, double base, double step) {
  for (Index r = 0; r < p.value.rows(); ++r)
    for (Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = base + step * double(r) - 0.5 * step * double(c);
}

// Plain-loop evaluation of y = W x + b for one row vector.
std::vector<double> lin(const Linear& l, const std::vector<double>& x) {
  std::vector<double> out(static_cast<std::size_t>(l.out_features));
  for (Index o = 0; o < l.out_features; ++o) {
    double acc = l.bias.value(0, o);
    for (Index i = 0; i < l.in_features; ++i) acc += l.weight.value(o, i) * x[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = acc;
  }
  return out;
}

std::vector<double> apply(std::vector<double> v, double (*f)(double)) {
  for (auto& x : v) x = f(x);
  return v;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double tanh_(double x) { return std::tanh(x); }

std::vector<Matrix> step_logits(ResponseModel& model, const Batch& batch, int steps) {
  Tape tape(false);
  auto st = model.begin(tape, batch);
  std::vector<int> prev(static_cast<std::size_t>(batch.size()), Vocabulary::kSos);
  std::vector<Matrix> out;
  for (int t = 0; t < steps; ++t) {
    Var l = model.step(tape, *st, prev);
    out.push_back(l.value());
    for (Index r = 0; r < l.rows(); ++r) {
      Index best = 0;
      l.value().row(r).maxCoeff(&best);
      prev[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
  }
  return out;
}

bool rows_normalised(const Matrix& logits) {
  Matrix p = logits;
  for (Index r = 0; r < p.rows(); ++r) {
    RowVector e = (p.row(r).array() - p.row(r).maxCoeff()).exp();
    e /= e.sum();
    if (!e.allFinite() || std::abs(e.sum() - 1.0) > 1e-9 || (e.array() < 0).any()) return false;
  }
  return true;
}

Hyperparams memorise_hyper(int epochs) {
  Hyperparams h;
  h.epochs = epochs;
  h.batch_size = 10;
  h.lr = 2e-2;
  return h;
}

}  // namespace

TEST_CASE("seq2seq_decode_init") {
  auto dims = tiny_dims();
  Rng rng(1);
  DecoderInit init("t", dims, true, rng);
  Batch b = first_batch(3);
  Tape tape(false);
  Var he = tape.constant(uniform_matrix(3, dims.hidden, 1.0, rng));
  Var bs = tape.constant(b.belief), db = tape.constant(b.db), da = tape.constant(b.acts);

  SUBCASE("zero weights and bias give zero") {
    for (auto* p : init.parameters()) p->value.setZero();
    auto st = seq2seq_decode_init(tape, he, bs, db, da, init);
    CHECK(st.h.value().isZero());
    CHECK(st.c.value().isZero());
  }
  SUBCASE("zero weights give tanh(b)") {
    for (auto* p : init.parameters())
      if (p != &init.b) p->value.setZero();
    auto st = seq2seq_decode_init(tape, he, bs, db, da, init);
    for (Index c = 0; c < dims.hidden; ++c) CHECK(st.h.value()(2, c) == std::tanh(init.b.value(0, c)));
  }
  SUBCASE("direct formula") {
    auto st = seq2seq_decode_init(tape, he, bs, db, da, init);
    Matrix expect = (he.value() * init.W_e.value.transpose() + b.belief * init.W_bs.value.transpose() +
                     b.db * init.W_db.value.transpose() + b.acts * init.W_da.value.transpose())
                        .rowwise() +
                    RowVector(init.b.value.row(0));
    expect = expect.array().tanh().matrix();
    CHECK((st.h.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("no act weights") {
    DecoderInit plain("p", dims, false, rng);
    CHECK(plain.W_da.value.cols() == 0);
    CHECK(plain.parameters().size() == 4);
    auto st = seq2seq_decode_init(tape, he, bs, db, Var{}, plain);
    CHECK(st.h.cols() == dims.hidden);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(seq2seq_decode_init(tape, he, db, db, da, init), DimensionError);
  }
}

TEST_CASE("cold_fuse") {
  Rng rng(2);
  SUBCASE("zero gate params give 0.5") {
    ColdFusionParams p("cf", 4, 5, 7, rng);
    p.gate.weight.value.setZero();
    p.gate.bias.value.setZero();
    Tape tape(false);
    auto st = cold_fuse(tape, tape.constant(uniform_matrix(2, 4, 1, rng)), tape.constant(uniform_matrix(2, 7, 3, rng)), p);
    CHECK((st.gate.value().array() == 0.5).all());
    for (Index r = 0; r < 2; ++r) CHECK(std::abs(st.y.value().row(r).sum() - 1.0) < 1e-9);
    CHECK(st.s_cf.cols() == 4 + 5);
  }
  SUBCASE("hand computation with fixed small parameters") {
    ColdFusionParams p("cf", 3, 3, 3, rng);
    fill(p.dnn1_hidden.weight, 0.1, 0.05);
    fill(p.dnn1_hidden.bias, -0.02, 0.01);
    fill(p.dnn1_out.weight, -0.1, 0.07);
    fill(p.dnn1_out.bias, 0.03, 0.0);
    fill(p.gate.weight, 0.2, -0.03);
    fill(p.gate.bias, 0.1, 0.02);
    fill(p.dnn2_hidden.weight, -0.05, 0.04);
    fill(p.dnn2_hidden.bias, 0.0, 0.01);
    fill(p.dnn2_out.weight, 0.3, -0.1);
    fill(p.dnn2_out.bias, -0.1, 0.05);
    const std::vector<double> s = {0.5, -0.25, 0.1};
    const std::vector<double> l = {1.0, 2.0, -1.0};

    auto h = lin(p.dnn1_out, apply(lin(p.dnn1_hidden, l), tanh_));
    std::vector<double> sh = s;
    sh.insert(sh.end(), h.begin(), h.end());
    auto g = apply(lin(p.gate, sh), sigm);
    std::vector<double> scf = s;
    for (int i = 0; i < 3; ++i) scf.push_back(g[i] * h[i]);
    auto logits = lin(p.dnn2_out, apply(lin(p.dnn2_hidden, scf), tanh_));
    double z = 0;
    for (double v : logits) z += std::exp(v);

    Tape tape(false);
    Matrix sm(1, 3), lm(1, 3);
    sm << s[0], s[1], s[2];
    lm << l[0], l[1], l[2];
    auto st = cold_fuse(tape, tape.constant(sm), tape.constant(lm), p);
    for (int i = 0; i < 3; ++i) {
      CHECK(st.h_nlg.value()(0, i) == doctest::Approx(h[i]).epsilon(1e-12));
      CHECK(st.gate.value()(0, i) == doctest::Approx(g[i]).epsilon(1e-12));
      CHECK(st.s_cf.value()(0, i + 3) == doctest::Approx(scf[i + 3]).epsilon(1e-12));
      CHECK(st.y.value()(0, i) == doctest::Approx(std::exp(logits[i]) / z).epsilon(1e-12));
    }
  }
  SUBCASE("random invariants") {
    for (int trial = 0; trial < 200; ++trial) {
      const Index S = 1 + Index(rng() % 6), F = 1 + Index(rng() % 6), V = 2 + Index(rng() % 9);
      ColdFusionParams p("cf", S, F, V, rng);
      for (auto* q : p.parameters()) q->value = uniform_matrix(q->value.rows(), q->value.cols(), 2.0, rng);
      Tape tape(false);
      auto st = cold_fuse(tape, tape.constant(uniform_matrix(2, S, 2, rng)), tape.constant(uniform_matrix(2, V, 5, rng)), p);
      CHECK((st.gate.value().array() > 0.0).all());
      CHECK((st.gate.value().array() < 1.0).all());
      CHECK(st.s_cf.cols() == S + F);
      for (Index r = 0; r < 2; ++r) CHECK(std::abs(st.y.value().row(r).sum() - 1.0) < 1e-9);
    }
  }
  SUBCASE("forced zero gate feeds [s; 0]") {
    ColdFusionParams p("cf", 2, 3, 4, rng);
    Tape tape(false);
    Var s = tape.constant(uniform_matrix(1, 2, 1, rng));
    auto st = cold_fuse(tape, s, tape.constant(uniform_matrix(1, 4, 1, rng)), p, {.force_gate_zero = true});
    CHECK(st.s_cf.value().rightCols(3).isZero());
    CHECK(st.s_cf.value().leftCols(2) == s.value());
    CHECK(std::abs(st.y.value().sum() - 1.0) < 1e-9);
  }
  SUBCASE("dimension mismatch") {
    ColdFusionParams p("cf", 2, 3, 4, rng);
    Tape tape(false);
    CHECK_THROWS_AS(cold_fuse(tape, tape.constant(Matrix::Zero(1, 3)), tape.constant(Matrix::Zero(1, 4)), p),
                    DimensionError);
  }
}

TEST_CASE("every model kind builds, decodes and round-trips through a checkpoint") {
  auto dims = tiny_dims();
  Batch b = first_batch(4);
  CHECK(model_kinds().size() == 8);
  for (const auto& kind : model_kinds()) {
    CAPTURE(kind);
    Rng rng(3);
    auto model = make_model(kind, dims, {}, rng);
    CHECK(model->kind() == kind);
    auto logits = step_logits(*model, b, 3);
    for (const auto& l : logits) CHECK(rows_normalised(l));
    auto text = serialize(model_checkpoint(*model));
    auto loaded = load_model(parse_checkpoint(text));
    CHECK(loaded->kind() == kind);
    CHECK(serialize(model_checkpoint(*loaded)) == text);
    CHECK(greedy_decode(*loaded, b, 10) == greedy_decode(*model, b, 10));
  }
  Rng rng(3);
  CHECK_THROWS(make_model("transformer", dims, {}, rng));
}

TEST_CASE("greedy decoding") {
  auto dims = tiny_dims();
  Rng rng(4);
  Seq2SeqModel model(dims, true, rng);
  Batch b = first_batch(3);
  CHECK(greedy_decode(model, b, 7) == greedy_decode(model, b, 7));
  for (const auto& r : greedy_decode(model, b, 7)) CHECK(r.size() <= 7);
  CHECK_THROWS(greedy_decode(model, b, 0));
  model.out.bias.value(0, Vocabulary::kEos) = 1e3;
  for (const auto& r : greedy_decode(model, b, 7)) CHECK(r.empty());
}

TEST_CASE("seq2seq needs an oracle belief") {
  auto dims = tiny_dims();
  Rng rng(5);
  Seq2SeqModel model(dims, false, rng);
  Batch b = first_batch(2);
  b.belief.resize(2, 0);
  Tape tape(false);
  CHECK_THROWS_AS(model.begin(tape, b), MissingOracleBelief);
  SfnModel sfn(dims, {}, rng);
  CHECK_THROWS_AS(sfn.begin(tape, b), MissingOracleBelief);
  SfnModel pred(dims, {.belief_source = BeliefSource::Predicted}, rng);
  CHECK_NOTHROW(pred.begin(tape, b));
}

TEST_CASE("naive fusion with oracle belief and acts equals the NLG alone") {
  auto dims = tiny_dims();
  Rng rng(6);
  NaiveFusionModel nf(dims, BeliefSource::GroundTruth, false, rng);
  nf.oracle_acts = true;
  NlgOracleModel nlg(dims, nf.modules()->nlg);
  Batch b = first_batch(5);
  auto a = step_logits(nf, b, 4);
  auto c = step_logits(nlg, b, 4);
  for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t] == c[t]);
}

TEST_CASE("naive fusion gradient reaches the NLU with predicted belief") {
  auto dims = tiny_dims(4, 5);
  Rng rng(7);
  NaiveFusionModel nf(dims, BeliefSource::Predicted, true, rng);
  Batch b = first_batch(3);
  auto loss = [&](Tape& t) { return nf.response_loss(t, b).loss; };
  Tape tape;
  tape.backward(loss(tape));
  CHECK(nf.modules()->nlu.head.weight.grad.norm() > 0.0);
  CHECK(nf.modules()->nlu.encoder.W.grad.norm() > 0.0);
  std::vector<Parameter*> nlu = nf.modules()->nlu.parameters();
  auto r = check_parameter_gradients(loss, nlu, 20, 1);
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("zero-shot naive fusion chains memorised modules") {
  auto dims = tiny_dims(16, 32);
  Rng rng(8);
  DialogModules pre(dims, rng);
  auto refs = fixtures::distinct_turns(10);
  pretrain_module(ModuleKind::Dm, pre, refs, {}, memorise_hyper(500));
  pretrain_module(ModuleKind::Nlg, pre, refs, {}, memorise_hyper(300));

  NaiveFusionModel nf(dims, BeliefSource::GroundTruth, false, rng);
  install_modules(nf, pre);
  Batch b = make_batch(refs);
  Tape tape(false);
  auto da = nf.modules()->dm.forward(tape, tape.constant(b.belief), tape.constant(b.db)).probs.value();
  CHECK(((da.array() > 0.5) == (b.acts.array() > 0.5)).all());
  auto out = greedy_decode(nf, b, 50);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) exact += out[i] == b.response[i];
  CHECK(exact == refs.size());
}

TEST_CASE("full model gradients match finite differences") {
  auto dims = tiny_dims(4, 5);
  Batch b = first_batch(2);
  struct Case {
    const char* kind;
    ModelOptions options;
  };
  const Case cases[] = {
      {"sfn-finetuned", {.attention = true, .belief_source = BeliefSource::Predicted}},
      {"sfn-finetuned", {.attention = true, .belief_source = BeliefSource::Linear}},
      {"sfn-multitasked", {.attention = false, .belief_source = BeliefSource::Sum}},
      {"seq2seq-attn", {}},
      {"naive-finetuned", {.belief_source = BeliefSource::Predicted}},
      {"multitask", {}},
  };
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const std::string label = std::string(c.kind) + "/" + to_string(c.options.belief_source);
    CAPTURE(label);
    Rng rng(seed);
    auto model = make_model(c.kind, dims, c.options, rng);
    auto params = model->parameters();
    auto r = check_parameter_gradients([&](Tape& t) { return model->response_loss(t, b).loss; }, params, 150,
                                       seed++);
    CHECK(r.probed == 150);
    CAPTURE(r.worst);
    CAPTURE(r.worst_analytic);
    CAPTURE(r.worst_numeric);
    CHECK(r.max_relative_error <= 1e-4);
  }
}

TEST_CASE("SFN injection points") {
  auto dims = tiny_dims();
  Batch b = first_batch(4);

  SUBCASE("any single module zeroed still gives distributions") {
    for (int which = 0; which < 4; ++which) {
      Rng rng(11);
      SfnModel sfn(dims, {.belief_source = BeliefSource::Predicted}, rng);
      sfn.ablation = {which == 0, which == 1, which == 2};
      if (which == 3) sfn.ablation = {true, true, true};
      for (const auto& l : step_logits(sfn, b, 4)) CHECK(rows_normalised(l));
      if (which >= 2) CHECK(sfn.last_fusion().s_cf.value().rightCols(dims.hidden).isZero());
    }
  }
  SUBCASE("oracle belief makes the output independent of the NLU") {
    Rng rng(12);
    SfnModel sfn(dims, {}, rng);
    auto before = step_logits(sfn, b, 5);
    for (auto* p : sfn.modules()->nlu.parameters()) p->value.array() += 0.3;
    auto after = step_logits(sfn, b, 5);
    for (std::size_t t = 0; t < before.size(); ++t) CHECK(before[t] == after[t]);
  }
  SUBCASE("predicted belief does depend on the NLU") {
    Rng rng(12);
    SfnModel sfn(dims, {.belief_source = BeliefSource::Predicted}, rng);
    auto before = step_logits(sfn, b, 2);
    for (auto* p : sfn.modules()->nlu.parameters()) p->value.array() += 0.3;
    CHECK(before[0] != step_logits(sfn, b, 2)[0]);
  }
  SUBCASE("sum equals ground truth when the NLU outputs zeros") {
    Rng rng_a(13), rng_b(13);
    SfnModel gt(dims, {.belief_source = BeliefSource::GroundTruth}, rng_a);
    SfnModel sum(dims, {.belief_source = BeliefSource::Sum}, rng_b);
    sum.modules()->nlu.head.weight.value.setZero();
    sum.modules()->nlu.head.bias.value.setConstant(-1e3);
    gt.modules()->nlu = sum.modules()->nlu;
    Tape tape(false);
    CHECK(sum.belief.resolve(tape, sum.modules()->nlu, b).value() == b.belief);
    auto a = step_logits(gt, b, 4);
    auto c = step_logits(sum, b, 4);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(a[t] == c[t]);
  }
  SUBCASE("encoder sees embedding + belief, init sees the acts") {
    Rng rng(14);
    SfnModel sfn(dims, {}, rng);
    CHECK(sfn.encoder.input_size == dims.embed + dims.belief);
    CHECK(sfn.init.W_da.value.cols() == dims.acts);
    CHECK(sfn.fusion.state_dim == 2 * dims.hidden);
    CHECK(sfn.fusion.fused_dim == dims.hidden);
    SfnModel plain(dims, {.attention = false}, rng);
    CHECK(plain.fusion.state_dim == dims.hidden);
  }
}

TEST_CASE("module modes") {
  auto dims = tiny_dims();
  Batch b = first_batch(4);
  auto one_step = [&](ResponseModel& model) {
    Adam adam(model.parameters(), AdamConfig{1e-2});
    adam.zero_grad();
    Tape tape;
    tape.backward(model.response_loss(tape, b).loss);
    adam.step();
  };

  SUBCASE("frozen modules are bit-identical after an optimiser step") {
    Rng rng(15);
    SfnModel sfn(dims, {.belief_source = BeliefSource::Predicted, .module_mode = ModuleMode::Frozen}, rng);
    CHECK(sfn.kind() == "sfn-frozen");
    const auto before = parameter_bytes(sfn.modules()->parameters());
    const auto higher = parameter_bytes(higher_level_parameters(sfn));
    one_step(sfn);
    CHECK(parameter_bytes(sfn.modules()->parameters()) == before);
    CHECK(parameter_bytes(higher_level_parameters(sfn)) != higher);
    for (auto* p : sfn.modules()->parameters()) CHECK_FALSE(p->trainable);
  }
  SUBCASE("fine-tuned modules move") {
    Rng rng(15);
    SfnModel sfn(dims, {.belief_source = BeliefSource::Predicted, .module_mode = ModuleMode::FineTuned}, rng);
    const auto before = parameter_bytes(sfn.modules()->parameters());
    one_step(sfn);
    CHECK(parameter_bytes(sfn.modules()->parameters()) != before);
    CHECK_FALSE(sfn.wants_module_losses());
  }
  SUBCASE("multitasked asks for module losses") {
    Rng rng(15);
    SfnModel sfn(dims, {.module_mode = ModuleMode::Multitasked}, rng);
    CHECK(sfn.wants_module_losses());
    set_module_mode(sfn, ModuleMode::Frozen);
    CHECK(sfn.module_mode() == ModuleMode::Frozen);
    CHECK_FALSE(sfn.modules()->dm.out.weight.trainable);
    set_module_mode(sfn, ModuleMode::FineTuned);
    CHECK(sfn.modules()->dm.out.weight.trainable);
  }
  SUBCASE("higher-level parameters exclude the modules") {
    Rng rng(15);
    SfnModel sfn(dims, {}, rng);
    auto all = sfn.parameters();
    auto higher = higher_level_parameters(sfn);
    CHECK(higher.size() + sfn.modules()->parameters().size() == all.size());
    for (auto* p : higher) CHECK(p->name.rfind("sfn.", 0) == 0);
  }
}

TEST_CASE("an SFN without its modules still memorises like the baseline") {
  auto dims = tiny_dims(16, 32);
  const auto& data = fixtures::small_data();
  auto refs = fixtures::distinct_turns(10);
  std::vector<const Dialog*> dialogs;
  for (const auto& r : refs)
    if (std::find(dialogs.begin(), dialogs.end(), r.dialog) == dialogs.end()) dialogs.push_back(r.dialog);

  TrainData td{&data.corpus, &data.database, dialogs, {}};
  Hyperparams h = memorise_hyper(300);
  h.batch_size = 64;
  TrainHooks hooks;
  hooks.validate = false;

  Rng rng_a(16), rng_b(16);
  SfnModel sfn(dims, {.attention = false}, rng_a);
  sfn.ablation = {true, true, true};
  Seq2SeqModel s2s(dims, false, rng_b);
  train_supervised(sfn, td, h, hooks);
  train_supervised(s2s, td, h, hooks);

  Batch b = make_batch(refs);
  auto exact = [&](ResponseModel& m) {
    auto out = greedy_decode(m, b, 50);
    std::size_t n = 0;
    for (std::size_t i = 0; i < out.size(); ++i) n += out[i] == b.response[i];
    return double(n) / double(out.size());
  };
  const double a = exact(sfn), c = exact(s2s);
  MESSAGE("exact-match rate: sfn without modules " << a << ", seq2seq " << c);
  CHECK(a >= 0.8);
  CHECK(c >= 0.8);
}
