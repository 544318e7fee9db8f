#include <doctest.h>

#include "fixtures.hpp"
#include "structfusion/experiments.hpp"

#include <cmath>
#include <set>

using namespace structfusion;

namespace {

Hyperparams tiny_hyper() {
  Hyperparams h;
  h.epochs = 1;
  h.embed_dim = 6;
  h.hidden_dim = 8;
  h.batch_size = 32;
  h.max_len = 12;
  return h;
}

ExperimentConfig tiny_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.models = ExperimentConfig::default_models(tiny_hyper());
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("sample_fraction") {
  const auto train = fixtures::small_data().corpus.split("train");
  const std::size_t n = train.size();
  for (double f : {1.0, 5.0, 10.0, 25.0, 50.0}) {
    auto s = sample_fraction(train, f, 1);
    CHECK(s.size() == std::max<std::size_t>(1, std::size_t(std::ceil(double(n) * f / 100.0))));
    CHECK(s == sample_fraction(train, f, 1));
    std::set<const Dialog*> unique(s.begin(), s.end());
    CHECK(unique.size() == s.size());
    for (const Dialog* d : s) CHECK(std::find(train.begin(), train.end(), d) != train.end());
  }
  CHECK(sample_fraction(train, 100.0, 9) == train);
  CHECK(sample_fraction(train, 25.0, 1) != sample_fraction(train, 25.0, 2));
  CHECK_THROWS(sample_fraction(train, 0.0, 1));
  CHECK_THROWS(sample_fraction(train, 101.0, 1));
}

TEST_CASE("domain transfer split") {
  auto spec = default_synthetic_spec();
  spec.dialogs = 200;
  auto data = generate_synthetic(spec, 5);
  auto split = domain_transfer_split(data.corpus, "hotel", 60, 10, 1);
  REQUIRE(split.train.size() == 70);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(split.train[i]->split == "train");
    CHECK(split.train[i]->domain_labels.contains("hotel") == (i >= 60));
  }
  CHECK(!split.test.empty());
  for (const Dialog* d : split.test) {
    CHECK(d->split == "test");
    CHECK(d->domain_labels.contains("hotel"));
  }
  CHECK_THROWS_AS(domain_transfer_split(data.corpus, "hotel", 2000, 50, 1), InsufficientDialogs);
  CHECK_THROWS_AS(domain_transfer_split(data.corpus, "hotel", 10, 5000, 1), InsufficientDialogs);
  CHECK_THROWS_AS(domain_transfer_split(data.corpus, "spaceport", 1, 1, 1), std::invalid_argument);

  auto cfg = tiny_config(ExperimentKind::DomainTransfer);
  cfg.in_domain = "hotel";
  CHECK_THROWS_AS(run_experiment(cfg, data.corpus, data.database), InsufficientDialogs);
}

TEST_CASE("train_pipeline per model kind") {
  const auto& data = fixtures::small_data();
  TrainData td = TrainData::from_corpus(data.corpus, data.database);
  PipelineConfig p;
  p.hyper = tiny_hyper();

  SUBCASE("zero-shot naive fusion is only pre-trained") {
    p.kind = "naive-zeroshot";
    auto t = train_pipeline(p, td);
    CHECK(t.result.history.empty());
    CHECK(t.model->kind() == "naive-zeroshot");
  }
  SUBCASE("frozen SFN keeps the pre-trained modules") {
    const ModelDims dims = ModelDims::from_corpus(data.corpus, 6, 8);
    DialogModules modules = pretrain_modules(dims, td, p.hyper, 1);
    p.kind = "sfn-frozen";
    auto t = train_pipeline(p, td, {}, &modules);
    CHECK(t.result.history.size() == 1);
    CHECK(parameter_bytes(t.model->modules()->parameters()) == parameter_bytes(modules.parameters()));
    p.kind = "sfn-finetuned";
    auto f = train_pipeline(p, td, {}, &modules);
    CHECK(parameter_bytes(f.model->modules()->parameters()) != parameter_bytes(modules.parameters()));
  }
  SUBCASE("multitasked kinds train the module heads") {
    for (const char* kind : {"multitask", "sfn-multitasked"}) {
      p.kind = kind;
      auto t = train_pipeline(p, td);
      REQUIRE(t.result.history.size() == 1);
      CHECK(t.result.history[0].loss_nlu > 0.0);
      CHECK(t.result.history[0].loss_nlg > 0.0);
    }
  }
  SUBCASE("plain seq2seq has nothing to pre-train") {
    p.kind = "seq2seq";
    CHECK_FALSE(p.needs_pretraining());
    auto t = train_pipeline(p, td);
    CHECK(t.model->modules() == nullptr);
  }
}

TEST_CASE("a 100% low-data run is a plain training run") {
  const auto& data = fixtures::small_data();
  auto cfg = tiny_config(ExperimentKind::LowData);
  cfg.fractions = {100.0};
  auto rep = run_experiment(cfg, data.corpus, data.database);
  REQUIRE(rep.rows.size() == 2);
  for (PipelineConfig p : cfg.models) {
    p.hyper.seed = cfg.seed;
    auto t = train_pipeline(p, TrainData::from_corpus(data.corpus, data.database));
    auto plain = evaluate(*t.model, data.corpus.split("test"), data.corpus, data.database, p.hyper.max_len);
    const auto& row = rep.find(p.kind, "100%");
    CHECK(report_to_json(row.report, true) == report_to_json(plain, true));
    CHECK(row.train_dialogs == data.corpus.split("train").size());
  }
}

TEST_CASE("low-data report shape and determinism") {
  const auto& data = fixtures::small_data();
  auto cfg = tiny_config(ExperimentKind::LowData);
  cfg.fractions = {10.0, 50.0};
  auto a = run_experiment(cfg, data.corpus, data.database);
  auto b = run_experiment(cfg, data.corpus, data.database);
  CHECK(experiment_to_json(a) == experiment_to_json(b));
  REQUIRE(a.rows.size() == 4);
  CHECK(a.find("sfn-finetuned", "10%").train_dialogs == 5);

  auto j = experiment_to_json(a);
  CHECK(j["experiment"] == "low-data");
  for (const char* model : {"seq2seq-attn", "sfn-finetuned"}) {
    const auto& s = j["series"][model];
    CHECK(s["fractions"] == nlohmann::json::array({10.0, 50.0}));
    for (const char* metric : {"bleu", "inform", "success", "combined"}) CHECK(s[metric].size() == 2);
  }
  for (const auto& row : j["rows"]) {
    const double c = row["combined"];
    CHECK(std::abs(c - combined_score(row["bleu"], row["inform"], row["success"])) <= 0.005);
  }
  CHECK(experiment_table(a).find("sfn-finetuned 50%") != std::string::npos);
}

TEST_CASE("belief ablation emits one row per belief source") {
  const auto& data = fixtures::small_data();
  auto cfg = tiny_config(ExperimentKind::BeliefAblation);
  auto rep = run_experiment(cfg, data.corpus, data.database);
  REQUIRE(rep.rows.size() == 4);
  const char* expect[] = {"gt", "pred", "sum", "linear"};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rep.rows[i].variant == expect[i]);
    CHECK(rep.rows[i].model == "sfn-finetuned");
  }
  CHECK_FALSE(experiment_to_json(rep).contains("series"));
}

TEST_CASE("experiment configuration errors") {
  auto cfg = tiny_config(ExperimentKind::LowData);
  CHECK_NOTHROW(cfg.validate());
  cfg.fractions = {0.0};
  CHECK_THROWS(cfg.validate());
  cfg.fractions = {150.0};
  CHECK_THROWS(cfg.validate());
  cfg = tiny_config(ExperimentKind::BeliefAblation);
  cfg.models = {cfg.models[0]};
  const auto& data = fixtures::small_data();
  CHECK_THROWS(run_experiment(cfg, data.corpus, data.database));
  CHECK(parse_experiment_kind("domain-transfer") == ExperimentKind::DomainTransfer);
  CHECK_THROWS(parse_experiment_kind("table-9"));
}

TEST_CASE("repeated runs report the mean over seeds") {
  const auto& data = fixtures::small_data();
  auto cfg = tiny_config(ExperimentKind::LowData);
  cfg.fractions = {50.0};
  cfg.repeats = 2;
  auto rep = run_experiment(cfg, data.corpus, data.database);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    REQUIRE(row.runs.size() == 2);
    CHECK(row.report.inform == doctest::Approx((row.runs[0].inform + row.runs[1].inform) / 2));
    CHECK(row.report.bleu == doctest::Approx((row.runs[0].bleu + row.runs[1].bleu) / 2));
    CHECK(std::abs(row.report.combined - combined_score(row.report.bleu, row.report.inform, row.report.success)) <=
          0.005);
  }
  // The first seed is the single-run experiment.
  cfg.repeats = 1;
  auto single = run_experiment(cfg, data.corpus, data.database);
  CHECK(report_to_json(single.rows[1].report) == report_to_json(rep.rows[1].runs[0]));
  CHECK(experiment_to_json(rep)["rows"][0]["per_seed"].size() == 2);
  cfg.repeats = 0;
  CHECK_THROWS(cfg.validate());
}
