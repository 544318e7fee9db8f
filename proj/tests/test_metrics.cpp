#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "structfusion/metrics.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace structfusion;
using oracles::oracle_inform_success;
using oracles::perturb;
using oracles::reference_responses;

namespace {

TokenSeq toks(const char* s) { return tokenize(s); }

}  // namespace

TEST_CASE("combined score") {
  CHECK(std::abs(combined_score(20.78, 61.40, 54.50) - 78.73) <= 0.005);
  CHECK(std::abs(combined_score(18.51, 77.30, 64.30) - 89.31) <= 0.005);
  CHECK(combined_score(0, 0, 0) == 0.0);
}

TEST_CASE("BLEU hand-computed example") {
  std::vector<TokenSeq> cand = {toks("the cat sat")};
  std::vector<TokenSeq> ref = {toks("the cat sat down")};
  auto d = bleu_detail(cand, ref);
  CHECK(d.matches[0] == 3);
  CHECK(d.totals[0] == 3);
  CHECK(d.matches[1] == 2);
  CHECK(d.matches[2] == 1);
  CHECK(d.matches[3] == 0);
  CHECK(d.totals[3] == 0);
  CHECK(d.precisions[0] == 1.0);
  CHECK(d.precisions[3] == kBleuEpsilon);
  CHECK(std::abs(d.brevity_penalty - std::exp(1.0 - 4.0 / 3.0)) <= 1e-12);
  // 100 * BP * (1 * 1 * 1 * 1e-9)^(1/4)
  const double expect = 100.0 * std::exp(-1.0 / 3.0) * std::pow(1e-9, 0.25);
  CHECK(std::abs(d.score - expect) <= 1e-9);
  CHECK(std::abs(d.score - 0.4029352) < 1e-6);
}

TEST_CASE("BLEU edge cases") {
  std::vector<TokenSeq> same = {toks("i have a table for two at noon"), toks("the [hotel_name] is in the north")};
  CHECK(bleu(same, same) == doctest::Approx(100.0).epsilon(1e-12));

  std::vector<TokenSeq> a = {toks("alpha beta gamma delta")};
  std::vector<TokenSeq> b = {toks("one two three four")};
  CHECK(bleu(a, b) < 0.01);

  std::vector<TokenSeq> empty;
  CHECK_THROWS(bleu(empty, empty));
  CHECK_THROWS(bleu(a, same));

  std::vector<TokenSeq> blank = {{}};
  CHECK(bleu(blank, a) == 0.0);
}

TEST_CASE("BLEU is invariant under consistent reordering") {
  const auto& data = fixtures::small_data();
  std::vector<TokenSeq> cand, ref;
  std::mt19937_64 rng(4);
  for (const auto& ref_turn : fixtures::all_train_refs()) {
    auto r = data.corpus.vocab.decode(ref_turn.get().system);
    auto c = r;
    if (!c.empty() && rng() % 2) c.erase(c.begin() + long(rng() % c.size()));
    cand.push_back(c);
    ref.push_back(r);
  }
  const double base = bleu(cand, ref);
  CHECK(base > 0.0);
  CHECK(base < 100.0);
  std::vector<std::size_t> order(cand.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<TokenSeq> c2, r2;
    for (auto i : order) {
      c2.push_back(cand[i]);
      r2.push_back(ref[i]);
    }
    CHECK(bleu(c2, r2) == base);
  }
}

TEST_CASE("inform and success examples") {
  const auto& data = fixtures::small_data();
  const auto& corpus = data.corpus;
  auto test = corpus.split("test");
  REQUIRE(!test.empty());

  SUBCASE("responses with the entity and every requested attribute") {
    for (const Dialog* d : test) {
      std::vector<TokenSeq> rs(d->turns.size());
      for (const auto& g : d->goal.domains) {
        rs[0].push_back("[" + g.domain + "_name]");
        for (const auto& r : g.requests) rs.back().push_back("[" + g.domain + "_" + r + "]");
      }
      auto o = score_dialog(*d, rs, data.database, corpus.schema);
      CHECK(o.inform);
      CHECK(o.success);
    }
  }
  SUBCASE("all-empty responses") {
    for (const Dialog* d : test) {
      std::vector<TokenSeq> rs(d->turns.size());
      auto o = score_dialog(*d, rs, data.database, corpus.schema);
      CHECK_FALSE(o.inform);
      CHECK_FALSE(o.success);
    }
  }
  SUBCASE("wrong response count and unknown domains are errors") {
    std::vector<TokenSeq> none;
    CHECK_THROWS(score_dialog(*test[0], none, data.database, corpus.schema));
    Dialog odd = *test[0];
    odd.goal.domains[0].domain = "spaceport";
    std::vector<TokenSeq> rs(odd.turns.size());
    CHECK_THROWS(score_dialog(odd, rs, data.database, corpus.schema));
  }
  SUBCASE("the reference responses score full marks") {
    auto refs = reference_responses(test, corpus.vocab);
    auto res = inform_success(test, refs, data.database, corpus.schema);
    CHECK(res.inform == 100.0);
    CHECK(res.success == 100.0);
  }
}

TEST_CASE("inform and success agree with an independent oracle on 50 dialogs") {
  auto spec = default_synthetic_spec();
  spec.dialogs = 50;
  auto data = generate_synthetic(spec, 21);
  std::vector<const Dialog*> dialogs;
  for (const auto& d : data.corpus.dialogs) dialogs.push_back(&d);
  REQUIRE(dialogs.size() == 50);

  std::vector<std::string> pool;
  for (const auto& a : data.corpus.schema.act_layout()) pool.push_back(act_placeholder(a));
  std::mt19937_64 rng(5);
  auto refs = reference_responses(dialogs, data.corpus.vocab);
  int disagreements = 0, informed = 0, succeeded = 0;
  for (int round = 0; round < 4; ++round) {
    std::vector<std::vector<TokenSeq>> responses;
    for (const auto& r : refs) responses.push_back(round == 0 ? r : perturb(r, pool, rng));
    auto res = inform_success(dialogs, responses, data.database, data.corpus.schema);
    for (std::size_t i = 0; i < dialogs.size(); ++i) {
      auto [inf, suc] = oracle_inform_success(*dialogs[i], responses[i], data.database, data.corpus.schema);
      disagreements += (inf != res.dialogs[i].inform) + (suc != res.dialogs[i].success);
      informed += inf;
      succeeded += suc;
      CHECK((!res.dialogs[i].success || res.dialogs[i].inform));
    }
  }
  CHECK(disagreements == 0);
  // The perturbations produce a mix of outcomes, not a degenerate all-pass.
  CHECK(informed < 200);
  CHECK(succeeded < informed);
}

TEST_CASE("appending attribute placeholders never breaks success") {
  const auto& data = fixtures::small_data();
  auto dialogs = data.corpus.split("train");
  auto refs = reference_responses(dialogs, data.corpus.vocab);
  std::mt19937_64 rng(6);
  std::vector<std::string> pool;
  for (const auto& a : data.corpus.schema.act_layout()) pool.push_back(act_placeholder(a));
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    auto before = score_dialog(*dialogs[i], refs[i], data.database, data.corpus.schema);
    auto more = refs[i];
    for (auto& t : more) t.push_back(pool[rng() % pool.size()]);
    auto after = score_dialog(*dialogs[i], more, data.database, data.corpus.schema);
    if (before.success) CHECK(after.success);
    if (before.inform) CHECK(after.inform);
  }
}

TEST_CASE("evaluate a model end to end") {
  const auto& data = fixtures::small_data();
  auto dims = fixtures::tiny_dims();
  Rng rng(7);
  SfnModel model(dims, {}, rng);
  auto test = data.corpus.split("test");
  auto a = evaluate(model, test, data.corpus, data.database, 12);
  auto b = evaluate(model, test, data.corpus, data.database, 12);
  CHECK(a.dialogs == test.size());
  CHECK(a.turns == turn_refs(test).size());
  CHECK(a.bleu == b.bleu);
  CHECK(std::abs(a.combined - combined_score(a.bleu, a.inform, a.success)) <= 0.005);
  CHECK(a.outcomes.size() == test.size());

  auto j = report_to_json(a, true);
  for (const char* key : {"bleu", "inform", "success", "combined", "dialogs", "turns"}) CHECK(j.contains(key));
  CHECK(j["per_dialog"].size() == test.size());
  CHECK_FALSE(report_to_json(a).contains("per_dialog"));
  auto table = report_table({{"sfn-finetuned", a}, {"other", b}});
  CHECK(table.find("sfn-finetuned") != std::string::npos);
  CHECK(table.find("Combined") != std::string::npos);
}

TEST_CASE("perfect responses through score_responses") {
  const auto& data = fixtures::small_data();
  auto test = data.corpus.split("test");
  auto refs = reference_responses(test, data.corpus.vocab);
  auto r = score_responses(test, refs, data.corpus, data.database);
  CHECK(r.bleu == doctest::Approx(100.0));
  CHECK(r.combined == doctest::Approx(200.0));
}
