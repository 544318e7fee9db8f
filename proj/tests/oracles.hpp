#pragma once

// Independent re-implementations used as test oracles. They read the raw
// corpus and database only, never the metric code under test.

#include "structfusion/metrics.hpp"
#include "structfusion/synthetic.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracles {

using namespace structfusion;

inline std::vector<std::vector<TokenSeq>> reference_responses(std::span<const Dialog* const> dialogs,
                                                             const Vocabulary& v) {
  std::vector<std::vector<TokenSeq>> out;
  for (const Dialog* d : dialogs) {
    std::vector<TokenSeq> turns;
    for (const auto& t : d->turns) turns.push_back(v.decode(t.system));
    out.push_back(turns);
  }
  return out;
}

// Rule-by-rule re-implementation, written against the raw data only.
inline std::pair<bool, bool> oracle_inform_success(const Dialog& d, const std::vector<TokenSeq>& responses,
                                                   const EntityDatabase& db, const SlotSchema& schema) {
  if (d.goal.domains.empty()) return {false, false};
  const RowVector& last = d.turns.back().belief;
  bool inform = true, success = true;
  for (const auto& g : d.goal.domains) {
    bool named = false;
    for (const auto& r : responses)
      for (const auto& w : r)
        if (w == "[" + g.domain + "_name]") named = true;
    int matches = 0;
    for (const auto& e : db.tables.at(g.domain)) {
      bool ok = true;
      for (Index i = 0; i < last.size(); ++i) {
        const auto& t = schema.belief_layout()[static_cast<std::size_t>(i)];
        if (last(i) > 0.5 && t.domain == g.domain && e.attributes.at(t.slot) != t.value) ok = false;
      }
      matches += ok;
    }
    if (!named || matches == 0) inform = false;
    for (const auto& req : g.requests) {
      bool said = false;
      for (const auto& r : responses)
        if (std::find(r.begin(), r.end(), "[" + g.domain + "_" + req + "]") != r.end()) said = true;
      if (!said) success = false;
    }
  }
  return {inform, inform && success};
}

// Randomly damages responses: drops tokens, swaps in other placeholders.
inline std::vector<TokenSeq> perturb(std::vector<TokenSeq> turns, const std::vector<std::string>& pool,
                                     std::mt19937_64& rng) {
  for (auto& t : turns) {
    TokenSeq out;
    for (const auto& w : t) {
      const auto roll = rng() % 10;
      if (roll < 2) continue;
      if (roll == 2) out.push_back(pool[rng() % pool.size()]);
      out.push_back(w);
    }
    t = out;
  }
  return turns;
}

}  // namespace oracles
