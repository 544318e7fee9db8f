#pragma once

// Small shared fixtures: a cached synthetic corpus and tiny model dimensions.

#include "structfusion/batch.hpp"
#include "structfusion/modules.hpp"
#include "structfusion/synthetic.hpp"

#include <map>
#include <tuple>
#include <vector>

namespace fixtures {

using namespace structfusion;

inline const SyntheticData& small_data() {
  static const SyntheticData data = [] {
    auto spec = default_synthetic_spec();
    spec.dialogs = 60;
    return generate_synthetic(spec, 7);
  }();
  return data;
}

inline ModelDims tiny_dims(Index embed = 6, Index hidden = 8) {
  return ModelDims::from_corpus(small_data().corpus, embed, hidden);
}

inline std::vector<TurnRef> all_train_refs() {
  return turn_refs(small_data().corpus.split("train"));
}

inline Batch first_batch(std::size_t n) {
  auto refs = all_train_refs();
  return make_batch(std::span<const TurnRef>(refs).first(n));
}

/// First n train turns whose module inputs and responses are pairwise
/// distinct, so a memorising model can tell them apart.
inline std::vector<TurnRef> distinct_turns(std::size_t n) {
  std::vector<TurnRef> out;
  std::vector<std::tuple<std::vector<double>, std::vector<int>>> seen_inputs;
  for (const auto& ref : all_train_refs()) {
    const Turn& t = ref.get();
    std::vector<double> key(t.belief.data(), t.belief.data() + t.belief.size());
    key.insert(key.end(), t.db.data(), t.db.data() + t.db.size());
    bool clash = false;
    for (const auto& [k, u] : seen_inputs)
      if (k == key || u == t.user) clash = true;
    if (clash) continue;
    seen_inputs.emplace_back(key, t.user);
    out.push_back(ref);
    if (out.size() == n) break;
  }
  return out;
}

}  // namespace fixtures
