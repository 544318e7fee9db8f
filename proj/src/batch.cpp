#include "structfusion/batch.hpp"

#include <algorithm>

namespace structfusion {

std::vector<TurnRef> turn_refs(std::span<const Dialog* const> dialogs) {
  std::vector<TurnRef> out;
  for (const Dialog* d : dialogs)
    for (std::size_t t = 0; t < d->turns.size(); ++t) out.push_back({d, t});
  return out;
}

Batch make_batch(std::span<const TurnRef> refs) {
  Batch b;
  if (refs.empty()) return b;
  const Turn& first = refs[0].get();
  const auto n = static_cast<Index>(refs.size());
  b.belief.resize(n, first.belief.size());
  b.acts.resize(n, first.acts.size());
  b.db.resize(n, first.db.size());
  for (Index r = 0; r < n; ++r) {
    const Turn& t = refs[static_cast<std::size_t>(r)].get();
    b.context.push_back(t.user);
    b.response.push_back(t.system);
    b.belief.row(r) = t.belief;
    b.acts.row(r) = t.acts;
    b.db.row(r) = t.db;
  }
  return b;
}

namespace {
TimeMajor pad(const std::vector<std::vector<int>>& seqs, std::size_t steps) {
  TimeMajor tm;
  const auto n = static_cast<Index>(seqs.size());
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<int> ids(seqs.size(), Vocabulary::kPad);
    Matrix mask = Matrix::Zero(n, 1);
    std::vector<double> w(seqs.size(), 0.0);
    for (std::size_t r = 0; r < seqs.size(); ++r) {
      if (t < seqs[r].size()) {
        ids[r] = seqs[r][t];
        mask(static_cast<Index>(r), 0) = 1.0;
        w[r] = 1.0;
      }
    }
    tm.ids.push_back(std::move(ids));
    tm.masks.push_back(std::move(mask));
    tm.weights.push_back(std::move(w));
  }
  return tm;
}

std::size_t longest(const std::vector<std::vector<int>>& seqs) {
  std::size_t m = 0;
  for (const auto& s : seqs) m = std::max(m, s.size());
  return m;
}
}  // namespace

TimeMajor encoder_steps(const std::vector<std::vector<int>>& seqs) { return pad(seqs, longest(seqs)); }

DecoderSteps decoder_steps(const std::vector<std::vector<int>>& responses) {
  std::vector<std::vector<int>> in, out;
  for (const auto& r : responses) {
    std::vector<int> i{Vocabulary::kSos};
    i.insert(i.end(), r.begin(), r.end());
    std::vector<int> o(r.begin(), r.end());
    o.push_back(Vocabulary::kEos);
    in.push_back(std::move(i));
    out.push_back(std::move(o));
  }
  DecoderSteps d;
  const std::size_t steps = longest(in);
  d.inputs = pad(in, steps);
  TimeMajor targets = pad(out, steps);
  d.targets = std::move(targets.ids);
  return d;
}

}  // namespace structfusion
