#pragma once

#include "structfusion/corpus.hpp"

#include <span>
#include <vector>

namespace structfusion {

/// One (dialog, turn) pair; the unit of supervised training.
struct TurnRef {
  const Dialog* dialog = nullptr;
  std::size_t turn = 0;

  const Turn& get() const { return dialog->turns[turn]; }
};

std::vector<TurnRef> turn_refs(std::span<const Dialog* const> dialogs);

/// A padded mini-batch of turns. Rows of belief/acts/db follow `refs`.
/// `belief` may have zero columns when no oracle belief is available.
struct Batch {
  std::vector<std::vector<int>> context;
  std::vector<std::vector<int>> response;
  Matrix belief;
  Matrix acts;
  Matrix db;

  Index size() const { return static_cast<Index>(context.size()); }
  bool has_oracle_belief() const { return belief.cols() > 0; }
};

Batch make_batch(std::span<const TurnRef> refs);

/// Time-major view of variable-length sequences. masks[t] is b x 1 with 1
/// where step t is inside the sequence; weights[t] holds the same flags.
struct TimeMajor {
  std::vector<std::vector<int>> ids;
  std::vector<Matrix> masks;
  std::vector<std::vector<double>> weights;

  std::size_t steps() const { return ids.size(); }
};

/// Encoder view: the sequences padded with PAD.
TimeMajor encoder_steps(const std::vector<std::vector<int>>& seqs);

/// Decoder teacher forcing: inputs are SOS + y, targets are y + EOS.
struct DecoderSteps {
  TimeMajor inputs;
  std::vector<std::vector<int>> targets;
};
DecoderSteps decoder_steps(const std::vector<std::vector<int>>& responses);

}  // namespace structfusion
