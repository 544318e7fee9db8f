#pragma once

#include "structfusion/autodiff.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace structfusion {

using Rng = std::mt19937_64;

/// Uniform initialisation in [-bound, bound].
Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng);

struct EmbeddingTable {
  Index vocab_size = 0;
  Index embed_dim = 0;
  Parameter table;

  EmbeddingTable() = default;
  EmbeddingTable(std::string name, Index vocab_size, Index embed_dim, Rng& rng);

  /// One row per id. Out-of-range ids throw std::out_of_range naming the position.
  Var embed(Tape& tape, std::span<const int> ids);
  std::vector<Parameter*> parameters() { return {&table}; }
};

struct Linear {
  Index in_features = 0;
  Index out_features = 0;
  Parameter weight;  // out x in
  Parameter bias;    // 1 x out

  Linear() = default;
  Linear(std::string name, Index in, Index out, Rng& rng);

  Var apply(Tape& tape, const Var& x);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

/// Single-layer LSTM. Gate blocks are stacked row-wise in the order
/// input, forget, output, candidate: W is 4H x in, U is 4H x H, b is 1 x 4H.
struct LstmParams {
  Index input_size = 0;
  Index hidden_size = 0;
  Parameter W;
  Parameter U;
  Parameter b;

  LstmParams() = default;
  LstmParams(std::string name, Index input_size, Index hidden_size, Rng& rng);

  std::vector<Parameter*> parameters() { return {&W, &U, &b}; }
};

struct LstmState {
  Var h;
  Var c;
};

LstmState zero_state(Tape& tape, Index batch, Index hidden);

/// i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c').
LstmState lstm_step(Tape& tape, const Var& x, const LstmState& state, LstmParams& params);

/// Runs the LSTM over time-major inputs. `masks[t]` (b x 1, entries 0/1)
/// freezes the state of rows whose sequence already ended; an empty span
/// means every row is active at every step.
struct EncodedSequence {
  std::vector<Var> states;  // h_t per step
  LstmState final;
};
EncodedSequence lstm_encode(Tape& tape, LstmParams& params, std::span<const Var> inputs,
                            std::span<const Matrix> masks, const LstmState& initial);

/// Additive attention: e_i = v^T tanh(W_q q + W_k k_i), weights = softmax(e).
struct AttentionParams {
  Index hidden_size = 0;
  Index attn_size = 0;
  Parameter Wq;  // attn x hidden
  Parameter Wk;  // attn x hidden
  Parameter v;   // 1 x attn

  AttentionParams() = default;
  AttentionParams(std::string name, Index hidden_size, Index attn_size, Rng& rng);

  std::vector<Parameter*> parameters() { return {&Wq, &Wk, &v}; }
};

/// Keys with their projections precomputed once per sequence.
struct AttentionMemory {
  std::vector<Var> keys;       // b x hidden per position
  std::vector<Var> projected;  // b x attn per position
  Var mask_bias;               // b x T, 0 for valid and -1e30 for padded positions
};

AttentionMemory prepare_attention(Tape& tape, AttentionParams& params, std::span<const Var> keys,
                                  std::span<const Matrix> masks);

struct AttentionResult {
  Var context;  // b x hidden
  Var weights;  // b x T
};
AttentionResult attend(Tape& tape, const Var& query, const AttentionMemory& memory,
                       AttentionParams& params);

/// Mean over unmasked steps of -log softmax(logits_t)[target_t].
struct SequenceLoss {
  Var loss;
  double tokens = 0.0;
  bool all_masked = false;
};
SequenceLoss masked_sequence_ce(Tape& tape, std::span<const Var> logits,
                                std::span<const std::vector<int>> targets,
                                std::span<const std::vector<double>> masks);

Var add_all(Tape& tape, std::span<const Var> terms);

}  // namespace structfusion
