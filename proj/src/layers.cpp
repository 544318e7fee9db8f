#include "structfusion/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace structfusion {

Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

EmbeddingTable::EmbeddingTable(std::string name, Index vocab, Index dim, Rng& rng)
    : vocab_size(vocab),
      embed_dim(dim),
      table(std::move(name), uniform_matrix(vocab, dim, 1.0 / std::sqrt(double(dim)), rng)) {}

Var EmbeddingTable::embed(Tape& tape, std::span<const int> ids) {
  return embedding_lookup(tape.param(table), ids);
}

Linear::Linear(std::string name, Index in, Index out, Rng& rng)
    : in_features(in), out_features(out) {
  const double bound = 1.0 / std::sqrt(double(in));
  weight = Parameter(name + ".weight", uniform_matrix(out, in, bound, rng));
  bias = Parameter(name + ".bias", uniform_matrix(1, out, bound, rng));
}

Var Linear::apply(Tape& tape, const Var& x) {
  return affine(x, tape.param(weight), tape.param(bias));
}

LstmParams::LstmParams(std::string name, Index in, Index hidden, Rng& rng)
    : input_size(in), hidden_size(hidden) {
  const double bound = 1.0 / std::sqrt(double(hidden));
  W = Parameter(name + ".W", uniform_matrix(4 * hidden, in, bound, rng));
  U = Parameter(name + ".U", uniform_matrix(4 * hidden, hidden, bound, rng));
  Matrix bias = uniform_matrix(1, 4 * hidden, bound, rng);
  bias.middleCols(hidden, hidden).setConstant(1.0);  // forget gate
  b = Parameter(name + ".b", std::move(bias));
}

LstmState zero_state(Tape& tape, Index batch, Index hidden) {
  return {tape.constant(Matrix::Zero(batch, hidden)), tape.constant(Matrix::Zero(batch, hidden))};
}

LstmState lstm_step(Tape& tape, const Var& x, const LstmState& state, LstmParams& p) {
  const Index H = p.hidden_size;
  if (x.cols() != p.input_size || state.h.cols() != H || state.c.cols() != H ||
      x.rows() != state.h.rows() || x.rows() != state.c.rows())
    throw ShapeError("lstm_step: input [" + std::to_string(x.rows()) + "," +
                     std::to_string(x.cols()) + "] / hidden [" + std::to_string(state.h.rows()) +
                     "," + std::to_string(state.h.cols()) + "] do not match params (in=" +
                     std::to_string(p.input_size) + ", hidden=" + std::to_string(H) + ")");
  Var gates = add(affine(x, tape.param(p.W), tape.param(p.b)), matmul_nt(state.h, tape.param(p.U)));
  Var i = sigmoid(slice(gates, 0, H));
  Var f = sigmoid(slice(gates, H, H));
  Var o = sigmoid(slice(gates, 2 * H, H));
  Var g = tanh(slice(gates, 3 * H, H));
  Var c = add(mul(f, state.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

namespace {
bool all_ones(const Matrix& m) { return (m.array() == 1.0).all(); }

Var blend(Tape& tape, const Var& fresh, const Var& old, const Matrix& mask) {
  // old + mask * (fresh - old)
  return add(old, scale_rows(sub(fresh, old), tape.constant(mask)));
}
}  // namespace

EncodedSequence lstm_encode(Tape& tape, LstmParams& params, std::span<const Var> inputs,
                            std::span<const Matrix> masks, const LstmState& initial) {
  if (!masks.empty() && masks.size() != inputs.size())
    throw ShapeError("lstm_encode: mask count differs from step count");
  EncodedSequence out;
  LstmState state = initial;
  out.states.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    LstmState next = lstm_step(tape, inputs[t], state, params);
    if (!masks.empty() && !all_ones(masks[t])) {
      next.h = blend(tape, next.h, state.h, masks[t]);
      next.c = blend(tape, next.c, state.c, masks[t]);
    }
    state = next;
    out.states.push_back(state.h);
  }
  out.final = state;
  return out;
}

AttentionParams::AttentionParams(std::string name, Index hidden, Index attn, Rng& rng)
    : hidden_size(hidden), attn_size(attn) {
  const double bound = 1.0 / std::sqrt(double(hidden));
  Wq = Parameter(name + ".Wq", uniform_matrix(attn, hidden, bound, rng));
  Wk = Parameter(name + ".Wk", uniform_matrix(attn, hidden, bound, rng));
  v = Parameter(name + ".v", uniform_matrix(1, attn, 1.0 / std::sqrt(double(attn)), rng));
}

AttentionMemory prepare_attention(Tape& tape, AttentionParams& params, std::span<const Var> keys,
                                  std::span<const Matrix> masks) {
  if (keys.empty()) throw std::invalid_argument("attend: empty key sequence");
  AttentionMemory mem;
  mem.keys.assign(keys.begin(), keys.end());
  Var wk = tape.param(params.Wk);
  for (const auto& k : keys) mem.projected.push_back(matmul_nt(k, wk));
  const Index b = keys[0].rows();
  const Index T = static_cast<Index>(keys.size());
  Matrix bias = Matrix::Zero(b, T);
  if (!masks.empty()) {
    if (masks.size() != keys.size()) throw ShapeError("attend: mask count differs from key count");
    for (Index t = 0; t < T; ++t)
      for (Index r = 0; r < b; ++r)
        if (masks[static_cast<std::size_t>(t)](r, 0) == 0.0) bias(r, t) = -1e30;
  }
  mem.mask_bias = tape.constant(std::move(bias));
  return mem;
}

AttentionResult attend(Tape& tape, const Var& query, const AttentionMemory& mem,
                       AttentionParams& params) {
  if (mem.keys.empty()) throw std::invalid_argument("attend: empty key sequence");
  Var q = matmul_nt(query, tape.param(params.Wq));
  Var v = tape.param(params.v);
  std::vector<Var> scores;
  scores.reserve(mem.keys.size());
  for (const auto& pk : mem.projected) scores.push_back(matmul_nt(tanh(add(q, pk)), v));
  Var weights = softmax(add(concat(scores), mem.mask_bias));
  std::vector<Var> terms;
  terms.reserve(mem.keys.size());
  for (std::size_t t = 0; t < mem.keys.size(); ++t)
    terms.push_back(scale_rows(mem.keys[t], slice(weights, static_cast<Index>(t), 1)));
  return {add_all(tape, terms), weights};
}

Var add_all(Tape& tape, std::span<const Var> terms) {
  if (terms.empty()) return tape.constant(Matrix::Zero(1, 1));
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

SequenceLoss masked_sequence_ce(Tape& tape, std::span<const Var> logits,
                                std::span<const std::vector<int>> targets,
                                std::span<const std::vector<double>> masks) {
  if (logits.size() != targets.size() || logits.size() != masks.size())
    throw ShapeError("masked_sequence_ce: logits, targets and masks must have equal step counts");
  SequenceLoss out;
  std::vector<Var> terms;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    double count = 0.0;
    for (double m : masks[t]) count += m;
    if (count == 0.0) continue;
    out.tokens += count;
    terms.push_back(softmax_cross_entropy(logits[t], targets[t], masks[t]));
  }
  if (out.tokens == 0.0) {
    out.all_masked = true;
    out.loss = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  out.loss = scale(add_all(tape, terms), 1.0 / out.tokens);
  return out;
}

}  // namespace structfusion
