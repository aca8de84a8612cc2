#pragma once

#include <memory>

#include "edr/nn.hpp"
#include "edr/vocab.hpp"

namespace edr {

struct Dims {
  std::size_t embed = 32;
  std::size_t hidden = 64;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
};

// Attention-based encoder-decoder parameters. The source embedding table is
// shared_ptr storage because the reconstructor reads the identical object.
struct ModelParams {
  Dims dims;
  std::shared_ptr<Tensor> src_embed;  // V_src x m, shared with the reconstructor
  Tensor tgt_embed;                   // V_tgt x m
  GruParams enc_fwd, enc_bwd;         // input m, state n
  Tensor init_w, init_b;              // s0 = tanh(init_w h1_bwd + init_b)
  Tensor attn_wq, attn_uh, attn_v;    // additive attention, query n, keys 2n
  GruParams dec_pre;                  // last-word feeding step: input m, state n
  GruParams dec_main;                 // input m+2n, state n
  Tensor ro_w, ro_b;                  // readout tanh layer: n x (m+3n)
  Tensor out_w, out_b;                // logits: V_tgt x n
  double dropout = 0.0;               // readout-input dropout rate

  static ModelParams init(const Dims& dims, Rng& rng);
  NamedTensors named();
};

// Leaf handles for one tape; `trainable` leaves receive gradients.
struct ModelRefs {
  Expr src_embed, tgt_embed;
  GruParams::Refs enc_fwd, enc_bwd, dec_pre, dec_main;
  Expr init_w, init_b;
  Expr attn_wq, attn_uh, attn_v;
  Expr ro_w, ro_b, out_w, out_b;

  static ModelRefs trainable(Tape& t, ModelParams& p);
  static ModelRefs frozen(Tape& t, const ModelParams& p);
};

// Per-position encoder annotations (forward||backward, dim 2n) plus the
// cached attention keys U_a h_j and the decoder start state.
struct EncodedSource {
  std::vector<Tensor> annotations;
  std::vector<Tensor> attn_keys;
  Tensor init_state;
  std::size_t length() const { return annotations.size(); }
};

struct EncodedGraph {
  std::vector<Expr> annotations;
  std::vector<Expr> attn_keys;
  Expr init_state;
};

struct AttendGraph {
  Expr alpha;
  Expr context;
};

struct StepGraph {
  Expr state;
  Expr log_dist;
  Expr alpha;
  Expr context;
};

struct StepResult {
  Tensor state;
  Tensor log_dist;
  Tensor alpha;
  Tensor context;
};

// Everything the decoder produced for one sentence: hidden states s_1..s_I,
// contexts, the I x J attention matrix as rows, per-step log-probabilities.
struct DecoderTrace {
  std::vector<Tensor> states;
  std::vector<Tensor> contexts;
  std::vector<Tensor> alpha;
  std::vector<double> step_logp;
};

struct LikelihoodGraph {
  Expr logp;
  std::vector<Expr> states;
  std::vector<Expr> contexts;
  std::vector<Expr> alpha;
  std::vector<Expr> step_logp;
  EncodedGraph enc;
};

EncodedGraph encode_graph(Tape& t, std::span<const int> x, const ModelRefs& m);
EncodedGraph to_graph(Tape& t, const EncodedSource& enc);

AttendGraph attend_graph(Tape& t, Expr query, const EncodedGraph& enc, const ModelRefs& m);

StepGraph decode_step_graph(Tape& t, int y_prev, Expr s_prev, const EncodedGraph& enc,
                            const ModelRefs& m, const Tensor* dropout_mask = nullptr);

LikelihoodGraph log_likelihood_graph(Tape& t, std::span<const int> x, std::span<const int> y,
                                     const ModelRefs& m, double dropout_rate = 0.0,
                                     Rng* dropout_rng = nullptr);

// Value-level API (no gradients; safe to call concurrently over shared
// immutable parameters).
EncodedSource encode(std::span<const int> x, const ModelParams& m);
std::pair<Tensor, Tensor> attend(const Tensor& prev_state, const EncodedSource& enc,
                                 const ModelParams& m);
StepResult decode_step(int y_prev, const Tensor& s_prev, const EncodedSource& enc,
                       const ModelParams& m, bool dropout_on = false,
                       Rng* dropout_rng = nullptr);
std::pair<double, DecoderTrace> log_likelihood(std::span<const int> x, std::span<const int> y,
                                               const ModelParams& m);

// Greedy decode (argmax at every step) until EOS or max_len tokens.
std::vector<int> greedy_decode(std::span<const int> x, const ModelParams& m,
                               std::size_t max_len);

}  // namespace edr
