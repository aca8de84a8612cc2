#pragma once

#include "edr/model.hpp"

namespace edr {

// Reconstructor parameters. The inverse attention has its own storage,
// independent of the translation attention; source-word inputs read the
// encoder's embedding table through the shared pointer.
struct ReconstructorParams {
  std::shared_ptr<Tensor> src_embed;  // shared storage with ModelParams
  Tensor attn_wq, attn_uh, attn_v;    // inverse attention: query n, keys n
  GruParams gru;                      // input m+n, state n
  Tensor init_w, init_b;              // h0 = tanh(init_w mean(s) + init_b)
  Tensor ro_w, ro_b;                  // readout tanh layer: n x (m+2n)
  Tensor out_w, out_b;                // logits: V_src x n

  static ReconstructorParams init(const Dims& dims, std::shared_ptr<Tensor> shared_embed,
                                  Rng& rng);
  // Excludes src_embed, which belongs to the encoder-decoder's named set.
  NamedTensors named();
};

struct ReconstructorRefs {
  Expr src_embed;
  Expr attn_wq, attn_uh, attn_v;
  GruParams::Refs gru;
  Expr init_w, init_b;
  Expr ro_w, ro_b, out_w, out_b;

  static ReconstructorRefs trainable(Tape& t, ReconstructorParams& p);
  static ReconstructorRefs frozen(Tape& t, const ReconstructorParams& p);
};

// Inverse attention over decoder states, inverse contexts, the J x I
// attention matrix rows, per-position source log-probabilities.
struct ReconstructionTrace {
  std::vector<Tensor> states;
  std::vector<Tensor> contexts;
  std::vector<Tensor> alpha;
  std::vector<double> step_logp;
};

struct ReconstructionGraph {
  Expr log_rec;
  std::vector<Expr> states;
  std::vector<Expr> contexts;
  std::vector<Expr> alpha;
  std::vector<Expr> step_logp;
};

AttendGraph inverse_attend_graph(Tape& t, Expr query, std::span<const Expr> dec_states,
                                 std::span<const Expr> keys, const ReconstructorRefs& r);

// Teacher-forced log R(x | s): x_0 = BOS, every x_j up to and including the
// final EOS is scored. dec_states are the decoder hidden states of one
// complete translation; gradients flow through them when they live on the
// same tape.
ReconstructionGraph reconstruction_score_graph(Tape& t, std::span<const int> x,
                                               std::span<const Expr> dec_states,
                                               const ReconstructorRefs& r);

// Value-level API.
std::pair<Tensor, Tensor> inverse_attend(const Tensor& prev_state,
                                         std::span<const Tensor> dec_states,
                                         const ReconstructorParams& r);
std::pair<double, ReconstructionTrace> reconstruction_score(std::span<const int> x,
                                                            std::span<const Tensor> dec_states,
                                                            const ReconstructorParams& r);

enum class SampleMode { greedy, stochastic };
SampleMode parse_sample_mode(std::string_view name);

// Autoregressive source generation from decoder states until EOS or
// max_len. Deterministic given (mode, seed).
std::vector<int> sample_reconstruction(std::span<const Tensor> dec_states,
                                       const ReconstructorParams& r, SampleMode mode,
                                       std::uint64_t seed, std::size_t max_len);

}  // namespace edr
