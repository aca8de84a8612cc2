#pragma once

#include <string>
#include <utility>
#include <vector>

#include "edr/tape.hpp"

namespace edr {

using NamedTensors = std::vector<std::pair<std::string, Tensor*>>;

// Weight init: uniform [-0.08, 0.08] for matrices, zeros for biases.
inline constexpr double kInitRange = 0.08;

Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng);
Tensor init_bias(std::size_t n);

// Gated recurrent unit parameter set:
//   z = sigmoid(Wz in + Uz prev + bz)
//   r = sigmoid(Wr in + Ur prev + br)
//   cand = tanh(Wc in + Uc (r . prev) + bc)
//   next = (1 - z) . prev + z . cand
struct GruParams {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wc, uc, bc;

  static GruParams init(std::size_t in_dim, std::size_t state_dim, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out);
  std::size_t in_dim() const { return wz.dim(1); }
  std::size_t state_dim() const { return wz.dim(0); }

  struct Refs {
    Expr wz, uz, bz, wr, ur, br, wc, uc, bc;
  };
  Refs refs(Tape& t);              // trainable leaves
  Refs refs(Tape& t) const;        // read-only leaves
};

Expr gru_cell(Expr in, Expr prev, const GruParams::Refs& p);

// Value-level single step (no gradients).
Tensor gru_cell(const Tensor& in, const Tensor& prev, const GruParams& p);

// Inverted dropout mask over `dim` entries: each entry is 0 with
// probability `rate`, else 1/(1-rate).
Tensor dropout_mask(std::size_t dim, double rate, Rng& rng);

}  // namespace edr
