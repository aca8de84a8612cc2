#pragma once

#include "edr/reconstructor.hpp"

namespace edr {

// Beam-search candidate: target ids (EOS-terminated when complete), the
// cumulative log-likelihood, and the per-step decoder states and attention
// rows needed for phase-2 reconstruction scoring.
struct Hypothesis {
  std::vector<int> tokens;
  double log_lik = 0.0;
  std::vector<Tensor> states;
  std::vector<Tensor> alpha_rows;
  bool complete = false;
};

struct RerankedCandidate {
  Hypothesis hyp;
  double log_rec = 0.0;
  double score = 0.0;
  std::size_t rank_phase1 = 0;
  std::size_t rank_final = 0;
};

// Length-synchronous beam search over log-likelihood. Hypotheses whose EOS
// extension ranks within the top-k joint candidates move to a completed
// pool (capped at k); the live beam refills to width k from the remaining
// extensions. Stops when the pool holds k hypotheses or the total length
// reaches ceil(max_len_factor * J), where the last step may only emit EOS.
// Result is sorted by log_lik descending, ties by lexicographically lower
// token sequence.
std::vector<Hypothesis> beam_search(std::span<const int> x, const ModelParams& m,
                                    std::size_t k, double max_len_factor = 2.0);

// Test oracle: enumerates every EOS-terminated sequence of total length
// <= max_len and returns the log-likelihood argmax with the same
// tie-breaking as beam_search. Guarded to |V_tgt|^max_len <= 1e6.
Hypothesis exhaustive_search(std::span<const int> x, const ModelParams& m,
                             std::size_t max_len);

// log_lik / length.
double normalize_likelihood(double log_lik, std::size_t length);

// Phase 2: scores every candidate with log R(x | states) and sorts by
// score = lik + lambda * rec descending (each term optionally divided by
// its length), ties by phase-1 rank. With lambda == 0 the reconstructor is
// never touched and the phase-1 order is preserved.
std::vector<RerankedCandidate> rerank(std::vector<Hypothesis> candidates,
                                      std::span<const int> x, const ReconstructorParams* rec,
                                      double lambda, bool normalize_lik = false,
                                      bool normalize_rec = false);

}  // namespace edr
