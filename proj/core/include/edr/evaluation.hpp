#pragma once

#include <array>

#include "edr/beam.hpp"
#include "edr/corpus.hpp"

namespace edr {

using TokenLines = std::vector<std::vector<std::string>>;

struct BleuReport {
  double bleu = 0.0;
  double brevity_penalty = 1.0;
  std::array<double, 4> precisions{};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
};

// Corpus-level case-insensitive 4-gram BLEU: clipped modified n-gram
// precisions, brevity penalty exp(1 - r/c) for c < r, no smoothing. Single
// reference per sentence.
BleuReport bleu(const TokenLines& candidates, const TokenLines& references, int max_n = 4);

// Sentence-level BLEU with add-one smoothing on n >= 2 precisions; used by
// the per-sentence oracle selection.
double sentence_bleu_smoothed(const std::vector<std::string>& candidate,
                              const std::vector<std::string>& reference, int max_n = 4);

// Per sentence picks the candidate with the best smoothed sentence BLEU
// (ties: earlier list position), then reports corpus BLEU of the picks.
BleuReport oracle_bleu(const std::vector<TokenLines>& kbest_lists, const TokenLines& references,
                       int max_n = 4);

// Greedily translates every source, reconstructs the source back from the
// resulting decoder states, and scores the reconstructions against the
// original sources.
BleuReport reconstruction_bleu(const ModelParams& m, const ReconstructorParams& rec,
                               const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                               SampleMode mode, std::uint64_t seed, double max_len_factor = 2.0);

struct LengthBucketRow {
  std::size_t low = 0, high = 0;  // source lengths in [low, high)
  std::size_t count = 0;
  double bleu = 0.0;
  double mean_cand_len = 0.0;
};

struct LengthBucketReport {
  std::vector<LengthBucketRow> rows;
  double length_ratio = 0.0;  // total candidate tokens / total reference tokens
};

LengthBucketReport length_bucket_report(const TokenLines& candidates, const TokenLines& sources,
                                        const TokenLines& references, std::size_t bucket_width);

struct AdequacyReport {
  std::vector<double> under_fraction;  // per sentence
  std::vector<double> over_fraction;
  double mean_under = 0.0;
  double mean_over = 0.0;
};

// Attention-mass proxy: source position j with total attention coverage
// sum_i alpha_ij below tau_under is flagged under-translated, above
// tau_over over-translated.
AdequacyReport adequacy_diagnostics(const std::vector<DecoderTrace>& traces,
                                    double tau_under = 0.2, double tau_over = 1.8);

double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace edr
