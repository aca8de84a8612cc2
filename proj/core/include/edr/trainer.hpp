#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>

#include "edr/corpus.hpp"
#include "edr/evaluation.hpp"
#include "edr/reconstructor.hpp"

namespace edr {

struct TrainConfig {
  double lambda = 1.0;
  std::size_t epochs_stage1 = 10;
  std::size_t epochs_stage2 = 10;
  std::size_t batch_size = 16;
  double rho = 0.95;
  double adadelta_eps = 1e-6;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  double dropout = 0.2;
  std::size_t max_len = 20;
  std::size_t checkpoint_every = 200;  // updates between validation points
  bool raw_sum_loss = false;           // summed log-probs instead of per-token means
  double max_len_factor = 2.0;
};

// Metrics TSV row; BLEU columns are in points (0-100), nan while the
// reconstructor does not exist.
struct MetricsRow {
  std::uint64_t update = 0;
  double neg_log_lik = 0.0;
  double neg_log_rec = 0.0;
  double dev_bleu = 0.0;
  double dev_rec_bleu = 0.0;
};

struct AdadeltaAccum {
  Tensor sq_grad;
  Tensor sq_update;
};

struct TrainState {
  ModelParams theta;
  std::optional<ReconstructorParams> gamma;
  std::map<std::string, AdadeltaAccum> opt;
  std::uint64_t updates = 0;
  std::vector<MetricsRow> history;
  std::vector<double> loss_log;  // per-update total loss
  TrainConfig config;

  NamedTensors trainable();  // theta plus gamma when present
};

struct LossParts {
  double total = 0.0;
  double neg_log_lik = 0.0;
  double neg_log_rec = 0.0;
};

struct LossGraph {
  Expr total;
  LossParts parts;
};

// Batch likelihood loss: -sum_n log P(y^n | x^n), divided by the batch
// target-token count unless raw_sum.
LossGraph likelihood_loss_graph(Tape& t, const Batch& batch, const ModelRefs& m, bool raw_sum,
                                double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

// Combined objective: likelihood plus lambda times the reconstruction term
// (its own per-token mean unless raw_sum). With lambda == 0 this is exactly
// the likelihood loss; the reconstruction forward is skipped entirely and
// `rec` may be null.
LossGraph combined_loss_graph(Tape& t, const Batch& batch, const ModelRefs& m,
                              const ReconstructorRefs* rec, double lambda, bool raw_sum,
                              double dropout_rate = 0.0, Rng* dropout_rng = nullptr);

// Value-level combined loss (no dropout, no gradients).
LossParts combined_loss(const Batch& batch, const ModelParams& m,
                        const ReconstructorParams* rec, double lambda, bool raw_sum = false);

// Global-norm gradient clipping; returns the pre-clip norm.
double clip_gradients(const NamedTensors& params, double clip_norm);

// Adadelta (accumulate squared gradients with decay rho, scale steps by the
// RMS ratio, accumulate squared updates). Parameters without a gradient are
// treated as zero-gradient: accumulators decay, values stay.
void adadelta_update(const NamedTensors& params, std::map<std::string, AdadeltaAccum>& opt,
                     double rho, double eps);

enum class Stage { stage1, stage2, both };
Stage parse_stage(std::string_view name);

struct TrainIO {
  std::filesystem::path out_dir;    // empty: keep everything in memory
  std::ostream* metrics = nullptr;  // optional extra metrics sink
};

TrainState init_state(const TrainConfig& cfg, std::size_t src_vocab_size,
                      std::size_t tgt_vocab_size);
void add_reconstructor(TrainState& state);

// Two-stage schedule: stage 1 trains theta on likelihood only; stage 2
// initializes the reconstructor (when lambda > 0) and trains all parameters
// on the combined objective. Adadelta accumulators reset at stage-2 start.
// Deterministic given cfg.seed.
TrainState train(const ParallelCorpus& train_corpus, const ParallelCorpus& dev_corpus,
                 const TrainConfig& cfg, const Vocabulary& src_vocab,
                 const Vocabulary& tgt_vocab, Stage stage, const TrainIO& io = {},
                 TrainState* initial = nullptr);

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

}  // namespace edr
