#include "edr/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "edr/checkpoint.hpp"

namespace edr {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

NamedTensors TrainState::trainable() {
  NamedTensors out = theta.named();
  if (gamma) {
    NamedTensors g = gamma->named();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

LossGraph likelihood_loss_graph(Tape& t, const Batch& batch, const ModelRefs& m, bool raw_sum,
                                double dropout_rate, Rng* dropout_rng) {
  std::vector<Expr> terms;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::vector<int> x = batch.src_row(i);
    const std::vector<int> y = batch.tgt_row(i);
    LikelihoodGraph g = log_likelihood_graph(t, x, y, m, dropout_rate, dropout_rng);
    terms.push_back(g.logp);
    tokens += y.size();
  }
  Expr nll = scale(add_all(terms), raw_sum ? -1.0 : -1.0 / static_cast<double>(tokens));
  LossGraph out{nll, {}};
  out.parts.neg_log_lik = t.scalar_value(nll);
  out.parts.neg_log_rec = kNan;
  out.parts.total = out.parts.neg_log_lik;
  return out;
}

LossGraph combined_loss_graph(Tape& t, const Batch& batch, const ModelRefs& m,
                              const ReconstructorRefs* rec, double lambda, bool raw_sum,
                              double dropout_rate, Rng* dropout_rng) {
  if (lambda < 0.0) throw config_error("lambda must be >= 0");
  if (lambda == 0.0)
    return likelihood_loss_graph(t, batch, m, raw_sum, dropout_rate, dropout_rng);
  if (rec == nullptr) throw config_error("lambda > 0 requires reconstructor parameters");

  std::vector<Expr> lik_terms, rec_terms;
  std::size_t lik_tokens = 0, rec_tokens = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::vector<int> x = batch.src_row(i);
    const std::vector<int> y = batch.tgt_row(i);
    LikelihoodGraph g = log_likelihood_graph(t, x, y, m, dropout_rate, dropout_rng);
    ReconstructionGraph rg = reconstruction_score_graph(t, x, g.states, *rec);
    lik_terms.push_back(g.logp);
    rec_terms.push_back(rg.log_rec);
    lik_tokens += y.size();
    rec_tokens += x.size();
  }
  Expr nll = scale(add_all(lik_terms), raw_sum ? -1.0 : -1.0 / static_cast<double>(lik_tokens));
  Expr nrec = scale(add_all(rec_terms), raw_sum ? -1.0 : -1.0 / static_cast<double>(rec_tokens));
  Expr total = add(nll, scale(nrec, lambda));
  LossGraph out{total, {}};
  out.parts.neg_log_lik = t.scalar_value(nll);
  out.parts.neg_log_rec = t.scalar_value(nrec);
  out.parts.total = t.scalar_value(total);
  return out;
}

LossParts combined_loss(const Batch& batch, const ModelParams& m,
                        const ReconstructorParams* rec, double lambda, bool raw_sum) {
  Tape t;
  ModelRefs mrefs = ModelRefs::frozen(t, m);
  if (lambda == 0.0) return likelihood_loss_graph(t, batch, mrefs, raw_sum).parts;
  if (rec == nullptr) throw config_error("lambda > 0 requires reconstructor parameters");
  ReconstructorRefs rrefs = ReconstructorRefs::frozen(t, *rec);
  return combined_loss_graph(t, batch, mrefs, &rrefs, lambda, raw_sum).parts;
}

double clip_gradients(const NamedTensors& params, double clip_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p->has_grad()) continue;
    const Tensor& g = p->grad();
    for (std::size_t i = 0; i < g.numel(); ++i) sq += g.at(i) * g.at(i);
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm && norm > 0.0) {
    const double factor = clip_norm / norm;
    for (const auto& [name, p] : params) {
      if (!p->has_grad()) continue;
      Tensor& g = p->grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g.set(i, g.at(i) * factor);
    }
  }
  return norm;
}

void adadelta_update(const NamedTensors& params, std::map<std::string, AdadeltaAccum>& opt,
                     double rho, double eps) {
  for (const auto& [name, p] : params) {
    AdadeltaAccum& acc = opt[name];
    if (acc.sq_grad.numel() == 0) {
      acc.sq_grad = Tensor(p->shape());
      acc.sq_update = Tensor(p->shape());
    }
    if (!acc.sq_grad.same_shape(*p))
      throw numeric_error("adadelta: accumulator shape " + acc.sq_grad.shape_str() +
                          " does not match parameter " + name + " " + p->shape_str());
    const bool has_grad = p->has_grad();
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double g = has_grad ? p->grad().at(i) : 0.0;
      const double eg = rho * acc.sq_grad.at(i) + (1.0 - rho) * g * g;
      acc.sq_grad.set(i, eg);
      const double delta = -std::sqrt((acc.sq_update.at(i) + eps) / (eg + eps)) * g;
      p->set(i, p->at(i) + delta);
      acc.sq_update.set(i, rho * acc.sq_update.at(i) + (1.0 - rho) * delta * delta);
    }
  }
}

Stage parse_stage(std::string_view name) {
  if (name == "1") return Stage::stage1;
  if (name == "2") return Stage::stage2;
  if (name == "both") return Stage::both;
  throw config_error("unknown stage: " + std::string(name) + " (expected 1, 2 or both)");
}

TrainState init_state(const TrainConfig& cfg, std::size_t src_vocab_size,
                      std::size_t tgt_vocab_size) {
  TrainState st;
  st.config = cfg;
  Dims dims{cfg.embed_dim, cfg.hidden_dim, src_vocab_size, tgt_vocab_size};
  Rng rng = Rng::substream(cfg.seed, "init/theta");
  st.theta = ModelParams::init(dims, rng);
  st.theta.dropout = cfg.dropout;
  return st;
}

void add_reconstructor(TrainState& state) {
  Rng rng = Rng::substream(state.config.seed, "init/gamma");
  state.gamma =
      ReconstructorParams::init(state.theta.dims, state.theta.src_embed, rng);
}

void write_metrics_header(std::ostream& os) {
  os << "update\tneg_log_lik\tneg_log_rec\tdev_bleu\tdev_rec_bleu\n";
}

void write_metrics_row(std::ostream& os, const MetricsRow& row) {
  os << row.update << '\t' << row.neg_log_lik << '\t' << row.neg_log_rec << '\t'
     << row.dev_bleu << '\t' << row.dev_rec_bleu << '\n';
}

namespace {

MetricsRow validate(TrainState& st, const ParallelCorpus& dev, const Vocabulary& src_vocab,
                    const Vocabulary& tgt_vocab, const TrainConfig& cfg) {
  MetricsRow row;
  row.update = st.updates;
  TokenLines cands, refs;
  for (const auto& pair : dev.pairs) {
    const std::size_t max_len = static_cast<std::size_t>(
        std::ceil(cfg.max_len_factor * static_cast<double>(pair.src.size())));
    cands.push_back(tgt_vocab.decode(greedy_decode(pair.src, st.theta, max_len)));
    refs.push_back(tgt_vocab.decode(pair.tgt));
  }
  row.dev_bleu = bleu(cands, refs).bleu * 100.0;
  row.dev_rec_bleu =
      st.gamma ? reconstruction_bleu(st.theta, *st.gamma, dev, src_vocab, SampleMode::greedy,
                                     cfg.seed, cfg.max_len_factor)
                         .bleu *
                     100.0
               : kNan;
  return row;
}

struct StageRunner {
  TrainState& st;
  const TrainConfig& cfg;
  const ParallelCorpus& train_corpus;
  const ParallelCorpus& dev_corpus;
  const Vocabulary& src_vocab;
  const Vocabulary& tgt_vocab;
  std::ostream* metrics_file = nullptr;
  std::ostream* metrics_extra = nullptr;
  std::filesystem::path checkpoint_path;  // interval checkpoints, may be empty

  double sum_lik = 0.0, sum_rec = 0.0;
  std::size_t n_since = 0;
  bool rec_seen = false;

  void log_row() {
    MetricsRow row = validate(st, dev_corpus, src_vocab, tgt_vocab, cfg);
    row.neg_log_lik = n_since ? sum_lik / static_cast<double>(n_since) : kNan;
    row.neg_log_rec = rec_seen && n_since ? sum_rec / static_cast<double>(n_since) : kNan;
    sum_lik = sum_rec = 0.0;
    n_since = 0;
    rec_seen = false;
    st.history.push_back(row);
    if (metrics_file) write_metrics_row(*metrics_file, row);
    if (metrics_extra) write_metrics_row(*metrics_extra, row);
    if (!checkpoint_path.empty()) save_checkpoint(st, checkpoint_path);
  }

  void run(std::size_t epochs, bool with_rec, std::string_view stage_tag) {
    const std::uint64_t stage_salt = Rng::substream(cfg.seed, stage_tag).next_u64();
    const std::uint64_t start_updates = st.updates;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      std::vector<Batch> batches =
          make_batches(train_corpus, cfg.batch_size, stage_salt ^ (epoch + 1));
      for (std::size_t b = 0; b < batches.size(); ++b) {
        NamedTensors params = st.trainable();
        for (auto& [name, p] : params) p->zero_grad();

        Tape tape;
        ModelRefs mrefs = ModelRefs::trainable(tape, st.theta);
        Rng dropout_rng = Rng::substream(cfg.seed, "dropout", st.updates);
        LossGraph loss;
        if (with_rec) {
          ReconstructorRefs rrefs = ReconstructorRefs::trainable(tape, *st.gamma);
          loss = combined_loss_graph(tape, batches[b], mrefs, &rrefs, cfg.lambda,
                                     cfg.raw_sum_loss, cfg.dropout, &dropout_rng);
        } else {
          loss = likelihood_loss_graph(tape, batches[b], mrefs, cfg.raw_sum_loss, cfg.dropout,
                                       &dropout_rng);
        }
        if (!std::isfinite(loss.parts.total))
          throw numeric_error("non-finite loss at update " + std::to_string(st.updates + 1) +
                              " (batch " + std::to_string(b) + " of epoch " +
                              std::to_string(epoch) + ")");
        tape.backward(loss.total);
        clip_gradients(params, cfg.clip_norm);
        adadelta_update(params, st.opt, cfg.rho, cfg.adadelta_eps);

        ++st.updates;
        st.loss_log.push_back(loss.parts.total);
        sum_lik += loss.parts.neg_log_lik;
        if (with_rec) {
          sum_rec += loss.parts.neg_log_rec;
          rec_seen = true;
        }
        ++n_since;
        if (cfg.checkpoint_every > 0 && st.updates % cfg.checkpoint_every == 0) log_row();
      }
    }
    if (st.updates > start_updates &&
        (st.history.empty() || st.history.back().update != st.updates))
      log_row();
  }
};

}  // namespace

TrainState train(const ParallelCorpus& train_corpus, const ParallelCorpus& dev_corpus,
                 const TrainConfig& cfg, const Vocabulary& src_vocab,
                 const Vocabulary& tgt_vocab, Stage stage, const TrainIO& io,
                 TrainState* initial) {
  if (train_corpus.empty() || dev_corpus.empty()) throw data_error("train: empty corpus");

  TrainState st = initial ? std::move(*initial)
                          : init_state(cfg, src_vocab.size(), tgt_vocab.size());
  st.config = cfg;

  std::ofstream metrics_file;
  if (!io.out_dir.empty()) {
    std::filesystem::create_directories(io.out_dir);
    metrics_file.open(io.out_dir / "metrics.tsv");
    write_metrics_header(metrics_file);
  }
  if (io.metrics) write_metrics_header(*io.metrics);

  StageRunner runner{st,        cfg,       train_corpus,
                     dev_corpus, src_vocab, tgt_vocab,
                     metrics_file.is_open() ? &metrics_file : nullptr,
                     io.metrics};
  if (!io.out_dir.empty()) runner.checkpoint_path = io.out_dir / "checkpoint.edrc";

  if (stage == Stage::stage1 || stage == Stage::both) {
    runner.run(cfg.epochs_stage1, /*with_rec=*/false, "shuffle/stage1");
    if (!io.out_dir.empty()) save_checkpoint(st, io.out_dir / "stage1.edrc");
  }
  if (stage == Stage::stage2 || stage == Stage::both) {
    if (cfg.lambda > 0.0 && !st.gamma) add_reconstructor(st);
    st.opt.clear();  // fresh accumulators for the joint objective
    runner.run(cfg.epochs_stage2, /*with_rec=*/cfg.lambda > 0.0, "shuffle/stage2");
  }
  if (!io.out_dir.empty()) save_checkpoint(st, io.out_dir / "model.edrc");
  return st;
}

}  // namespace edr
