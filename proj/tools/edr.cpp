// Command line surface: data generation, training, translation, reranking,
// scoring, evaluation, diagnostics.

#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "edr/checkpoint.hpp"
#include "edr/gradcheck_fixture.hpp"

namespace {

using namespace edr;

// ---------------------------------------------------------------------------
// Option registry: one table drives CLI flags, the plain-text config file
// and the effective-config printout. Precedence is defaults < file < flags.

template <class T>
T parse_value(const std::string& s) {
  if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw config_error("not a boolean: " + s);
  } else if constexpr (std::is_floating_point_v<T>) {
    return static_cast<T>(std::stod(s));
  } else {
    return static_cast<T>(std::stoull(s));
  }
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>)
    return v;
  else if constexpr (std::is_same_v<T, bool>)
    return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, double>) {
    std::ostringstream os;
    os << v;
    return os.str();
  } else
    return std::to_string(v);
}

class Options {
 public:
  explicit Options(CLI::App& app) : app_(app) {
    app_.add_option("--config", config_path_,
                    "plain-text config file, one key = value per line");
  }

  template <class T>
  void add(const std::string& name, T& var, const std::string& desc) {
    app_.add_option("--" + name, var, desc);
    file_setters_[name] = [&var](const std::string& s) { var = parse_value<T>(s); };
    printers_.emplace_back(name, [&var]() { return format_value(var); });
  }

  void add_flag(const std::string& name, bool& var, const std::string& desc) {
    app_.add_flag("--" + name, var, desc);
    file_setters_[name] = [&var](const std::string& s) { var = parse_value<bool>(s); };
    printers_.emplace_back(name, [&var]() { return format_value(var); });
  }

  // Applies the config file named in raw argv before CLI11 assigns flags.
  void load_config_from(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size())
        path = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0)
        path = args[i].substr(9);
    }
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::vector<std::string> parts = tokenize(line);
      if (parts.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error(path + " line " + std::to_string(lineno) +
                           ": expected key = value");
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      auto it = file_setters_.find(key);
      if (it == file_setters_.end())
        throw config_error(path + " line " + std::to_string(lineno) + ": unknown key " + key);
      it->second(value);
    }
  }

  void print_effective(std::ostream& os, const std::string& command) const {
    os << "# effective config (" << command << ")\n";
    for (const auto& [name, get] : printers_) os << name << " = " << get() << '\n';
  }

 private:
  CLI::App& app_;
  std::string config_path_;
  std::map<std::string, std::function<void(const std::string&)>> file_setters_;
  std::vector<std::pair<std::string, std::function<std::string()>>> printers_;
};

// ---------------------------------------------------------------------------
// Small shared helpers.

std::pair<std::size_t, std::size_t> parse_size_pair(const std::string& s, char sep,
                                                    const char* what) {
  const std::size_t pos = s.find(sep);
  if (pos == std::string::npos)
    throw config_error(std::string(what) + ": expected two numbers separated by '" + sep +
                       "', got " + s);
  return {static_cast<std::size_t>(std::stoull(s.substr(0, pos))),
          static_cast<std::size_t>(std::stoull(s.substr(pos + 1)))};
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  if (out.empty()) throw config_error("empty list: " + s);
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> workers;
  const std::size_t count = std::min(jobs, n);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct LoadedModel {
  TrainState state;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
};

LoadedModel load_model(const std::string& model_path, std::string src_vocab_path,
                       std::string tgt_vocab_path) {
  const std::filesystem::path model(model_path);
  if (src_vocab_path.empty()) src_vocab_path = (model.parent_path() / "src.vocab").string();
  if (tgt_vocab_path.empty()) tgt_vocab_path = (model.parent_path() / "tgt.vocab").string();
  LoadedModel out{load_checkpoint(model), Vocabulary::read(src_vocab_path),
                  Vocabulary::read(tgt_vocab_path)};
  if (out.src_vocab.size() != out.state.theta.dims.src_vocab ||
      out.tgt_vocab.size() != out.state.theta.dims.tgt_vocab)
    throw data_error("vocabulary sizes do not match the checkpoint dims");
  return out;
}

double resolve_lambda(double flag_lambda, const TrainState& state) {
  return std::isnan(flag_lambda) ? state.config.lambda : flag_lambda;
}

const ReconstructorParams* reconstructor_for(const TrainState& state, double lambda) {
  if (lambda <= 0.0) return nullptr;
  if (!state.gamma)
    throw config_error(
        "lambda > 0 but the checkpoint has no reconstructor parameters; "
        "train stage 2 first or pass --lambda 0");
  return &*state.gamma;
}

std::size_t decode_limit(std::size_t source_len, double factor) {
  return static_cast<std::size_t>(std::ceil(factor * static_cast<double>(source_len)));
}

std::ostream& open_sink(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw data_error("cannot write " + path);
  return file;
}

void write_kbest_tsv(std::ostream& os,
                     const std::vector<std::vector<RerankedCandidate>>& per_sentence,
                     const Vocabulary& tgt_vocab) {
  os << "sent_id\trank_final\trank_phase1\tlog_lik\tlog_rec\tscore\ttokens\n";
  os.precision(17);
  for (std::size_t s = 0; s < per_sentence.size(); ++s) {
    for (const RerankedCandidate& c : per_sentence[s]) {
      os << s << '\t' << c.rank_final << '\t' << c.rank_phase1 << '\t' << c.hyp.log_lik
         << '\t' << c.log_rec << '\t' << c.score << '\t'
         << detokenize(tgt_vocab.decode(c.hyp.tokens)) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string task = "copy";
  std::size_t n = 2000;
  std::size_t dev = 200;
  std::size_t vocab_size = 20;
  std::string len = "1:8";
  std::uint64_t seed = 1;
  std::string out = "data";
};

void register_gen_data(Options& o, GenDataArgs& a) {
  o.add("task", a.task, "copy | reverse | lexsub | lengthvar");
  o.add("n", a.n, "number of training pairs");
  o.add("dev", a.dev, "number of held-out pairs (same generator stream)");
  o.add("vocab-size", a.vocab_size, "content symbols per side");
  o.add("len", a.len, "source length range min:max");
  o.add("seed", a.seed, "generator seed");
  o.add("out", a.out, "output prefix; writes .src/.tgt and .dev.src/.dev.tgt");
}

int run_gen_data(const GenDataArgs& a) {
  auto [len_min, len_max] = parse_size_pair(a.len, ':', "len");
  SyntheticData all =
      gen_synthetic(parse_task(a.task), a.n + a.dev, a.vocab_size, len_min, len_max, a.seed);
  SyntheticData train_part, dev_part;
  train_part.pairs.assign(all.pairs.begin(), all.pairs.begin() + static_cast<long>(a.n));
  dev_part.pairs.assign(all.pairs.begin() + static_cast<long>(a.n), all.pairs.end());
  std::filesystem::path prefix(a.out);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  write_parallel(train_part, prefix);
  if (a.dev > 0) write_parallel(dev_part, prefix.string() + ".dev");
  std::cerr << "wrote " << train_part.pairs.size() << " train and " << dev_part.pairs.size()
            << " dev pairs at " << prefix.string() << ".*\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string train_prefix, dev_prefix;
  std::string task;
  std::size_t gen = 0, gen_dev = 200, gen_vocab = 20;
  std::string gen_len = "1:8";
  std::string out = "run";
  std::string stage = "both";
  std::string init_from;
  double lambda = 1.0;
  std::size_t epochs1 = 10, epochs2 = 10, batch = 16;
  std::size_t embed = 32, hidden = 64;
  double dropout = 0.2;
  std::size_t max_len = 20, vocab_cap = 10000, checkpoint_every = 200;
  std::uint64_t seed = 1;
  bool raw_sum_loss = false;
  double rho = 0.95, adadelta_eps = 1e-6, clip = 1.0, max_len_factor = 2.0;
};

void register_train(Options& o, TrainArgs& a) {
  o.add("train", a.train_prefix, "training corpus prefix (expects .src/.tgt)");
  o.add("dev", a.dev_prefix, "validation corpus prefix");
  o.add("task", a.task, "generate data instead: copy | reverse | lexsub | lengthvar");
  o.add("gen", a.gen, "number of pairs to generate for --task");
  o.add("gen-dev", a.gen_dev, "held-out pairs to generate");
  o.add("gen-vocab", a.gen_vocab, "content symbols for generated data");
  o.add("gen-len", a.gen_len, "generated source length range min:max");
  o.add("out", a.out, "output directory");
  o.add("stage", a.stage, "1 | 2 | both");
  o.add("init-from", a.init_from, "checkpoint to initialize from (stage-2 workflows)");
  o.add("lambda", a.lambda, "reconstruction weight in the combined objective");
  o.add("epochs1", a.epochs1, "stage-1 epochs");
  o.add("epochs2", a.epochs2, "stage-2 epochs");
  o.add("batch-size", a.batch, "mini-batch size");
  o.add("embed", a.embed, "word embedding dimension");
  o.add("hidden", a.hidden, "hidden layer dimension");
  o.add("dropout", a.dropout, "readout-input dropout rate");
  o.add("max-len", a.max_len, "drop training pairs longer than this");
  o.add("vocab-cap", a.vocab_cap, "vocabulary size cap (reserved entries included)");
  o.add("checkpoint-every", a.checkpoint_every, "updates between validation points");
  o.add("seed", a.seed, "root seed for init/shuffle/dropout/sampling");
  o.add_flag("raw-sum-loss", a.raw_sum_loss, "summed log-probs instead of per-token means");
  o.add("rho", a.rho, "Adadelta decay");
  o.add("adadelta-eps", a.adadelta_eps, "Adadelta epsilon");
  o.add("clip-norm", a.clip, "global gradient-norm clip");
  o.add("max-len-factor", a.max_len_factor, "decode length limit factor for validation");
}

int run_train(const TrainArgs& a) {
  std::filesystem::path out_dir(a.out);
  std::filesystem::create_directories(out_dir);

  std::filesystem::path train_src, train_tgt, dev_src, dev_tgt;
  if (!a.task.empty() && a.gen > 0) {
    auto [len_min, len_max] = parse_size_pair(a.gen_len, ':', "gen-len");
    SyntheticData all = gen_synthetic(parse_task(a.task), a.gen + a.gen_dev, a.gen_vocab,
                                      len_min, len_max, a.seed);
    SyntheticData train_part, dev_part;
    train_part.pairs.assign(all.pairs.begin(), all.pairs.begin() + static_cast<long>(a.gen));
    dev_part.pairs.assign(all.pairs.begin() + static_cast<long>(a.gen), all.pairs.end());
    write_parallel(train_part, out_dir / "train");
    write_parallel(dev_part, out_dir / "dev");
    train_src = out_dir / "train.src";
    train_tgt = out_dir / "train.tgt";
    dev_src = out_dir / "dev.src";
    dev_tgt = out_dir / "dev.tgt";
  } else if (!a.train_prefix.empty() && !a.dev_prefix.empty()) {
    train_src = a.train_prefix + ".src";
    train_tgt = a.train_prefix + ".tgt";
    dev_src = a.dev_prefix + ".src";
    dev_tgt = a.dev_prefix + ".tgt";
  } else {
    throw config_error("need either --train and --dev or --task with --gen");
  }

  Vocabulary src_vocab = Vocabulary::build_from_file(train_src, a.vocab_cap);
  Vocabulary tgt_vocab = Vocabulary::build_from_file(train_tgt, a.vocab_cap);
  src_vocab.write(out_dir / "src.vocab");
  tgt_vocab.write(out_dir / "tgt.vocab");

  ParallelCorpus train_corpus =
      load_parallel(train_src, train_tgt, src_vocab, tgt_vocab, a.max_len);
  ParallelCorpus dev_corpus = load_parallel(dev_src, dev_tgt, src_vocab, tgt_vocab, a.max_len);

  TrainConfig cfg;
  cfg.lambda = a.lambda;
  cfg.epochs_stage1 = a.epochs1;
  cfg.epochs_stage2 = a.epochs2;
  cfg.batch_size = a.batch;
  cfg.rho = a.rho;
  cfg.adadelta_eps = a.adadelta_eps;
  cfg.clip_norm = a.clip;
  cfg.seed = a.seed;
  cfg.embed_dim = a.embed;
  cfg.hidden_dim = a.hidden;
  cfg.dropout = a.dropout;
  cfg.max_len = a.max_len;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.raw_sum_loss = a.raw_sum_loss;
  cfg.max_len_factor = a.max_len_factor;

  TrainIO io;
  io.out_dir = out_dir;

  Stage stage = parse_stage(a.stage);
  TrainState st;
  TrainState* initial = nullptr;
  if (!a.init_from.empty()) {
    st = load_checkpoint(a.init_from);
    if (st.theta.dims.src_vocab != src_vocab.size() ||
        st.theta.dims.tgt_vocab != tgt_vocab.size())
      throw data_error("--init-from checkpoint vocab dims do not match this corpus");
    initial = &st;
  }
  TrainState final_state =
      train(train_corpus, dev_corpus, cfg, src_vocab, tgt_vocab, stage, io, initial);
  std::cerr << "trained " << final_state.updates << " updates; model at "
            << (out_dir / "model.edrc").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// translate

struct TranslateArgs {
  std::string model, src_vocab, tgt_vocab, input, output = "-", kbest_out;
  std::size_t beam = 10;
  double lambda = std::nan("");
  bool normalize_lik = false, normalize_rec = false;
  double max_len_factor = 2.0;
  std::size_t jobs = 1;
};

void register_translate(Options& o, TranslateArgs& a) {
  o.add("model", a.model, "checkpoint file");
  o.add("src-vocab", a.src_vocab, "source vocabulary (default: src.vocab next to model)");
  o.add("tgt-vocab", a.tgt_vocab, "target vocabulary (default: tgt.vocab next to model)");
  o.add("input", a.input, "source sentences, one per line");
  o.add("output", a.output, "1-best output file, - for stdout");
  o.add("kbest-out", a.kbest_out, "write the reranked k-best list as TSV");
  o.add("beam", a.beam, "beam width");
  o.add("lambda", a.lambda, "interpolation weight (default: the training value)");
  o.add_flag("normalize-lik", a.normalize_lik, "divide log-likelihood by candidate length");
  o.add_flag("normalize-rec", a.normalize_rec, "divide reconstruction score by source length");
  o.add("max-len-factor", a.max_len_factor, "output length limit as a factor of source length");
  o.add("jobs", a.jobs, "sentence-parallel worker threads");
}

int run_translate(const TranslateArgs& a) {
  LoadedModel lm = load_model(a.model, a.src_vocab, a.tgt_vocab);
  const double lambda = resolve_lambda(a.lambda, lm.state);
  const ReconstructorParams* rec = reconstructor_for(lm.state, lambda);

  std::vector<std::string> lines = read_lines(a.input);
  std::vector<std::vector<RerankedCandidate>> ranked(lines.size());
  parallel_for(lines.size(), a.jobs, [&](std::size_t i) {
    std::vector<std::string> toks = tokenize(lines[i]);
    if (toks.empty())
      throw data_error(a.input + " line " + std::to_string(i + 1) + ": empty sentence");
    std::vector<int> x = lm.src_vocab.encode(toks);
    std::vector<Hypothesis> hyps = beam_search(x, lm.state.theta, a.beam, a.max_len_factor);
    ranked[i] = rerank(std::move(hyps), x, rec, lambda, a.normalize_lik, a.normalize_rec);
  });

  std::ofstream out_file;
  std::ostream& out = open_sink(a.output, out_file);
  for (const auto& sentence : ranked)
    out << detokenize(lm.tgt_vocab.decode(sentence.front().hyp.tokens)) << '\n';

  if (!a.kbest_out.empty()) {
    std::ofstream kb(a.kbest_out);
    if (!kb) throw data_error("cannot write " + a.kbest_out);
    write_kbest_tsv(kb, ranked, lm.tgt_vocab);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  std::string model, src_vocab, tgt_vocab, src, tgt, out = "-";
};

void register_score(Options& o, ScoreArgs& a) {
  o.add("model", a.model, "checkpoint file");
  o.add("src-vocab", a.src_vocab, "source vocabulary");
  o.add("tgt-vocab", a.tgt_vocab, "target vocabulary");
  o.add("src", a.src, "source sentences");
  o.add("tgt", a.tgt, "target sentences to score against the sources");
  o.add("out", a.out, "output TSV, - for stdout");
}

int run_score(const ScoreArgs& a) {
  LoadedModel lm = load_model(a.model, a.src_vocab, a.tgt_vocab);
  ParallelCorpus corpus = load_parallel(a.src, a.tgt, lm.src_vocab, lm.tgt_vocab,
                                        std::numeric_limits<std::size_t>::max());
  std::ofstream out_file;
  std::ostream& out = open_sink(a.out, out_file);
  out << "sent_id\tlog_lik\tlog_rec\n";
  out.precision(17);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& [x, y] = corpus.pairs[i];
    auto [log_lik, trace] = log_likelihood(x, y, lm.state.theta);
    double log_rec = std::nan("");
    if (lm.state.gamma)
      log_rec = reconstruction_score(x, trace.states, *lm.state.gamma).first;
    out << i << '\t' << log_lik << '\t' << log_rec << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string model, src_vocab, tgt_vocab, input, ref;
  std::size_t beam = 100;
  double lambda = std::nan("");
  bool normalize_lik = false, normalize_rec = false;
  std::string oracle_ks = "1,10,100";
  std::size_t buckets = 5;
  std::string report, bucket_csv;
  double max_len_factor = 2.0;
  std::size_t jobs = 1;
};

void register_evaluate(Options& o, EvaluateArgs& a) {
  o.add("model", a.model, "checkpoint file");
  o.add("src-vocab", a.src_vocab, "source vocabulary");
  o.add("tgt-vocab", a.tgt_vocab, "target vocabulary");
  o.add("input", a.input, "source sentences");
  o.add("ref", a.ref, "reference translations");
  o.add("beam", a.beam, "beam width for the k-best lists");
  o.add("lambda", a.lambda, "reranking weight (default: the training value)");
  o.add_flag("normalize-lik", a.normalize_lik, "length-normalize the likelihood term");
  o.add_flag("normalize-rec", a.normalize_rec, "length-normalize the reconstruction term");
  o.add("oracle-ks", a.oracle_ks, "k values for oracle BLEU over phase-1 prefixes");
  o.add("buckets", a.buckets, "source-length bucket width");
  o.add("report", a.report, "write the key/value report TSV here");
  o.add("bucket-csv", a.bucket_csv, "write bucket_low,bucket_high,bleu,mean_len CSV here");
  o.add("max-len-factor", a.max_len_factor, "output length limit factor");
  o.add("jobs", a.jobs, "sentence-parallel worker threads");
}

int run_evaluate(const EvaluateArgs& a) {
  LoadedModel lm = load_model(a.model, a.src_vocab, a.tgt_vocab);
  const double lambda = resolve_lambda(a.lambda, lm.state);
  const ReconstructorParams* rec = reconstructor_for(lm.state, lambda);

  std::vector<std::string> src_lines = read_lines(a.input);
  std::vector<std::string> ref_lines = read_lines(a.ref);
  if (src_lines.size() != ref_lines.size())
    throw data_error("input/reference line counts differ");

  const std::size_t n = src_lines.size();
  std::vector<std::vector<RerankedCandidate>> ranked(n);
  std::vector<std::vector<Hypothesis>> phase1(n);
  parallel_for(n, a.jobs, [&](std::size_t i) {
    std::vector<std::string> toks = tokenize(src_lines[i]);
    if (toks.empty())
      throw data_error(a.input + " line " + std::to_string(i + 1) + ": empty sentence");
    std::vector<int> x = lm.src_vocab.encode(toks);
    std::vector<Hypothesis> hyps = beam_search(x, lm.state.theta, a.beam, a.max_len_factor);
    phase1[i] = hyps;
    ranked[i] = rerank(std::move(hyps), x, rec, lambda, a.normalize_lik, a.normalize_rec);
  });

  TokenLines candidates, sources, references;
  std::vector<DecoderTrace> traces;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.push_back(lm.tgt_vocab.decode(ranked[i].front().hyp.tokens));
    sources.push_back(tokenize(src_lines[i]));
    references.push_back(tokenize(ref_lines[i]));
    DecoderTrace t;
    t.alpha = ranked[i].front().hyp.alpha_rows;
    traces.push_back(std::move(t));
  }

  BleuReport main_bleu = bleu(candidates, references);
  LengthBucketReport buckets = length_bucket_report(candidates, sources, references, a.buckets);
  AdequacyReport adequacy = adequacy_diagnostics(traces);

  std::vector<std::pair<std::string, std::string>> rows;
  auto put = [&](const std::string& k, double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    rows.emplace_back(k, os.str());
  };
  put("bleu", main_bleu.bleu);
  put("brevity_penalty", main_bleu.brevity_penalty);
  for (int g = 0; g < 4; ++g) put("precision" + std::to_string(g + 1), main_bleu.precisions[g]);
  put("length_ratio", buckets.length_ratio);

  for (std::size_t k : parse_size_list(a.oracle_ks)) {
    std::vector<TokenLines> prefixes(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t take = std::min(k, phase1[i].size());
      for (std::size_t c = 0; c < take; ++c)
        prefixes[i].push_back(lm.tgt_vocab.decode(phase1[i][c].tokens));
    }
    put("oracle_bleu_k" + std::to_string(k), oracle_bleu(prefixes, references).bleu);
  }
  put("under_translation_fraction", adequacy.mean_under);
  put("over_translation_fraction", adequacy.mean_over);

  for (const auto& [k, v] : rows) std::cout << k << '\t' << v << '\n';
  if (!a.report.empty()) {
    std::ofstream rp(a.report);
    if (!rp) throw data_error("cannot write " + a.report);
    for (const auto& [k, v] : rows) rp << k << '\t' << v << '\n';
  }
  if (!a.bucket_csv.empty()) {
    std::ofstream csv(a.bucket_csv);
    if (!csv) throw data_error("cannot write " + a.bucket_csv);
    csv << "bucket_low,bucket_high,bleu,mean_len\n";
    csv.precision(10);
    for (const auto& row : buckets.rows)
      csv << row.low << ',' << row.high << ',' << row.bleu << ',' << row.mean_cand_len << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-beam

struct SweepArgs {
  std::string model, src_vocab, tgt_vocab, input, ref, out = "-";
  std::string beams = "1,10,100";
  double lambda = std::nan("");
  double max_len_factor = 2.0;
  std::size_t jobs = 1;
};

void register_sweep(Options& o, SweepArgs& a) {
  o.add("model", a.model, "checkpoint file");
  o.add("src-vocab", a.src_vocab, "source vocabulary");
  o.add("tgt-vocab", a.tgt_vocab, "target vocabulary");
  o.add("input", a.input, "source sentences");
  o.add("ref", a.ref, "reference translations");
  o.add("beams", a.beams, "comma-separated beam widths");
  o.add("lambda", a.lambda, "reranking weight for the reconstruction columns");
  o.add("max-len-factor", a.max_len_factor, "output length limit factor");
  o.add("out", a.out, "report TSV, - for stdout");
  o.add("jobs", a.jobs, "sentence-parallel worker threads");
}

int run_sweep(const SweepArgs& a) {
  LoadedModel lm = load_model(a.model, a.src_vocab, a.tgt_vocab);
  const double lambda = resolve_lambda(a.lambda, lm.state);
  const ReconstructorParams* rec = lambda > 0.0 && lm.state.gamma ? &*lm.state.gamma : nullptr;

  std::vector<std::string> src_lines = read_lines(a.input);
  std::vector<std::string> ref_lines = read_lines(a.ref);
  if (src_lines.size() != ref_lines.size())
    throw data_error("input/reference line counts differ");
  const std::size_t n = src_lines.size();

  TokenLines references;
  std::size_t ref_tokens = 0;
  for (const auto& line : ref_lines) {
    references.push_back(tokenize(line));
    ref_tokens += references.back().size();
  }

  std::ofstream out_file;
  std::ostream& out = open_sink(a.out, out_file);
  out << "# mean reference length: "
      << static_cast<double>(ref_tokens) / static_cast<double>(n) << '\n';
  out << "beam\tbleu_lik\tlen_lik\tbleu_rec\tlen_rec\n";
  out.precision(10);

  for (std::size_t k : parse_size_list(a.beams)) {
    TokenLines top_lik(n), top_rec(n);
    parallel_for(n, a.jobs, [&](std::size_t i) {
      std::vector<std::string> toks = tokenize(src_lines[i]);
      if (toks.empty())
        throw data_error(a.input + " line " + std::to_string(i + 1) + ": empty sentence");
      std::vector<int> x = lm.src_vocab.encode(toks);
      std::vector<Hypothesis> hyps = beam_search(x, lm.state.theta, k, a.max_len_factor);
      top_lik[i] = lm.tgt_vocab.decode(hyps.front().tokens);
      if (rec != nullptr) {
        std::vector<RerankedCandidate> rr = rerank(std::move(hyps), x, rec, lambda);
        top_rec[i] = lm.tgt_vocab.decode(rr.front().hyp.tokens);
      }
    });
    auto mean_len = [&](const TokenLines& lines_in) {
      std::size_t total = 0;
      for (const auto& l : lines_in) total += l.size();
      return static_cast<double>(total) / static_cast<double>(n);
    };
    out << k << '\t' << bleu(top_lik, references).bleu << '\t' << mean_len(top_lik);
    if (rec != nullptr)
      out << '\t' << bleu(top_rec, references).bleu << '\t' << mean_len(top_rec) << '\n';
    else
      out << "\tnan\tnan\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  std::string model, src_vocab, tgt_vocab, input, out = "-";
  std::string mode = "greedy";
  std::uint64_t seed = 1;
  double max_len_factor = 2.0;
};

void register_reconstruct(Options& o, ReconstructArgs& a) {
  o.add("model", a.model, "checkpoint file (stage-2: must carry the reconstructor)");
  o.add("src-vocab", a.src_vocab, "source vocabulary");
  o.add("tgt-vocab", a.tgt_vocab, "target vocabulary");
  o.add("input", a.input, "source sentences");
  o.add("out", a.out, "reconstructed sources, - for stdout");
  o.add("mode", a.mode, "greedy | stochastic");
  o.add("seed", a.seed, "sampling seed for stochastic mode");
  o.add("max-len-factor", a.max_len_factor, "translation/reconstruction length limit factor");
}

int run_reconstruct(const ReconstructArgs& a) {
  LoadedModel lm = load_model(a.model, a.src_vocab, a.tgt_vocab);
  if (!lm.state.gamma)
    throw config_error("checkpoint has no reconstructor parameters; train stage 2 first");
  const SampleMode mode = parse_sample_mode(a.mode);

  std::vector<std::string> lines = read_lines(a.input);
  std::ofstream out_file;
  std::ostream& out = open_sink(a.out, out_file);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<std::string> toks = tokenize(lines[i]);
    if (toks.empty())
      throw data_error(a.input + " line " + std::to_string(i + 1) + ": empty sentence");
    std::vector<int> x = lm.src_vocab.encode(toks);
    const std::size_t limit = decode_limit(x.size(), a.max_len_factor);
    std::vector<int> y = greedy_decode(x, lm.state.theta, limit);

    EncodedSource enc = encode(x, lm.state.theta);
    std::vector<Tensor> states;
    Tensor s_prev = enc.init_state;
    int y_prev = Vocabulary::kBos;
    for (int tok : y) {
      StepResult step = decode_step(y_prev, s_prev, enc, lm.state.theta);
      states.push_back(step.state);
      s_prev = step.state;
      y_prev = tok;
    }
    std::vector<int> xhat =
        sample_reconstruction(states, *lm.state.gamma, mode,
                              Rng::substream(a.seed, "reconstruct", i).next_u64(), limit);
    out << detokenize(lm.src_vocab.decode(xhat)) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string dims = "8,12";
  std::string vocabs = "20,20";
  double lambda = 1.0;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples = 200;
  std::uint64_t seed = kGradCheckDefaultSeed;
};

void register_gradcheck(Options& o, GradcheckArgs& a) {
  o.add("dims", a.dims, "embed,hidden");
  o.add("vocabs", a.vocabs, "source,target vocabulary sizes");
  o.add("lambda", a.lambda, "0 checks the likelihood loss only");
  o.add("step", a.step, "finite-difference step h");
  o.add("tolerance", a.tolerance, "max relative error per tensor");
  o.add("samples", a.samples, "coordinates sampled per tensor");
  o.add("seed", a.seed, "fixture seed");
}

int run_gradcheck(const GradcheckArgs& a) {
  set_precision(Precision::f64);
  auto [embed, hidden] = parse_size_pair(a.dims, ',', "dims");
  auto [src_v, tgt_v] = parse_size_pair(a.vocabs, ',', "vocabs");
  GradCheckFixture fixture = make_gradcheck_fixture(Dims{embed, hidden, src_v, tgt_v}, a.seed);

  NamedTensors params =
      a.lambda > 0.0 ? fixture.all_params() : fixture.theta.named();
  auto loss_fn = [&](Tape& t) {
    ModelRefs mrefs = ModelRefs::trainable(t, fixture.theta);
    if (a.lambda > 0.0) {
      ReconstructorRefs rrefs = ReconstructorRefs::trainable(t, fixture.gamma);
      return combined_loss_graph(t, fixture.batch, mrefs, &rrefs, a.lambda, false).total;
    }
    return likelihood_loss_graph(t, fixture.batch, mrefs, false).total;
  };

  GradCheckReport report = grad_check(loss_fn, params, a.step, a.tolerance, a.samples, a.seed);
  std::cout << "tensor\tchecked\tmax_rel_err\tstatus\n";
  std::cout.precision(6);
  for (const auto& e : report.entries)
    std::cout << e.name << '\t' << e.checked << '\t' << e.max_rel_err << '\t'
              << (e.pass ? "PASS" : "FAIL") << '\n';
  std::cout << (report.pass ? "PASS" : "FAIL") << ": " << report.entries.size()
            << " tensors, tolerance " << report.tolerance << '\n';
  return report.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-based translation with a source reconstructor"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  TrainArgs train_args;
  TranslateArgs translate_args;
  ScoreArgs score_args;
  EvaluateArgs evaluate_args;
  SweepArgs sweep_args;
  ReconstructArgs reconstruct_args;
  GradcheckArgs gradcheck_args;

  CLI::App* c_gen = app.add_subcommand("gen-data", "generate a synthetic parallel corpus");
  CLI::App* c_train = app.add_subcommand("train", "train the model (two-stage schedule)");
  CLI::App* c_translate = app.add_subcommand("translate", "beam search plus reranking");
  CLI::App* c_score = app.add_subcommand("score", "teacher-forced sentence scores");
  CLI::App* c_evaluate = app.add_subcommand("evaluate", "BLEU, oracle, length and adequacy");
  CLI::App* c_sweep = app.add_subcommand("sweep-beam", "BLEU/length across beam widths");
  CLI::App* c_reconstruct = app.add_subcommand("reconstruct", "regenerate sources");
  CLI::App* c_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");

  Options o_gen(*c_gen), o_train(*c_train), o_translate(*c_translate), o_score(*c_score),
      o_evaluate(*c_evaluate), o_sweep(*c_sweep), o_reconstruct(*c_reconstruct),
      o_gradcheck(*c_gradcheck);
  register_gen_data(o_gen, gen_args);
  register_train(o_train, train_args);
  register_translate(o_translate, translate_args);
  register_score(o_score, score_args);
  register_evaluate(o_evaluate, evaluate_args);
  register_sweep(o_sweep, sweep_args);
  register_reconstruct(o_reconstruct, reconstruct_args);
  register_gradcheck(o_gradcheck, gradcheck_args);

  try {
    // Config files apply before flags so that flags win.
    std::vector<std::string> raw(argv + 1, argv + argc);
    if (!raw.empty()) {
      const std::string& cmd = raw[0];
      std::vector<std::string> rest(raw.begin() + 1, raw.end());
      if (cmd == "gen-data") o_gen.load_config_from(rest);
      if (cmd == "train") o_train.load_config_from(rest);
      if (cmd == "translate") o_translate.load_config_from(rest);
      if (cmd == "score") o_score.load_config_from(rest);
      if (cmd == "evaluate") o_evaluate.load_config_from(rest);
      if (cmd == "sweep-beam") o_sweep.load_config_from(rest);
      if (cmd == "reconstruct") o_reconstruct.load_config_from(rest);
      if (cmd == "gradcheck") o_gradcheck.load_config_from(rest);
    }

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 1;
    }

    if (*c_gen) {
      o_gen.print_effective(std::cerr, "gen-data");
      return run_gen_data(gen_args);
    }
    if (*c_train) {
      o_train.print_effective(std::cerr, "train");
      return run_train(train_args);
    }
    if (*c_translate) {
      o_translate.print_effective(std::cerr, "translate");
      return run_translate(translate_args);
    }
    if (*c_score) {
      o_score.print_effective(std::cerr, "score");
      return run_score(score_args);
    }
    if (*c_evaluate) {
      o_evaluate.print_effective(std::cerr, "evaluate");
      return run_evaluate(evaluate_args);
    }
    if (*c_sweep) {
      o_sweep.print_effective(std::cerr, "sweep-beam");
      return run_sweep(sweep_args);
    }
    if (*c_reconstruct) {
      o_reconstruct.print_effective(std::cerr, "reconstruct");
      return run_reconstruct(reconstruct_args);
    }
    if (*c_gradcheck) {
      o_gradcheck.print_effective(std::cerr, "gradcheck");
      return run_gradcheck(gradcheck_args);
    }
    return 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
