#include "edr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "edr/errors.hpp"
#include "edr/rng.hpp"

namespace edr {

std::vector<std::vector<std::string>> read_token_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw data_error("cannot read " + file.string());
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(tokenize(line));
  return lines;
}

ParallelCorpus load_parallel(const std::filesystem::path& src_file,
                             const std::filesystem::path& tgt_file, const Vocabulary& src_vocab,
                             const Vocabulary& tgt_vocab, std::size_t max_len) {
  auto src_lines = read_token_lines(src_file);
  auto tgt_lines = read_token_lines(tgt_file);
  if (src_lines.size() != tgt_lines.size())
    throw data_error("line count mismatch: " + src_file.string() + " has " +
                     std::to_string(src_lines.size()) + ", " + tgt_file.string() + " has " +
                     std::to_string(tgt_lines.size()));
  if (src_lines.empty()) throw data_error("empty corpus " + src_file.string());

  ParallelCorpus corpus;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    if (src_lines[i].empty())
      throw data_error(src_file.string() + " line " + std::to_string(i + 1) +
                       ": empty sentence");
    if (tgt_lines[i].empty())
      throw data_error(tgt_file.string() + " line " + std::to_string(i + 1) +
                       ": empty sentence");
    if (src_lines[i].size() > max_len || tgt_lines[i].size() > max_len) continue;
    corpus.pairs.push_back(
        {src_vocab.encode(src_lines[i]), tgt_vocab.encode(tgt_lines[i])});
  }
  if (corpus.empty())
    throw data_error("no usable pairs in " + src_file.string() + " (max_len " +
                     std::to_string(max_len) + ")");
  return corpus;
}

SyntheticTask parse_task(std::string_view name) {
  if (name == "copy") return SyntheticTask::copy;
  if (name == "reverse") return SyntheticTask::reverse;
  if (name == "lexsub") return SyntheticTask::lexsub;
  if (name == "lengthvar") return SyntheticTask::lengthvar;
  throw config_error("unknown synthetic task: " + std::string(name));
}

std::string task_name(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::copy: return "copy";
    case SyntheticTask::reverse: return "reverse";
    case SyntheticTask::lexsub: return "lexsub";
    case SyntheticTask::lengthvar: return "lengthvar";
  }
  return "?";
}

SyntheticData gen_synthetic(SyntheticTask task, std::size_t n_pairs, std::size_t vocab_size,
                            std::size_t len_min, std::size_t len_max, std::uint64_t seed) {
  if (vocab_size < 5) throw config_error("gen_synthetic: vocab_size must be >= 5");
  if (len_min < 1 || len_min > len_max)
    throw config_error("gen_synthetic: invalid length range [" + std::to_string(len_min) +
                       ", " + std::to_string(len_max) + "]");

  const bool mapped = task == SyntheticTask::lexsub || task == SyntheticTask::lengthvar;
  std::vector<std::string> src_syms(vocab_size), tgt_syms(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    if (mapped) {
      src_syms[i] = "s" + std::to_string(i);
      tgt_syms[i] = "t" + std::to_string(i);
    } else {
      src_syms[i] = tgt_syms[i] = std::to_string(i);
    }
  }

  // Fixed bijection between the two alphabets.
  std::vector<std::size_t> bijection(vocab_size);
  std::iota(bijection.begin(), bijection.end(), std::size_t{0});
  if (mapped) {
    Rng bij_rng = Rng::substream(seed, "gen/bijection");
    bij_rng.shuffle(bijection);
  }

  Rng rng = Rng::substream(seed, "gen/pairs");
  SyntheticData data;
  data.pairs.reserve(n_pairs);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::size_t len = len_min + rng.below(len_max - len_min + 1);
    std::vector<std::string> src(len), tgt;
    std::vector<std::size_t> idx(len);
    for (std::size_t i = 0; i < len; ++i) {
      idx[i] = rng.below(vocab_size);
      src[i] = src_syms[idx[i]];
    }
    switch (task) {
      case SyntheticTask::copy:
        tgt = src;
        break;
      case SyntheticTask::reverse:
        tgt.assign(src.rbegin(), src.rend());
        break;
      case SyntheticTask::lexsub:
      case SyntheticTask::lengthvar:
        tgt.resize(len);
        for (std::size_t i = 0; i < len; ++i) tgt[i] = tgt_syms[bijection[idx[i]]];
        break;
    }
    if (task == SyntheticTask::lengthvar && rng.next_real() < 0.3) {
      const std::size_t extra = 1 + rng.below(4);
      for (std::size_t i = 0; i < extra; ++i)
        tgt.push_back("f" + std::to_string(rng.below(4)));
    }
    data.pairs.emplace_back(std::move(src), std::move(tgt));
  }
  return data;
}

void write_parallel(const SyntheticData& data, const std::filesystem::path& prefix) {
  std::ofstream src(prefix.string() + ".src");
  std::ofstream tgt(prefix.string() + ".tgt");
  if (!src || !tgt) throw data_error("cannot write corpus files at " + prefix.string());
  for (const auto& [s, t] : data.pairs) {
    src << detokenize(s) << '\n';
    tgt << detokenize(t) << '\n';
  }
}

std::vector<Batch> make_batches(const ParallelCorpus& corpus, std::size_t batch_size,
                                std::uint64_t shuffle_seed) {
  if (corpus.empty()) throw data_error("make_batches: empty corpus");
  if (batch_size < 1) throw config_error("make_batches: batch_size must be >= 1");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pair_rng = Rng::substream(shuffle_seed, "batch/pairs");
  pair_rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.pairs[a].src.size() < corpus.pairs[b].src.size();
  });

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch b;
    std::size_t max_src = 0, max_tgt = 0;
    for (std::size_t k = start; k < end; ++k) {
      max_src = std::max(max_src, corpus.pairs[order[k]].src.size());
      max_tgt = std::max(max_tgt, corpus.pairs[order[k]].tgt.size());
    }
    for (std::size_t k = start; k < end; ++k) {
      const auto& pair = corpus.pairs[order[k]];
      std::vector<int> s(max_src, Vocabulary::kPad), t(max_tgt, Vocabulary::kPad);
      std::vector<double> sm(max_src, 0.0), tm(max_tgt, 0.0);
      std::copy(pair.src.begin(), pair.src.end(), s.begin());
      std::copy(pair.tgt.begin(), pair.tgt.end(), t.begin());
      std::fill(sm.begin(), sm.begin() + static_cast<long>(pair.src.size()), 1.0);
      std::fill(tm.begin(), tm.begin() + static_cast<long>(pair.tgt.size()), 1.0);
      b.src.push_back(std::move(s));
      b.tgt.push_back(std::move(t));
      b.src_mask.push_back(std::move(sm));
      b.tgt_mask.push_back(std::move(tm));
      b.src_len.push_back(pair.src.size());
      b.tgt_len.push_back(pair.tgt.size());
    }
    batches.push_back(std::move(b));
  }

  Rng batch_rng = Rng::substream(shuffle_seed, "batch/order");
  batch_rng.shuffle(batches);
  return batches;
}

}  // namespace edr
