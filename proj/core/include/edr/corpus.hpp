#pragma once

#include <cstdint>
#include <filesystem>

#include "edr/vocab.hpp"

namespace edr {

// Sentence pairs as id sequences; every stored sequence ends with EOS.
struct ParallelCorpus {
  struct Pair {
    std::vector<int> src;
    std::vector<int> tgt;
  };
  std::vector<Pair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Padded mini-batch. Matrices are row-major (batch x max_len), PAD-filled;
// masks are 1 on real positions (EOS included) and 0 on padding. The model
// walks rows by their true lengths, so padded cells never reach any loss
// term or attention normalization.
struct Batch {
  std::vector<std::vector<int>> src, tgt;
  std::vector<std::vector<double>> src_mask, tgt_mask;
  std::vector<std::size_t> src_len, tgt_len;

  std::size_t size() const { return src.size(); }
  std::vector<int> src_row(std::size_t i) const {
    return {src[i].begin(), src[i].begin() + static_cast<long>(src_len[i])};
  }
  std::vector<int> tgt_row(std::size_t i) const {
    return {tgt[i].begin(), tgt[i].begin() + static_cast<long>(tgt_len[i])};
  }
};

// Loads a .src/.tgt file pair. Unknown tokens map to UNK; pairs with either
// side longer than max_len (tokens before EOS) are dropped. Empty lines are
// a data error naming the line number.
ParallelCorpus load_parallel(const std::filesystem::path& src_file,
                             const std::filesystem::path& tgt_file, const Vocabulary& src_vocab,
                             const Vocabulary& tgt_vocab, std::size_t max_len);

// Reads one tokenized file into raw token lines (no ids).
std::vector<std::vector<std::string>> read_token_lines(const std::filesystem::path& file);

enum class SyntheticTask { copy, reverse, lexsub, lengthvar };

SyntheticTask parse_task(std::string_view name);
std::string task_name(SyntheticTask t);

struct SyntheticData {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
};

// Deterministic toy parallel data. `vocab_size` counts content symbols per
// side. copy/reverse share one symbol set; lexsub maps disjoint source and
// target alphabets through a seeded bijection; lengthvar additionally
// appends 1-4 target-only function symbols to 30% of pairs.
SyntheticData gen_synthetic(SyntheticTask task, std::size_t n_pairs, std::size_t vocab_size,
                            std::size_t len_min, std::size_t len_max, std::uint64_t seed);

// Writes <prefix>.src and <prefix>.tgt.
void write_parallel(const SyntheticData& data, const std::filesystem::path& prefix);

// Seeded pair shuffle, then a stable sort by source length, sequential
// cuts, then a seeded shuffle of batch order.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, std::size_t batch_size,
                                std::uint64_t shuffle_seed);

}  // namespace edr
