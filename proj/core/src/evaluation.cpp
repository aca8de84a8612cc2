#include "edr/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace edr {

namespace {

std::string fold_case(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

std::vector<std::string> folded(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(fold_case(t));
  return out;
}

struct MatchStats {
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> total{};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
};

void accumulate_matches(const std::vector<std::string>& cand,
                        const std::vector<std::string>& ref, int max_n, MatchStats& stats) {
  stats.cand_len += cand.size();
  stats.ref_len += ref.size();
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts cand_counts = count_ngrams(cand, n);
    NgramCounts ref_counts = count_ngrams(ref, n);
    for (const auto& [ngram, c] : cand_counts) {
      auto it = ref_counts.find(ngram);
      const std::size_t clip = it == ref_counts.end() ? 0 : it->second;
      stats.matched[n - 1] += std::min(c, clip);
      stats.total[n - 1] += c;
    }
  }
}

BleuReport report_from(const MatchStats& stats, int max_n) {
  BleuReport r;
  r.cand_len = stats.cand_len;
  r.ref_len = stats.ref_len;
  if (stats.cand_len == 0) return r;
  r.brevity_penalty =
      stats.cand_len < stats.ref_len
          ? std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.cand_len))
          : 1.0;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    const double p = stats.total[n - 1] == 0
                         ? 0.0
                         : static_cast<double>(stats.matched[n - 1]) /
                               static_cast<double>(stats.total[n - 1]);
    r.precisions[n - 1] = p;
    if (p == 0.0)
      zero = true;
    else
      log_sum += std::log(p);
  }
  r.bleu = zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / max_n);
  return r;
}

}  // namespace

BleuReport bleu(const TokenLines& candidates, const TokenLines& references, int max_n) {
  if (candidates.empty()) throw data_error("bleu: empty candidate set");
  if (candidates.size() != references.size())
    throw data_error("bleu: candidate/reference count mismatch");
  MatchStats stats;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    accumulate_matches(folded(candidates[i]), folded(references[i]), max_n, stats);
  return report_from(stats, max_n);
}

double sentence_bleu_smoothed(const std::vector<std::string>& candidate,
                              const std::vector<std::string>& reference, int max_n) {
  MatchStats stats;
  accumulate_matches(folded(candidate), folded(reference), max_n, stats);
  if (stats.cand_len == 0) return 0.0;
  const double bp =
      stats.cand_len < stats.ref_len
          ? std::exp(1.0 - static_cast<double>(stats.ref_len) / static_cast<double>(stats.cand_len))
          : 1.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    double m = static_cast<double>(stats.matched[n - 1]);
    double t = static_cast<double>(stats.total[n - 1]);
    if (n >= 2) {  // add-one smoothing keeps short toy sentences comparable
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  return bp * std::exp(log_sum / max_n);
}

BleuReport oracle_bleu(const std::vector<TokenLines>& kbest_lists, const TokenLines& references,
                       int max_n) {
  if (kbest_lists.empty()) throw data_error("oracle_bleu: empty k-best lists");
  if (kbest_lists.size() != references.size())
    throw data_error("oracle_bleu: list/reference count mismatch");
  TokenLines picks;
  picks.reserve(kbest_lists.size());
  for (std::size_t i = 0; i < kbest_lists.size(); ++i) {
    if (kbest_lists[i].empty()) throw data_error("oracle_bleu: empty k-best list");
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t c = 0; c < kbest_lists[i].size(); ++c) {
      const double s = sentence_bleu_smoothed(kbest_lists[i][c], references[i], max_n);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
    picks.push_back(kbest_lists[i][best]);
  }
  return bleu(picks, references, max_n);
}

BleuReport reconstruction_bleu(const ModelParams& m, const ReconstructorParams& rec,
                               const ParallelCorpus& corpus, const Vocabulary& src_vocab,
                               SampleMode mode, std::uint64_t seed, double max_len_factor) {
  TokenLines recon, sources;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& x = corpus.pairs[i].src;
    const std::size_t max_len =
        static_cast<std::size_t>(std::ceil(max_len_factor * static_cast<double>(x.size())));
    std::vector<int> y = greedy_decode(x, m, max_len);

    // Decoder states of the produced translation.
    EncodedSource enc = encode(x, m);
    std::vector<Tensor> states;
    Tensor s_prev = enc.init_state;
    int y_prev = Vocabulary::kBos;
    for (int tok : y) {
      StepResult step = decode_step(y_prev, s_prev, enc, m);
      states.push_back(step.state);
      s_prev = step.state;
      y_prev = tok;
    }

    std::vector<int> xhat = sample_reconstruction(
        states, rec, mode, Rng::substream(seed, "recbleu", i).next_u64(),
        static_cast<std::size_t>(std::ceil(max_len_factor * static_cast<double>(x.size()))));
    recon.push_back(src_vocab.decode(xhat));
    sources.push_back(src_vocab.decode(x));
  }
  return bleu(recon, sources);
}

LengthBucketReport length_bucket_report(const TokenLines& candidates, const TokenLines& sources,
                                        const TokenLines& references,
                                        std::size_t bucket_width) {
  if (bucket_width < 1) throw config_error("length_bucket_report: bucket_width must be >= 1");
  if (candidates.size() != sources.size() || candidates.size() != references.size())
    throw data_error("length_bucket_report: input size mismatch");

  std::map<std::size_t, std::vector<std::size_t>> buckets;  // bucket index -> sentence ids
  for (std::size_t i = 0; i < sources.size(); ++i)
    buckets[sources[i].size() / bucket_width].push_back(i);

  LengthBucketReport report;
  std::size_t cand_total = 0, ref_total = 0;
  for (const auto& c : candidates) cand_total += c.size();
  for (const auto& r : references) ref_total += r.size();
  report.length_ratio =
      ref_total == 0 ? 0.0 : static_cast<double>(cand_total) / static_cast<double>(ref_total);

  for (const auto& [idx, ids] : buckets) {
    TokenLines c, r;
    std::size_t len_sum = 0;
    for (std::size_t i : ids) {
      c.push_back(candidates[i]);
      r.push_back(references[i]);
      len_sum += candidates[i].size();
    }
    LengthBucketRow row;
    row.low = idx * bucket_width;
    row.high = (idx + 1) * bucket_width;
    row.count = ids.size();
    row.bleu = bleu(c, r).bleu;
    row.mean_cand_len = static_cast<double>(len_sum) / static_cast<double>(ids.size());
    report.rows.push_back(row);
  }
  return report;
}

AdequacyReport adequacy_diagnostics(const std::vector<DecoderTrace>& traces, double tau_under,
                                    double tau_over) {
  AdequacyReport report;
  for (const DecoderTrace& trace : traces) {
    if (trace.alpha.empty()) {
      report.under_fraction.push_back(0.0);
      report.over_fraction.push_back(0.0);
      continue;
    }
    const std::size_t J = trace.alpha[0].numel();
    std::size_t under = 0, over = 0;
    for (std::size_t j = 0; j < J; ++j) {
      double coverage = 0.0;
      for (const Tensor& row : trace.alpha) coverage += row.at(j);
      if (coverage < tau_under) ++under;
      if (coverage > tau_over) ++over;
    }
    report.under_fraction.push_back(static_cast<double>(under) / static_cast<double>(J));
    report.over_fraction.push_back(static_cast<double>(over) / static_cast<double>(J));
  }
  if (!report.under_fraction.empty()) {
    for (double f : report.under_fraction) report.mean_under += f;
    for (double f : report.over_fraction) report.mean_over += f;
    report.mean_under /= static_cast<double>(report.under_fraction.size());
    report.mean_over /= static_cast<double>(report.over_fraction.size());
  }
  return report;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw data_error("pearson: length mismatch");
  if (xs.size() < 2) throw data_error("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw numeric_error("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace edr
