#include "edr/beam.hpp"

#include <algorithm>
#include <cmath>

namespace edr {

namespace {

bool tokens_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// log_lik desc, then lexicographically lower token sequence.
bool hyp_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_lik != b.log_lik) return a.log_lik > b.log_lik;
  return tokens_less(a.tokens, b.tokens);
}

std::size_t max_total_len(std::size_t source_len, double factor) {
  return static_cast<std::size_t>(std::ceil(factor * static_cast<double>(source_len)));
}

}  // namespace

std::vector<Hypothesis> beam_search(std::span<const int> x, const ModelParams& m,
                                    std::size_t k, double max_len_factor) {
  if (k < 1) throw config_error("beam_search: k must be >= 1");
  EncodedSource enc = encode(x, m);
  const std::size_t max_len = std::max<std::size_t>(1, max_total_len(x.size(), max_len_factor));
  const std::size_t vocab = m.dims.tgt_vocab;

  struct Live {
    Hypothesis hyp;
    Tensor state;  // decoder state after the last emitted token
  };
  std::vector<Live> beam;
  beam.push_back({Hypothesis{}, enc.init_state});

  std::vector<Hypothesis> pool;
  auto pool_add = [&](Hypothesis h) {
    pool.push_back(std::move(h));
    std::sort(pool.begin(), pool.end(), hyp_before);
    if (pool.size() > k) pool.pop_back();
  };

  struct Cand {
    double score;
    std::size_t live_idx;
    int token;
  };

  for (std::size_t step = 1; step <= max_len && pool.size() < k && !beam.empty(); ++step) {
    const bool last = step == max_len;

    // One shared tape per step: the source encoding is leafed once.
    Tape t;
    ModelRefs refs = ModelRefs::frozen(t, m);
    EncodedGraph g = to_graph(t, enc);
    std::vector<StepGraph> steps(beam.size());
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const int y_prev = beam[b].hyp.tokens.empty() ? Vocabulary::kBos
                                                    : beam[b].hyp.tokens.back();
      steps[b] = decode_step_graph(t, y_prev, t.input(beam[b].state), g, refs);
    }

    std::vector<Cand> cands;
    cands.reserve(beam.size() * (last ? 1 : vocab));
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const Tensor& log_dist = t.value(steps[b].log_dist);
      if (last) {
        cands.push_back({beam[b].hyp.log_lik + log_dist.at(Vocabulary::kEos), b,
                         Vocabulary::kEos});
      } else {
        for (std::size_t tok = 0; tok < vocab; ++tok)
          cands.push_back({beam[b].hyp.log_lik + log_dist.at(tok), b, static_cast<int>(tok)});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      // Same continuation score: prefer the lexicographically lower result.
      if (beam[a.live_idx].hyp.tokens != beam[b.live_idx].hyp.tokens)
        return tokens_less(beam[a.live_idx].hyp.tokens, beam[b.live_idx].hyp.tokens);
      return a.token < b.token;
    });

    auto extend = [&](const Cand& c) {
      const Live& parent = beam[c.live_idx];
      Hypothesis h = parent.hyp;
      h.tokens.push_back(c.token);
      h.log_lik = c.score;
      h.states.push_back(t.take_value(steps[c.live_idx].state));
      h.alpha_rows.push_back(t.take_value(steps[c.live_idx].alpha));
      return h;
    };

    std::vector<Live> next;
    next.reserve(k);
    const std::size_t joint_rank_cap = k;
    for (std::size_t r = 0; r < cands.size(); ++r) {
      const Cand& c = cands[r];
      if (c.token == Vocabulary::kEos) {
        if (r < joint_rank_cap) {
          Hypothesis h = extend(c);
          h.complete = true;
          pool_add(std::move(h));
        }
      } else if (next.size() < k) {
        Hypothesis h = extend(c);
        next.push_back({std::move(h), t.take_value(steps[c.live_idx].state)});
      }
      if (next.size() == k && r + 1 >= joint_rank_cap) break;
    }
    beam = std::move(next);
  }

  std::sort(pool.begin(), pool.end(), hyp_before);
  return pool;
}

Hypothesis exhaustive_search(std::span<const int> x, const ModelParams& m,
                             std::size_t max_len) {
  const std::size_t vocab = m.dims.tgt_vocab;
  double space = 1.0;
  for (std::size_t i = 0; i < max_len; ++i) space *= static_cast<double>(vocab);
  if (space > 1e6)
    throw config_error("exhaustive_search: |V|^max_len exceeds 1e6 guard");

  EncodedSource enc = encode(x, m);
  Hypothesis best;
  bool have_best = false;
  std::vector<int> prefix;

  // Depth-first over prefixes, carrying the decoder state down the tree.
  auto walk = [&](auto&& self, const Tensor& s_prev, int y_prev, double lik,
                  std::size_t depth) -> void {
    StepResult step = decode_step(y_prev, s_prev, enc, m);
    {
      Hypothesis h;
      h.tokens = prefix;
      h.tokens.push_back(Vocabulary::kEos);
      h.log_lik = lik + step.log_dist.at(Vocabulary::kEos);
      h.complete = true;
      if (!have_best || hyp_before(h, best)) {
        best = std::move(h);
        have_best = true;
      }
    }
    if (depth + 1 > max_len - 1) return;  // only EOS would fit after this depth
    for (std::size_t tok = 0; tok < vocab; ++tok) {
      if (tok == Vocabulary::kEos) continue;
      prefix.push_back(static_cast<int>(tok));
      self(self, step.state, static_cast<int>(tok), lik + step.log_dist.at(tok), depth + 1);
      prefix.pop_back();
    }
  };
  if (max_len >= 1) walk(walk, enc.init_state, Vocabulary::kBos, 0.0, 0);
  return best;
}

double normalize_likelihood(double log_lik, std::size_t length) {
  if (length == 0) throw numeric_error("normalize_likelihood: zero length");
  return log_lik / static_cast<double>(length);
}

std::vector<RerankedCandidate> rerank(std::vector<Hypothesis> candidates,
                                      std::span<const int> x, const ReconstructorParams* rec,
                                      double lambda, bool normalize_lik, bool normalize_rec) {
  if (candidates.empty()) throw data_error("rerank: no candidates");
  std::vector<RerankedCandidate> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    RerankedCandidate c;
    c.rank_phase1 = i + 1;
    c.hyp = std::move(candidates[i]);
    double score = normalize_lik ? normalize_likelihood(c.hyp.log_lik, c.hyp.tokens.size())
                                 : c.hyp.log_lik;
    if (lambda > 0.0) {
      if (rec == nullptr)
        throw config_error("rerank: lambda > 0 requires reconstructor parameters");
      if (c.hyp.states.empty()) throw data_error("rerank: candidate has no decoder states");
      c.log_rec = reconstruction_score(x, c.hyp.states, *rec).first;
      score += lambda * (normalize_rec ? c.log_rec / static_cast<double>(x.size()) : c.log_rec);
    }
    c.score = score;
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const RerankedCandidate& a,
                                              const RerankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.rank_phase1 < b.rank_phase1;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank_final = i + 1;
  return out;
}

}  // namespace edr
