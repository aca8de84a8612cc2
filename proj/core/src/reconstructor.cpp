#include "edr/reconstructor.hpp"

#include <cmath>

namespace edr {

ReconstructorParams ReconstructorParams::init(const Dims& dims,
                                              std::shared_ptr<Tensor> shared_embed,
                                              Rng& rng) {
  const std::size_t m = dims.embed, n = dims.hidden;
  ReconstructorParams p;
  p.src_embed = std::move(shared_embed);
  p.attn_wq = init_weight(n, n, rng);
  p.attn_uh = init_weight(n, n, rng);
  p.attn_v = init_weight(1, n, rng);
  p.gru = GruParams::init(m + n, n, rng);
  p.init_w = init_weight(n, n, rng);
  p.init_b = init_bias(n);
  p.ro_w = init_weight(n, m + 2 * n, rng);
  p.ro_b = init_bias(n);
  p.out_w = init_weight(dims.src_vocab, n, rng);
  p.out_b = init_bias(dims.src_vocab);
  return p;
}

NamedTensors ReconstructorParams::named() {
  NamedTensors out;
  out.emplace_back("rec.attn.wq", &attn_wq);
  out.emplace_back("rec.attn.uh", &attn_uh);
  out.emplace_back("rec.attn.v", &attn_v);
  gru.collect("rec.gru", out);
  out.emplace_back("rec.init.w", &init_w);
  out.emplace_back("rec.init.b", &init_b);
  out.emplace_back("rec.readout.w", &ro_w);
  out.emplace_back("rec.readout.b", &ro_b);
  out.emplace_back("rec.out.w", &out_w);
  out.emplace_back("rec.out.b", &out_b);
  return out;
}

ReconstructorRefs ReconstructorRefs::trainable(Tape& t, ReconstructorParams& p) {
  ReconstructorRefs r;
  r.src_embed = t.param(*p.src_embed);
  r.attn_wq = t.param(p.attn_wq);
  r.attn_uh = t.param(p.attn_uh);
  r.attn_v = t.param(p.attn_v);
  r.gru = p.gru.refs(t);
  r.init_w = t.param(p.init_w);
  r.init_b = t.param(p.init_b);
  r.ro_w = t.param(p.ro_w);
  r.ro_b = t.param(p.ro_b);
  r.out_w = t.param(p.out_w);
  r.out_b = t.param(p.out_b);
  return r;
}

ReconstructorRefs ReconstructorRefs::frozen(Tape& t, const ReconstructorParams& p) {
  ReconstructorRefs r;
  r.src_embed = t.cref(*p.src_embed);
  r.attn_wq = t.cref(p.attn_wq);
  r.attn_uh = t.cref(p.attn_uh);
  r.attn_v = t.cref(p.attn_v);
  r.gru = static_cast<const GruParams&>(p.gru).refs(t);
  r.init_w = t.cref(p.init_w);
  r.init_b = t.cref(p.init_b);
  r.ro_w = t.cref(p.ro_w);
  r.ro_b = t.cref(p.ro_b);
  r.out_w = t.cref(p.out_w);
  r.out_b = t.cref(p.out_b);
  return r;
}

AttendGraph inverse_attend_graph(Tape& t, Expr query, std::span<const Expr> dec_states,
                                 std::span<const Expr> keys, const ReconstructorRefs& r) {
  if (dec_states.empty()) throw numeric_error("inverse_attend: empty decoder state sequence");
  const std::size_t I = dec_states.size();
  Expr wq_q = matvec(r.attn_wq, query);
  std::vector<Expr> scores(I);
  for (std::size_t i = 0; i < I; ++i)
    scores[i] = pick(matvec(r.attn_v, tanh(add(wq_q, keys[i]))), 0);
  Expr alpha = softmax(concat(scores));
  Expr context = smul(pick(alpha, 0), dec_states[0]);
  for (std::size_t i = 1; i < I; ++i)
    context = add(context, smul(pick(alpha, i), dec_states[i]));
  return {alpha, context};
}

namespace {

struct ReconstructorState {
  std::vector<Expr> keys;  // attn_uh s_i, cached over the state sequence
  Expr h;                  // current reconstructor hidden state
};

ReconstructorState rec_start(Tape& t, std::span<const Expr> dec_states,
                             const ReconstructorRefs& r) {
  if (dec_states.empty()) throw numeric_error("reconstruction: empty decoder state sequence");
  ReconstructorState st;
  st.keys.reserve(dec_states.size());
  for (Expr s : dec_states) st.keys.push_back(matvec(r.attn_uh, s));
  Expr mean = mean_all(dec_states);
  st.h = tanh(affine(r.init_w, mean, r.init_b));
  return st;
}

struct RecStep {
  Expr state;
  Expr log_dist;
  Expr alpha;
  Expr context;
};

RecStep rec_step(Tape& t, int x_prev, const ReconstructorState& st,
                 std::span<const Expr> dec_states, const ReconstructorRefs& r) {
  Expr emb = lookup(r.src_embed, static_cast<std::size_t>(x_prev));
  AttendGraph att = inverse_attend_graph(t, st.h, dec_states, st.keys, r);
  Expr state = gru_cell(concat({emb, att.context}), st.h, r.gru);
  Expr hidden = tanh(affine(r.ro_w, concat({emb, state, att.context}), r.ro_b));
  Expr log_dist = log_softmax(affine(r.out_w, hidden, r.out_b));
  return {state, log_dist, att.alpha, att.context};
}

}  // namespace

ReconstructionGraph reconstruction_score_graph(Tape& t, std::span<const int> x,
                                               std::span<const Expr> dec_states,
                                               const ReconstructorRefs& r) {
  if (x.empty()) throw data_error("reconstruction: empty source sequence");
  if (x.back() != Vocabulary::kEos)
    throw data_error("reconstruction: source sequence does not end with EOS");
  const std::size_t src_vocab = t.value(r.src_embed).dim(0);
  for (int id : x) {
    if (id < 0 || static_cast<std::size_t>(id) >= src_vocab)
      throw data_error("source token id " + std::to_string(id) + " out of range (vocab " +
                       std::to_string(src_vocab) + ")");
  }

  ReconstructionGraph g;
  ReconstructorState st = rec_start(t, dec_states, r);
  for (std::size_t j = 0; j < x.size(); ++j) {
    const int x_prev = j == 0 ? Vocabulary::kBos : x[j - 1];
    RecStep step = rec_step(t, x_prev, st, dec_states, r);
    g.states.push_back(step.state);
    g.contexts.push_back(step.context);
    g.alpha.push_back(step.alpha);
    g.step_logp.push_back(pick(step.log_dist, static_cast<std::size_t>(x[j])));
    st.h = step.state;
  }
  g.log_rec = add_all(g.step_logp);
  return g;
}

std::pair<Tensor, Tensor> inverse_attend(const Tensor& prev_state,
                                         std::span<const Tensor> dec_states,
                                         const ReconstructorParams& r) {
  Tape t;
  ReconstructorRefs refs = ReconstructorRefs::frozen(t, r);
  std::vector<Expr> states, keys;
  for (const Tensor& s : dec_states) states.push_back(t.input(s));
  for (const Expr& s : states) keys.push_back(matvec(refs.attn_uh, s));
  AttendGraph att = inverse_attend_graph(t, t.input(prev_state), states, keys, refs);
  return {t.take_value(att.alpha), t.take_value(att.context)};
}

std::pair<double, ReconstructionTrace> reconstruction_score(std::span<const int> x,
                                                            std::span<const Tensor> dec_states,
                                                            const ReconstructorParams& r) {
  Tape t;
  ReconstructorRefs refs = ReconstructorRefs::frozen(t, r);
  std::vector<Expr> states;
  states.reserve(dec_states.size());
  for (const Tensor& s : dec_states) states.push_back(t.input(s));
  ReconstructionGraph g = reconstruction_score_graph(t, x, states, refs);
  ReconstructionTrace trace;
  for (Expr e : g.states) trace.states.push_back(t.take_value(e));
  for (Expr e : g.contexts) trace.contexts.push_back(t.take_value(e));
  for (Expr e : g.alpha) trace.alpha.push_back(t.take_value(e));
  for (Expr e : g.step_logp) trace.step_logp.push_back(t.scalar_value(e));
  return {t.scalar_value(g.log_rec), std::move(trace)};
}

SampleMode parse_sample_mode(std::string_view name) {
  if (name == "greedy") return SampleMode::greedy;
  if (name == "stochastic") return SampleMode::stochastic;
  throw config_error("unknown sample mode: " + std::string(name));
}

std::vector<int> sample_reconstruction(std::span<const Tensor> dec_states,
                                       const ReconstructorParams& r, SampleMode mode,
                                       std::uint64_t seed, std::size_t max_len) {
  if (dec_states.empty()) throw numeric_error("sample_reconstruction: empty state sequence");
  Rng rng = Rng::substream(seed, "reconstruct/sample");
  std::vector<int> out;
  int x_prev = Vocabulary::kBos;

  // Step tapes are value-only; no gradients needed.
  Tensor h_value;
  {
    Tape t;
    ReconstructorRefs refs = ReconstructorRefs::frozen(t, r);
    std::vector<Expr> states;
    for (const Tensor& s : dec_states) states.push_back(t.input(s));
    h_value = t.take_value(rec_start(t, states, refs).h);
  }

  for (std::size_t j = 0; j < max_len; ++j) {
    Tape t;
    ReconstructorRefs refs = ReconstructorRefs::frozen(t, r);
    std::vector<Expr> states;
    for (const Tensor& s : dec_states) states.push_back(t.input(s));
    ReconstructorState st;
    for (const Expr& s : states) st.keys.push_back(matvec(refs.attn_uh, s));
    st.h = t.input(h_value);
    RecStep step = rec_step(t, x_prev, st, states, refs);
    const Tensor& log_dist = t.value(step.log_dist);

    std::size_t chosen = 0;
    if (mode == SampleMode::greedy) {
      for (std::size_t k = 1; k < log_dist.numel(); ++k)
        if (log_dist.at(k) > log_dist.at(chosen)) chosen = k;
    } else {
      double u = rng.next_real();
      double acc = 0.0;
      chosen = log_dist.numel() - 1;
      for (std::size_t k = 0; k < log_dist.numel(); ++k) {
        acc += std::exp(log_dist.at(k));
        if (u < acc) {
          chosen = k;
          break;
        }
      }
    }
    out.push_back(static_cast<int>(chosen));
    if (static_cast<int>(chosen) == Vocabulary::kEos) break;
    x_prev = static_cast<int>(chosen);
    h_value = t.take_value(step.state);
  }
  return out;
}

}  // namespace edr
