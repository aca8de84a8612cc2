#include "edr/model.hpp"

#include <algorithm>

namespace edr {

ModelParams ModelParams::init(const Dims& dims, Rng& rng) {
  const std::size_t m = dims.embed, n = dims.hidden;
  ModelParams p;
  p.dims = dims;
  p.src_embed = std::make_shared<Tensor>(init_weight(dims.src_vocab, m, rng));
  p.tgt_embed = init_weight(dims.tgt_vocab, m, rng);
  p.enc_fwd = GruParams::init(m, n, rng);
  p.enc_bwd = GruParams::init(m, n, rng);
  p.init_w = init_weight(n, n, rng);
  p.init_b = init_bias(n);
  p.attn_wq = init_weight(n, n, rng);
  p.attn_uh = init_weight(n, 2 * n, rng);
  p.attn_v = init_weight(1, n, rng);  // stored as 1 x n row
  p.dec_pre = GruParams::init(m, n, rng);
  p.dec_main = GruParams::init(m + 2 * n, n, rng);
  p.ro_w = init_weight(n, m + 3 * n, rng);
  p.ro_b = init_bias(n);
  p.out_w = init_weight(dims.tgt_vocab, n, rng);
  p.out_b = init_bias(dims.tgt_vocab);
  return p;
}

NamedTensors ModelParams::named() {
  NamedTensors out;
  out.emplace_back("src_embed", src_embed.get());
  out.emplace_back("tgt_embed", &tgt_embed);
  enc_fwd.collect("enc_fwd", out);
  enc_bwd.collect("enc_bwd", out);
  out.emplace_back("dec_init.w", &init_w);
  out.emplace_back("dec_init.b", &init_b);
  out.emplace_back("attn.wq", &attn_wq);
  out.emplace_back("attn.uh", &attn_uh);
  out.emplace_back("attn.v", &attn_v);
  dec_pre.collect("dec_pre", out);
  dec_main.collect("dec_main", out);
  out.emplace_back("readout.w", &ro_w);
  out.emplace_back("readout.b", &ro_b);
  out.emplace_back("out.w", &out_w);
  out.emplace_back("out.b", &out_b);
  return out;
}

ModelRefs ModelRefs::trainable(Tape& t, ModelParams& p) {
  ModelRefs r;
  r.src_embed = t.param(*p.src_embed);
  r.tgt_embed = t.param(p.tgt_embed);
  r.enc_fwd = p.enc_fwd.refs(t);
  r.enc_bwd = p.enc_bwd.refs(t);
  r.init_w = t.param(p.init_w);
  r.init_b = t.param(p.init_b);
  r.attn_wq = t.param(p.attn_wq);
  r.attn_uh = t.param(p.attn_uh);
  r.attn_v = t.param(p.attn_v);
  r.dec_pre = p.dec_pre.refs(t);
  r.dec_main = p.dec_main.refs(t);
  r.ro_w = t.param(p.ro_w);
  r.ro_b = t.param(p.ro_b);
  r.out_w = t.param(p.out_w);
  r.out_b = t.param(p.out_b);
  return r;
}

ModelRefs ModelRefs::frozen(Tape& t, const ModelParams& p) {
  ModelRefs r;
  r.src_embed = t.cref(*p.src_embed);
  r.tgt_embed = t.cref(p.tgt_embed);
  r.enc_fwd = static_cast<const GruParams&>(p.enc_fwd).refs(t);
  r.enc_bwd = static_cast<const GruParams&>(p.enc_bwd).refs(t);
  r.init_w = t.cref(p.init_w);
  r.init_b = t.cref(p.init_b);
  r.attn_wq = t.cref(p.attn_wq);
  r.attn_uh = t.cref(p.attn_uh);
  r.attn_v = t.cref(p.attn_v);
  r.dec_pre = static_cast<const GruParams&>(p.dec_pre).refs(t);
  r.dec_main = static_cast<const GruParams&>(p.dec_main).refs(t);
  r.ro_w = t.cref(p.ro_w);
  r.ro_b = t.cref(p.ro_b);
  r.out_w = t.cref(p.out_w);
  r.out_b = t.cref(p.out_b);
  return r;
}

namespace {

void check_ids(std::span<const int> ids, std::size_t vocab_size, const char* side) {
  if (ids.empty()) throw data_error(std::string(side) + " sequence is empty");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
      throw data_error(std::string(side) + " token id " + std::to_string(id) +
                       " out of range (vocab " + std::to_string(vocab_size) + ")");
  }
  if (ids.back() != Vocabulary::kEos)
    throw data_error(std::string(side) + " sequence does not end with EOS");
}

// v_a is stored 1 x n; score = v_a . tanh(Wq q + key_j).
Expr attn_score(Tape& t, Expr v_row, Expr wq_q, Expr key) {
  Expr h = tanh(add(wq_q, key));
  return pick(matvec(v_row, h), 0);
}

}  // namespace

EncodedGraph encode_graph(Tape& t, std::span<const int> x, const ModelRefs& m) {
  const std::size_t src_vocab = t.value(m.src_embed).dim(0);
  check_ids(x, src_vocab, "source");
  const std::size_t J = x.size();
  const std::size_t n = t.value(m.init_w).dim(0);

  std::vector<Expr> embeds(J);
  for (std::size_t j = 0; j < J; ++j)
    embeds[j] = lookup(m.src_embed, static_cast<std::size_t>(x[j]));

  Tensor zero_state({n});
  std::vector<Expr> fwd(J), bwd(J);
  Expr state = t.input(zero_state);
  for (std::size_t j = 0; j < J; ++j) {
    state = gru_cell(embeds[j], state, m.enc_fwd);
    fwd[j] = state;
  }
  state = t.input(zero_state);
  for (std::size_t j = J; j-- > 0;) {
    state = gru_cell(embeds[j], state, m.enc_bwd);
    bwd[j] = state;
  }

  EncodedGraph enc;
  enc.annotations.resize(J);
  enc.attn_keys.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    enc.annotations[j] = concat({fwd[j], bwd[j]});
    enc.attn_keys[j] = matvec(m.attn_uh, enc.annotations[j]);
  }
  enc.init_state = tanh(affine(m.init_w, bwd[0], m.init_b));
  return enc;
}

EncodedGraph to_graph(Tape& t, const EncodedSource& enc) {
  EncodedGraph g;
  g.annotations.reserve(enc.annotations.size());
  g.attn_keys.reserve(enc.attn_keys.size());
  for (const Tensor& a : enc.annotations) g.annotations.push_back(t.input(a));
  for (const Tensor& k : enc.attn_keys) g.attn_keys.push_back(t.input(k));
  g.init_state = t.input(enc.init_state);
  return g;
}

AttendGraph attend_graph(Tape& t, Expr query, const EncodedGraph& enc, const ModelRefs& m) {
  if (enc.annotations.empty()) throw numeric_error("attend: empty source encoding");
  const std::size_t J = enc.annotations.size();
  Expr wq_q = matvec(m.attn_wq, query);
  std::vector<Expr> scores(J);
  for (std::size_t j = 0; j < J; ++j)
    scores[j] = attn_score(t, m.attn_v, wq_q, enc.attn_keys[j]);
  Expr alpha = softmax(concat(scores));
  Expr context = smul(pick(alpha, 0), enc.annotations[0]);
  for (std::size_t j = 1; j < J; ++j)
    context = add(context, smul(pick(alpha, j), enc.annotations[j]));
  return {alpha, context};
}

StepGraph decode_step_graph(Tape& t, int y_prev, Expr s_prev, const EncodedGraph& enc,
                            const ModelRefs& m, const Tensor* dropout_mask) {
  const std::size_t tgt_vocab = t.value(m.tgt_embed).dim(0);
  if (y_prev < 0 || static_cast<std::size_t>(y_prev) >= tgt_vocab)
    throw data_error("target token id " + std::to_string(y_prev) + " out of range (vocab " +
                     std::to_string(tgt_vocab) + ")");
  Expr emb = lookup(m.tgt_embed, static_cast<std::size_t>(y_prev));
  Expr query = gru_cell(emb, s_prev, m.dec_pre);
  AttendGraph att = attend_graph(t, query, enc, m);
  Expr state = gru_cell(concat({emb, att.context}), query, m.dec_main);
  Expr ro_in = concat({emb, state, att.context});
  if (dropout_mask != nullptr) ro_in = cmul(ro_in, t.input(*dropout_mask));
  Expr hidden = tanh(affine(m.ro_w, ro_in, m.ro_b));
  Expr log_dist = log_softmax(affine(m.out_w, hidden, m.out_b));
  return {state, log_dist, att.alpha, att.context};
}

LikelihoodGraph log_likelihood_graph(Tape& t, std::span<const int> x, std::span<const int> y,
                                     const ModelRefs& m, double dropout_rate,
                                     Rng* dropout_rng) {
  const std::size_t tgt_vocab = t.value(m.tgt_embed).dim(0);
  check_ids(y, tgt_vocab, "target");
  LikelihoodGraph g;
  g.enc = encode_graph(t, x, m);
  Expr s_prev = g.enc.init_state;
  const std::size_t ro_dim = t.value(m.ro_w).dim(1);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int y_prev = i == 0 ? Vocabulary::kBos : y[i - 1];
    Tensor mask;
    const Tensor* mask_ptr = nullptr;
    if (dropout_rate > 0.0) {
      if (dropout_rng == nullptr) throw numeric_error("dropout requires an rng");
      mask = dropout_mask(ro_dim, dropout_rate, *dropout_rng);
      mask_ptr = &mask;
    }
    StepGraph step = decode_step_graph(t, y_prev, s_prev, g.enc, m, mask_ptr);
    g.states.push_back(step.state);
    g.contexts.push_back(step.context);
    g.alpha.push_back(step.alpha);
    g.step_logp.push_back(pick(step.log_dist, static_cast<std::size_t>(y[i])));
    s_prev = step.state;
  }
  g.logp = add_all(g.step_logp);
  return g;
}

EncodedSource encode(std::span<const int> x, const ModelParams& m) {
  Tape t;
  ModelRefs refs = ModelRefs::frozen(t, m);
  EncodedGraph g = encode_graph(t, x, refs);
  EncodedSource enc;
  enc.annotations.reserve(g.annotations.size());
  enc.attn_keys.reserve(g.attn_keys.size());
  for (Expr e : g.annotations) enc.annotations.push_back(t.take_value(e));
  for (Expr e : g.attn_keys) enc.attn_keys.push_back(t.take_value(e));
  enc.init_state = t.take_value(g.init_state);
  return enc;
}

std::pair<Tensor, Tensor> attend(const Tensor& prev_state, const EncodedSource& enc,
                                 const ModelParams& m) {
  Tape t;
  ModelRefs refs = ModelRefs::frozen(t, m);
  EncodedGraph g = to_graph(t, enc);
  AttendGraph att = attend_graph(t, t.input(prev_state), g, refs);
  return {t.take_value(att.alpha), t.take_value(att.context)};
}

StepResult decode_step(int y_prev, const Tensor& s_prev, const EncodedSource& enc,
                       const ModelParams& m, bool dropout_on, Rng* dropout_rng) {
  Tape t;
  ModelRefs refs = ModelRefs::frozen(t, m);
  EncodedGraph g = to_graph(t, enc);
  Tensor mask;
  const Tensor* mask_ptr = nullptr;
  if (dropout_on && m.dropout > 0.0) {
    if (dropout_rng == nullptr) throw numeric_error("dropout requires an rng");
    mask = dropout_mask(m.dims.embed + 3 * m.dims.hidden, m.dropout, *dropout_rng);
    mask_ptr = &mask;
  }
  StepGraph step = decode_step_graph(t, y_prev, t.input(s_prev), g, refs, mask_ptr);
  return {t.take_value(step.state), t.take_value(step.log_dist), t.take_value(step.alpha),
          t.take_value(step.context)};
}

std::pair<double, DecoderTrace> log_likelihood(std::span<const int> x, std::span<const int> y,
                                               const ModelParams& m) {
  Tape t;
  ModelRefs refs = ModelRefs::frozen(t, m);
  LikelihoodGraph g = log_likelihood_graph(t, x, y, refs);
  DecoderTrace trace;
  for (Expr e : g.states) trace.states.push_back(t.take_value(e));
  for (Expr e : g.contexts) trace.contexts.push_back(t.take_value(e));
  for (Expr e : g.alpha) trace.alpha.push_back(t.take_value(e));
  for (Expr e : g.step_logp) trace.step_logp.push_back(t.scalar_value(e));
  return {t.scalar_value(g.logp), std::move(trace)};
}

std::vector<int> greedy_decode(std::span<const int> x, const ModelParams& m,
                               std::size_t max_len) {
  EncodedSource enc = encode(x, m);
  std::vector<int> out;
  Tensor s_prev = enc.init_state;
  int y_prev = Vocabulary::kBos;
  for (std::size_t i = 0; i < max_len; ++i) {
    StepResult step = decode_step(y_prev, s_prev, enc, m);
    std::size_t best = Vocabulary::kEos;
    if (i + 1 < max_len) {  // the final step may only close the sequence
      best = 0;
      for (std::size_t k = 1; k < step.log_dist.numel(); ++k)
        if (step.log_dist.at(k) > step.log_dist.at(best)) best = k;
    }
    out.push_back(static_cast<int>(best));
    if (static_cast<int>(best) == Vocabulary::kEos) break;
    y_prev = static_cast<int>(best);
    s_prev = step.state;
  }
  return out;
}

}  // namespace edr
