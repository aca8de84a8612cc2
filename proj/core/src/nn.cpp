#include "edr/nn.hpp"

namespace edr {

Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::uniform({rows, cols}, -kInitRange, kInitRange, rng);
  t.set_requires_grad(true);
  return t;
}

Tensor init_bias(std::size_t n) {
  Tensor t({n});
  t.set_requires_grad(true);
  return t;
}

GruParams GruParams::init(std::size_t in_dim, std::size_t state_dim, Rng& rng) {
  GruParams p;
  p.wz = init_weight(state_dim, in_dim, rng);
  p.uz = init_weight(state_dim, state_dim, rng);
  p.bz = init_bias(state_dim);
  p.wr = init_weight(state_dim, in_dim, rng);
  p.ur = init_weight(state_dim, state_dim, rng);
  p.br = init_bias(state_dim);
  p.wc = init_weight(state_dim, in_dim, rng);
  p.uc = init_weight(state_dim, state_dim, rng);
  p.bc = init_bias(state_dim);
  return p;
}

void GruParams::collect(const std::string& prefix, NamedTensors& out) {
  out.emplace_back(prefix + ".wz", &wz);
  out.emplace_back(prefix + ".uz", &uz);
  out.emplace_back(prefix + ".bz", &bz);
  out.emplace_back(prefix + ".wr", &wr);
  out.emplace_back(prefix + ".ur", &ur);
  out.emplace_back(prefix + ".br", &br);
  out.emplace_back(prefix + ".wc", &wc);
  out.emplace_back(prefix + ".uc", &uc);
  out.emplace_back(prefix + ".bc", &bc);
}

GruParams::Refs GruParams::refs(Tape& t) {
  return Refs{t.param(wz), t.param(uz), t.param(bz), t.param(wr), t.param(ur),
              t.param(br), t.param(wc), t.param(uc), t.param(bc)};
}

GruParams::Refs GruParams::refs(Tape& t) const {
  return Refs{t.cref(wz), t.cref(uz), t.cref(bz), t.cref(wr), t.cref(ur),
              t.cref(br), t.cref(wc), t.cref(uc), t.cref(bc)};
}

Expr gru_cell(Expr in, Expr prev, const GruParams::Refs& p) {
  Tape& t = *in.tape;
  const Tensor& vin = t.value(in);
  const Tensor& vprev = t.value(prev);
  const Tensor& vwz = t.value(p.wz);
  if (vin.numel() != vwz.dim(1) || vprev.numel() != t.value(p.uz).dim(1))
    throw numeric_error("gru_cell: shape mismatch, input " + vin.shape_str() + " prev " +
                        vprev.shape_str() + " expects in=" + std::to_string(vwz.dim(1)) +
                        " state=" + std::to_string(t.value(p.uz).dim(1)));
  Expr z = sigmoid(add(affine(p.wz, in, p.bz), matvec(p.uz, prev)));
  Expr r = sigmoid(add(affine(p.wr, in, p.br), matvec(p.ur, prev)));
  Expr cand = tanh(add(affine(p.wc, in, p.bc), matvec(p.uc, cmul(r, prev))));
  return add(sub(prev, cmul(z, prev)), cmul(z, cand));
}

Tensor gru_cell(const Tensor& in, const Tensor& prev, const GruParams& p) {
  Tape t;
  Expr out = gru_cell(t.input(in), t.input(prev), p.refs(t));
  return t.take_value(out);
}

Tensor dropout_mask(std::size_t dim, double rate, Rng& rng) {
  Tensor m({dim});
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < dim; ++i)
    m.set(i, rng.next_real() < rate ? 0.0 : 1.0 / keep);
  return m;
}

}  // namespace edr
