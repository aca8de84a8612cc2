#include "edr/tape.hpp"

#include <cmath>
#include <cstddef>
#include <limits>

namespace edr {

namespace {

Tape& tape_of(Expr a) {
  if (!a.valid()) throw numeric_error("expression is not on a tape");
  return *a.tape;
}

void check_same_tape(Expr a, Expr b) {
  if (a.tape != b.tape) throw numeric_error("expressions live on different tapes");
}

template <class F>
void dispatch(F&& f) {
  if (precision() == Precision::f32)
    f(float{});
  else
    f(double{});
}

template <class T>
void softmax_kernel(const Tensor& x, Tensor& out) {
  const T* xs = x.data<T>();
  T* os = out.data<T>();
  const std::size_t n = x.numel();
  T mx = xs[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xs[i]);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    os[i] = std::exp(xs[i] - mx);
    total += os[i];
  }
  for (std::size_t i = 0; i < n; ++i) os[i] /= total;
}

template <class T>
void log_softmax_kernel(const Tensor& x, Tensor& out) {
  const T* xs = x.data<T>();
  T* os = out.data<T>();
  const std::size_t n = x.numel();
  T mx = xs[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xs[i]);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(xs[i] - mx);
  const T lse = mx + std::log(total);
  for (std::size_t i = 0; i < n; ++i) os[i] = xs[i] - lse;
}

void check_distribution_input(const Tensor& x) {
  if (x.numel() == 0) throw numeric_error("empty distribution");
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!std::isfinite(x.at(i))) throw numeric_error("non-finite logits");
  }
}

}  // namespace

Tensor softmax_values(const Tensor& logits) {
  check_distribution_input(logits);
  Tensor out(logits.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    softmax_kernel<T>(logits, out);
  });
  return out;
}

Expr make_node(Tape& t, Op op, std::vector<int> in, std::size_t i0, double c0, Tensor val) {
  t.check_open();
  Tape::Node n;
  n.op = op;
  n.in = std::move(in);
  n.i0 = i0;
  n.c0 = c0;
  n.val = std::move(val);
  for (int id : n.in) n.requires_grad = n.requires_grad || t.nodes_[id].requires_grad;
  t.nodes_.push_back(std::move(n));
  return Expr{&t, static_cast<int>(t.nodes_.size() - 1)};
}

const Tensor& node_value(const Tape& t, int id) { return t.val_of(id); }

void Tape::check_open() const {
  if (consumed_) throw numeric_error("tape consumed");
}

Expr Tape::input(const Tensor& value) {
  check_open();
  Node n;
  n.op = Op::leaf;
  n.val = value;
  nodes_.push_back(std::move(n));
  return Expr{this, static_cast<int>(nodes_.size() - 1)};
}

Expr Tape::param(Tensor& p) {
  check_open();
  auto it = leaf_ids_.find(&p);
  if (it != leaf_ids_.end()) return Expr{this, it->second};
  Node n;
  n.op = Op::leaf;
  n.ext_val = &p;
  n.ext_grad = &p;
  n.requires_grad = p.requires_grad();
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  leaf_ids_.emplace(&p, id);
  return Expr{this, id};
}

Expr Tape::cref(const Tensor& p) {
  check_open();
  auto it = leaf_ids_.find(&p);
  if (it != leaf_ids_.end()) return Expr{this, it->second};
  Node n;
  n.op = Op::leaf;
  n.ext_val = &p;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size() - 1);
  leaf_ids_.emplace(&p, id);
  return Expr{this, id};
}

const Tensor& Tape::value(Expr e) const {
  if (e.tape != this || e.id < 0 || e.id >= static_cast<int>(nodes_.size()))
    throw numeric_error("expression is not on this tape");
  return val_of(e.id);
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.ext_grad) return n.ext_grad->grad();
  if (n.grad.numel() == 0) n.grad = Tensor(val_of(id).shape());
  return n.grad;
}

void Tape::backward(Expr loss) {
  if (loss.tape != this || loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
    throw numeric_error("not differentiable");
  check_open();
  if (val_of(loss.id).rank() != 0) throw numeric_error("loss is not a scalar");
  if (!nodes_[loss.id].requires_grad) throw numeric_error("not differentiable");
  grad_buffer(loss.id).set(0, 1.0);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.op == Op::leaf || !n.requires_grad) continue;
    if (!n.ext_grad && n.grad.numel() == 0) continue;  // not reachable from loss
    backward_node(id);
  }
  consumed_ = true;
}

namespace {

// Per-op backward kernels. g is the output gradient; each kernel adds into
// the input gradient buffers it is given (nullptr: input does not need one).

template <class T>
void acc_scaled(Tensor* dst, const Tensor& src, T factor) {
  if (!dst) return;
  T* d = dst->data<T>();
  const T* s = src.data<T>();
  for (std::size_t i = 0; i < src.numel(); ++i) d[i] += factor * s[i];
}

}  // namespace

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const Tensor& g = n.ext_grad ? n.ext_grad->grad() : n.grad;

  auto in_val = [&](int k) -> const Tensor& { return val_of(n.in[k]); };
  auto in_buf = [&](int k) -> Tensor* {
    int iid = n.in[k];
    if (!nodes_[iid].requires_grad) return nullptr;
    return &grad_buffer(iid);
  };

  dispatch([&](auto tag) {
    using T = decltype(tag);
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add: {
        acc_scaled<T>(in_buf(0), g, T(1));
        acc_scaled<T>(in_buf(1), g, T(1));
        break;
      }
      case Op::sub: {
        acc_scaled<T>(in_buf(0), g, T(1));
        acc_scaled<T>(in_buf(1), g, T(-1));
        break;
      }
      case Op::cmul: {
        Tensor* ga = in_buf(0);
        Tensor* gb = in_buf(1);
        const T* a = in_val(0).data<T>();
        const T* b = in_val(1).data<T>();
        const T* gs = g.data<T>();
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (ga) ga->data<T>()[i] += gs[i] * b[i];
          if (gb) gb->data<T>()[i] += gs[i] * a[i];
        }
        break;
      }
      case Op::scale_const: {
        acc_scaled<T>(in_buf(0), g, static_cast<T>(n.c0));
        break;
      }
      case Op::smul: {
        Tensor* gs_buf = in_buf(0);
        Tensor* gx_buf = in_buf(1);
        const T s = in_val(0).data<T>()[0];
        const T* x = in_val(1).data<T>();
        const T* gs = g.data<T>();
        if (gs_buf) {
          T acc = 0;
          for (std::size_t i = 0; i < g.numel(); ++i) acc += gs[i] * x[i];
          gs_buf->data<T>()[0] += acc;
        }
        if (gx_buf) acc_scaled<T>(gx_buf, g, s);
        break;
      }
      case Op::tanh_fn: {
        Tensor* gx = in_buf(0);
        if (!gx) break;
        const T* y = n.val.data<T>();
        const T* gs = g.data<T>();
        T* d = gx->data<T>();
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += (T(1) - y[i] * y[i]) * gs[i];
        break;
      }
      case Op::sigmoid_fn: {
        Tensor* gx = in_buf(0);
        if (!gx) break;
        const T* y = n.val.data<T>();
        const T* gs = g.data<T>();
        T* d = gx->data<T>();
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += y[i] * (T(1) - y[i]) * gs[i];
        break;
      }
      case Op::matvec: {
        Tensor* gw = in_buf(0);
        Tensor* gx = in_buf(1);
        const Tensor& w = in_val(0);
        const T* wv = w.data<T>();
        const T* x = in_val(1).data<T>();
        const T* gs = g.data<T>();
        const std::size_t rows = w.dim(0), cols = w.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
          const T gr = gs[r];
          if (gr == T(0)) continue;
          if (gw) {
            T* d = gw->data<T>() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) d[c] += gr * x[c];
          }
          if (gx) {
            T* d = gx->data<T>();
            const T* wr = wv + r * cols;
            for (std::size_t c = 0; c < cols; ++c) d[c] += gr * wr[c];
          }
        }
        break;
      }
      case Op::concat: {
        const T* gs = g.data<T>();
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.in.size(); ++k) {
          const std::size_t len = in_val(static_cast<int>(k)).numel();
          Tensor* gi = in_buf(static_cast<int>(k));
          if (gi) {
            T* d = gi->data<T>();
            for (std::size_t i = 0; i < len; ++i) d[i] += gs[off + i];
          }
          off += len;
        }
        break;
      }
      case Op::lookup: {
        Tensor* gt = in_buf(0);
        if (!gt) break;
        const std::size_t cols = in_val(0).dim(1);
        T* d = gt->data<T>() + n.i0 * cols;
        const T* gs = g.data<T>();
        for (std::size_t i = 0; i < cols; ++i) d[i] += gs[i];
        break;
      }
      case Op::softmax: {
        Tensor* gx = in_buf(0);
        if (!gx) break;
        const T* y = n.val.data<T>();
        const T* gs = g.data<T>();
        T gy = 0;
        for (std::size_t i = 0; i < g.numel(); ++i) gy += gs[i] * y[i];
        T* d = gx->data<T>();
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += y[i] * (gs[i] - gy);
        break;
      }
      case Op::log_softmax: {
        Tensor* gx = in_buf(0);
        if (!gx) break;
        const T* y = n.val.data<T>();
        const T* gs = g.data<T>();
        T gsum = 0;
        for (std::size_t i = 0; i < g.numel(); ++i) gsum += gs[i];
        T* d = gx->data<T>();
        for (std::size_t i = 0; i < g.numel(); ++i) d[i] += gs[i] - std::exp(y[i]) * gsum;
        break;
      }
      case Op::pick: {
        Tensor* gx = in_buf(0);
        if (gx) gx->data<T>()[n.i0] += g.data<T>()[0];
        break;
      }
      case Op::dot: {
        Tensor* ga = in_buf(0);
        Tensor* gb = in_buf(1);
        const T gs = g.data<T>()[0];
        if (ga) acc_scaled<T>(ga, in_val(1), gs);
        if (gb) acc_scaled<T>(gb, in_val(0), gs);
        break;
      }
      case Op::sum: {
        Tensor* gx = in_buf(0);
        if (!gx) break;
        const T gs = g.data<T>()[0];
        T* d = gx->data<T>();
        for (std::size_t i = 0; i < gx->numel(); ++i) d[i] += gs;
        break;
      }
    }
  });
}

namespace {

void check_shape_match(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw numeric_error(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                        b.shape_str());
}

}  // namespace

Expr add(Expr a, Expr b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_shape_match(va, vb, "add");
  Tensor out(va.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* x = va.data<T>();
    const T* y = vb.data<T>();
    T* o = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = x[i] + y[i];
  });
  return make_node(t, Op::add, {a.id, b.id}, 0, 0, std::move(out));
}

Expr sub(Expr a, Expr b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_shape_match(va, vb, "sub");
  Tensor out(va.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* x = va.data<T>();
    const T* y = vb.data<T>();
    T* o = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = x[i] - y[i];
  });
  return make_node(t, Op::sub, {a.id, b.id}, 0, 0, std::move(out));
}

Expr cmul(Expr a, Expr b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_shape_match(va, vb, "cmul");
  Tensor out(va.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* x = va.data<T>();
    const T* y = vb.data<T>();
    T* o = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = x[i] * y[i];
  });
  return make_node(t, Op::cmul, {a.id, b.id}, 0, 0, std::move(out));
}

Expr scale(Expr x, double c) {
  Tape& t = tape_of(x);
  const Tensor& vx = t.value(x);
  Tensor out(vx.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* xs = vx.data<T>();
    T* o = out.data<T>();
    const T f = static_cast<T>(c);
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = f * xs[i];
  });
  return make_node(t, Op::scale_const, {x.id}, 0, c, std::move(out));
}

Expr smul(Expr s, Expr x) {
  check_same_tape(s, x);
  Tape& t = tape_of(s);
  const Tensor& vs = t.value(s);
  const Tensor& vx = t.value(x);
  if (vs.rank() != 0) throw numeric_error("smul: scalar operand must be rank-0");
  Tensor out(vx.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T f = vs.data<T>()[0];
    const T* xs = vx.data<T>();
    T* o = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = f * xs[i];
  });
  return make_node(t, Op::smul, {s.id, x.id}, 0, 0, std::move(out));
}

Expr tanh(Expr x) {
  Tape& t = tape_of(x);
  const Tensor& vx = t.value(x);
  Tensor out(vx.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* xs = vx.data<T>();
    T* o = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = std::tanh(xs[i]);
  });
  return make_node(t, Op::tanh_fn, {x.id}, 0, 0, std::move(out));
}

Expr sigmoid(Expr x) {
  Tape& t = tape_of(x);
  const Tensor& vx = t.value(x);
  Tensor out(vx.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* xs = vx.data<T>();
    T* o = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = T(1) / (T(1) + std::exp(-xs[i]));
  });
  return make_node(t, Op::sigmoid_fn, {x.id}, 0, 0, std::move(out));
}

Expr matvec(Expr w, Expr x) {
  check_same_tape(w, x);
  Tape& t = tape_of(w);
  const Tensor& vw = t.value(w);
  const Tensor& vx = t.value(x);
  if (vw.rank() != 2 || vx.rank() != 1 || vw.dim(1) != vx.dim(0))
    throw numeric_error("matvec: shape mismatch " + vw.shape_str() + " vs " + vx.shape_str());
  Tensor out({vw.dim(0)});
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* wv = vw.data<T>();
    const T* xs = vx.data<T>();
    T* o = out.data<T>();
    const std::size_t rows = vw.dim(0), cols = vw.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = 0;
      const T* wr = wv + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * xs[c];
      o[r] = acc;
    }
  });
  return make_node(t, Op::matvec, {w.id, x.id}, 0, 0, std::move(out));
}

Expr affine(Expr w, Expr x, Expr b) { return add(matvec(w, x), b); }

Expr concat(std::span<const Expr> parts) {
  if (parts.empty()) throw numeric_error("concat: no inputs");
  Tape& t = tape_of(parts[0]);
  std::size_t total = 0;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Expr e : parts) {
    check_same_tape(parts[0], e);
    total += t.value(e).numel();
    ids.push_back(e.id);
  }
  Tensor out({total});
  dispatch([&](auto tag) {
    using T = decltype(tag);
    T* o = out.data<T>();
    std::size_t off = 0;
    for (Expr e : parts) {
      const Tensor& v = t.value(e);
      const T* s = v.data<T>();
      for (std::size_t i = 0; i < v.numel(); ++i) o[off + i] = s[i];
      off += v.numel();
    }
  });
  return make_node(t, Op::concat, std::move(ids), 0, 0, std::move(out));
}

Expr lookup(Expr table, std::size_t row) {
  Tape& t = tape_of(table);
  const Tensor& vt = t.value(table);
  if (vt.rank() != 2) throw numeric_error("lookup: table must be rank-2");
  if (row >= vt.dim(0))
    throw data_error("lookup: row " + std::to_string(row) + " out of range for " +
                     vt.shape_str());
  Tensor out({vt.dim(1)});
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* src = vt.data<T>() + row * vt.dim(1);
    T* o = out.data<T>();
    for (std::size_t i = 0; i < vt.dim(1); ++i) o[i] = src[i];
  });
  return make_node(t, Op::lookup, {table.id}, row, 0, std::move(out));
}

Expr softmax(Expr logits) {
  Tape& t = tape_of(logits);
  const Tensor& vx = t.value(logits);
  Tensor out = softmax_values(vx);
  return make_node(t, Op::softmax, {logits.id}, 0, 0, std::move(out));
}

Expr log_softmax(Expr logits) {
  Tape& t = tape_of(logits);
  const Tensor& vx = t.value(logits);
  check_distribution_input(vx);
  Tensor out(vx.shape());
  dispatch([&](auto tag) {
    using T = decltype(tag);
    log_softmax_kernel<T>(vx, out);
  });
  return make_node(t, Op::log_softmax, {logits.id}, 0, 0, std::move(out));
}

Expr pick(Expr x, std::size_t index) {
  Tape& t = tape_of(x);
  const Tensor& vx = t.value(x);
  if (index >= vx.numel())
    throw numeric_error("pick: index " + std::to_string(index) + " out of range");
  Tensor out = Tensor::scalar(0.0);
  out.set(0, vx.at(index));
  return make_node(t, Op::pick, {x.id}, index, 0, std::move(out));
}

Expr dot(Expr a, Expr b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_shape_match(va, vb, "dot");
  Tensor out = Tensor::scalar(0.0);
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* x = va.data<T>();
    const T* y = vb.data<T>();
    T acc = 0;
    for (std::size_t i = 0; i < va.numel(); ++i) acc += x[i] * y[i];
    out.data<T>()[0] = acc;
  });
  return make_node(t, Op::dot, {a.id, b.id}, 0, 0, std::move(out));
}

Expr sum(Expr x) {
  Tape& t = tape_of(x);
  const Tensor& vx = t.value(x);
  Tensor out = Tensor::scalar(0.0);
  dispatch([&](auto tag) {
    using T = decltype(tag);
    const T* xs = vx.data<T>();
    T acc = 0;
    for (std::size_t i = 0; i < vx.numel(); ++i) acc += xs[i];
    out.data<T>()[0] = acc;
  });
  return make_node(t, Op::sum, {x.id}, 0, 0, std::move(out));
}

Expr add_all(std::span<const Expr> terms) {
  if (terms.empty()) throw numeric_error("add_all: no terms");
  Expr acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

Expr mean_all(std::span<const Expr> terms) {
  return scale(add_all(terms), 1.0 / static_cast<double>(terms.size()));
}

}  // namespace edr
