#pragma once

// Standalone scalar-arithmetic reimplementation of the model math, used as
// an independent oracle. Plain double vectors, no tape, no shared code with
// the library kernels beyond <cmath>.

#include <cassert>
#include <cmath>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;  // rows of columns

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec out(w.size(), 0.0);
  for (std::size_t r = 0; r < w.size(); ++r) {
    assert(w[r].size() == x.size());
    for (std::size_t c = 0; c < x.size(); ++c) out[r] += w[r][c] * x[c];
  }
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec cmul(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Vec vtanh(const Vec& a) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
  return out;
}

inline Vec vsigmoid(const Vec& a) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
  return out;
}

inline Vec softmax(const Vec& a) {
  double mx = a[0];
  for (double v : a) mx = std::max(mx, v);
  Vec out(a.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = std::exp(a[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline Vec log_softmax(const Vec& a) {
  double mx = a[0];
  for (double v : a) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : a) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - lse;
  return out;
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline Vec concat(const Vec& a, const Vec& b, const Vec& c) { return concat(concat(a, b), c); }

struct Gru {
  Mat wz, uz;
  Vec bz;
  Mat wr, ur;
  Vec br;
  Mat wc, uc;
  Vec bc;

  Vec step(const Vec& in, const Vec& prev) const {
    Vec z = vsigmoid(add(add(matvec(wz, in), matvec(uz, prev)), bz));
    Vec r = vsigmoid(add(add(matvec(wr, in), matvec(ur, prev)), br));
    Vec cand = vtanh(add(add(matvec(wc, in), matvec(uc, cmul(r, prev))), bc));
    Vec out(prev.size());
    for (std::size_t i = 0; i < prev.size(); ++i)
      out[i] = (1.0 - z[i]) * prev[i] + z[i] * cand[i];
    return out;
  }
};

// score_j = v . tanh(wq q + key_j); returns (alpha, context over items).
inline std::pair<Vec, Vec> additive_attention(const Mat& wq, const Vec& v, const Vec& query,
                                              const std::vector<Vec>& keys,
                                              const std::vector<Vec>& items) {
  Vec wq_q = matvec(wq, query);
  Vec scores(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    Vec h = vtanh(add(wq_q, keys[j]));
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += v[i] * h[i];
    scores[j] = s;
  }
  Vec alpha = softmax(scores);
  Vec context(items[0].size(), 0.0);
  for (std::size_t j = 0; j < items.size(); ++j)
    for (std::size_t i = 0; i < context.size(); ++i) context[i] += alpha[j] * items[j][i];
  return {alpha, context};
}

}  // namespace oracle
