#include "edr/tensor.hpp"

#include <atomic>
#include <sstream>

namespace edr {

namespace {
std::atomic<Precision> g_precision{Precision::f32};
}

Precision precision() noexcept { return g_precision.load(std::memory_order_relaxed); }
void set_precision(Precision p) noexcept { g_precision.store(p, std::memory_order_relaxed); }

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), prec_(precision()) {
  numel_ = 1;
  for (std::size_t d : shape_) numel_ *= d;
  if (prec_ == Precision::f32)
    f32_.assign(numel_, 0.0f);
  else
    f64_.assign(numel_, 0.0);
}

Tensor::Tensor(const Tensor& o)
    : shape_(o.shape_),
      numel_(o.numel_),
      prec_(o.prec_),
      f32_(o.f32_),
      f64_(o.f64_),
      requires_grad_(o.requires_grad_),
      grad_(o.grad_ ? std::make_unique<Tensor>(*o.grad_) : nullptr) {}

Tensor& Tensor::operator=(const Tensor& o) {
  if (this == &o) return *this;
  shape_ = o.shape_;
  numel_ = o.numel_;
  prec_ = o.prec_;
  f32_ = o.f32_;
  f64_ = o.f64_;
  requires_grad_ = o.requires_grad_;
  grad_ = o.grad_ ? std::make_unique<Tensor>(*o.grad_) : nullptr;
  return *this;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::scalar(double v) {
  Tensor t{std::vector<std::size_t>{}};
  t.set(0, v);
  return t;
}

Tensor Tensor::row(const std::vector<double>& vals) {
  Tensor t{std::vector<std::size_t>{vals.size()}};
  for (std::size_t i = 0; i < vals.size(); ++i) t.set(i, vals[i]);
  return t;
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng) {
  Tensor t{std::move(shape)};
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

void Tensor::fill(double v) {
  for (std::size_t i = 0; i < numel_; ++i) set(i, v);
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel_);
  for (std::size_t i = 0; i < numel_; ++i) out[i] = at(i);
  return out;
}

Tensor& Tensor::grad() {
  if (!grad_) grad_ = std::make_unique<Tensor>(shape_);
  return *grad_;
}

const Tensor& Tensor::grad() const {
  if (!grad_) throw numeric_error("tensor has no gradient");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) grad_->fill(0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace edr
