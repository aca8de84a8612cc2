#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "edr/errors.hpp"
#include "edr/precision.hpp"
#include "edr/rng.hpp"

namespace edr {

class Tape;

// Dense numeric array. Storage width follows the global precision mode at
// construction time; values are contiguous and shape-checked. A Tensor used
// as a parameter carries an optional same-shape gradient, populated by
// Tape::backward.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(const Tensor& o);
  Tensor& operator=(const Tensor& o);
  Tensor(Tensor&&) = default;
  Tensor& operator=(Tensor&&) = default;
  ~Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor scalar(double v);
  static Tensor row(const std::vector<double>& vals);
  static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi, Rng& rng);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return numel_; }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  Precision prec() const { return prec_; }

  double at(std::size_t i) const {
    return prec_ == Precision::f32 ? static_cast<double>(f32_[i]) : f64_[i];
  }
  double at(std::size_t r, std::size_t c) const { return at(r * shape_[1] + c); }
  void set(std::size_t i, double v) {
    if (prec_ == Precision::f32)
      f32_[i] = static_cast<float>(v);
    else
      f64_[i] = v;
  }
  void fill(double v);
  std::vector<double> to_vector() const;

  template <class T>
  T* data();
  template <class T>
  const T* data() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool b) { requires_grad_ = b; }

  bool has_grad() const { return grad_ != nullptr; }
  Tensor& grad();              // allocates zeros on first use
  const Tensor& grad() const;  // throws if absent
  void zero_grad();
  void drop_grad() { grad_.reset(); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::size_t numel_ = 0;
  Precision prec_ = Precision::f32;
  std::vector<float> f32_;
  std::vector<double> f64_;
  bool requires_grad_ = false;
  std::unique_ptr<Tensor> grad_;
};

template <>
inline float* Tensor::data<float>() {
  if (prec_ != Precision::f32) throw numeric_error("tensor is not f32");
  return f32_.data();
}
template <>
inline double* Tensor::data<double>() {
  if (prec_ != Precision::f64) throw numeric_error("tensor is not f64");
  return f64_.data();
}
template <>
inline const float* Tensor::data<float>() const {
  if (prec_ != Precision::f32) throw numeric_error("tensor is not f32");
  return f32_.data();
}
template <>
inline const double* Tensor::data<double>() const {
  if (prec_ != Precision::f64) throw numeric_error("tensor is not f64");
  return f64_.data();
}

}  // namespace edr
