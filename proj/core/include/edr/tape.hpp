#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "edr/tensor.hpp"

namespace edr {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Expr {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

enum class Op {
  leaf,
  add,
  sub,
  cmul,
  scale_const,  // c0 * x
  smul,         // scalar expr * vector
  tanh_fn,
  sigmoid_fn,
  matvec,  // W [r x c] * x [c]
  concat,
  lookup,  // row i0 of a matrix leaf
  softmax,
  log_softmax,
  pick,  // element i0 of a vector -> scalar
  dot,
  sum,
};

// Reverse-mode differentiation tape. Nodes are recorded in forward order;
// backward replays them in reverse and accumulates gradients additively, so
// a value consumed twice receives the sum of both contributions. Parameter
// leaves write their gradients into Tensor::grad of the referenced tensor.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf carrying a copied value; does not receive gradients.
  Expr input(const Tensor& value);
  // Leaf referencing an external parameter tensor. Repeated calls with the
  // same tensor return the same node. Gradients accumulate in p.grad().
  Expr param(Tensor& p);
  // Read-only leaf referencing an external tensor; never receives
  // gradients, so immutable parameters stay shareable across threads.
  Expr cref(const Tensor& p);

  const Tensor& value(Expr e) const;
  double scalar_value(Expr e) const { return value(e).at(0); }
  Tensor take_value(Expr e) const { return value(e); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. The loss must
  // be a scalar recorded on this tape and reachable from at least one
  // gradient-requiring leaf. Consumes the tape.
  void backward(Expr loss);

  bool active() const { return !consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend Expr make_node(Tape& t, Op op, std::vector<int> in, std::size_t i0, double c0,
                        Tensor val);
  friend const Tensor& node_value(const Tape& t, int id);

  struct Node {
    Op op = Op::leaf;
    std::vector<int> in;
    std::size_t i0 = 0;
    double c0 = 0.0;
    Tensor val;                       // unused for external leaves
    const Tensor* ext_val = nullptr;  // external leaf value
    Tensor* ext_grad = nullptr;       // external leaf gradient sink
    Tensor grad;                      // allocated during backward
    bool requires_grad = false;
  };

  const Tensor& val_of(int id) const {
    const Node& n = nodes_[id];
    return n.ext_val ? *n.ext_val : n.val;
  }
  void check_open() const;
  void backward_node(int id);
  Tensor& grad_buffer(int id);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_ids_;
  bool consumed_ = false;
};

// Elementwise and reduction primitives. All inputs must live on one tape.
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr cmul(Expr a, Expr b);
Expr scale(Expr x, double c);
Expr smul(Expr s, Expr x);  // s rank-0, x rank-1
Expr tanh(Expr x);
Expr sigmoid(Expr x);
Expr matvec(Expr w, Expr x);
Expr affine(Expr w, Expr x, Expr b);
Expr concat(std::span<const Expr> parts);
inline Expr concat(std::initializer_list<Expr> parts) {
  return concat(std::span<const Expr>(parts.begin(), parts.size()));
}
// Row of a rank-2 leaf; scatter-adds the gradient into that row.
Expr lookup(Expr table, std::size_t row);
Expr softmax(Expr logits);
Expr log_softmax(Expr logits);
Expr pick(Expr x, std::size_t index);
Expr dot(Expr a, Expr b);
Expr sum(Expr x);

// Chained helpers.
Expr add_all(std::span<const Expr> terms);
Expr mean_all(std::span<const Expr> terms);

// Value-level softmax (no tape), same kernel and error contract.
Tensor softmax_values(const Tensor& logits);

}  // namespace edr
