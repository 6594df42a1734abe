#pragma once

#include <functional>
#include <vector>

#include "emad/common.hpp"

namespace emad {

class Tape;

/// Handle to a matrix node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

/// Reverse-mode autodiff over dense double matrices. Nodes are appended in
/// evaluation order; backward() walks them in reverse.
class Tape {
 public:
  Var constant(Matrix value);
  /// Leaf whose gradient is kept after backward().
  Var leaf(Matrix value);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  /// Gradient of the last backward() target; zero-sized if nothing reached the node.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  bool tracks(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  /// Seeds d(target)/d(target) = 1 for a 1x1 target and propagates.
  void backward(Var target);
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by the op implementations.
  Var push(Matrix value, std::vector<int> inputs, std::function<void(Tape&, int)> back);
  Matrix& grad_buffer(int id);
  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, int)> back;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_t(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// alpha * a + beta, elementwise.
Var affine(Var a, double alpha, double beta);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
/// log(max(a, floor)); clamped entries pass no gradient.
Var log(Var a, double floor = 1e-12);
Var relu(Var a);
Var transpose(Var a);
/// Horizontal concatenation [a, b].
Var hcat(Var a, Var b);
/// Vertical concatenation of equally wide blocks.
Var vcat(const std::vector<Var>& parts);
Var rows(Var a, Eigen::Index begin, Eigen::Index count);
Var repeat_rows(Var row, Eigen::Index n);
Var softmax_rows(Var a);
/// Column means, 1 x cols.
Var mean_rows(Var a);
/// Sum of all entries, 1 x 1.
Var sum(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// Row-wise softmax on a plain matrix (max-shifted).
Matrix softmax_rows(const Matrix& a);
double softplus(double x);

}  // namespace emad
