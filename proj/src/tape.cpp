#include "emad/tape.hpp"

#include <cmath>

namespace emad {

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::leaf(Matrix value) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_.back().needs_grad = true;
  return v;
}

Var Tape::push(Matrix value, std::vector<int> inputs, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  for (const int i : inputs) n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(i)].needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_buffer(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var target) {
  if (value(target).size() != 1) throw Error("backward: target must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_buffer(target.id)(0, 0) = 1.0;
  for (int i = target.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back && n.grad.size() != 0) n.back(*this, i);
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw Error("tape: operands live on different tapes");
  return *a.tape;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(std::string(op) + ": shape mismatch");
}

// Unary elementwise op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = *a.tape;
  Matrix y = t.value(a).unaryExpr(f);
  return t.push(std::move(y), {a.id}, [a = a.id, dfdx](Tape& tp, int self) {
    if (!tp.needs(a)) return;
    const Matrix& x = tp.value_of(a);
    const Matrix& y = tp.value_of(self);
    tp.grad_buffer(a).array() += tp.grad_of(self).array() * x.binaryExpr(y, dfdx).array();
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (t.value(a).cols() != t.value(b).rows()) throw Error("matmul: inner dimension mismatch");
  Matrix y = t.value(a) * t.value(b);
  return t.push(std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs(a)) tp.grad_buffer(a).noalias() += g * tp.value_of(b).transpose();
    if (tp.needs(b)) tp.grad_buffer(b).noalias() += tp.value_of(a).transpose() * g;
  });
}

Var matmul_t(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (t.value(a).cols() != t.value(b).cols()) throw Error("matmul_t: inner dimension mismatch");
  Matrix y = t.value(a) * t.value(b).transpose();
  return t.push(std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs(a)) tp.grad_buffer(a).noalias() += g * tp.value_of(b);
    if (tp.needs(b)) tp.grad_buffer(b).noalias() += g.transpose() * tp.value_of(a);
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(t.value(a), t.value(b), "add");
  Matrix y = t.value(a) + t.value(b);
  return t.push(std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a) += tp.grad_of(self);
    if (tp.needs(b)) tp.grad_buffer(b) += tp.grad_of(self);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(t.value(a), t.value(b), "sub");
  Matrix y = t.value(a) - t.value(b);
  return t.push(std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a) += tp.grad_of(self);
    if (tp.needs(b)) tp.grad_buffer(b) -= tp.grad_of(self);
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(t.value(a), t.value(b), "hadamard");
  Matrix y = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(y), {a.id, b.id}, [a = a.id, b = b.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs(a)) tp.grad_buffer(a) += g.cwiseProduct(tp.value_of(b));
    if (tp.needs(b)) tp.grad_buffer(b) += g.cwiseProduct(tp.value_of(a));
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double alpha, double beta) {
  Tape& t = *a.tape;
  Matrix y = (alpha * t.value(a).array() + beta).matrix();
  return t.push(std::move(y), {a.id}, [a = a.id, alpha](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a) += alpha * tp.grad_of(self);
  });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Var softplus(Var a) {
  return unary(
      a, [](double x) { return softplus(x); }, [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  Matrix y = t.value(a).transpose();
  return t.push(std::move(y), {a.id}, [a = a.id](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a) += tp.grad_of(self).transpose();
  });
}

Var hcat(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& x = t.value(a);
  const Matrix& z = t.value(b);
  if (x.rows() != z.rows()) throw Error("hcat: row count mismatch");
  Matrix y(x.rows(), x.cols() + z.cols());
  y << x, z;
  const auto ca = x.cols();
  return t.push(std::move(y), {a.id, b.id}, [a = a.id, b = b.id, ca](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.needs(a)) tp.grad_buffer(a) += g.leftCols(ca);
    if (tp.needs(b)) tp.grad_buffer(b) += g.rightCols(g.cols() - ca);
  });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("vcat: no parts");
  Tape& t = *parts.front().tape;
  const auto cols = t.value(parts.front()).cols();
  Eigen::Index total = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.tape != &t) throw Error("vcat: operands live on different tapes");
    if (t.value(p).cols() != cols) throw Error("vcat: column count mismatch");
    total += t.value(p).rows();
    ids.push_back(p.id);
  }
  Matrix y(total, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  return t.push(std::move(y), ids, [ids](Tape& tp, int self) {
    const Matrix& g = tp.grad_of(self);
    Eigen::Index r = 0;
    for (const int id : ids) {
      const auto n = tp.value_of(id).rows();
      if (tp.needs(id)) tp.grad_buffer(id) += g.middleRows(r, n);
      r += n;
    }
  });
}

Var rows(Var a, Eigen::Index begin, Eigen::Index count) {
  Tape& t = *a.tape;
  if (begin < 0 || count < 0 || begin + count > t.value(a).rows()) throw Error("rows: range out of bounds");
  Matrix y = t.value(a).middleRows(begin, count);
  return t.push(std::move(y), {a.id}, [a = a.id, begin, count](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a).middleRows(begin, count) += tp.grad_of(self);
  });
}

Var repeat_rows(Var row, Eigen::Index n) {
  Tape& t = *row.tape;
  if (t.value(row).rows() != 1) throw Error("repeat_rows: expected a row");
  Matrix y = t.value(row).replicate(n, 1);
  return t.push(std::move(y), {row.id}, [a = row.id](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a) += tp.grad_of(self).colwise().sum();
  });
}

Matrix softmax_rows(const Matrix& a) {
  Matrix y = a.colwise() - a.rowwise().maxCoeff();
  y = y.array().exp();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix y = softmax_rows(t.value(a));
  return t.push(std::move(y), {a.id}, [a = a.id](Tape& tp, int self) {
    if (!tp.needs(a)) return;
    const Matrix& y = tp.value_of(self);
    const Matrix& g = tp.grad_of(self);
    const Vector dot = g.cwiseProduct(y).rowwise().sum();
    tp.grad_buffer(a).array() += y.array() * (g.colwise() - dot).array();
  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const auto n = t.value(a).rows();
  if (n == 0) throw Error("mean_rows: empty input");
  Matrix y = t.value(a).colwise().mean();
  return t.push(std::move(y), {a.id}, [a = a.id, n](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a).rowwise() += tp.grad_of(self).row(0) / static_cast<double>(n);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix y(1, 1);
  y(0, 0) = t.value(a).sum();
  return t.push(std::move(y), {a.id}, [a = a.id](Tape& tp, int self) {
    if (tp.needs(a)) tp.grad_buffer(a).array() += tp.grad_of(self)(0, 0);
  });
}

}  // namespace emad
