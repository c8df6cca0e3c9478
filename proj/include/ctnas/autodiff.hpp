#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ctnas/matrix.hpp"

namespace ctnas {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  const Matrix& grad() const;
};

/// Reverse-mode tape over Matrix-valued nodes. Nodes are appended in
/// evaluation order, so a single reverse sweep yields all gradients.
class Tape {
 public:
  Var constant(Matrix value);
  /// A leaf whose gradient is accumulated by backward().
  Var leaf(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and sweeps backwards.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations. The node needs a gradient iff any input does.
  Var push(Matrix value, std::initializer_list<Var> inputs,
           std::function<void(Tape&, std::size_t)> backprop);
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  const Matrix& value_at(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, std::size_t)> backprop;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
/// Horizontal concatenation [a | b]; row counts must match.
Var concat_cols(Var a, Var b);
/// Row-major reshape; element count must match.
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Rows [begin, begin + count).
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Row r of the output is row ids[r] of the table.
Var gather_rows(Var table, std::vector<std::size_t> ids);
/// Block-diagonal left multiply: rows [i*n, (i+1)*n) of x are multiplied by
/// blocks[i] (n x n, constant).
Var block_matmul(std::vector<Matrix> blocks, Var x);
/// Mean over consecutive groups of `group` rows: (g*group x d) -> (g x d).
Var mean_pool_rows(Var a, std::size_t group);
Var sum(Var a);
/// Mean binary cross-entropy of an (n x 1) probability column against labels.
Var bce_mean(Var probs, std::vector<int> labels);

}  // namespace ctnas
