#include "ctnas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctnas {

const Matrix& Var::value() const { return tape->value(*this); }
const Matrix& Var::grad() const { return tape->grad(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs,
               std::function<void(Tape&, std::size_t)> backprop) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::invalid_argument("Tape: input recorded on another tape");
    needs = needs || nodes_[v.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backprop) : nullptr});
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var out) {
  if (out.tape != this) throw std::invalid_argument("Tape::backward: foreign Var");
  const Matrix& v = nodes_[out.id].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("backward: output must be 1x1, got " + shape_str(v));
  }
  if (!std::isfinite(v(0, 0))) throw std::domain_error("backward: non-finite output");
  for (std::size_t i = 0; i <= out.id; ++i) {
    Node& n = nodes_[i];
    if (n.needs_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  if (!nodes_[out.id].needs_grad) return;
  nodes_[out.id].grad(0, 0) = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this, i);
  }
}

namespace {

void accumulate(Tape& t, Var v, const Matrix& g) {
  if (t.needs_grad(v.id)) t.grad_mut(v.id) += g;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.push(ctnas::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(Var{&t, self});
    if (t.needs_grad(a.id)) t.grad_mut(a.id) += matmul_nt(g, t.value(b));
    if (t.needs_grad(b.id)) t.grad_mut(b.id) += matmul_tn(t.value(a), g);
  });
}

Var add(Var a, Var b) {
  Matrix out = a.value();
  out += b.value();
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix g = t.grad(Var{&t, self});
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  out *= s;
  return a.tape->push(std::move(out), {a}, [a, s](Tape& t, std::size_t self) {
    Matrix g = t.grad(Var{&t, self});
    g *= s;
    accumulate(t, a, g);
  });
}

Var relu(Var a) {
  return a.tape->push(ctnas::relu(a.value()), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& x = t.value(a);
    Matrix g = t.grad(Var{&t, self});
    auto gd = g.data();
    auto xd = x.data();
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < gd.size(); ++i)
      if (!(xd[i] > 0.0)) gd[i] = 0.0;
    accumulate(t, a, g);
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = ctnas::sigmoid(v);
  return a.tape->push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(Var{&t, self});
    Matrix g = t.grad(Var{&t, self});
    auto gd = g.data();
    auto yd = y.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= yd[i] * (1.0 - yd[i]);
    accumulate(t, a, g);
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols " + shape_str(av) + " | " + shape_str(bv));
  }
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row(r).begin(), ca, out.row(r).begin());
    std::copy_n(bv.row(r).begin(), cb, out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return a.tape->push(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(Var{&t, self});
    Matrix ga(g.rows(), ca), gb(g.rows(), cb);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      std::copy_n(g.row(r).begin(), ca, ga.row(r).begin());
      std::copy_n(g.row(r).begin() + static_cast<std::ptrdiff_t>(ca), cb, gb.row(r).begin());
    }
    accumulate(t, a, ga);
    accumulate(t, b, gb);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Matrix& av = a.value();
  const std::size_t r0 = av.rows(), c0 = av.cols();
  return a.tape->push(av.reshaped(rows, cols), {a}, [a, r0, c0](Tape& t, std::size_t self) {
    accumulate(t, a, t.grad(Var{&t, self}).reshaped(r0, c0));
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  if (begin + count > av.rows()) {
    throw ShapeError("slice_rows out of range on " + shape_str(av));
  }
  const std::size_t cols = av.cols();
  std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           av.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return a.tape->push(Matrix(count, cols, std::move(data)), {a},
                      [a, begin, count, cols](Tape& t, std::size_t self) {
                        if (!t.needs_grad(a.id)) return;
                        const Matrix& g = t.grad(Var{&t, self});
                        Matrix& ga = t.grad_mut(a.id);
                        for (std::size_t r = 0; r < count; ++r)
                          for (std::size_t c = 0; c < cols; ++c) ga(begin + r, c) += g(r, c);
                      });
}

Var gather_rows(Var table, std::vector<std::size_t> ids) {
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) throw std::out_of_range("gather_rows: row id out of range");
    std::copy_n(tv.row(ids[r]).begin(), tv.cols(), out.row(r).begin());
  }
  return table.tape->push(std::move(out), {table},
                          [table, ids = std::move(ids)](Tape& t, std::size_t self) {
                            if (!t.needs_grad(table.id)) return;
                            const Matrix& g = t.grad(Var{&t, self});
                            Matrix& gt = t.grad_mut(table.id);
                            for (std::size_t r = 0; r < ids.size(); ++r)
                              for (std::size_t c = 0; c < g.cols(); ++c) gt(ids[r], c) += g(r, c);
                          });
}

Var block_matmul(std::vector<Matrix> blocks, Var x) {
  const Matrix& xv = x.value();
  if (blocks.empty()) throw ShapeError("block_matmul: no blocks");
  const std::size_t n = blocks.front().rows();
  for (const Matrix& b : blocks) {
    if (b.rows() != n || b.cols() != n) throw ShapeError("block_matmul: blocks must be n x n");
  }
  if (xv.rows() != n * blocks.size()) {
    throw ShapeError("block_matmul: " + std::to_string(blocks.size()) + " blocks of " +
                     std::to_string(n) + " vs " + shape_str(xv));
  }
  const std::size_t d = xv.cols();
  Matrix out(xv.rows(), d);
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const Matrix& a = blocks[bi];
    const std::size_t off = bi * n;
    for (std::size_t i = 0; i < n; ++i) {
      double* o = out.row(off + i).data();
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a(i, j);
        if (w == 0.0) continue;
        const double* xr = xv.row(off + j).data();
        for (std::size_t c = 0; c < d; ++c) o[c] += w * xr[c];
      }
    }
  }
  return x.tape->push(std::move(out), {x}, [x, n, d, blocks = std::move(blocks)](Tape& t,
                                                                                 std::size_t self) {
    if (!t.needs_grad(x.id)) return;
    const Matrix& g = t.grad(Var{&t, self});
    Matrix& gx = t.grad_mut(x.id);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const Matrix& a = blocks[bi];
      const std::size_t off = bi * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double* gr = g.row(off + i).data();
        for (std::size_t j = 0; j < n; ++j) {
          const double w = a(i, j);
          if (w == 0.0) continue;
          double* o = gx.row(off + j).data();
          for (std::size_t c = 0; c < d; ++c) o[c] += w * gr[c];
        }
      }
    }
  });
}

Var mean_pool_rows(Var a, std::size_t group) {
  const Matrix& av = a.value();
  if (group == 0 || av.rows() % group != 0) {
    throw ShapeError("mean_pool_rows: " + shape_str(av) + " not divisible into groups of " +
                     std::to_string(group));
  }
  const std::size_t groups = av.rows() / group, d = av.cols();
  const double inv = 1.0 / static_cast<double>(group);
  Matrix out(groups, d);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) out(r / group, c) += av(r, c) * inv;
  return a.tape->push(std::move(out), {a}, [a, group, inv](Tape& t, std::size_t self) {
    if (!t.needs_grad(a.id)) return;
    const Matrix& g = t.grad(Var{&t, self});
    Matrix& ga = t.grad_mut(a.id);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r / group, c) * inv;
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->push(Matrix(1, 1, s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad(Var{&t, self})(0, 0);
    const Matrix& av = t.value(a);
    accumulate(t, a, Matrix(av.rows(), av.cols(), g));
  });
}

Var bce_mean(Var probs, std::vector<int> labels) {
  const Matrix& p = probs.value();
  if (p.cols() != 1 || p.rows() != labels.size() || labels.empty()) {
    throw ShapeError("bce_mean: probabilities " + shape_str(p) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += bce(p(i, 0), labels[i]);
  const double inv = 1.0 / static_cast<double>(labels.size());
  return probs.tape->push(
      Matrix(1, 1, total * inv), {probs},
      [probs, inv, labels = std::move(labels)](Tape& t, std::size_t self) {
        const double g = t.grad(Var{&t, self})(0, 0);
        const Matrix& p = t.value(probs);
        Matrix gp(p.rows(), 1);
        for (std::size_t i = 0; i < labels.size(); ++i) {
          const double q = p(i, 0);
          // The clamp is flat outside [eps, 1 - eps].
          if (q < kBceEps || q > 1.0 - kBceEps) continue;
          gp(i, 0) = g * inv * (labels[i] == 1 ? -1.0 / q : 1.0 / (1.0 - q));
        }
        accumulate(t, probs, gp);
      });
}

}  // namespace ctnas
