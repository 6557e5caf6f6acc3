#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "apgf/error.hpp"
#include "apgf/tensor.hpp"

namespace apgf {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
  const std::vector<double>& values() const;
  double item() const;
  std::size_t rows() const { return shape().empty() ? 1 : shape()[0]; }
  std::size_t cols() const { return shape().size() < 2 ? 1 : shape()[1]; }
};

// Reverse-mode differentiation record. Ops are appended in execution order,
// so node ids are a topological order and backward() walks them in reverse.
// A tape supports exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf bound to a parameter. Gradients are tracked when source.requires_grad
  // and can be read back with gradient(source) after backward().
  Var leaf(const Tensor& source) {
    Var v = push(source.shape, source.values, {}, nullptr, source.requires_grad);
    if (source.requires_grad) nodes_[v.id].source = &source;
    return v;
  }

  Var constant(Shape shape, std::vector<double> values) {
    if (values.size() != numel(shape))
      throw ValidationError("constant values do not match shape " + shape_string(shape));
    return push(std::move(shape), std::move(values), {}, nullptr, false);
  }
  Var constant(const Tensor& t) { return constant(t.shape, t.values); }
  Var scalar(double x) { return constant({1}, {x}); }

  const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }
  const std::vector<double>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Gradient of the last backward() loss w.r.t. v. Empty if v is not on the
  // gradient path.
  std::span<const double> grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    return {n.grad.data(), n.grad.size()};
  }

  // Accumulated gradient for a parameter tensor used as one or more leaves.
  // Returns nullptr when the tensor never entered the tape with tracking on.
  const std::vector<double>* gradient(const Tensor& source) const {
    auto it = param_grads_.find(&source);
    return it == param_grads_.end() ? nullptr : &it->second;
  }

  void backward(Var loss) {
    if (loss.tape != this) throw ValidationError("backward: loss was recorded on a different tape");
    if (consumed_) throw ValidationError("backward: tape already consumed");
    if (numel(shape(loss)) != 1)
      throw ValidationError("backward: loss must be scalar, got shape " + shape_string(shape(loss)));
    consumed_ = true;
    for (auto& n : nodes_)
      if (n.requires_grad) n.grad.assign(n.value.size(), 0.0);
    auto& root = nodes_[loss.id];
    if (!root.requires_grad) return;
    root.grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.source) {
        auto& acc = param_grads_[n.source];
        if (acc.empty()) acc.assign(n.grad.size(), 0.0);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
      }
    }
  }

  // Op-construction interface used by the primitive ops below.
  Var record(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
             BackwardFn fn, const char* op) {
    require_finite(value, op);
    bool track = false;
    for (Var in : inputs) {
      if (in.tape != this) throw ValidationError(std::string(op) + ": operand from another tape");
      track = track || nodes_[in.id].requires_grad;
    }
    return push(std::move(shape), std::move(value), inputs, track ? std::move(fn) : nullptr, track);
  }
  Var record(Shape shape, std::vector<double> value, const std::vector<Var>& inputs, BackwardFn fn,
             const char* op) {
    require_finite(value, op);
    bool track = false;
    for (Var in : inputs) {
      if (in.tape != this) throw ValidationError(std::string(op) + ": operand from another tape");
      track = track || nodes_[in.id].requires_grad;
    }
    std::vector<std::size_t> ids;
    for (Var in : inputs) ids.push_back(in.id);
    return push_ids(std::move(shape), std::move(value), std::move(ids),
                    track ? std::move(fn) : nullptr, track);
  }

  // Accessors for backward closures.
  std::vector<double>& grad_of(std::size_t id) { return nodes_[id].grad; }
  const std::vector<double>& value_of(std::size_t id) const { return nodes_[id].value; }
  bool tracks(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const Tensor* source = nullptr;
  };

  Var push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
           BackwardFn fn, bool track) {
    std::vector<std::size_t> ids;
    for (Var in : inputs) ids.push_back(in.id);
    return push_ids(std::move(shape), std::move(value), std::move(ids), std::move(fn), track);
  }

  Var push_ids(Shape shape, std::vector<double> value, std::vector<std::size_t> ids, BackwardFn fn,
               bool track) {
    if (consumed_) throw ValidationError("tape already consumed by backward()");
    nodes_.push_back(Node{std::move(shape), std::move(value), {}, std::move(ids), std::move(fn),
                          track, nullptr});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::vector<double>> param_grads_;
  bool consumed_ = false;
};

inline const Shape& Var::shape() const { return tape->shape(*this); }
inline const std::vector<double>& Var::values() const { return tape->value(*this); }
inline double Var::item() const {
  const auto& v = values();
  if (v.size() != 1) throw ValidationError("item() on non-scalar of shape " + shape_string(shape()));
  return v[0];
}

namespace detail {

inline void require_matrix(Var v, const char* op) {
  if (v.shape().size() != 2)
    throw ValidationError(std::string(op) + ": expected a matrix, got shape " +
                          shape_string(v.shape()));
}

inline void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape())
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class DF>
Var unary(Var x, F f, DF df, const char* op) {
  const auto& in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const std::size_t xi = x.id;
  return x.tape->record(
      x.shape(), std::move(out), {x},
      [xi, df](Tape& t, std::size_t self) {
        if (!t.tracks(xi)) return;
        const auto& xv = t.value_of(xi);
        const auto& yv = t.value_of(self);
        const auto& gy = t.grad_of(self);
        auto& gx = t.grad_of(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(xv[i], yv[i]);
      },
      op);
}

}  // namespace detail

// a[m×k] · b[k×n]
inline Var matmul(Var a, Var b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ValidationError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                          shape_string(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      {m, n}, std::move(out), {a, b},
      [ai, bi, m, k, n](Tape& t, std::size_t self) {
        const auto& gy = t.grad_of(self);
        const auto& av = t.value_of(ai);
        const auto& bv = t.value_of(bi);
        if (t.tracks(ai)) {
          auto& ga = t.grad_of(ai);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += gy[i * n + j] * bv[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (t.tracks(bi)) {
          auto& gb = t.grad_of(bi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = av[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * gy[i * n + j];
            }
        }
      },
      "matmul");
}

inline Var transpose(Var a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const std::size_t ai = a.id;
  return a.tape->record(
      {n, m}, std::move(out), {a},
      [ai, m, n](Tape& t, std::size_t self) {
        if (!t.tracks(ai)) return;
        const auto& gy = t.grad_of(self);
        auto& ga = t.grad_of(ai);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += gy[j * m + i];
      },
      "transpose");
}

// Same-shape addition, or matrix + row-vector broadcast when b has shape
// [1×n] or [n] and a is [m×n].
inline Var add(Var a, Var b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    detail::require_matrix(a, "add");
    if (numel(b.shape()) != a.cols() || (b.shape().size() == 2 && b.rows() != 1))
      throw ValidationError("add: shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  const std::size_t n = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[broadcast ? i % n : i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      a.shape(), std::move(out), {a, b},
      [ai, bi, n](Tape& t, std::size_t self) {
        const auto& gy = t.grad_of(self);
        if (t.tracks(ai)) {
          auto& ga = t.grad_of(ai);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        }
        if (t.tracks(bi)) {
          auto& gb = t.grad_of(bi);
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i % n] += gy[i];
        }
      },
      "add");
}

// out[i][j] = col[i] + row[j] for col [m×1] and row [1×n] (or [n×1]).
inline Var outer_add(Var col, Var row) {
  const std::size_t m = numel(col.shape()), n = numel(row.shape());
  const auto& cv = col.values();
  const auto& rv = row.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = cv[i] + rv[j];
  const std::size_t ci = col.id, ri = row.id;
  return col.tape->record(
      {m, n}, std::move(out), {col, row},
      [ci, ri, m, n](Tape& t, std::size_t self) {
        const auto& gy = t.grad_of(self);
        if (t.tracks(ci)) {
          auto& gc = t.grad_of(ci);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gc[i] += gy[i * n + j];
        }
        if (t.tracks(ri)) {
          auto& gr = t.grad_of(ri);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gr[j] += gy[i * n + j];
        }
      },
      "outer_add");
}

// Elementwise product of same-shape operands.
inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      a.shape(), std::move(out), {a, b},
      [ai, bi](Tape& t, std::size_t self) {
        const auto& gy = t.grad_of(self);
        const auto& av = t.value_of(ai);
        const auto& bv = t.value_of(bi);
        if (t.tracks(ai)) {
          auto& ga = t.grad_of(ai);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
        }
        if (t.tracks(bi)) {
          auto& gb = t.grad_of(bi);
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
        }
      },
      "mul");
}

inline Var mul_scalar(Var a, double s) {
  return detail::unary(
      a, [s](double x) { return x * s; }, [s](double, double) { return s; }, "mul_scalar");
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  return detail::unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; }, "leaky_relu");
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; },
      "tanh");
}

inline Var log(Var a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, "log");
}

inline Var sum(Var a) {
  const auto& av = a.values();
  double s = 0.0;
  for (double x : av) s += x;
  const std::size_t ai = a.id;
  return a.tape->record(
      {1}, {s}, {a},
      [ai](Tape& t, std::size_t self) {
        if (!t.tracks(ai)) return;
        const double g = t.grad_of(self)[0];
        for (double& x : t.grad_of(ai)) x += g;
      },
      "sum");
}

inline Var mean(Var a) {
  const std::size_t count = a.values().size();
  if (count == 0) throw ValidationError("mean: empty operand");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(count));
}

// Concatenate matrices with equal row counts along columns (axis 1) or with
// equal column counts along rows (axis 0).
inline Var concat(const std::vector<Var>& parts, int axis = 1) {
  if (parts.empty()) throw ValidationError("concat: no operands");
  for (Var p : parts) detail::require_matrix(p, "concat");
  const std::size_t rows0 = parts[0].rows(), cols0 = parts[0].cols();
  std::size_t total = 0;
  for (Var p : parts) {
    if (axis == 1 && p.rows() != rows0) throw ValidationError("concat: row counts differ");
    if (axis == 0 && p.cols() != cols0) throw ValidationError("concat: column counts differ");
    total += axis == 1 ? p.cols() : p.rows();
  }
  Shape shape = axis == 1 ? Shape{rows0, total} : Shape{total, cols0};
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> ids, offsets, widths;
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& pv = p.values();
    const std::size_t w = axis == 1 ? p.cols() : p.rows();
    if (axis == 1) {
      for (std::size_t r = 0; r < rows0; ++r)
        for (std::size_t c = 0; c < w; ++c) out[r * total + offset + c] = pv[r * w + c];
    } else {
      std::copy(pv.begin(), pv.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols0));
    }
    ids.push_back(p.id);
    offsets.push_back(offset);
    widths.push_back(w);
    offset += w;
  }
  return parts[0].tape->record(
      std::move(shape), std::move(out), parts,
      [ids, offsets, widths, rows0, cols0, total, axis](Tape& t, std::size_t self) {
        const auto& gy = t.grad_of(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.tracks(ids[k])) continue;
          auto& gp = t.grad_of(ids[k]);
          const std::size_t w = widths[k], off = offsets[k];
          if (axis == 1) {
            for (std::size_t r = 0; r < rows0; ++r)
              for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += gy[r * total + off + c];
          } else {
            for (std::size_t i = 0; i < w * cols0; ++i) gp[i] += gy[off * cols0 + i];
          }
        }
      },
      "concat");
}

// Rows [begin, end) of a matrix.
inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_rows");
  if (begin > end || end > a.rows()) throw ValidationError("slice_rows: range out of bounds");
  const std::size_t n = a.cols();
  const auto& av = a.values();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          av.begin() + static_cast<std::ptrdiff_t>(end * n));
  const std::size_t ai = a.id;
  return a.tape->record(
      {end - begin, n}, std::move(out), {a},
      [ai, begin, n](Tape& t, std::size_t self) {
        if (!t.tracks(ai)) return;
        const auto& gy = t.grad_of(self);
        auto& ga = t.grad_of(ai);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[begin * n + i] += gy[i];
      },
      "slice_rows");
}

// Selected rows of a matrix, in the given order (repeats allowed).
inline Var gather_rows(Var a, const std::vector<std::size_t>& indices) {
  detail::require_matrix(a, "gather_rows");
  const std::size_t n = a.cols();
  const auto& av = a.values();
  std::vector<double> out;
  out.reserve(indices.size() * n);
  for (std::size_t r : indices) {
    if (r >= a.rows()) throw ValidationError("gather_rows: row index out of range");
    out.insert(out.end(), av.begin() + static_cast<std::ptrdiff_t>(r * n),
               av.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  }
  const std::size_t ai = a.id;
  return a.tape->record(
      {indices.size(), n}, std::move(out), {a},
      [ai, indices, n](Tape& t, std::size_t self) {
        if (!t.tracks(ai)) return;
        const auto& gy = t.grad_of(self);
        auto& ga = t.grad_of(ai);
        for (std::size_t k = 0; k < indices.size(); ++k)
          for (std::size_t c = 0; c < n; ++c) ga[indices[k] * n + c] += gy[k * n + c];
      },
      "gather_rows");
}

// Single element (flat row-major index) as a scalar.
inline Var pick(Var a, std::size_t flat_index) {
  if (flat_index >= a.values().size()) throw ValidationError("pick: index out of range");
  const std::size_t ai = a.id;
  return a.tape->record(
      {1}, {a.values()[flat_index]}, {a},
      [ai, flat_index](Tape& t, std::size_t self) {
        if (t.tracks(ai)) t.grad_of(ai)[flat_index] += t.grad_of(self)[0];
      },
      "pick");
}

// Row-wise softmax over the entries where mask is nonzero; masked entries are
// exactly zero. mask is row-major with one entry per element of x.
inline Var masked_softmax(Var x, const std::vector<unsigned char>& mask) {
  const Shape& shape = x.shape();
  const std::size_t rows = shape.size() == 2 ? shape[0] : 1;
  const std::size_t cols = shape.size() == 2 ? shape[1] : numel(shape);
  if (mask.size() != rows * cols)
    throw ValidationError("masked_softmax: mask size does not match operand shape " +
                          shape_string(shape));
  const auto& xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double top = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c)
      if (mask[r * cols + c]) top = std::max(top, xv[r * cols + c]);
    if (top == -INFINITY)
      throw ValidationError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (mask[r * cols + c]) z += out[r * cols + c] = std::exp(xv[r * cols + c] - top);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= z;
  }
  const std::size_t xi = x.id;
  return x.tape->record(
      shape, std::move(out), {x},
      [xi, rows, cols](Tape& t, std::size_t self) {
        if (!t.tracks(xi)) return;
        const auto& y = t.value_of(self);
        const auto& gy = t.grad_of(self);
        auto& gx = t.grad_of(xi);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * gy[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            gx[r * cols + c] += y[r * cols + c] * (gy[r * cols + c] - dot);
        }
      },
      "masked_softmax");
}

// Convenience: backward on `loss` and store gradients into every parameter
// reachable through `for_each` (a callable that visits Tensor&).
template <class ForEachParam>
void backward_into(Tape& tape, Var loss, ForEachParam&& for_each) {
  tape.backward(loss);
  for_each([&](Tensor& p) {
    if (!p.requires_grad) return;
    const auto* g = tape.gradient(p);
    if (g)
      p.grad = *g;
    else
      p.zero_grad();
  });
}

}  // namespace apgf
