#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contrnp/tensor.hpp"

namespace contrnp {

namespace detail {

using NodeId = GradientTape::NodeId;

/// The active tape, if it tracks any of `inputs`; otherwise nullptr.
inline GradientTape* tape_for(std::initializer_list<const Tensor*> inputs) {
  auto* tape = GradientTape::active();
  if (!tape) return nullptr;
  for (const auto* t : inputs) {
    if (tape->node_of(*t)) return tape;
  }
  return nullptr;
}

inline std::vector<NodeId> parent_ids(const GradientTape& tape,
                                      std::initializer_list<const Tensor*> inputs) {
  std::vector<NodeId> ids;
  for (const auto* t : inputs) {
    if (auto id = tape.node_of(*t)) ids.push_back(*id);
  }
  return ids;
}

inline std::vector<double> copy_of(std::span<const double> s) { return {s.begin(), s.end()}; }

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t j = 0; j < rank; ++j) {
    const std::size_t da = j + a.size() >= rank ? a[j + a.size() - rank] : 1;
    const std::size_t db = j + b.size() >= rank ? b[j + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_str(a) + " and " +
                       shape_str(b));
    }
    out[j] = da == 1 ? db : da;
  }
  return out;
}

/// For every flat index of `out`, the flat index of the element of `src`
/// that broadcasting maps onto it.
inline std::vector<std::size_t> broadcast_index(const Shape& src, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - src.size();
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t j = rank; j-- > offset;) {
    const std::size_t d = src[j - offset];
    stride[j] = d == 1 ? 0 : s;
    s *= d;
  }
  std::vector<std::size_t> index(numel_of(out));
  std::vector<std::size_t> counter(rank, 0);
  std::size_t cur = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    index[i] = cur;
    for (std::size_t j = rank; j-- > 0;) {
      ++counter[j];
      cur += stride[j];
      if (counter[j] < out[j]) break;
      cur -= stride[j] * out[j];
      counter[j] = 0;
    }
  }
  return index;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_index;  // empty: identity
  std::vector<std::size_t> b_index;
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  plan.out = broadcast_shape(a, b, op);
  if (a != plan.out) plan.a_index = broadcast_index(a, plan.out);
  if (b != plan.out) plan.b_index = broadcast_index(b, plan.out);
  return plan;
}

// dA(a, b) and dB(a, b) are the partial derivatives of F at (a, b).
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA dfa, DB dfb) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  Tensor out(plan.out);
  auto o = out.mutable_data();
  const auto ad = a.data();
  const auto bd = b.data();
  const bool a_id = plan.a_index.empty();
  const bool b_id = plan.b_index.empty();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = f(ad[a_id ? i : plan.a_index[i]], bd[b_id ? i : plan.b_index[i]]);
  }
  if (auto* tape = tape_for({&a, &b})) {
    auto ida = tape->node_of(a);
    auto idb = tape->node_of(b);
    tape->attach(out, parent_ids(*tape, {&a, &b}),
                 [ida, idb, plan = std::move(plan), av = copy_of(ad), bv = copy_of(bd), dfa, dfb](
                     std::span<const double> g, GradientTape& t) {
                   const bool a_id = plan.a_index.empty();
                   const bool b_id = plan.b_index.empty();
                   if (ida) {
                     auto ga = t.grad_buffer(*ida);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const std::size_t ia = a_id ? i : plan.a_index[i];
                       const std::size_t ib = b_id ? i : plan.b_index[i];
                       ga[ia] += g[i] * dfa(av[ia], bv[ib]);
                     }
                   }
                   if (idb) {
                     auto gb = t.grad_buffer(*idb);
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const std::size_t ia = a_id ? i : plan.a_index[i];
                       const std::size_t ib = b_id ? i : plan.b_index[i];
                       gb[ib] += g[i] * dfb(av[ia], bv[ib]);
                     }
                   }
                 });
  }
  return out;
}

// D(x, y) is dy/dx given input x and output y.
template <class F, class D>
Tensor unary_op(const Tensor& x, F f, D dfx) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xd[i]);
  if (auto* tape = tape_for({&x})) {
    const NodeId id = *tape->node_of(x);
    tape->attach(out, {id},
                 [id, xv = copy_of(xd), yv = copy_of(o), dfx](std::span<const double> g,
                                                              GradientTape& t) {
                   auto gx = t.grad_buffer(id);
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfx(xv[i], yv[i]);
                 });
  }
  return out;
}

/// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisView {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  }
  AxisView v;
  for (std::size_t j = 0; j < axis; ++j) v.outer *= s[j];
  v.n = s[axis];
  for (std::size_t j = axis + 1; j < s.size(); ++j) v.inner *= s[j];
  return v;
}

inline Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise, with numpy-style broadcasting.

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

inline Tensor neg(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

inline Tensor scale(const Tensor& x, double s) {
  return detail::unary_op(
      x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Tensor shift(const Tensor& x, double s) {
  return detail::unary_op(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  const auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0)) {
      throw DomainError("log of non-positive input " + std::to_string(d[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return detail::unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor sqrt(const Tensor& x) {
  const auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 0.0) {
      throw DomainError("sqrt of negative input " + std::to_string(d[i]) + " at index " +
                        std::to_string(i));
    }
  }
  return detail::unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

/// log(1 + e^x) in the form max(x, 0) + log1p(e^-|x|).
inline double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

/// Inverse of softplus for v > 0.
inline double softplus_inverse(double v) { return v > 30.0 ? v : std::log(std::expm1(v)); }

inline Tensor softplus(const Tensor& x) {
  return detail::unary_op(
      x, [](double v) { return softplus(v); },
      [](double v, double) {
        // logistic(v), evaluated without overflow
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation.

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), detail::copy_of(x.data()));
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id}, [id](std::span<const double> g, GradientTape& t) {
      auto gx = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

inline Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (detail::broadcast_shape(x.shape(), shape, "broadcast_to") != shape) {
    throw ShapeError("broadcast_to: cannot broadcast " + shape_str(x.shape()) + " to " +
                     shape_str(shape));
  }
  auto index = detail::broadcast_index(x.shape(), shape);
  Tensor out(shape);
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[index[i]];
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id}, [id, index = std::move(index)](std::span<const double> g,
                                                           GradientTape& t) {
      auto gx = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[index[i]] += g[i];
    });
  }
  return out;
}

/// Swaps the two axes of a matrix.
inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  Tensor out(Shape{cols, rows});
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[j * rows + i] = xd[i * cols + j];
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id}, [id, rows, cols](std::span<const double> g, GradientTape& t) {
      auto gx = t.grad_buffer(id);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[j * rows + i];
    });
  }
  return out;
}

inline Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(first));
  }
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) {
      throw ShapeError("concat: rank mismatch between " + shape_str(first) + " and " +
                       shape_str(p.shape()));
    }
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(p.shape()) +
                       " differ off the concat axis");
    }
    out_shape[axis] += p.dim(axis);
  }
  Tensor out(out_shape);
  const auto view = detail::axis_view(out_shape, axis, "concat");
  auto o = out.mutable_data();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t n = p.dim(axis);
    const auto pd = p.data();
    for (std::size_t outer = 0; outer < view.outer; ++outer)
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t in = 0; in < view.inner; ++in)
          o[(outer * view.n + offset + k) * view.inner + in] = pd[(outer * n + k) * view.inner + in];
    offset += n;
  }
  auto* tape = GradientTape::active();
  bool tracked = false;
  if (tape) {
    for (const auto& p : parts) tracked = tracked || tape->node_of(p).has_value();
  }
  if (tracked) {
    std::vector<std::optional<detail::NodeId>> ids;
    std::vector<detail::NodeId> parents;
    std::vector<std::size_t> lengths;
    for (const auto& p : parts) {
      ids.push_back(tape->node_of(p));
      if (ids.back()) parents.push_back(*ids.back());
      lengths.push_back(p.dim(axis));
    }
    tape->attach(out, std::move(parents),
                 [ids = std::move(ids), offsets = std::move(offsets),
                  lengths = std::move(lengths), view](std::span<const double> g, GradientTape& t) {
                   for (std::size_t p = 0; p < ids.size(); ++p) {
                     if (!ids[p]) continue;
                     auto gp = t.grad_buffer(*ids[p]);
                     const std::size_t n = lengths[p];
                     for (std::size_t outer = 0; outer < view.outer; ++outer)
                       for (std::size_t k = 0; k < n; ++k)
                         for (std::size_t in = 0; in < view.inner; ++in)
                           gp[(outer * n + k) * view.inner + in] +=
                               g[(outer * view.n + offsets[p] + k) * view.inner + in];
                   }
                 });
  }
  return out;
}

inline Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

/// Elements [start, start + length) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto view = detail::axis_view(x.shape(), axis, "slice");
  if (start + length > view.n) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis " + std::to_string(axis) +
                     " of shape " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor out(out_shape);
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t outer = 0; outer < view.outer; ++outer)
    for (std::size_t k = 0; k < length; ++k)
      for (std::size_t in = 0; in < view.inner; ++in)
        o[(outer * length + k) * view.inner + in] = xd[(outer * view.n + start + k) * view.inner + in];
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id}, [id, view, start, length](std::span<const double> g, GradientTape& t) {
      auto gx = t.grad_buffer(id);
      for (std::size_t outer = 0; outer < view.outer; ++outer)
        for (std::size_t k = 0; k < length; ++k)
          for (std::size_t in = 0; in < view.inner; ++in)
            gx[(outer * view.n + start + k) * view.inner + in] +=
                g[(outer * length + k) * view.inner + in];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.

inline Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false) {
  const auto view = detail::axis_view(x.shape(), axis, "sum_axis");
  Tensor out(detail::reduced_shape(x.shape(), axis, keepdim));
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t outer = 0; outer < view.outer; ++outer)
    for (std::size_t k = 0; k < view.n; ++k)
      for (std::size_t in = 0; in < view.inner; ++in)
        o[outer * view.inner + in] += xd[(outer * view.n + k) * view.inner + in];
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id}, [id, view](std::span<const double> g, GradientTape& t) {
      auto gx = t.grad_buffer(id);
      for (std::size_t outer = 0; outer < view.outer; ++outer)
        for (std::size_t k = 0; k < view.n; ++k)
          for (std::size_t in = 0; in < view.inner; ++in)
            gx[(outer * view.n + k) * view.inner + in] += g[outer * view.inner + in];
    });
  }
  return out;
}

inline Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false) {
  const auto n = detail::axis_view(x.shape(), axis, "mean_axis").n;
  if (n == 0) throw ShapeError("mean_axis: empty axis in shape " + shape_str(x.shape()));
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(n));
}

/// Sum of all elements, as a scalar.
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id}, [id](std::span<const double> g, GradientTape& t) {
      auto gx = t.grad_buffer(id);
      for (auto& v : gx) v += g[0];
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// Euclidean norm along `axis`. The gradient at a zero vector is taken as 0.
inline Tensor l2_norm(const Tensor& x, std::size_t axis, bool keepdim = false) {
  const auto view = detail::axis_view(x.shape(), axis, "l2_norm");
  Tensor out(detail::reduced_shape(x.shape(), axis, keepdim));
  auto o = out.mutable_data();
  const auto xd = x.data();
  for (std::size_t outer = 0; outer < view.outer; ++outer)
    for (std::size_t k = 0; k < view.n; ++k)
      for (std::size_t in = 0; in < view.inner; ++in) {
        const double v = xd[(outer * view.n + k) * view.inner + in];
        o[outer * view.inner + in] += v * v;
      }
  for (auto& v : o) v = std::sqrt(v);
  if (auto* tape = detail::tape_for({&x})) {
    const auto id = *tape->node_of(x);
    tape->attach(out, {id},
                 [id, view, xv = detail::copy_of(xd), nv = detail::copy_of(o)](
                     std::span<const double> g, GradientTape& t) {
                   auto gx = t.grad_buffer(id);
                   for (std::size_t outer = 0; outer < view.outer; ++outer)
                     for (std::size_t in = 0; in < view.inner; ++in) {
                       const double norm = nv[outer * view.inner + in];
                       if (norm == 0.0) continue;
                       const double scale_g = g[outer * view.inner + in] / norm;
                       for (std::size_t k = 0; k < view.n; ++k) {
                         const std::size_t i = (outer * view.n + k) * view.inner + in;
                         gx[i] += scale_g * xv[i];
                       }
                     }
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra and convolution.

/// [n, k] x [k, m] -> [n, m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t m = b.dim(1);
  Tensor out(Shape{n, m});
  auto o = out.mutable_data();
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd.data() + p * m;
      double* orow = o.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  if (auto* tape = detail::tape_for({&a, &b})) {
    auto ida = tape->node_of(a);
    auto idb = tape->node_of(b);
    tape->attach(out, detail::parent_ids(*tape, {&a, &b}),
                 [ida, idb, n, k, m, av = idb ? detail::copy_of(ad) : std::vector<double>{},
                  bv = ida ? detail::copy_of(bd) : std::vector<double>{}](
                     std::span<const double> g, GradientTape& t) {
                   if (ida) {
                     auto ga = t.grad_buffer(*ida);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         double s = 0.0;
                         const double* grow = g.data() + i * m;
                         const double* brow = bv.data() + p * m;
                         for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
                         ga[i * k + p] += s;
                       }
                   }
                   if (idb) {
                     auto gb = t.grad_buffer(*idb);
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t p = 0; p < k; ++p) {
                         const double a_ip = av[i * k + p];
                         if (a_ip == 0.0) continue;
                         const double* grow = g.data() + i * m;
                         double* gbrow = gb.data() + p * m;
                         for (std::size_t j = 0; j < m; ++j) gbrow[j] += a_ip * grow[j];
                       }
                   }
                 });
  }
  return out;
}

/// Cross-correlation of input [B, C, L] with kernel [C_out, C, W] under
/// symmetric zero padding; output [B, C_out, L + 2*padding - W + 1].
inline Tensor conv1d(const Tensor& input, const Tensor& kernel, std::size_t padding) {
  if (input.rank() != 3 || kernel.rank() != 3 || input.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv1d: incompatible input " + shape_str(input.shape()) + " and kernel " +
                     shape_str(kernel.shape()));
  }
  const std::size_t batch = input.dim(0);
  const std::size_t cin = input.dim(1);
  const std::size_t len = input.dim(2);
  const std::size_t cout = kernel.dim(0);
  const std::size_t width = kernel.dim(2);
  if (width > len + 2 * padding) {
    throw ShapeError("conv1d: kernel " + shape_str(kernel.shape()) + " wider than padded input " +
                     shape_str(input.shape()));
  }
  const std::size_t out_len = len + 2 * padding - width + 1;
  Tensor out(Shape{batch, cout, out_len});
  auto o = out.mutable_data();
  const auto xd = input.data();
  const auto kd = kernel.data();

  // Output positions l for which l + w - padding lies inside [0, len).
  auto valid = [=](std::size_t w) {
    const std::size_t lo = padding > w ? padding - w : 0;
    const std::size_t hi = len + padding > w ? std::min(out_len, len + padding - w) : 0;
    return std::pair{lo, hi};
  };

  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oc = 0; oc < cout; ++oc) {
      double* orow = o.data() + (b * cout + oc) * out_len;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xrow = xd.data() + (b * cin + c) * len;
        for (std::size_t w = 0; w < width; ++w) {
          const double kv = kd[(oc * cin + c) * width + w];
          const auto [lo, hi] = valid(w);
          for (std::size_t l = lo; l < hi; ++l) orow[l] += kv * xrow[l + w - padding];
        }
      }
    }

  if (auto* tape = detail::tape_for({&input, &kernel})) {
    auto idx = tape->node_of(input);
    auto idk = tape->node_of(kernel);
    tape->attach(
        out, detail::parent_ids(*tape, {&input, &kernel}),
        [=, xv = idk ? detail::copy_of(xd) : std::vector<double>{},
         kv = idx ? detail::copy_of(kd) : std::vector<double>{}](std::span<const double> g,
                                                                GradientTape& t) {
          std::span<double> gx;
          std::span<double> gk;
          if (idx) gx = t.grad_buffer(*idx);
          if (idk) gk = t.grad_buffer(*idk);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t oc = 0; oc < cout; ++oc) {
              const double* grow = g.data() + (b * cout + oc) * out_len;
              for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t w = 0; w < width; ++w) {
                  const auto [lo, hi] = valid(w);
                  const std::size_t kidx = (oc * cin + c) * width + w;
                  if (idx) {
                    const double k_w = kv[kidx];
                    double* dst = gx.data() + (b * cin + c) * len;
                    for (std::size_t l = lo; l < hi; ++l) dst[l + w - padding] += k_w * grow[l];
                  }
                  if (idk) {
                    const double* src = xv.data() + (b * cin + c) * len;
                    double s = 0.0;
                    for (std::size_t l = lo; l < hi; ++l) s += src[l + w - padding] * grow[l];
                    gk[kidx] += s;
                  }
                }
            }
        });
  }
  return out;
}

}  // namespace contrnp
